//! MDP surface over the simulator: observations, rewards and episode metrics.

use std::sync::Arc;

use serde::Serialize;

use crate::error::Result;
use crate::netmodel::{FlowSchedule, Scenario, STEP_SECONDS};
use crate::simcore::SimState;

/// Detector view of the network, lanes in [`RoadNetwork::controlled_lanes`] order.
///
/// [`RoadNetwork::controlled_lanes`]: crate::netmodel::RoadNetwork::controlled_lanes
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Waiting vehicles per controlled lane.
    pub s_num: Vec<u32>,
    /// Accumulated waiting time of vehicles in each lane's detector zone.
    pub s_wt: Vec<f64>,
    /// Current phase per intersection; empty when phases were not requested.
    pub s_p: Vec<usize>,
    /// Phase each signal is committed to: the pending phase during a
    /// yellow interlude, the current one otherwise. Empty with `s_p`.
    pub committed: Vec<usize>,
    pub step: u32,
}

pub fn observe(state: &SimState, include_phases: bool) -> Observation {
    let readings = state.read_detectors();
    let lanes = state.network().controlled_lanes();
    Observation {
        s_num: lanes.iter().map(|&l| readings[l].waiting_count).collect(),
        s_wt: lanes
            .iter()
            .map(|&l| readings[l].waiting_time_sum)
            .collect(),
        s_p: if include_phases {
            state.current_phases()
        } else {
            Vec::new()
        },
        committed: if include_phases {
            state
                .signals()
                .iter()
                .map(|s| s.pending_phase.unwrap_or(s.current_phase))
                .collect()
        } else {
            Vec::new()
        },
        step: state.clock(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RewardBreakdown {
    /// Drop in total accumulated waiting time, seconds.
    pub r_wt: f64,
    /// Signals that kept their phase and are not in a yellow interlude.
    pub r_uc: u32,
    pub r_total: f64,
    pub alpha: f64,
}

/// Hybrid reward `r_wt + alpha * r_uc`.
///
/// `cur_in_yellow` marks signals that are switching; a switch counts as a
/// change from the step it is requested until the new phase is active.
pub fn compute_reward(
    prev_cost: f64,
    cur_cost: f64,
    prev_phases: &[usize],
    cur_phases: &[usize],
    cur_in_yellow: &[bool],
    alpha: f64,
) -> RewardBreakdown {
    let r_wt = prev_cost - cur_cost;
    let r_uc = prev_phases
        .iter()
        .zip(cur_phases)
        .zip(cur_in_yellow)
        .filter(|((p, c), y)| p == c && !**y)
        .count() as u32;
    RewardBreakdown {
        r_wt,
        r_uc,
        r_total: r_wt + alpha * f64::from(r_uc),
        alpha,
    }
}

/// Total accumulated waiting time over every vehicle in the network.
pub fn compute_cost(state: &SimState) -> f64 {
    state.vehicles().map(|v| v.waiting_time).sum()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub cost_wt_per_step: Vec<f64>,
    /// Vehicle-seconds spent at standstill.
    pub total_stop_time: f64,
    /// Vehicle-seconds spent at or below the waiting threshold.
    pub total_waiting_time: f64,
    pub arrivals: u64,
    pub reward_sum: f64,
}

impl EpisodeMetrics {
    /// Sum of the per-step waiting-time cost, seconds.
    pub fn cost_total(&self) -> f64 {
        self.cost_wt_per_step.iter().sum()
    }
}

/// One row per episode for experiment logs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub scene: String,
    pub flow: String,
    pub agent: String,
    pub seed: u64,
    pub episode: u32,
    pub cost: f64,
    pub reward: f64,
    pub stop_time: f64,
    pub arrivals: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub episode_length: u32,
    pub alpha: f64,
    pub include_phases: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            episode_length: 1000,
            alpha: 1.0,
            include_phases: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
}

/// Episodic environment owning one simulation.
#[derive(Clone, Debug)]
pub struct Env {
    schedule: Arc<FlowSchedule>,
    sim: SimState,
    config: EnvConfig,
    metrics: EpisodeMetrics,
}

impl Env {
    pub fn new(scenario: Arc<Scenario>, config: EnvConfig) -> Result<Env> {
        let sim = SimState::reset(scenario)?;
        let schedule = Arc::new(sim.schedule().clone());
        Ok(Env {
            schedule,
            sim,
            config,
            metrics: EpisodeMetrics::default(),
        })
    }

    /// Restarts the episode. The departure schedule is reused, so every
    /// episode replays the same demand.
    pub fn reset(&mut self) -> Observation {
        self.sim =
            SimState::with_schedule(Arc::clone(self.sim.scenario()), Arc::clone(&self.schedule));
        self.metrics = EpisodeMetrics::default();
        self.observe()
    }

    pub fn observe(&self) -> Observation {
        observe(&self.sim, self.config.include_phases)
    }

    pub fn sim(&self) -> &SimState {
        &self.sim
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.config.alpha = alpha;
    }

    pub fn metrics(&self) -> &EpisodeMetrics {
        &self.metrics
    }

    pub fn done(&self) -> bool {
        self.sim.clock() >= self.config.episode_length
    }

    /// Applies one phase request per intersection and advances one step.
    pub fn step(&mut self, action: &[usize]) -> Result<StepOutcome> {
        let prev_cost = compute_cost(&self.sim);
        let prev_phases = self.sim.current_phases();
        self.sim.apply_signal_action(action)?;
        self.sim.step();

        let cur_cost = compute_cost(&self.sim);
        let cur_phases = self.sim.current_phases();
        let in_yellow: Vec<bool> = self.sim.signals().iter().map(|s| s.in_yellow).collect();
        let reward = compute_reward(
            prev_cost,
            cur_cost,
            &prev_phases,
            &cur_phases,
            &in_yellow,
            self.config.alpha,
        );

        let threshold = self.sim.params().wait_threshold;
        let (mut stopped, mut waiting) = (0usize, 0usize);
        for v in self.sim.vehicles() {
            stopped += usize::from(v.speed == 0.0);
            waiting += usize::from(v.speed <= threshold);
        }
        let m = &mut self.metrics;
        m.cost_wt_per_step.push(cur_cost);
        m.total_stop_time += stopped as f64 * STEP_SECONDS;
        m.total_waiting_time += waiting as f64 * STEP_SECONDS;
        m.arrivals = self.sim.counters().arrived;
        m.reward_sum += reward.r_total;

        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            done: self.done(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{build_grid_map, FlowSpec, SimParams};

    fn env(rows: usize, cols: usize, flows: Vec<FlowSpec>, len: u32) -> Env {
        let scenario = Scenario {
            network: build_grid_map(rows, cols, &[200.0], 4).unwrap(),
            flows,
            sim_params: SimParams::default(),
            seed: 5,
        };
        Env::new(
            Arc::new(scenario),
            EnvConfig {
                episode_length: len,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn empty_network_observes_zeros() {
        let e = env(2, 2, vec![], 10);
        let o = e.observe();
        assert_eq!(o.s_num, vec![0; 16]);
        assert_eq!(o.s_wt, vec![0.0; 16]);
        assert_eq!(o.s_p, vec![0; 4]);
    }

    #[test]
    fn observation_reflects_detectors_and_phases() {
        let mut e = env(1, 1, vec![], 10);
        let lane = e.sim().network().intersections[0].incoming[1];
        let next = e.sim().network().successors(lane).next().unwrap();
        let len = e.sim().network().lanes[lane].length;
        let a = e.sim.place_vehicle(vec![lane, next], 0, len - 1.0, 0.0);
        let b = e.sim.place_vehicle(vec![lane, next], 0, len - 8.0, 0.0);
        e.sim.vehicle_mut(a).unwrap().waiting_time = 10.0;
        e.sim.vehicle_mut(b).unwrap().waiting_time = 20.0;
        let o = e.observe();
        assert_eq!(o.s_num[1], 2);
        assert_eq!(o.s_wt[1], 30.0);
        assert_eq!(compute_cost(e.sim()), 30.0);
    }

    #[test]
    fn phase_shows_up_after_activation() {
        let mut e = env(3, 3, vec![], 50);
        let mut action = vec![0; 9];
        action[7] = 3;
        e.step(&action).unwrap();
        e.step(&action).unwrap();
        let out = e.step(&action).unwrap();
        assert_eq!(out.observation.s_p[7], 3);
    }

    #[test]
    fn committed_phase_leads_during_yellow() {
        let mut e = env(3, 3, vec![], 50);
        let mut action = vec![0; 9];
        action[7] = 3;
        let o = e.step(&action).unwrap().observation;
        assert_eq!((o.s_p[7], o.committed[7]), (0, 3));
        assert_eq!(o.s_p[..7], o.committed[..7]);
        let o = e.step(&action).unwrap().observation;
        assert_eq!((o.s_p[7], o.committed[7]), (0, 3));
        let o = e.step(&action).unwrap().observation;
        assert_eq!(o.s_p, o.committed);
    }

    #[test]
    fn reward_arithmetic() {
        let r = compute_reward(100.0, 80.0, &[0; 3], &[0; 3], &[false; 3], 1.0);
        assert_eq!(r.r_wt, 20.0);
        let prev = vec![0; 15];
        let mut cur = vec![0; 15];
        let mut yellow = vec![false; 15];
        cur[0] = 1;
        cur[1] = 2;
        yellow[2] = true;
        let r = compute_reward(100.0, 80.0, &prev, &cur, &yellow, 1.0);
        assert_eq!(r.r_uc, 12);
        assert_eq!(r.r_total, 32.0);
    }

    #[test]
    fn cost_of_empty_network_is_zero() {
        let e = env(1, 1, vec![], 10);
        assert_eq!(compute_cost(e.sim()), 0.0);
    }

    #[test]
    fn waiting_vehicles_add_one_second_each() {
        let mut e = env(1, 1, vec![], 10);
        let lane = e.sim().network().intersections[0].incoming[1];
        let next = e.sim().network().successors(lane).next().unwrap();
        let len = e.sim().network().lanes[lane].length;
        for k in 0..3 {
            e.sim
                .place_vehicle(vec![lane, next], 0, len - 0.5 - 6.0 * k as f64, 0.0);
        }
        let before = compute_cost(e.sim());
        e.step(&[0]).unwrap();
        assert_eq!(compute_cost(e.sim()) - before, 3.0);
    }

    #[test]
    fn done_at_episode_length() {
        let mut e = env(1, 1, vec![FlowSpec::new(1.0, 1000)], 1000);
        for _ in 0..999 {
            assert!(!e.step(&[0]).unwrap().done);
        }
        assert_eq!(e.sim().clock(), 999);
        assert!(e.step(&[0]).unwrap().done);
    }

    #[test]
    fn identity_action_is_fully_unchanged() {
        let mut e = env(2, 2, vec![FlowSpec::new(1.0, 100)], 100);
        for _ in 0..50 {
            assert_eq!(e.step(&[0; 4]).unwrap().reward.r_uc, 4);
        }
    }

    #[test]
    fn reward_telescopes() {
        let mut e = env(2, 2, vec![FlowSpec::new(0.8, 300)], 300);
        let c0 = compute_cost(e.sim());
        let mut sum = 0.0;
        let mut t = 0usize;
        loop {
            let a: Vec<usize> = (0..4).map(|i| (t / 20 + i) % 4).collect();
            let out = e.step(&a).unwrap();
            sum += out.reward.r_wt;
            t += 1;
            if out.done {
                break;
            }
        }
        let ct = compute_cost(e.sim());
        assert!((sum - (c0 - ct)).abs() < 1e-6 * (1.0 + ct));
        assert!(e.metrics().total_stop_time <= e.metrics().total_waiting_time);
    }

    #[test]
    fn reset_replays_the_episode() {
        let mut e = env(2, 2, vec![FlowSpec::new(1.0, 200)], 200);
        let run = |e: &mut Env| {
            e.reset();
            while !e.step(&[1, 0, 1, 0]).unwrap().done {}
            e.metrics().clone()
        };
        let a = run(&mut e);
        let b = run(&mut e);
        assert_eq!(a, b);
    }
}
