//! Signal controllers: fixed baselines and the learned agents.
//!
//! Learned agents are factored Q-learners. A learner owns a set of
//! intersections split into *branches*; each branch gets its own slice of the
//! network output and its own TD target, all driven by the shared reward.
//! With the unified decoder every intersection is a branch of `m` scores;
//! without it a branch is a group whose joint action is scored one-hot.

mod actor_critic;
mod baselines;
mod dqn;
mod network;
mod replay;
mod train;

pub use actor_critic::{actor_critic_update, policy_probabilities, AcStats};
pub use baselines::{
    act_auction_nash, act_fixed, act_random, auction_scores, AUCTION_WAIT_NORMALIZER,
};
pub use dqn::{select_action, sync_target, td_loss, td_targets, td_update, EpsilonSchedule};
pub use network::{
    count_dense_stack, count_parameters, encode_state, node_width, proximity_groups, Encoder,
    FeatureLayout, HeadKind, QNetwork, QNetworkSpec,
};
pub use replay::{ReplayBuffer, Transition};
pub use train::{
    build_learners, evaluate, greedy_actions, train, train_with_progress, Controller, CurvePoint,
    Learner, LearnerLayout, TrainOptions, TrainedModel,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::RoadNetwork;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentVariant {
    Random,
    Fixed,
    Auction,
    MarlS,
    MarlG,
    EguRl,
}

impl AgentVariant {
    pub const ALL: [AgentVariant; 6] = [
        AgentVariant::Random,
        AgentVariant::Fixed,
        AgentVariant::Auction,
        AgentVariant::MarlS,
        AgentVariant::MarlG,
        AgentVariant::EguRl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentVariant::Random => "random",
            AgentVariant::Fixed => "fixed",
            AgentVariant::Auction => "auction",
            AgentVariant::MarlS => "marl_s",
            AgentVariant::MarlG => "marl_g",
            AgentVariant::EguRl => "egu_rl",
        }
    }

    pub fn learns(self) -> bool {
        matches!(
            self,
            AgentVariant::MarlS | AgentVariant::MarlG | AgentVariant::EguRl
        )
    }
}

impl std::str::FromStr for AgentVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown agent `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Dqn,
    ActorCritic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub variant: AgentVariant,
    /// Unified decoder; when off, branches are joint one-hot heads over groups.
    pub use_usd: bool,
    /// Graph encoder; when off, node features are concatenated.
    pub use_ege: bool,
    /// Lane-length edge weights; when off the graph is binary.
    pub use_edge_weights: bool,
    pub gamma: f64,
    pub lr: f64,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub batch: usize,
    pub buffer_capacity: usize,
    pub target_sync: u64,
    pub hidden: Vec<usize>,
    pub gcn_widths: Vec<usize>,
    pub group_size: usize,
    pub learner: LearnerKind,
    pub alpha: f64,
    /// Multiplier applied to rewards before they reach a learner.
    pub reward_scale: f64,
    pub fixed_dwell: u32,
    pub auction_probes: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Steps per actor-critic update.
    pub rollout: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            variant: AgentVariant::EguRl,
            use_usd: true,
            use_ege: true,
            use_edge_weights: true,
            gamma: 0.9,
            lr: 1e-3,
            epsilon_start: 0.5,
            epsilon_decay: 0.99999,
            epsilon_min: 0.01,
            batch: 150,
            buffer_capacity: 2000,
            target_sync: 100,
            hidden: vec![128, 64],
            gcn_widths: vec![16, 8],
            group_size: 3,
            learner: LearnerKind::Dqn,
            alpha: 1.0,
            reward_scale: 0.01,
            fixed_dwell: 20,
            auction_probes: 32,
            entropy_coef: 0.01,
            value_coef: 0.5,
            rollout: 20,
        }
    }
}

impl AgentConfig {
    pub fn for_variant(variant: AgentVariant) -> Self {
        AgentConfig {
            variant,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{name} must lie in [0, 1], got {v}"
                )))
            }
        };
        unit("gamma", self.gamma)?;
        unit("epsilon_start", self.epsilon_start)?;
        unit("epsilon_decay", self.epsilon_decay)?;
        unit("epsilon_min", self.epsilon_min)?;
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return Err(Error::invalid("reward_scale must be > 0"));
        }
        if !self.alpha.is_finite() || self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return Err(Error::invalid(
                "alpha and loss coefficients must be finite and non-negative",
            ));
        }
        if self.batch == 0 || self.buffer_capacity < self.batch {
            return Err(Error::invalid(format!(
                "need 0 < batch ({}) <= buffer_capacity ({})",
                self.batch, self.buffer_capacity
            )));
        }
        if self.target_sync == 0
            || self.group_size == 0
            || self.fixed_dwell == 0
            || self.auction_probes == 0
        {
            return Err(Error::invalid(
                "target_sync, group_size, fixed_dwell and auction_probes must be >= 1",
            ));
        }
        if self.rollout == 0 {
            return Err(Error::invalid("rollout must be >= 1"));
        }
        if self.hidden.iter().chain(&self.gcn_widths).any(|&w| w == 0) {
            return Err(Error::invalid("layer widths must be >= 1"));
        }
        if self.use_ege && self.gcn_widths.is_empty() {
            return Err(Error::invalid(
                "graph encoder needs at least one layer width",
            ));
        }
        Ok(())
    }
}

/// Per-intersection phase scores with validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionMatrix {
    pub n: usize,
    pub m: usize,
    /// Row-major `n x m`.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub chosen: Vec<usize>,
}

impl ActionMatrix {
    /// Zero scores, mask from each intersection's phase count, all on phase 0.
    pub fn for_phase_counts(phase_counts: &[usize]) -> ActionMatrix {
        let n = phase_counts.len();
        let m = phase_counts.iter().copied().max().unwrap_or(0);
        let mask = phase_counts
            .iter()
            .flat_map(|&k| (0..m).map(move |p| p < k))
            .collect();
        ActionMatrix {
            n,
            m,
            values: vec![0.0; n * m],
            mask,
            chosen: vec![0; n],
        }
    }

    pub fn for_network(network: &RoadNetwork) -> ActionMatrix {
        let counts: Vec<usize> = network
            .intersections
            .iter()
            .map(|i| i.phase_count())
            .collect();
        ActionMatrix::for_phase_counts(&counts)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn valid(&self, i: usize) -> &[bool] {
        &self.mask[i * self.m..(i + 1) * self.m]
    }

    /// Masked argmax per row; ties go to the lowest phase.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.n)
            .map(|i| crate::tensor::argmax_valid(self.row(i), self.valid(i)).unwrap_or(0))
            .collect()
    }

    /// Uniformly random valid phase for intersection `i`.
    pub(crate) fn random_valid(&self, i: usize, rng: &mut impl Rng) -> usize {
        let valid: Vec<usize> = (0..self.m).filter(|&p| self.valid(i)[p]).collect();
        valid[rng.gen_range(0..valid.len())]
    }

    /// True when every chosen phase is allowed by the mask.
    pub fn is_consistent(&self) -> bool {
        self.chosen.len() == self.n
            && self
                .chosen
                .iter()
                .enumerate()
                .all(|(i, &p)| p < self.m && self.valid(i)[p])
    }
}
