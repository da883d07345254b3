use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::actor_critic::{actor_critic_update, policy_probabilities};
use super::dqn::{select_action, sync_target, td_update, EpsilonSchedule};
use super::network::FeatureLayout;
use super::{
    act_auction_nash, act_fixed, act_random, encode_state, proximity_groups, ActionMatrix,
    AgentConfig, AgentVariant, Encoder, HeadKind, LearnerKind, QNetwork, QNetworkSpec,
    ReplayBuffer, Transition,
};
use crate::env::{Env, EnvConfig, EpisodeMetrics, Observation};
use crate::error::{Error, Result};
use crate::netmodel::{compute_adjacency_with, AdjacencyOptions, RoadNetwork, Scenario, SimParams};
use crate::tensor::{Adam, Matrix, ParamStore};

/// Which intersections a learner controls and the network it uses.
#[derive(Clone, Debug)]
pub struct LearnerLayout {
    /// Global intersection ids, in network input order.
    pub nodes: Vec<usize>,
    pub spec: QNetworkSpec,
}

/// Learner layouts implied by `config` on `network`; empty for baselines.
pub fn build_learners(network: &RoadNetwork, config: &AgentConfig) -> Result<Vec<LearnerLayout>> {
    config.validate()?;
    let counts: Vec<usize> = network
        .intersections
        .iter()
        .map(|i| i.phase_count())
        .collect();
    let width = super::node_width(network);
    let value_head = config.learner == LearnerKind::ActorCritic;
    let spec = |nodes: &[usize], encoder: Encoder, head: HeadKind| QNetworkSpec {
        phase_counts: nodes.iter().map(|&i| counts[i]).collect(),
        node_width: width,
        encoder,
        hidden: config.hidden.clone(),
        head,
        value_head,
    };
    let layouts = match config.variant {
        AgentVariant::Random | AgentVariant::Fixed | AgentVariant::Auction => Vec::new(),
        AgentVariant::MarlS => (0..network.intersection_count())
            .map(|i| LearnerLayout {
                nodes: vec![i],
                spec: spec(&[i], Encoder::Concat, HeadKind::Unified),
            })
            .collect(),
        AgentVariant::MarlG => proximity_groups(network, config.group_size)
            .into_iter()
            .map(|g| {
                let head = HeadKind::Joint {
                    groups: vec![(0..g.len()).collect()],
                };
                LearnerLayout {
                    spec: spec(&g, Encoder::Concat, head),
                    nodes: g,
                }
            })
            .collect(),
        AgentVariant::EguRl => {
            let nodes: Vec<usize> = (0..network.intersection_count()).collect();
            let encoder = if config.use_ege {
                let adj = compute_adjacency_with(
                    network,
                    AdjacencyOptions {
                        edge_weights: config.use_edge_weights,
                        ..Default::default()
                    },
                );
                Encoder::Gcn {
                    widths: config.gcn_widths.clone(),
                    adjacency: Arc::new(Matrix::from_vec(adj.n, adj.n, adj.normalized)?),
                }
            } else {
                Encoder::Concat
            };
            let head = if config.use_usd {
                HeadKind::Unified
            } else {
                HeadKind::Joint {
                    groups: proximity_groups(network, config.group_size),
                }
            };
            vec![LearnerLayout {
                spec: spec(&nodes, encoder, head),
                nodes,
            }]
        }
    };
    for l in &layouts {
        l.spec.validate()?;
    }
    Ok(layouts)
}

/// One independent learner: online and target networks, optimizer, memory.
#[derive(Clone, Debug)]
pub struct Learner {
    pub nodes: Vec<usize>,
    pub net: QNetwork,
    target: ParamStore,
    opt: Adam,
    buffer: ReplayBuffer,
    rollout: Vec<Transition>,
    pub learning_steps: u64,
}

impl Learner {
    fn new(layout: LearnerLayout, config: &AgentConfig, rng: &mut impl Rng) -> Result<Learner> {
        let net = QNetwork::new(layout.spec, rng)?;
        Ok(Learner {
            nodes: layout.nodes,
            target: net.params().clone(),
            net,
            opt: Adam::new(config.lr)?,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            rollout: Vec::new(),
            learning_steps: 0,
        })
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn target(&self) -> &ParamStore {
        &self.target
    }

    fn scores(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .net
            .predict(Matrix::row_vector(state.to_vec()))?
            .into_data())
    }
}

/// A configured controller with its learned parameters, if any.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub config: AgentConfig,
    pub learners: Vec<Learner>,
    features: FeatureLayout,
}

impl TrainedModel {
    /// Freshly initialised model for `network`.
    pub fn new(
        network: &RoadNetwork,
        params: &SimParams,
        config: AgentConfig,
        seed: u64,
    ) -> Result<TrainedModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_rng(network, params, config, &mut rng)
    }

    fn with_rng(
        network: &RoadNetwork,
        params: &SimParams,
        config: AgentConfig,
        rng: &mut impl Rng,
    ) -> Result<TrainedModel> {
        let learners = build_learners(network, &config)?
            .into_iter()
            .map(|l| Learner::new(l, &config, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainedModel {
            features: FeatureLayout::new(network, params),
            config,
            learners,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.learners
            .iter()
            .map(|l| l.net.params().scalar_count())
            .sum()
    }

    fn merged(&self) -> ParamStore {
        let mut store = ParamStore::new();
        for (k, l) in self.learners.iter().enumerate() {
            let p = l.net.params();
            for id in p.ids() {
                store.add(format!("learner{k}/{}", p.name(id)), p.get(id).clone());
            }
        }
        store
    }

    pub fn checkpoint_json(&self) -> Result<String> {
        self.merged().to_json()
    }

    /// Loads parameters saved by [`TrainedModel::checkpoint_json`] for the
    /// same configuration and network; target networks follow.
    pub fn load_checkpoint_json(&mut self, text: &str) -> Result<()> {
        let mut store = self.merged();
        store.load_json(text)?;
        let mut values = store.values().iter();
        for l in &mut self.learners {
            let ids: Vec<_> = l.net.params().ids().collect();
            for id in ids {
                *l.net.params_mut().get_mut(id) = values
                    .next()
                    .cloned()
                    .ok_or_else(|| Error::Contract("checkpoint ran short".into()))?;
            }
            l.target.copy_from(l.net.params())?;
        }
        Ok(())
    }

    fn states(&self, obs: &Observation) -> Vec<Vec<f64>> {
        self.learners
            .iter()
            .map(|l| encode_state(&self.features, obs, &l.nodes))
            .collect()
    }
}

/// Greedy (epsilon = 0) phases of a learned model.
pub fn greedy_actions(model: &TrainedModel, obs: &Observation) -> Result<Vec<usize>> {
    let n = obs.s_p.len().max(
        model
            .learners
            .iter()
            .flat_map(|l| l.nodes.iter())
            .map(|&i| i + 1)
            .max()
            .unwrap_or(0),
    );
    let mut phases = vec![0; n];
    for (l, state) in model.learners.iter().zip(model.states(obs)) {
        let scores = l.scores(&state)?;
        let width = l.net.spec().score_width();
        for (&node, p) in l.nodes.iter().zip(l.net.greedy(&scores[..width])) {
            phases[node] = p;
        }
    }
    Ok(phases)
}

/// Anything that can drive the signals of an [`Env`].
#[derive(Clone, Debug)]
pub enum Controller {
    Random,
    Fixed { dwell: u32 },
    Auction { probes: usize },
    Learned(Box<TrainedModel>),
}

impl Controller {
    /// Baseline controller described by `config`; learned variants need a model.
    pub fn baseline(config: &AgentConfig) -> Result<Controller> {
        match config.variant {
            AgentVariant::Random => Ok(Controller::Random),
            AgentVariant::Fixed => Ok(Controller::Fixed {
                dwell: config.fixed_dwell,
            }),
            AgentVariant::Auction => Ok(Controller::Auction {
                probes: config.auction_probes,
            }),
            v => Err(Error::invalid(format!(
                "`{}` needs a trained model",
                v.name()
            ))),
        }
    }

    pub fn act(&self, env: &Env, rng: &mut impl Rng) -> Result<Vec<usize>> {
        let sim = env.sim();
        match self {
            Controller::Random => {
                Ok(act_random(ActionMatrix::for_network(sim.network()), rng).chosen)
            }
            Controller::Fixed { dwell } => {
                let counts: Vec<usize> = sim
                    .network()
                    .intersections
                    .iter()
                    .map(|i| i.phase_count())
                    .collect();
                Ok(act_fixed(sim.clock(), *dwell, &counts)?.chosen)
            }
            Controller::Auction { probes } => Ok(act_auction_nash(sim, *probes, rng)?.chosen),
            Controller::Learned(model) => greedy_actions(model, &env.observe()),
        }
    }
}

/// Rolls `controller` for `steps` steps from a fresh episode.
pub fn evaluate(
    scenario: Arc<Scenario>,
    controller: &Controller,
    steps: u32,
    alpha: f64,
    seed: u64,
) -> Result<EpisodeMetrics> {
    let mut env = Env::new(
        scenario,
        EnvConfig {
            episode_length: steps,
            alpha,
            include_phases: true,
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while !env.done() {
        let a = controller.act(&env, &mut rng)?;
        env.step(&a)?;
    }
    Ok(env.metrics().clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainOptions {
    pub episodes: u32,
    pub steps: u32,
    pub seed: u64,
}

/// One learning-curve row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: u32,
    /// Sum over steps of the waiting-time cost, seconds.
    pub cost: f64,
    pub reward: f64,
    pub epsilon: f64,
    /// Mean learner loss over the episode's updates; 0 when none ran.
    pub loss: f64,
    pub stop_time: f64,
    pub arrivals: u64,
}

/// Trains `config` on `scenario`. Baselines just run their episodes so the
/// curves are comparable.
pub fn train(
    scenario: Arc<Scenario>,
    config: &AgentConfig,
    opts: TrainOptions,
) -> Result<(TrainedModel, Vec<CurvePoint>)> {
    train_with_progress(scenario, config, opts, |_| {})
}

pub fn train_with_progress(
    scenario: Arc<Scenario>,
    config: &AgentConfig,
    opts: TrainOptions,
    mut progress: impl FnMut(&CurvePoint),
) -> Result<(TrainedModel, Vec<CurvePoint>)> {
    config.validate()?;
    if opts.episodes == 0 || opts.steps == 0 {
        return Err(Error::invalid("episodes and steps must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut model = TrainedModel::with_rng(
        &scenario.network,
        &scenario.sim_params,
        config.clone(),
        &mut rng,
    )?;
    let baseline = if config.variant.learns() {
        None
    } else {
        Some(Controller::baseline(config)?)
    };
    let schedule = EpsilonSchedule {
        start: config.epsilon_start,
        decay: config.epsilon_decay,
        min: config.epsilon_min,
    };
    let mut env = Env::new(
        scenario,
        EnvConfig {
            episode_length: opts.steps,
            alpha: config.alpha,
            include_phases: true,
        },
    )?;
    let n = env.sim().network().intersection_count();
    let mut curves = Vec::with_capacity(opts.episodes as usize);
    for episode in 0..opts.episodes {
        let mut obs = env.reset();
        let mut states = model.states(&obs);
        let (mut loss_sum, mut updates) = (0.0, 0u64);
        while !env.done() {
            let mut action = vec![0; n];
            let mut local: Vec<Vec<usize>> = Vec::with_capacity(model.learners.len());
            if let Some(c) = &baseline {
                action = c.act(&env, &mut rng)?;
            }
            for (l, state) in model.learners.iter().zip(&states) {
                let scores = l.scores(state)?;
                let chosen = match config.learner {
                    LearnerKind::Dqn => {
                        let eps = schedule.at(l.learning_steps);
                        select_action(l.net.action_matrix(&scores), eps, &mut rng)?.chosen
                    }
                    LearnerKind::ActorCritic => sample_policy(&l.net, &scores, &mut rng),
                };
                for (&node, &p) in l.nodes.iter().zip(&chosen) {
                    action[node] = p;
                }
                local.push(chosen);
            }
            let outcome = env.step(&action)?;
            obs = outcome.observation;
            let next_states = model.states(&obs);
            let reward = outcome.reward.r_total * config.reward_scale;
            for ((l, (state, next)), chosen) in model
                .learners
                .iter_mut()
                .zip(states.into_iter().zip(&next_states))
                .zip(local)
            {
                let t = Transition {
                    state,
                    action: chosen,
                    reward,
                    next_state: next.clone(),
                    done: outcome.done,
                };
                if let Some(loss) = learn(l, t, config, &mut rng)? {
                    loss_sum += loss;
                    updates += 1;
                }
            }
            states = next_states;
        }
        let m = env.metrics();
        let epsilon = match (config.learner, model.learners.first()) {
            (LearnerKind::Dqn, Some(l)) => schedule.at(l.learning_steps),
            _ => 0.0,
        };
        let point = CurvePoint {
            episode,
            cost: m.cost_total(),
            reward: m.reward_sum,
            epsilon,
            loss: if updates > 0 {
                loss_sum / updates as f64
            } else {
                0.0
            },
            stop_time: m.total_stop_time,
            arrivals: m.arrivals,
        };
        progress(&point);
        curves.push(point);
    }
    Ok((model, curves))
}

fn sample_policy(net: &QNetwork, scores: &[f64], rng: &mut impl Rng) -> Vec<usize> {
    let spec = net.spec();
    let p = policy_probabilities(spec, scores);
    let offsets = spec.branch_offsets();
    let mut phases = vec![0; spec.nodes()];
    for (k, branch) in spec.branches().iter().enumerate() {
        let (lo, hi) = (offsets[k], offsets[k + 1]);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = None;
        for j in lo..hi {
            if p[j] > 0.0 {
                acc += p[j];
                pick = Some(j - lo);
                if u < acc {
                    break;
                }
            }
        }
        for (&node, ph) in branch
            .iter()
            .zip(spec.decode_branch(branch, pick.unwrap_or(0)))
        {
            phases[node] = ph;
        }
    }
    phases
}

/// Stores the transition and runs any update that is due.
fn learn(
    l: &mut Learner,
    t: Transition,
    config: &AgentConfig,
    rng: &mut impl Rng,
) -> Result<Option<f64>> {
    match config.learner {
        LearnerKind::Dqn => {
            l.buffer.push(t)?;
            if l.buffer.len() < config.batch {
                return Ok(None);
            }
            let batch = l.buffer.sample(config.batch, rng)?;
            let loss = td_update(&mut l.net, &l.target, &batch, config.gamma, &mut l.opt)?;
            l.learning_steps += 1;
            sync_target(&l.net, &mut l.target, l.learning_steps, config.target_sync)?;
            Ok(Some(loss))
        }
        LearnerKind::ActorCritic => {
            t.validate()?;
            let done = t.done;
            l.rollout.push(t);
            if l.rollout.len() < config.rollout && !done {
                return Ok(None);
            }
            let batch = std::mem::take(&mut l.rollout);
            let refs: Vec<&Transition> = batch.iter().collect();
            let stats = actor_critic_update(
                &mut l.net,
                &refs,
                config.gamma,
                config.value_coef,
                config.entropy_coef,
                &mut l.opt,
            )?;
            l.learning_steps += 1;
            Ok(Some(stats.loss))
        }
    }
}
