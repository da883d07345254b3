//! Train / evaluate / time / ablate, writing artifacts under an output dir.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use trafficrl::agents::{
    evaluate, greedy_actions, train, AgentConfig, AgentVariant, Controller, CurvePoint,
    TrainOptions, TrainedModel,
};
use trafficrl::env::EpisodeMetrics;
use trafficrl::netmodel::Scenario;

use crate::error::{io_err, BenchError, Result};
use crate::rows::{hours, write_rows, ResultRow, Split};

pub const DEFAULT_TRAIN_EPISODES: u32 = 500;
pub const DEFAULT_EPISODE_STEPS: u32 = 1000;
pub const SEEN_STEPS: u32 = 1000;
pub const UNSEEN_STEPS: u32 = 5000;
pub const TIMING_TRIALS: usize = 10;

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub scenario: Arc<Scenario>,
    pub scene: String,
    pub flow: String,
    /// Row label; defaults to the variant name.
    pub agent: String,
    pub config: AgentConfig,
    pub seeds: Vec<u64>,
    pub train_episodes: u32,
    pub episode_steps: u32,
    pub eval_steps_seen: u32,
    pub eval_steps_unseen: u32,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn new(
        scenario: Scenario,
        scene: &str,
        config: AgentConfig,
        out_dir: impl Into<PathBuf>,
    ) -> Self {
        let flow = crate::scenes::flow_name(&scenario);
        ExperimentSpec {
            scenario: Arc::new(scenario),
            scene: scene.to_string(),
            flow,
            agent: config.variant.name().to_string(),
            config,
            seeds: vec![1],
            train_episodes: DEFAULT_TRAIN_EPISODES,
            episode_steps: DEFAULT_EPISODE_STEPS,
            eval_steps_seen: SEEN_STEPS,
            eval_steps_unseen: UNSEEN_STEPS,
            out_dir: out_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(BenchError::Invalid("at least one seed is required".into()));
        }
        if self.train_episodes == 0
            || self.episode_steps == 0
            || self.eval_steps_seen == 0
            || self.eval_steps_unseen == 0
        {
            return Err(BenchError::Invalid(
                "episode and step counts must be positive".into(),
            ));
        }
        self.config.validate()?;
        Ok(())
    }

    /// Directory holding one (agent, seed) run.
    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.out_dir.join(&self.agent).join(format!("seed{seed}"))
    }

    fn split_scenario(&self, split: Split) -> (Arc<Scenario>, u32) {
        match split {
            Split::Seen => (Arc::clone(&self.scenario), self.eval_steps_seen),
            Split::Unseen => {
                let horizon = self
                    .scenario
                    .flows
                    .iter()
                    .map(|f| f.horizon)
                    .max()
                    .unwrap_or(0)
                    .max(self.eval_steps_unseen);
                (
                    Arc::new(self.scenario.with_horizon(horizon)),
                    self.eval_steps_unseen,
                )
            }
        }
    }
}

/// One trained (agent, seed) pair.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub seed: u64,
    pub model: TrainedModel,
    pub curve: Vec<CurvePoint>,
    pub seconds: f64,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Trains every seed and writes `checkpoint.json`, `config.json` and
/// `curve.csv` into each run directory.
pub fn cmd_train(spec: &ExperimentSpec) -> Result<Vec<TrainRun>> {
    spec.validate()?;
    let mut runs = Vec::new();
    for &seed in &spec.seeds {
        let start = Instant::now();
        let (model, curve) = train(
            Arc::clone(&spec.scenario),
            &spec.config,
            TrainOptions {
                episodes: spec.train_episodes,
                steps: spec.episode_steps,
                seed,
            },
        )?;
        let seconds = start.elapsed().as_secs_f64();
        let dir = spec.run_dir(seed);
        write_file(
            &dir.join("config.json"),
            &serde_json::to_string_pretty(&spec.config)?,
        )?;
        write_file(&dir.join("checkpoint.json"), &model.checkpoint_json()?)?;
        write_rows(&dir.join("curve.csv"), &curve)?;
        runs.push(TrainRun {
            seed,
            model,
            curve,
            seconds,
        });
    }
    Ok(runs)
}

/// Controller for `seed`: a baseline, or the learned model read from the
/// run directory.
pub fn load_controller(spec: &ExperimentSpec, seed: u64) -> Result<Controller> {
    if !spec.config.variant.learns() {
        return Ok(Controller::baseline(&spec.config)?);
    }
    let path = spec.run_dir(seed).join("checkpoint.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut model = TrainedModel::new(
        &spec.scenario.network,
        &spec.scenario.sim_params,
        spec.config.clone(),
        seed,
    )?;
    model.load_checkpoint_json(&text)?;
    Ok(Controller::Learned(Box::new(model)))
}

pub fn param_count(controller: &Controller) -> usize {
    match controller {
        Controller::Learned(m) => m.parameter_count(),
        _ => 0,
    }
}

/// Mean wall-clock milliseconds of one greedy decision over `trials`,
/// after one warm-up call.
pub fn time_inference(
    controller: &Controller,
    scenario: Arc<Scenario>,
    trials: usize,
) -> Result<f64> {
    if trials == 0 {
        return Err(BenchError::Invalid("trials must be >= 1".into()));
    }
    let env = trafficrl::env::Env::new(scenario, Default::default())?;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let decide = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<Vec<usize>> {
        Ok(match controller {
            Controller::Learned(m) => greedy_actions(m, &env.observe())?,
            c => c.act(&env, rng)?,
        })
    };
    decide(&mut rng)?;
    let start = Instant::now();
    for _ in 0..trials {
        std::hint::black_box(decide(&mut rng)?);
    }
    Ok(start.elapsed().as_secs_f64() * 1e3 / trials as f64)
}

pub fn result_row(
    spec: &ExperimentSpec,
    seed: u64,
    split: Split,
    metrics: &EpisodeMetrics,
    param_count: usize,
    mean_inference_ms: f64,
) -> ResultRow {
    ResultRow {
        scene: spec.scene.clone(),
        flow: spec.flow.clone(),
        agent: spec.agent.clone(),
        seed,
        split,
        cost_wt_hours: hours(metrics.cost_total()),
        stop_time_hours: hours(metrics.total_stop_time),
        reward_sum: metrics.reward_sum,
        param_count,
        mean_inference_ms,
    }
}

/// Greedy rollouts of every seed on `split`.
pub fn cmd_eval(spec: &ExperimentSpec, split: Split) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let (scenario, steps) = spec.split_scenario(split);
    let mut rows = Vec::new();
    for &seed in &spec.seeds {
        let controller = load_controller(spec, seed)?;
        rows.push(eval_controller(
            spec,
            &controller,
            seed,
            split,
            &scenario,
            steps,
        )?);
    }
    Ok(rows)
}

fn eval_controller(
    spec: &ExperimentSpec,
    controller: &Controller,
    seed: u64,
    split: Split,
    scenario: &Arc<Scenario>,
    steps: u32,
) -> Result<ResultRow> {
    let metrics = evaluate(
        Arc::clone(scenario),
        controller,
        steps,
        spec.config.alpha,
        seed,
    )?;
    let ms = time_inference(controller, Arc::clone(scenario), TIMING_TRIALS)?;
    Ok(result_row(
        spec,
        seed,
        split,
        &metrics,
        param_count(controller),
        ms,
    ))
}

/// Evaluates an in-memory controller on both splits.
pub fn eval_both(
    spec: &ExperimentSpec,
    controller: &Controller,
    seed: u64,
) -> Result<Vec<ResultRow>> {
    [Split::Seen, Split::Unseen]
        .into_iter()
        .map(|split| {
            let (scenario, steps) = spec.split_scenario(split);
            eval_controller(spec, controller, seed, split, &scenario, steps)
        })
        .collect()
}

/// The four ablation configurations, labelled as in the report.
pub fn ablation_configs(base: &AgentConfig) -> Vec<(&'static str, AgentConfig)> {
    let full = AgentConfig {
        variant: AgentVariant::EguRl,
        use_usd: true,
        use_ege: true,
        use_edge_weights: true,
        ..base.clone()
    };
    vec![
        ("egu_rl", full.clone()),
        (
            "wo_usd",
            AgentConfig {
                use_usd: false,
                ..full.clone()
            },
        ),
        (
            "wo_ege",
            AgentConfig {
                use_ege: false,
                ..full.clone()
            },
        ),
        (
            "wo_ew",
            AgentConfig {
                use_edge_weights: false,
                ..full
            },
        ),
    ]
}

/// Hybrid-reward comparison row: a model trained under `alpha`, scored with
/// the hybrid reward (`alpha` = 1) on the seen split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardRow {
    pub seed: u64,
    pub train_alpha: f64,
    pub hybrid_reward: f64,
    pub cost_wt_hours: f64,
}

#[derive(Clone, Debug)]
pub struct AblationOutput {
    pub rows: Vec<ResultRow>,
    pub reward_rows: Vec<RewardRow>,
}

/// Trains and evaluates the ablations plus a waiting-time-only reward run,
/// writing `ablation.csv` and `reward_compare.csv`.
pub fn cmd_ablate(spec: &ExperimentSpec) -> Result<AblationOutput> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut reward_rows = Vec::new();
    let mut hybrid_models = Vec::new();
    for (label, config) in ablation_configs(&spec.config) {
        let sub = ExperimentSpec {
            agent: label.to_string(),
            config,
            ..spec.clone()
        };
        for run in cmd_train(&sub)? {
            let controller = Controller::Learned(Box::new(run.model));
            rows.extend(eval_both(&sub, &controller, run.seed)?);
            if label == "egu_rl" {
                hybrid_models.push((run.seed, controller));
            }
        }
    }
    let (seen, steps) = spec.split_scenario(Split::Seen);
    let wt_only = ExperimentSpec {
        agent: "egu_rl_alpha0".into(),
        config: AgentConfig {
            alpha: 0.0,
            ..ablation_configs(&spec.config)[0].1.clone()
        },
        ..spec.clone()
    };
    let alpha0 = cmd_train(&wt_only)?;
    for ((seed, hybrid), run) in hybrid_models.iter().zip(alpha0) {
        let wt_controller = Controller::Learned(Box::new(run.model));
        for (alpha, c) in [(1.0, hybrid), (0.0, &wt_controller)] {
            let m = evaluate(Arc::clone(&seen), c, steps, 1.0, *seed)?;
            reward_rows.push(RewardRow {
                seed: *seed,
                train_alpha: alpha,
                hybrid_reward: m.reward_sum,
                cost_wt_hours: hours(m.cost_total()),
            });
        }
    }
    write_rows(&spec.out_dir.join("ablation.csv"), &rows)?;
    write_rows(&spec.out_dir.join("reward_compare.csv"), &reward_rows)?;
    Ok(AblationOutput { rows, reward_rows })
}
