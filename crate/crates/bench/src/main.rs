use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trafficrl::agents::{AgentConfig, AgentVariant};
use trafficrl::netmodel::{load_scenario, save_scenario, Scenario};
use trafficrl_bench::error::{BenchError, Result};
use trafficrl_bench::experiment::{self, ExperimentSpec};
use trafficrl_bench::report::build_report;
use trafficrl_bench::rows::{read_rows, write_rows, ResultRow, Split};
use trafficrl_bench::scenes;

#[derive(Parser)]
#[command(
    name = "trafficrl-bench",
    about = "Signal-control benchmark harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a grid scenario file.
    GenMap(GenMap),
    /// Expand a scenario's flows into a departure schedule CSV.
    GenFlows(GenFlows),
    /// Train an agent for each seed.
    Train(Run),
    /// Greedy evaluation on the seen and/or unseen split.
    Eval(Eval),
    /// Train and evaluate the ablations and the reward comparison.
    Ablate(Run),
    /// Mean greedy decision latency.
    Time(Time),
    /// Merge result rows into a comparison table.
    Report(Report),
}

#[derive(Args)]
struct GenMap {
    #[arg(long, default_value_t = 3)]
    rows: usize,
    #[arg(long, default_value_t = 3)]
    cols: usize,
    /// Lane lengths in meters, used cyclically.
    #[arg(long, value_delimiter = ',', default_value = "200")]
    lanes: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    period: f64,
    #[arg(long, default_value_t = scenes::SEEN_HORIZON)]
    horizon: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenFlows {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "egu_rl")]
    agent: String,
    /// Comma-separated seeds.
    #[arg(
        long = "seeds",
        alias = "seed",
        value_delimiter = ',',
        default_value = "1"
    )]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = experiment::DEFAULT_EPISODE_STEPS)]
    steps: u32,
    #[arg(long)]
    alpha: Option<f64>,
    /// Agent configuration overrides (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Run {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = experiment::DEFAULT_TRAIN_EPISODES)]
    episodes: u32,
}

#[derive(Args)]
struct Eval {
    #[command(flatten)]
    common: Common,
    /// seen, unseen or both.
    #[arg(long, default_value = "both")]
    split: String,
}

#[derive(Args)]
struct Time {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = experiment::TIMING_TRIALS)]
    trials: usize,
}

#[derive(Args)]
struct Report {
    /// Row files or directories containing them.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn load(path: &Path) -> Result<Scenario> {
    let loaded = load_scenario(path)?;
    if loaded.defaulted_sim_params {
        eprintln!(
            "note: {} has no sim_params table; using defaults",
            path.display()
        );
    }
    Ok(loaded.scenario)
}

fn spec(c: &Common, episodes: u32) -> Result<ExperimentSpec> {
    let variant: AgentVariant = c.agent.parse()?;
    let mut config = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| BenchError::Io {
                path: p.display().to_string(),
                source,
            })?;
            toml::from_str::<AgentConfig>(&text)?
        }
        None => AgentConfig::default(),
    };
    config.variant = variant;
    if let Some(a) = c.alpha {
        config.alpha = a;
    }
    let scenario = load(&c.scenario)?;
    let scene = c
        .scenario
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into());
    let mut s = ExperimentSpec::new(scenario, &scene, config, &c.out);
    s.seeds = c.seeds.clone();
    s.train_episodes = episodes;
    s.episode_steps = c.steps;
    s.validate()?;
    Ok(s)
}

fn collect_row_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut stack: Vec<PathBuf> = inputs.to_vec();
    while let Some(p) = stack.pop() {
        if p.is_dir() {
            let entries = fs::read_dir(&p).map_err(|source| BenchError::Io {
                path: p.display().to_string(),
                source,
            })?;
            for e in entries.flatten() {
                stack.push(e.path());
            }
        } else if p.is_file() {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with("eval_") || name == "ablation.csv" || inputs.contains(&p) {
                files.push(p);
            }
        } else {
            return Err(BenchError::Invalid(format!(
                "{} does not exist",
                p.display()
            )));
        }
    }
    files.sort();
    Ok(files)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenMap(a) => {
            let scene = scenes::scene_name(a.rows, a.cols);
            let s = scenes::grid_scenario(a.rows, a.cols, &a.lanes, a.period, a.horizon, a.seed)?;
            save_scenario(&s, &a.out)?;
            println!("{scene}: wrote {}", a.out.display());
        }
        Command::GenFlows(a) => {
            let s = load(&a.scenario)?;
            let schedule = s.schedule()?;
            #[derive(serde::Serialize)]
            struct Row {
                step: u32,
                route: String,
            }
            let rows: Vec<Row> = schedule
                .departures
                .iter()
                .map(|d| Row {
                    step: d.step,
                    route: d.route.as_ref().map_or_else(
                        || "skipped".to_string(),
                        |r| {
                            r.iter()
                                .map(|l| l.to_string())
                                .collect::<Vec<_>>()
                                .join(" ")
                        },
                    ),
                })
                .collect();
            write_rows(&a.out, &rows)?;
            println!(
                "{} departures ({} without a route) -> {}",
                rows.len(),
                schedule.skipped,
                a.out.display()
            );
        }
        Command::Train(a) => {
            let s = spec(&a.common, a.episodes)?;
            for r in experiment::cmd_train(&s)? {
                let last = r.curve.last().map_or(f64::NAN, |c| c.cost);
                println!(
                    "{} seed {}: {} episodes in {:.1}s, final episode cost {:.0} s -> {}",
                    s.agent,
                    r.seed,
                    r.curve.len(),
                    r.seconds,
                    last,
                    s.run_dir(r.seed).display()
                );
            }
        }
        Command::Eval(a) => {
            let s = spec(&a.common, 1)?;
            let splits = match a.split.as_str() {
                "both" => vec![Split::Seen, Split::Unseen],
                other => vec![other.parse()?],
            };
            for split in splits {
                let rows = experiment::cmd_eval(&s, split)?;
                let path = s.out_dir.join(format!("eval_{}_{split}.csv", s.agent));
                write_rows(&path, &rows)?;
                for r in &rows {
                    println!(
                        "{} seed {} {split}: cost {:.3} h, stop {:.3} h",
                        r.agent, r.seed, r.cost_wt_hours, r.stop_time_hours
                    );
                }
            }
        }
        Command::Ablate(a) => {
            let s = spec(&a.common, a.episodes)?;
            let out = experiment::cmd_ablate(&s)?;
            println!("{}", build_report(&out.rows)?.table);
            for r in &out.reward_rows {
                println!(
                    "seed {} trained with alpha {}: hybrid reward {:.1}",
                    r.seed, r.train_alpha, r.hybrid_reward
                );
            }
        }
        Command::Time(a) => {
            let s = spec(&a.common, 1)?;
            for &seed in &s.seeds {
                let c = experiment::load_controller(&s, seed)?;
                let ms = experiment::time_inference(&c, s.scenario.clone(), a.trials)?;
                println!(
                    "{} seed {seed}: mean {ms:.4} ms over {} trials",
                    s.agent, a.trials
                );
            }
        }
        Command::Report(a) => {
            let mut rows: Vec<ResultRow> = Vec::new();
            for f in collect_row_files(&a.inputs)? {
                rows.extend(read_rows::<ResultRow>(&f)?);
            }
            let report = build_report(&rows)?;
            fs::create_dir_all(&a.out).map_err(|source| BenchError::Io {
                path: a.out.display().to_string(),
                source,
            })?;
            let table_path = a.out.join("report.txt");
            fs::write(&table_path, &report.table).map_err(|source| BenchError::Io {
                path: table_path.display().to_string(),
                source,
            })?;
            write_rows(&a.out.join("report.csv"), &report.rows)?;
            print!("{}", report.table);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
