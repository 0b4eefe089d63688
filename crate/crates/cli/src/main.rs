//! `sliceforge` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use sliceforge::drn::{gradient_check, DrnConfig};
use sliceforge::harness::{evaluate_many, Format};
use sliceforge::nn::gradcheck::check_primitives;
use sliceforge::trainer::{train_with, ScenarioSource, TrainLog};
use sliceforge::{
    export_results, generate_scenario, load_checkpoint, save_checkpoint, sweep, Axis, DrnParams, ResultRow,
    ResultTable, Scenario, ScenarioConfig, Scheduler, SchedulerKind, SweepSpec, TrainConfig,
};

const PRIMITIVE_TOL: f64 = 1e-4;
const NETWORK_TOL: f64 = 1e-3;

#[derive(Parser)]
#[command(name = "sliceforge", version, about = "Embed RAN-slice VNFs on a substrate and compare slice schedulers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random scenario and write it as JSON.
    Gen {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a reward network and write a checkpoint.
    Train {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        training: TrainArgs,
        /// Train on this fixed scenario file instead of fresh random instances.
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration training log (CSV).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Record wall-clock milliseconds in the log instead of zeros.
        #[arg(long)]
        timing: bool,
    },
    /// Evaluate one scheduler over seeded episodes.
    Eval {
        #[arg(long)]
        scheduler: SchedulerKind,
        /// Checkpoint for the drn scheduler.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Result file; `.json` selects JSON, anything else CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate schedulers along one scarcity axis.
    Sweep {
        #[arg(long)]
        axis: Axis,
        /// First axis point; defaults to the axis' base setting.
        #[arg(long)]
        from: Option<u32>,
        /// Last axis point; defaults to the axis' scarcest setting.
        #[arg(long)]
        to: Option<u32>,
        /// Comma-separated list drawn from all, max, min, total, drn.
        #[arg(long, value_delimiter = ',', default_value = "all,max,min,total")]
        schedulers: Vec<SchedulerKind>,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Training settings used when drn is swept; one network per axis point.
        #[command(flatten)]
        training: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every primitive and of the full network.
    GradCheck {
        #[arg(long, value_enum, default_value_t = Profile::Mini)]
        profile: Profile,
        /// Number of random seeds.
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        /// Coordinates sampled per parameter tensor.
        #[arg(long, default_value_t = 8)]
        per_tensor: usize,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Profile {
    Mini,
    #[value(alias = "base")]
    Full,
}

impl Profile {
    fn config(self) -> ScenarioConfig {
        match self {
            Profile::Mini => ScenarioConfig::mini(),
            Profile::Full => ScenarioConfig::base(),
        }
    }
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario config JSON; overrides --profile.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario config.
    #[arg(long, value_enum, default_value_t = Profile::Full)]
    profile: Profile,
    /// Seed for all randomness; overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<ScenarioConfig> {
        let cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => self.profile.config(),
        };
        Ok(match self.seed {
            Some(seed) => cfg.with_seed(seed),
            None => cfg,
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 500)]
    iters: usize,
    /// Episodes per update.
    #[arg(long, default_value_t = 256)]
    batch: usize,
}

impl TrainArgs {
    fn config(&self, scenario: &ScenarioConfig) -> TrainConfig {
        TrainConfig {
            iterations: self.iters,
            batch_size: self.batch,
            learning_rate: self.lr,
            ..TrainConfig::new(scenario.clone(), scenario.seed)
        }
    }
}

/// Trains with a progress line on stderr every tenth of the run.
fn train_logged(cfg: &TrainConfig) -> sliceforge::Result<(DrnParams, TrainLog)> {
    let every = (cfg.iterations / 10).max(1);
    train_with(cfg, |row| {
        if (row.iteration + 1) % every == 0 {
            let loss = row.loss.map_or("-".to_string(), |l| format!("{l:.4}"));
            eprintln!("iter {:>5}  n_r {:>3}  eps {:.3}  loss {loss}", row.iteration + 1, row.n_r, row.epsilon);
        }
    })
}

fn print_rows(rows: &[ResultRow]) {
    for r in rows {
        let value = r.value.map(|v| v.to_string()).unwrap_or_default();
        println!("{:<15} {:>4} {:<6} {:>8.3} ± {:.3}", r.axis, value, r.scheduler, r.mean_accommodated, r.std);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { scenario, out } => {
            let cfg = scenario.resolve()?;
            generate_scenario(&cfg)?.save(&out)?;
        }
        Command::Train { scenario, training, instance, out, log, timing } => {
            let scfg = scenario.resolve()?;
            let mut cfg = training.config(&scfg);
            if let Some(path) = instance {
                cfg.scenario = ScenarioSource::Fixed(Scenario::load(&path)?);
            }
            let (params, train_log) = train_logged(&cfg)?;
            save_checkpoint(&params, &out)?;
            if let Some(path) = log {
                train_log.write_csv(&path, timing)?;
            }
        }
        Command::Eval { scheduler, ckpt, scenario, episodes, out } => {
            let cfg = scenario.resolve()?;
            let params = match scheduler {
                SchedulerKind::Drn => {
                    let path = ckpt.as_ref().context("--ckpt is required for the drn scheduler")?;
                    Some(load_checkpoint(path)?)
                }
                _ => None,
            };
            let runner = match &params {
                Some(p) => Scheduler::Drn(p),
                None => Scheduler::Baseline(scheduler),
            };
            let result = evaluate_many(&[runner], &cfg, episodes)?.remove(0);
            let network = params.as_ref().map(|p| json!({ "config": p.config, "iteration": p.iteration, "provenance": p.provenance }));
            let table = ResultTable {
                config: Some(json!({ "scenario": cfg, "scheduler": scheduler, "episodes": episodes, "network": network })),
                rows: vec![ResultRow::from_eval(None, None, &result)],
            };
            export_results(&table, &out, Format::from_path(&out))?;
            print_rows(&table.rows);
        }
        Command::Sweep { axis, from, to, schedulers, scenario, episodes, training, out } => {
            let base = scenario.resolve()?;
            let mut spec = SweepSpec { episodes, ..SweepSpec::new(axis, base) };
            let defaults = axis.default_values();
            let from = from.unwrap_or(defaults[0]);
            let to = to.unwrap_or(defaults[defaults.len() - 1]);
            spec.values = SweepSpec::range(from, to);
            let mut table = sweep(&spec, &schedulers, |cfg| {
                eprintln!("training drn for {axis} = {}", axis_value(axis, cfg));
                train_logged(&training.config(cfg)).map(|(params, _)| params)
            })?;
            if schedulers.contains(&SchedulerKind::Drn) {
                if let Some(obj) = table.config.as_mut().and_then(|c| c.as_object_mut()) {
                    obj.insert("training".into(), serde_json::to_value(training.config(&spec.base))?);
                }
            }
            export_results(&table, &out, Format::from_path(&out))?;
            print_rows(&table.rows);
        }
        Command::GradCheck { profile, seeds, per_tensor } => {
            if seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            let drn = DrnConfig::for_scenario(&profile.config());
            let mut prim_worst = 0.0f64;
            let mut net_worst = 0.0f64;
            let mut checked = 0;
            for seed in 0..seeds {
                prim_worst = prim_worst.max(check_primitives(seed, 1e-5).worst());
                let r = gradient_check(&drn, seed, per_tensor, 1e-6)?;
                net_worst = net_worst.max(r.max_rel_error);
                checked += r.checked;
            }
            let verdict = |e: f64, tol: f64| if e < tol { "pass" } else { "FAIL" };
            println!("primitives: max relative error {prim_worst:.3e} over {seeds} seeds ({})", verdict(prim_worst, PRIMITIVE_TOL));
            println!(
                "network:    max relative error {net_worst:.3e} over {seeds} seeds, {checked} coordinates ({})",
                verdict(net_worst, NETWORK_TOL)
            );
            if prim_worst >= PRIMITIVE_TOL || net_worst >= NETWORK_TOL {
                bail!("gradient check failed");
            }
        }
    }
    Ok(())
}

fn axis_value(axis: Axis, cfg: &ScenarioConfig) -> String {
    match axis {
        Axis::SliceCount => cfg.l.to_string(),
        Axis::VnfsPerSlice => cfg.s.to_string(),
        Axis::MeanDemand => format!("{:?}", cfg.demand_range),
        Axis::MeanCapacity => format!("{:?}", cfg.cap_range),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Command::Eval { scheduler: SchedulerKind::Drn, ckpt: None, .. } = &cli.command {
        eprintln!("error: --ckpt <file> is required when --scheduler is drn");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
