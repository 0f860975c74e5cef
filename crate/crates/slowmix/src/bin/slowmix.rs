//! Experiment runner CLI for the `slowmix` library.
//!
//! One subcommand per experiment kind (each with sensible defaults), plus
//! `run <config.toml>` for fully configured batches and `list` for the
//! catalogue. Exit codes: 0 success, 1 sub-experiment failure, 2
//! configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use slowmix::experiments::{
    default_plan, run_file, run_plan, ExperimentError, ExperimentKind, Overrides, Plan, RunOutcome,
};

#[derive(Parser)]
#[command(
    name = "slowmix",
    version,
    about = "Limit-law experiments on slowly mixing systems: intermittent maps and stadium billiards"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory root (a subdirectory per run name is created).
    #[arg(long)]
    out: Option<String>,
    /// Worker threads (0 = rayon default). Results are identical for any
    /// worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Run name (output subdirectory); defaults to the experiment kind.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args, Clone, Default)]
struct MapArgs {
    /// Map family: doubling | intermittent.
    #[arg(long)]
    map: Option<String>,
    /// Intermittency exponent in [0, 1).
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a TOML experiment configuration.
    Run {
        /// Path to the configuration file.
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// List the available experiment kinds.
    List,
    /// Maximal large-deviation tail of Birkhoff averages.
    Mld {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        map: MapArgs,
        /// Ensemble size.
        #[arg(long)]
        ensemble: Option<u64>,
        /// Threshold as a fraction of the observable's sup-norm.
        #[arg(long)]
        epsilon_rel: Option<f64>,
    },
    /// Plain large-deviation tail of Birkhoff averages.
    Ld {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        ensemble: Option<u64>,
        #[arg(long)]
        epsilon_rel: Option<f64>,
    },
    /// Return-time tail over a reference interval.
    ReturnTail {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        map: MapArgs,
        /// Uniform samples on the reference interval.
        #[arg(long)]
        samples: Option<u64>,
    },
    /// Transfer-operator norm decay under an Ulam discretization.
    UlamDecay {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        map: MapArgs,
        /// Number of Ulam cells.
        #[arg(long)]
        cells: Option<usize>,
    },
    /// Stadium collision-map invariance checks.
    BilliardInvariance {
        #[command(flatten)]
        common: CommonArgs,
        /// Half-length of the flat sides.
        #[arg(long)]
        flat_half_length: Option<f64>,
    },
    /// Exponential first-hitting law across hole radii.
    Hitting {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        flat_half_length: Option<f64>,
        /// Hole center (boundary arc length).
        #[arg(long)]
        q_center: Option<f64>,
        #[arg(long)]
        ensemble: Option<u64>,
    },
    /// Poisson approximation of window counts.
    PointProcess {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        flat_half_length: Option<f64>,
        #[arg(long)]
        q_center: Option<f64>,
        #[arg(long)]
        ensemble: Option<u64>,
    },
    /// Hitting-time scaling estimator over shrinking holes.
    LAlphaS {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        map: MapArgs,
        /// Hole center in [0, 1].
        #[arg(long)]
        z: Option<f64>,
        /// Period of z when it is periodic (enables the closed-form
        /// comparison).
        #[arg(long)]
        period: Option<u64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        ensemble: Option<u64>,
    },
    /// Expansion/distortion diagnostics of the induced map.
    GmyDiagnostics {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        samples: Option<u64>,
    },
}

fn apply_common(plan: &mut Plan, common: &CommonArgs) {
    if let Some(v) = common.seed {
        plan.seed = v;
    }
    if let Some(v) = &common.out {
        plan.output = v.clone();
    }
    if let Some(v) = common.workers {
        plan.workers = v;
    }
    if let Some(v) = &common.name {
        plan.name = v.clone();
    }
}

fn apply_map(plan: &mut Plan, map: &MapArgs) {
    if let Some(v) = &map.map {
        plan.map = v.clone();
    }
    if let Some(v) = map.gamma {
        plan.gamma = v;
    }
}

fn finish(result: Result<RunOutcome, ExperimentError>) -> ExitCode {
    match result {
        Ok(outcome) => {
            println!(
                "wrote {} ({} artifacts{})",
                outcome.out_dir.join("summary.json").display(),
                outcome.report.artifacts.len(),
                if outcome.any_failed {
                    ", with failures"
                } else {
                    ""
                }
            );
            for failure in &outcome.report.failures {
                eprintln!("sub-experiment failed: {failure}");
            }
            if outcome.any_failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e @ ExperimentError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, common } => {
            let overrides = Overrides {
                seed: common.seed,
                out: common.out.clone(),
                workers: common.workers,
            };
            finish(run_file(&config, &overrides))
        }
        Command::List => {
            for info in slowmix::experiments::list_experiments() {
                println!("{:<20} {}", info.kind, info.description);
                println!("{:<20}   estimates: {}", "", info.law);
            }
            ExitCode::SUCCESS
        }
        Command::Mld {
            common,
            map,
            ensemble,
            epsilon_rel,
        } => {
            let mut plan = default_plan(ExperimentKind::Mld);
            apply_map(&mut plan, &map);
            if let Some(v) = ensemble {
                plan.ensemble = v;
            }
            if let Some(v) = epsilon_rel {
                plan.epsilon_rel = v;
            }
            apply_common(&mut plan, &common);
            finish(run_plan(&plan))
        }
        Command::Ld {
            common,
            map,
            ensemble,
            epsilon_rel,
        } => {
            let mut plan = default_plan(ExperimentKind::Ld);
            apply_map(&mut plan, &map);
            if let Some(v) = ensemble {
                plan.ensemble = v;
            }
            if let Some(v) = epsilon_rel {
                plan.epsilon_rel = v;
            }
            apply_common(&mut plan, &common);
            finish(run_plan(&plan))
        }
        Command::ReturnTail {
            common,
            map,
            samples,
        } => {
            let mut plan = default_plan(ExperimentKind::ReturnTail);
            apply_map(&mut plan, &map);
            if let Some(v) = samples {
                plan.samples = v;
            }
            apply_common(&mut plan, &common);
            finish(run_plan(&plan))
        }
        Command::UlamDecay { common, map, cells } => {
            let mut plan = default_plan(ExperimentKind::UlamDecay);
            apply_map(&mut plan, &map);
            if let Some(v) = cells {
                plan.cells = v;
            }
            apply_common(&mut plan, &common);
            finish(run_plan(&plan))
        }
        Command::BilliardInvariance {
            common,
            flat_half_length,
        } => {
            let mut plan = default_plan(ExperimentKind::BilliardInvariance);
            if let Some(v) = flat_half_length {
                plan.flat_half_length = v;
            }
            apply_common(&mut plan, &common);
            finish(run_plan(&plan))
        }
        Command::Hitting {
            common,
            flat_half_length,
            q_center,
            ensemble,
        } => {
            let mut plan = default_plan(ExperimentKind::Hitting);
            if let Some(v) = flat_half_length {
                plan.flat_half_length = v;
            }
            if let Some(v) = q_center {
                plan.q_center = v;
            }
            if let Some(v) = ensemble {
                plan.ensemble = v;
            }
            apply_common(&mut plan, &common);
            finish(run_plan(&plan))
        }
        Command::PointProcess {
            common,
            flat_half_length,
            q_center,
            ensemble,
        } => {
            let mut plan = default_plan(ExperimentKind::PointProcess);
            if let Some(v) = flat_half_length {
                plan.flat_half_length = v;
            }
            if let Some(v) = q_center {
                plan.q_center = v;
            }
            if let Some(v) = ensemble {
                plan.ensemble = v;
            }
            apply_common(&mut plan, &common);
            finish(run_plan(&plan))
        }
        Command::LAlphaS {
            common,
            map,
            z,
            period,
            alpha,
            ensemble,
        } => {
            let mut plan = default_plan(ExperimentKind::LAlphaS);
            apply_map(&mut plan, &map);
            if let Some(v) = z {
                plan.z = v;
            }
            if let Some(v) = period {
                plan.period = Some(v);
            }
            if let Some(v) = alpha {
                plan.alpha = v;
            }
            if let Some(v) = ensemble {
                plan.ensemble = v;
            }
            apply_common(&mut plan, &common);
            finish(run_plan(&plan))
        }
        Command::GmyDiagnostics {
            common,
            map,
            samples,
        } => {
            let mut plan = default_plan(ExperimentKind::GmyDiagnostics);
            apply_map(&mut plan, &map);
            if let Some(v) = samples {
                plan.samples = v;
            }
            apply_common(&mut plan, &common);
            finish(run_plan(&plan))
        }
    }
}
