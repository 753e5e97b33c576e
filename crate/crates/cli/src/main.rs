//! `csal`: one entry point for every pipeline stage, from synthetic data
//! generation through budgeted selection to full experiment simulation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use csal_core::data::Split;
use csal_core::selection::Policy;
use csal_core::sim::Mode;

#[derive(Parser)]
#[command(name = "csal", version, about = "Cost-sensitive active-learning pipeline")]
struct Cli {
    /// Config file: flat `key = value` lines (dotted paths) or JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread cap; defaults to the available cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Suppress informational logging.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset (containers + manifest).
    Gen,
    /// Train the committee on one split; writes member checkpoints.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "seed_trainval")]
        split: Split,
    },
    /// Committee-mean heatmaps for one split.
    Predict {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding member*.alpr checkpoints.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "pool")]
        split: Split,
    },
    /// Per-stack committee disagreement (CSV, optional per-pixel maps).
    Uncertainty {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "pool")]
        split: Split,
        /// Also write per-pixel divergence containers.
        #[arg(long)]
        maps: bool,
    },
    /// Predicted-mask morphology features (CSV).
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "pool")]
        split: Split,
    },
    /// Fit the labeling-time model from a stack_id,B,M,t_seconds CSV.
    FitCost {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 60.0)]
        floor_time: f64,
    },
    /// Budgeted batch selection from a stack_id,value,time_s CSV.
    Select {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        budget_s: f64,
        #[arg(long, default_value_t = 1.0)]
        quantum_s: f64,
        #[arg(long, default_value = "knapsack")]
        policy: Policy,
    },
    /// Run a full experiment (core-set, cost-sensitive, or wild).
    Simulate {
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Score saved heatmaps against a split's ground truth.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding <id>.heat.alst predictions.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value = "seed_test")]
        split: Split,
    },
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut cfg = config::resolve(cli.config.as_deref(), cli.seed)?;
    // fold flag overrides in before persisting, so the resolved config
    // alone reproduces the run
    if let Command::Simulate { mode: Some(mode) } = &cli.command {
        cfg.experiment.mode = *mode;
    }
    config::write_resolved(&cfg, &cli.out)?;
    match &cli.command {
        Command::Gen => commands::gen(&cfg, &cli.out),
        Command::Train { manifest, split } => commands::train(&cfg, &cli.out, manifest, *split),
        Command::Predict {
            manifest,
            model,
            split,
        } => commands::predict(&cfg, &cli.out, manifest, model, *split),
        Command::Uncertainty {
            manifest,
            model,
            split,
            maps,
        } => commands::uncertainty(&cfg, &cli.out, manifest, model, *split, *maps),
        Command::Features {
            manifest,
            model,
            split,
        } => commands::features(&cfg, &cli.out, manifest, model, *split),
        Command::FitCost { input, floor_time } => commands::fit_cost(&cli.out, input, *floor_time),
        Command::Select {
            items,
            budget_s,
            quantum_s,
            policy,
        } => commands::run_select(&cli.out, items, *budget_s, *quantum_s, *policy, cfg.seed),
        Command::Simulate { .. } => commands::simulate(&cfg, &cli.out),
        Command::Eval {
            manifest,
            pred,
            split,
        } => commands::eval(&cfg, &cli.out, manifest, pred, *split),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // rayon reads this when it lazily builds the global pool
        std::env::set_var("RAYON_NUM_THREADS", jobs.to_string());
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet {
        "warn"
    } else {
        "info"
    }))
    .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            log::error!("{err:#}");
            let config_error = err
                .chain()
                .any(|c| matches!(c.downcast_ref(), Some(csal_core::Error::Config(_))));
            if config_error {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
