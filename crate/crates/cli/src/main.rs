//! Experiment front-end: config parsing, the four-stage protocol driver,
//! logging, and report generation.
//!
//! Exit codes: 0 success, 2 configuration error, 3 non-convergence,
//! 4 I/O error.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{NonConverged, RunContext};
use config::{apply_env_overrides, Algorithm, ExperimentConfig};

#[derive(Parser)]
#[command(name = "ergolift", version, about = "Human-aware collaborative-lift training toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment config file (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Participant preset id; overrides the config.
    #[arg(long)]
    participant: Option<String>,
    /// Controller; overrides the config.
    #[arg(long, value_enum)]
    algorithm: Option<Algorithm>,
    /// Evaluation episodes per phase; overrides the config.
    #[arg(long)]
    episodes: Option<usize>,
    /// Worker threads for the grid search; overrides the config.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Hyperparameter grid search (DQN): ranked CSV plus champion checkpoint.
    Hpo(CommonArgs),
    /// Full protocol: pre-train, deploy, fine-tune, re-evaluate.
    Protocol {
        #[command(flatten)]
        common: CommonArgs,
        /// Stop after the deployment evaluation (no Real/Real rows).
        #[arg(long)]
        skip_finetune: bool,
    },
    /// Pre-train in simulation and write a checkpoint.
    Pretrain(CommonArgs),
    /// Fine-tune a checkpoint in the surrogate real environment.
    Finetune {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluate in the surrogate real environment instead of simulation.
        #[arg(long)]
        real: bool,
    },
    /// Re-render the report files of a finished run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn load_config(common: &CommonArgs) -> Result<(ExperimentConfig, String)> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    apply_env_overrides(&mut cfg)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(p) = &common.participant {
        cfg.participant = Some(p.clone());
        cfg.body = None;
    }
    if let Some(a) = common.algorithm {
        cfg.algorithm = a;
    }
    if let Some(n) = common.episodes {
        cfg.episodes.eval = n;
    }
    if let Some(w) = common.workers {
        cfg.workers = Some(w);
    }
    cfg.validate()?;
    let text = cfg.to_toml();
    Ok((cfg, text))
}

fn context(common: &CommonArgs) -> Result<RunContext> {
    let (cfg, text) = load_config(common)?;
    let out = cfg
        .out_dir
        .clone()
        .ok_or_else(|| anyhow::anyhow!("no output directory: set `out_dir` in the config or pass --out"))?;
    RunContext::new(cfg, out, text)
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Hpo(common) => commands::cmd_hpo(&context(&common)?),
        Command::Protocol { common, skip_finetune } => {
            commands::cmd_protocol(&context(&common)?, skip_finetune)
        }
        Command::Pretrain(common) => commands::cmd_pretrain(&context(&common)?),
        Command::Finetune { common, checkpoint } => {
            commands::cmd_finetune(&context(&common)?, &checkpoint)
        }
        Command::Eval { common, checkpoint, real } => {
            let (cfg, text) = load_config(&common)?;
            let out = cfg.out_dir.clone().unwrap_or_else(std::env::temp_dir);
            let ctx = RunContext::new(cfg, out, text)?;
            commands::cmd_eval(&ctx, &checkpoint, real, common.episodes)
        }
        Command::Report { run } => commands::cmd_report(&run),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = if err.is::<NonConverged>() {
                3
            } else if err.chain().any(|c| c.is::<std::io::Error>()) {
                4
            } else {
                2
            };
            ExitCode::from(code)
        }
    }
}
