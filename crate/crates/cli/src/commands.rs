//! Command implementations: the four-stage protocol and its pieces.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use ergolift_core::agents::{DqnAgent, QTable};
use ergolift_core::env::{ControlKind, Env, EnvOptions, ParticipantPreset};
use ergolift_core::logging::{JsonlSink, NullSink, StepSink};
use ergolift_core::training::{
    champion, evaluate, finetune, pretrain, run_hpo, EvalReport, QlAgent, TrainResult,
};

use crate::config::{Algorithm, ExperimentConfig};
use crate::report::{Phase, PhaseRow, RunReport};

/// Non-convergence marker: mapped to its own exit code by `main`.
#[derive(Debug)]
pub struct NonConverged(pub String);

impl std::fmt::Display for NonConverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "did not converge: {}", self.0)
    }
}

impl std::error::Error for NonConverged {}

pub struct RunContext {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub config_text: String,
}

impl RunContext {
    pub fn new(cfg: ExperimentConfig, out: PathBuf, config_text: String) -> Result<Self> {
        std::fs::create_dir_all(&out)
            .with_context(|| format!("cannot create output directory {}", out.display()))?;
        Ok(Self { cfg, out, config_text })
    }

    fn write_manifest(&self, command: &str) -> Result<()> {
        // The hash covers the experiment identity, not where results land
        // or how many workers computed them.
        let mut canonical = self.cfg.clone();
        canonical.out_dir = None;
        canonical.workers = None;
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        let manifest = serde_json::json!({
            "command": command,
            "config_sha256": format!("{digest:x}"),
            "seed": self.cfg.seed,
            "algorithm": format!("{:?}", self.cfg.algorithm).to_lowercase(),
            "participant": self.cfg.participant,
            "tool_version": env!("CARGO_PKG_VERSION"),
        });
        std::fs::write(self.out.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    fn env_opts(&self) -> EnvOptions {
        EnvOptions { ql_diagonals: self.cfg.ql_diagonals, ..EnvOptions::default() }
    }

    fn jsonl(&self, stem: &str) -> Result<JsonlSink<BufWriter<File>>> {
        let steps = BufWriter::new(File::create(self.out.join(format!("{stem}_steps.jsonl")))?);
        let episodes = BufWriter::new(File::create(self.out.join(format!("{stem}_curve.jsonl")))?);
        Ok(JsonlSink::new(Some(steps), Some(episodes)))
    }
}

/// One trainable agent of either flavor, with uniform checkpoint handling.
pub enum AnyAgent {
    Ql(QlAgent),
    Dqn(Box<DqnAgent>),
}

impl AnyAgent {
    pub fn fresh(cfg: &ExperimentConfig, n_grid_actions: usize, seed: u64) -> Result<Self> {
        Ok(match cfg.algorithm {
            Algorithm::Ql => AnyAgent::Ql(QlAgent::new(n_grid_actions, cfg.ql, seed)),
            Algorithm::Dqn => AnyAgent::Dqn(Box::new(
                DqnAgent::new(cfg.hyperparameters(), seed).map_err(|e| anyhow!("{e}"))?,
            )),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            AnyAgent::Ql(a) => a.table.save(path, &a.params, a.seed).map_err(|e| anyhow!("{e}")),
            AnyAgent::Dqn(a) => a.save(path).map_err(|e| anyhow!("{e}")),
        }
    }

    pub fn load(algorithm: Algorithm, path: &Path) -> Result<Self> {
        match algorithm {
            Algorithm::Ql => {
                let (table, params, seed) = QTable::load(path)
                    .map_err(|e| anyhow::Error::new(e).context("checkpoint does not match algorithm ql"))?;
                Ok(AnyAgent::Ql(QlAgent { table, params, seed }))
            }
            Algorithm::Dqn => Ok(AnyAgent::Dqn(Box::new(DqnAgent::load(path).map_err(|e| {
                anyhow::Error::new(e).context("checkpoint does not match algorithm dqn")
            })?))),
        }
    }
}

macro_rules! with_agent {
    ($agent:expr, $name:ident => $body:expr) => {
        match $agent {
            AnyAgent::Ql($name) => $body,
            AnyAgent::Dqn($name) => $body,
        }
    };
}

fn pretrain_any(
    env: &mut Env,
    agent: &mut AnyAgent,
    cfg: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
    sink: &mut dyn StepSink,
) -> Result<TrainResult> {
    let decay = match cfg.algorithm {
        Algorithm::Ql => cfg.ql.epsilon_decay_episodes,
        Algorithm::Dqn => cfg.hyperparameters().epsilon_decay_episodes,
    };
    let spec = cfg.termination;
    with_agent!(agent, a => pretrain(env, a, decay, &spec, spec.pretrain_cap, rng, sink))
        .map_err(|e| anyhow!("{e}"))
}

fn finetune_any(
    env: &mut Env,
    agent: &mut AnyAgent,
    cfg: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
    sink: &mut dyn StepSink,
) -> Result<TrainResult> {
    let spec = cfg.termination;
    with_agent!(agent, a => finetune(env, a, &cfg.finetune_exploration, &spec, rng, sink))
        .map_err(|e| anyhow!("{e}"))
}

fn evaluate_any(env: &mut Env, agent: &mut AnyAgent, n: usize, seed: u64) -> Result<EvalReport> {
    with_agent!(agent, a => evaluate(env, a, n, seed)).map_err(|e| anyhow!("{e}"))
}

/// Deterministic per-purpose sub-seeds from the run seed.
fn sub_seed(master: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.gen()
}

fn sim_env(ctx: &RunContext, preset: &ParticipantPreset, kind: ControlKind) -> Result<Env> {
    Env::sim(preset.clone(), kind, ctx.env_opts()).map_err(|e| anyhow!("{e}"))
}

fn real_env(ctx: &RunContext, preset: &ParticipantPreset, kind: ControlKind, gap_seed: u64) -> Result<Env> {
    Env::real(preset.clone(), kind, ctx.env_opts(), ctx.cfg.gap, gap_seed).map_err(|e| anyhow!("{e}"))
}

pub fn cmd_pretrain(ctx: &RunContext) -> Result<()> {
    ctx.write_manifest("pretrain")?;
    let preset = ctx.cfg.preset()?;
    let kind = ctx.cfg.algorithm.control_kind();
    let mut env = sim_env(ctx, &preset, kind)?;
    let mut agent = AnyAgent::fresh(&ctx.cfg, env.action_count(), sub_seed(ctx.cfg.seed, 1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(ctx.cfg.seed, 2));
    let mut sink = ctx.jsonl("pretrain")?;

    let result = pretrain_any(&mut env, &mut agent, &ctx.cfg, &mut rng, &mut sink)?;
    sink.flush()?;
    agent.save(&ctx.out.join("pretrained.ckpt.json"))?;
    std::fs::write(ctx.out.join("pretrain_result.json"), serde_json::to_vec_pretty(&result)?)?;
    println!(
        "pretrain: converged={} episodes={} convergence_episode={:?}",
        result.converged, result.episodes, result.convergence_episode
    );
    if !result.converged {
        return Err(NonConverged("pre-training hit the episode cap".into()).into());
    }
    Ok(())
}

pub fn cmd_finetune(ctx: &RunContext, checkpoint: &Path) -> Result<()> {
    ctx.write_manifest("finetune")?;
    let preset = ctx.cfg.preset()?;
    let kind = ctx.cfg.algorithm.control_kind();
    let mut agent = AnyAgent::load(ctx.cfg.algorithm, checkpoint)?;
    let mut env = real_env(ctx, &preset, kind, sub_seed(ctx.cfg.seed, 3))?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(ctx.cfg.seed, 4));
    let mut sink = ctx.jsonl("finetune")?;

    let result = finetune_any(&mut env, &mut agent, &ctx.cfg, &mut rng, &mut sink)?;
    sink.flush()?;
    agent.save(&ctx.out.join("finetuned.ckpt.json"))?;
    std::fs::write(ctx.out.join("finetune_result.json"), serde_json::to_vec_pretty(&result)?)?;
    println!(
        "finetune: converged={} episodes={} sim_time_s={:.1}",
        result.converged, result.episodes, result.sim_time_s
    );
    if !result.converged {
        return Err(NonConverged("fine-tuning hit the episode cap".into()).into());
    }
    Ok(())
}

pub fn cmd_eval(ctx: &RunContext, checkpoint: &Path, real: bool, episodes: Option<usize>) -> Result<()> {
    ctx.write_manifest("eval")?;
    let preset = ctx.cfg.preset()?;
    let kind = ctx.cfg.algorithm.control_kind();
    let mut agent = AnyAgent::load(ctx.cfg.algorithm, checkpoint)?;
    let n = episodes.unwrap_or(ctx.cfg.episodes.eval);
    let mut env = if real {
        real_env(ctx, &preset, kind, sub_seed(ctx.cfg.seed, 5))?
    } else {
        sim_env(ctx, &preset, kind)?
    };
    let report = evaluate_any(&mut env, &mut agent, n, sub_seed(ctx.cfg.seed, 6))?;
    std::fs::write(ctx.out.join("eval_metrics.json"), serde_json::to_vec_pretty(&report)?)?;
    std::fs::write(ctx.out.join("eval_metrics.csv"), eval_csv(&report))?;
    print!("{}", eval_text(&report));
    Ok(())
}

fn eval_csv(e: &EvalReport) -> String {
    let mut out = String::from("metric,mean,std\n");
    for (name, s) in [
        ("reward", &e.reward),
        ("steps", &e.steps),
        ("avg_erg", &e.avg_erg),
        ("avg_pain", &e.avg_pain),
        ("distance_m", &e.distance_m),
        ("time_s", &e.time_s),
    ] {
        let _ = writeln!(out, "{},{},{}", name, s.mean, s.std);
    }
    let _ = writeln!(out, "pain_abort_episodes,{},0", e.pain_abort_episodes);
    out
}

fn eval_text(e: &EvalReport) -> String {
    format!(
        "eval over {} episodes: reward {:.1}±{:.1}  steps {:.1}±{:.1}  erg {:.2}±{:.2}  pain {:.3}  distance {:.3} m  time {:.1} s  pain-aborts {}\n",
        e.n,
        e.reward.mean,
        e.reward.std,
        e.steps.mean,
        e.steps.std,
        e.avg_erg.mean,
        e.avg_erg.std,
        e.avg_pain.mean,
        e.distance_m.mean,
        e.time_s.mean,
        e.pain_abort_episodes
    )
}

/// Pre-train → evaluate (sim) → evaluate (surrogate real) → fine-tune →
/// re-evaluate. Non-convergence flags the phase but the protocol continues.
pub fn cmd_protocol(ctx: &RunContext, skip_finetune: bool) -> Result<()> {
    ctx.write_manifest("protocol")?;
    let preset = ctx.cfg.preset()?;
    let kind = ctx.cfg.algorithm.control_kind();
    let eval_n = ctx.cfg.episodes.eval;
    let mut unconverged: Vec<&'static str> = Vec::new();

    // Phase 1: pre-train in simulation.
    let mut env = sim_env(ctx, &preset, kind)?;
    let mut agent = AnyAgent::fresh(&ctx.cfg, env.action_count(), sub_seed(ctx.cfg.seed, 1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(ctx.cfg.seed, 2));
    let mut sink = ctx.jsonl("pretrain")?;
    let pre = pretrain_any(&mut env, &mut agent, &ctx.cfg, &mut rng, &mut sink)?;
    sink.flush()?;
    agent.save(&ctx.out.join("pretrained.ckpt.json"))?;
    std::fs::write(ctx.out.join("pretrain_result.json"), serde_json::to_vec_pretty(&pre)?)?;
    if !pre.converged {
        unconverged.push("pretrain");
    }
    println!("pretrain: converged={} episodes={}", pre.converged, pre.episodes);

    // Phase 2: greedy evaluation in simulation and in the surrogate real
    // environment (deployment of the pre-trained policy).
    let mut phases = Vec::new();
    let sim_eval = evaluate_any(&mut env, &mut agent, eval_n, sub_seed(ctx.cfg.seed, 6))?;
    println!("Sim/Sim   {}", eval_text(&sim_eval).trim_end());
    phases.push(PhaseRow { phase: Phase::SimSim, eval: sim_eval });

    let mut env_real = real_env(ctx, &preset, kind, sub_seed(ctx.cfg.seed, 3))?;
    let pre_real = evaluate_any(&mut env_real, &mut agent, eval_n, sub_seed(ctx.cfg.seed, 7))?;
    println!("Sim/Real  {}", eval_text(&pre_real).trim_end());
    phases.push(PhaseRow { phase: Phase::SimReal, eval: pre_real });

    // Phases 3-4: fine-tune in the surrogate real environment, re-evaluate.
    if !skip_finetune {
        let mut sink = ctx.jsonl("finetune")?;
        let mut rng_ft = ChaCha8Rng::seed_from_u64(sub_seed(ctx.cfg.seed, 4));
        let ft = finetune_any(&mut env_real, &mut agent, &ctx.cfg, &mut rng_ft, &mut sink)?;
        sink.flush()?;
        agent.save(&ctx.out.join("finetuned.ckpt.json"))?;
        std::fs::write(ctx.out.join("finetune_result.json"), serde_json::to_vec_pretty(&ft)?)?;
        if !ft.converged {
            unconverged.push("finetune");
        }
        println!("finetune: converged={} episodes={} sim_time_s={:.1}", ft.converged, ft.episodes, ft.sim_time_s);

        let post = evaluate_any(&mut env_real, &mut agent, eval_n, sub_seed(ctx.cfg.seed, 8))?;
        println!("Real/Real {}", eval_text(&post).trim_end());
        phases.push(PhaseRow { phase: Phase::RealReal, eval: post });
    }

    let report = RunReport {
        participant: preset.id.clone(),
        algorithm: format!("{:?}", ctx.cfg.algorithm).to_lowercase(),
        phases,
    };
    report.write(&ctx.out)?;
    print!("{}", report.to_text());

    if !unconverged.is_empty() {
        return Err(NonConverged(format!("phases without convergence: {}", unconverged.join(", "))).into());
    }
    Ok(())
}

/// Grid search over DQN hyperparameters; writes the ranked CSV and the
/// champion checkpoint.
pub fn cmd_hpo(ctx: &RunContext) -> Result<()> {
    ctx.write_manifest("hpo")?;
    if ctx.cfg.algorithm != Algorithm::Dqn {
        bail!("hyperparameter search is defined for the dqn algorithm only");
    }
    let preset = ctx.cfg.preset()?;
    let grid = ctx.cfg.grid.clone().ok_or_else(|| anyhow!("config needs a [grid] section for hpo"))?;
    let combos = grid.combinations();
    println!("grid of {} combinations", combos.len());

    let results = run_hpo(
        &combos,
        &preset,
        &ctx.cfg.termination,
        ctx.cfg.episodes.eval,
        ctx.cfg.seed,
        ctx.cfg.workers.unwrap_or(0),
    )
    .map_err(|e| anyhow!("{e}"))?;

    let csv = ergolift_core::training::hpo_results_csv(&results);
    std::fs::write(ctx.out.join("hpo_results.csv"), &csv)?;

    let Some(best) = champion(&results) else {
        std::fs::write(ctx.out.join("hpo_champion.json"), b"null")?;
        return Err(NonConverged("no grid combination converged".into()).into());
    };
    println!(
        "champion: grid index {} (steps {:.1}, erg {:.2}, pain {:.3}, reward {:.1})",
        best.index, best.steps_mean, best.erg_mean, best.pain_mean, best.reward_mean
    );
    std::fs::write(ctx.out.join("hpo_champion.json"), serde_json::to_vec_pretty(&best)?)?;

    // Retrain the champion to a reusable checkpoint with its own seed.
    let mut env = sim_env(ctx, &preset, ControlKind::Dqn)?;
    let seed = ergolift_core::training::combo_seed(ctx.cfg.seed, best.index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agent_seed: u64 = rng.gen();
    let mut agent = DqnAgent::new(best.hp, agent_seed).map_err(|e| anyhow!("{e}"))?;
    let spec = ctx.cfg.termination;
    let cap = spec.pretrain_cap.min(2 * best.hp.epsilon_decay_episodes);
    pretrain(&mut env, &mut agent, best.hp.epsilon_decay_episodes, &spec, cap, &mut rng, &mut NullSink)
        .map_err(|e| anyhow!("{e}"))?;
    agent.save(&ctx.out.join("hpo_champion.ckpt.json")).map_err(|e| anyhow!("{e}"))?;
    Ok(())
}

pub fn cmd_report(run_dir: &Path) -> Result<()> {
    let report = RunReport::load(run_dir)
        .with_context(|| format!("no report.json under {}", run_dir.display()))?;
    report.write(run_dir)?;
    print!("{}", report.to_text());
    Ok(())
}
