//! Experiment configuration: a single TOML document with flat typed keys
//! and nested sections. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ergolift_core::agents::{Hyperparameters, QlParams};
use ergolift_core::env::{preset_by_id, self_check, ControlKind, ParticipantPreset, Workspace};
use ergolift_core::gap::GapConfig;
use ergolift_core::kinematics::{BodyParams, Point2};
use ergolift_core::training::{FinetuneSchedule, HpoSpace, TerminationSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ql,
    Dqn,
}

impl Algorithm {
    pub fn control_kind(&self) -> ControlKind {
        match self {
            Algorithm::Ql => ControlKind::Ql,
            Algorithm::Dqn => ControlKind::Dqn,
        }
    }
}

/// Inline participant definition, used instead of a built-in preset id.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineParticipant {
    pub height: f64,
    pub shoulder_span: f64,
    pub upper_arm_length: f64,
    pub forearm_length: f64,
    pub anchor_ql: [f64; 2],
    pub anchor_dqn: [f64; 2],
    pub ql_initial: [u8; 2],
    pub dqn_initial: [f64; 2],
    pub ql_target_row: u8,
    pub dqn_delta_z: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeCaps {
    pub eval: usize,
}

impl Default for EpisodeCaps {
    fn default() -> Self {
        Self { eval: 10 }
    }
}

/// The experiment file. Every section is optional and falls back to the
/// documented defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    /// Built-in preset id ("1.62", "1.69", "1.79", "1.83").
    pub participant: Option<String>,
    /// Inline participant (alternative to `participant`).
    pub body: Option<InlineParticipant>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub episodes: EpisodeCaps,
    pub termination: TerminationSpec,
    pub ql: QlParams,
    pub ql_diagonals: bool,
    pub hyperparameters: Option<Hyperparameters>,
    pub grid: Option<HpoSpace>,
    pub gap: GapConfig,
    pub finetune_exploration: FinetuneSchedule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Dqn,
            participant: Some("1.79".to_string()),
            body: None,
            seed: 7,
            out_dir: None,
            workers: None,
            episodes: EpisodeCaps::default(),
            termination: TerminationSpec::default(),
            ql: QlParams::default(),
            ql_diagonals: false,
            hyperparameters: None,
            grid: None,
            gap: GapConfig::default(),
            finetune_exploration: FinetuneSchedule::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("invalid experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.participant.is_some() && self.body.is_some() {
            bail!("config sets both `participant` and `body`; pick one");
        }
        if let Some(hp) = &self.hyperparameters {
            hp.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        }
        self.gap.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        if let Some(grid) = &self.grid {
            if grid.is_empty() {
                bail!("grid section lists no combinations");
            }
        }
        self.preset()?;
        Ok(())
    }

    /// Resolved participant preset (built-in or inline), self-checked.
    pub fn preset(&self) -> Result<ParticipantPreset> {
        let preset = match (&self.participant, &self.body) {
            (Some(id), None) => preset_by_id(id).map_err(|e| anyhow::anyhow!("{e}"))?,
            (None, Some(b)) => {
                let preset = ParticipantPreset {
                    id: format!("{:.2}", b.height),
                    body: BodyParams::new(b.height, b.shoulder_span, b.upper_arm_length, b.forearm_length),
                    anchor_ql: Point2::new(b.anchor_ql[0], b.anchor_ql[1]),
                    anchor_dqn: Point2::new(b.anchor_dqn[0], b.anchor_dqn[1]),
                    ql_initial: (b.ql_initial[0], b.ql_initial[1]),
                    dqn_initial: Point2::new(b.dqn_initial[0], b.dqn_initial[1]),
                    ql_target_row: b.ql_target_row,
                    dqn_delta_z: b.dqn_delta_z,
                };
                self_check(&preset, &Workspace::default()).map_err(|e| anyhow::anyhow!("{e}"))?;
                preset
            }
            (None, None) => bail!("config needs `participant` or a [body] section"),
            _ => unreachable!(),
        };
        Ok(preset)
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        self.hyperparameters.unwrap_or_else(Hyperparameters::champion)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Environment-variable overrides (CI hook): `ERGOLIFT_SEED`,
/// `ERGOLIFT_OUT`, `ERGOLIFT_WORKERS`.
pub fn apply_env_overrides(cfg: &mut ExperimentConfig) -> Result<()> {
    if let Ok(seed) = std::env::var("ERGOLIFT_SEED") {
        cfg.seed = seed.parse().context("ERGOLIFT_SEED must be an integer")?;
    }
    if let Ok(out) = std::env::var("ERGOLIFT_OUT") {
        cfg.out_dir = Some(PathBuf::from(out));
    }
    if let Ok(w) = std::env::var("ERGOLIFT_WORKERS") {
        cfg.workers = Some(w.parse().context("ERGOLIFT_WORKERS must be an integer")?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_round_trip() {
        let cfg = ExperimentConfig::parse("participant = \"1.69\"\nalgorithm = \"ql\"\n").unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Ql);
        let text = cfg.to_toml();
        let again = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(again.to_toml(), text, "serialize(parse(·)) must be idempotent");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::parse("participant = \"1.69\"\nbogus_key = 3\n");
        assert!(err.is_err());
        let msg = format!("{:?}", err.unwrap_err());
        assert!(msg.contains("bogus_key"), "{msg}");
    }

    #[test]
    fn unknown_participant_rejected() {
        let err = ExperimentConfig::parse("participant = \"9.99\"\n");
        assert!(err.is_err());
    }

    #[test]
    fn grid_section_parses() {
        let cfg = ExperimentConfig::parse(
            r#"
participant = "1.79"
[grid]
learning_rate = [1e-3, 1e-4]
discount = [0.999]
epsilon_decay_episodes = [200]
soft_update_rate = [1e-3]
buffer_size = [5000]
batch_size = [64]
hidden_dim = [64, 128]
"#,
        )
        .unwrap();
        assert_eq!(cfg.grid.as_ref().unwrap().len(), 4);
    }
}
