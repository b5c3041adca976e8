//! Per-phase report rendering: one row per executed phase, CSV and a
//! human-readable table.

use anyhow::Result;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use ergolift_core::training::EvalReport;

/// Training/execution environments of one evaluated phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    SimSim,
    SimReal,
    RealReal,
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Phase::SimSim => "Sim/Sim",
            Phase::SimReal => "Sim/Real",
            Phase::RealReal => "Real/Real",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseRow {
    pub phase: Phase,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub participant: String,
    pub algorithm: String,
    pub phases: Vec<PhaseRow>,
}

impl RunReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "participant,algorithm,phase,reward_mean,reward_std,pain_any,pain_mean,erg_mean,erg_std,steps_mean,steps_std,distance_mean,distance_std,time_mean,time_std,pain_abort_episodes\n",
        );
        for row in &self.phases {
            let e = &row.eval;
            let pain_any = u8::from(e.pain_abort_episodes > 0 || e.avg_pain.mean > 0.0);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.participant,
                self.algorithm,
                row.phase.label(),
                e.reward.mean,
                e.reward.std,
                pain_any,
                e.avg_pain.mean,
                e.avg_erg.mean,
                e.avg_erg.std,
                e.steps.mean,
                e.steps.std,
                e.distance_m.mean,
                e.distance_m.std,
                e.time_s.mean,
                e.time_s.std,
                e.pain_abort_episodes,
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "participant {}  ({})", self.participant, self.algorithm);
        let _ = writeln!(
            out,
            "{:<10} {:>16} {:>6} {:>13} {:>11} {:>15} {:>13}",
            "phase", "reward", "pain", "erg", "steps", "distance (m)", "time (s)"
        );
        for row in &self.phases {
            let e = &row.eval;
            let pain_any = u8::from(e.pain_abort_episodes > 0 || e.avg_pain.mean > 0.0);
            let _ = writeln!(
                out,
                "{:<10} {:>8.1}±{:<7.1} {:>6} {:>7.2}±{:<5.2} {:>6.1}±{:<4.1} {:>9.3}±{:<5.3} {:>7.1}±{:<5.1}",
                row.phase.label(),
                e.reward.mean,
                e.reward.std,
                pain_any,
                e.avg_erg.mean,
                e.avg_erg.std,
                e.steps.mean,
                e.steps.std,
                e.distance_m.mean,
                e.distance_m.std,
                e.time_s.mean,
                e.time_s.std,
            );
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("report.csv"), self.to_csv())?;
        std::fs::write(dir.join("report.txt"), self.to_text())?;
        std::fs::write(dir.join("report.json"), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let bytes = std::fs::read(dir.join("report.json"))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
