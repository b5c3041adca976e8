//! Append-only JSON-lines logging of step transitions and learning curves.

use std::io::Write;

use serde::Serialize;

use crate::env::{DoneReason, ObjPos};

/// One environment transition, one line in the step log.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub episode: usize,
    pub step: u32,
    pub state: ObjPos,
    pub action: usize,
    pub reward: f64,
    pub avg_erg: f64,
    pub avg_pain: f64,
    pub done_reason: Option<DoneReason>,
}

/// One finished episode, one line in the curve log.
#[derive(Debug, Clone, Serialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub steps: u32,
    pub avg_erg: f64,
    pub avg_pain: f64,
    pub epsilon: f64,
}

pub trait StepSink {
    fn on_step(&mut self, _rec: &StepRecord) {}
    fn on_episode(&mut self, _rec: &EpisodeRecord) {}
}

/// Discards everything; the default for tests and inner loops.
pub struct NullSink;

impl StepSink for NullSink {}

/// Writes records as JSON lines. Either stream may be absent.
pub struct JsonlSink<W: Write> {
    steps: Option<W>,
    episodes: Option<W>,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(steps: Option<W>, episodes: Option<W>) -> Self {
        Self { steps, episodes }
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        if let Some(w) = &mut self.steps {
            w.flush()?;
        }
        if let Some(w) = &mut self.episodes {
            w.flush()?;
        }
        Ok(())
    }
}

impl<W: Write> StepSink for JsonlSink<W> {
    fn on_step(&mut self, rec: &StepRecord) {
        if let Some(w) = &mut self.steps {
            // Serialization of these records cannot fail; IO errors surface
            // at flush/close.
            let _ = serde_json::to_writer(&mut *w, rec);
            let _ = w.write_all(b"\n");
        }
    }

    fn on_episode(&mut self, rec: &EpisodeRecord) {
        if let Some(w) = &mut self.episodes {
            let _ = serde_json::to_writer(&mut *w, rec);
            let _ = w.write_all(b"\n");
        }
    }
}
