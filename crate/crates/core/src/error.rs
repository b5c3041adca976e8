use crate::kinematics::Point2;

/// Errors surfaced by the simulator and training stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid body parameters: {0}")]
    InvalidBody(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible path: no valid arm posture for object at ({:.4}, {:.4})", pos.x, pos.z)]
    InfeasiblePath { pos: Point2 },

    #[error("action {index} is not in the shaped action set")]
    ActionNotShaped { index: usize },

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
