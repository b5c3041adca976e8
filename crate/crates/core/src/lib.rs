//! Simulator and training toolkit for a human-aware collaborative lift task.
//!
//! A robot and a simulated human partner jointly move an object vertically.
//! Policies (tabular Q-Learning or a small DQN) learn to complete the lift
//! while keeping the partner's postures ergonomically safe and clear of the
//! painful elbow range. Training follows a pre-train (simulation) →
//! fine-tune (perturbed surrogate environment) pipeline.

pub mod agents;
pub mod env;
pub mod gap;
pub mod kinematics;
pub mod logging;
pub mod nnet;
pub mod risk;
pub mod training;

mod error;

pub use error::{Error, Result};
