//! Ergonomic scoring and pain assessment for arm postures.
//!
//! Ergonomic risk follows the upper-arm/lower-arm slice of the RULA posture
//! table (wrist and wrist-twist held at their neutral scores). Pain is a
//! binary state machine over the elbow angle, kept behind a single predicate
//! so it can be swapped for a learned biomarker later.

use serde::{Deserialize, Serialize};

use crate::kinematics::{human_ee_from_object, HumanModel, JointAngles, Point2};
use crate::{Error, Result};

/// Elbow ranges (degrees, closed intervals) that trigger the pain state.
pub const PAIN_EXTENSION_DEG: (f64, f64) = (0.0, 30.0);
pub const PAIN_FLEXION_DEG: (f64, f64) = (115.0, 150.0);

/// Trajectory-averaged risk over one object displacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    /// Mean ergonomic level over the sampled postures, ≥ 1.
    pub avg_erg: f64,
    /// Mean pain indicator over the sampled postures, in [0, 1].
    pub avg_pain: f64,
}

impl RiskSummary {
    pub fn pain_free(&self) -> bool {
        self.avg_pain == 0.0
    }
}

/// RULA upper-arm score from shoulder flexion, degrees.
pub fn upper_arm_score(shoulder_deg: f64) -> u8 {
    if (-20.0..=20.0).contains(&shoulder_deg) {
        1
    } else if shoulder_deg < -20.0 || shoulder_deg <= 45.0 {
        2
    } else if shoulder_deg <= 90.0 {
        3
    } else {
        4
    }
}

/// RULA lower-arm score from elbow flexion, degrees.
pub fn lower_arm_score(elbow_deg: f64) -> u8 {
    if (60.0..=100.0).contains(&elbow_deg) {
        1
    } else {
        2
    }
}

// Posture-A slice for wrist score 1, wrist twist 1, indexed by
// [upper_arm - 1][lower_arm - 1].
const POSTURE_TABLE: [[u8; 2]; 4] = [[1, 2], [2, 2], [3, 3], [4, 4]];

/// Ergonomic level of a single posture.
pub fn erg_level(q: JointAngles) -> u8 {
    let upper = upper_arm_score(q.shoulder_deg) as usize;
    let lower = lower_arm_score(q.elbow_deg) as usize;
    POSTURE_TABLE[upper - 1][lower - 1]
}

/// Binary pain state from the elbow angle: 1 inside the restricted
/// extension/flexion arcs, 0 otherwise.
pub fn pain_state(elbow_deg: f64) -> u8 {
    let in_ext = elbow_deg >= PAIN_EXTENSION_DEG.0 && elbow_deg <= PAIN_EXTENSION_DEG.1;
    let in_flex = elbow_deg >= PAIN_FLEXION_DEG.0 && elbow_deg <= PAIN_FLEXION_DEG.1;
    u8::from(in_ext || in_flex)
}

/// Evenly spaced sample points of the segment `from → to`, spacing ≤ `step`,
/// both endpoints always included. A zero-length segment yields one sample.
pub fn path_samples(from: Point2, to: Point2, step: f64) -> Vec<Point2> {
    debug_assert!(step > 0.0);
    let dist = from.distance(to);
    if dist == 0.0 {
        return vec![from];
    }
    let n = (dist / step).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            Point2::new(from.x + (to.x - from.x) * t, from.z + (to.z - from.z) * t)
        })
        .collect()
}

/// Selected posture at each object sample along a straight displacement,
/// or an infeasible-path error at the first sample without a valid solution.
fn posture_at(model: &HumanModel, obj: Point2, l_object: f64) -> Result<JointAngles> {
    let hand = human_ee_from_object(obj, l_object);
    model.solve(hand).ok_or(Error::InfeasiblePath { pos: obj })
}

/// Trajectory-averaged ergonomic and pain risk for moving the object along
/// the straight segment `from_obj → to_obj` (object center positions, world
/// frame). Postures are sampled at spacing ≤ `step`, including the start.
pub fn path_risk(
    model: &HumanModel,
    from_obj: Point2,
    to_obj: Point2,
    step: f64,
    l_object: f64,
) -> Result<RiskSummary> {
    path_risk_sampled(model, from_obj, to_obj, step, l_object).map(|(risk, _)| risk)
}

/// [`path_risk`] plus the number of sampled postures, so callers can pool
/// averages across several displacements.
pub fn path_risk_sampled(
    model: &HumanModel,
    from_obj: Point2,
    to_obj: Point2,
    step: f64,
    l_object: f64,
) -> Result<(RiskSummary, usize)> {
    let samples = path_samples(from_obj, to_obj, step);
    let mut erg_sum = 0u32;
    let mut pain_sum = 0u32;
    for obj in &samples {
        let q = posture_at(model, *obj, l_object)?;
        erg_sum += u32::from(erg_level(q));
        pain_sum += u32::from(pain_state(q.elbow_deg));
    }
    let n = samples.len() as f64;
    Ok((RiskSummary { avg_erg: f64::from(erg_sum) / n, avg_pain: f64::from(pain_sum) / n }, samples.len()))
}

/// True when every sample along the segment admits a valid, limit-respecting
/// arm posture. Used for action-space shaping.
pub fn path_feasible(model: &HumanModel, from_obj: Point2, to_obj: Point2, step: f64, l_object: f64) -> bool {
    path_samples(from_obj, to_obj, step)
        .iter()
        .all(|obj| model.solve(human_ee_from_object(*obj, l_object)).is_some())
}
