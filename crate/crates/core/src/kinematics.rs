//! Planar two-link model of the human partner's arm.
//!
//! The arm is a shoulder-anchored upper-arm/forearm chain moving in the
//! sagittal plane. Angles are in degrees: shoulder flexion is measured from
//! the downward vertical (0° = arm hanging, positive = forward/up), elbow
//! flexion from full extension, bending in the same rotational sense. The
//! partner faces the robot, so extending the arm decreases world `x`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Normative shoulder flexion/extension range, degrees.
pub const SHOULDER_LIMITS_DEG: (f64, f64) = (-60.0, 180.0);
/// Normative elbow flexion range, degrees.
pub const ELBOW_LIMITS_DEG: (f64, f64) = (0.0, 150.0);

/// Nominal stance distance from the robot base, meters.
pub const DEFAULT_STANCE_X: f64 = 2.72;
/// Shoulder height as a fraction of body height.
pub const SHOULDER_HEIGHT_RATIO: f64 = 0.823;

/// Slack when classifying a target against the reachable annulus, meters.
const REACH_TOL_M: f64 = 1e-9;
/// Slack for joint-limit checks, degrees.
const LIMIT_TOL_DEG: f64 = 1e-9;

/// A point in the vertical task plane: `x` horizontal (away from the robot
/// base), `z` vertical (up), in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub z: f64,
}

impl Point2 {
    pub const fn new(x: f64, z: f64) -> Self {
        Self { x, z }
    }

    pub fn distance(&self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.z - other.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.z.is_finite()
    }
}

/// Measured anthropometrics of one participant, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub height: f64,
    pub shoulder_span: f64,
    /// Shoulder-to-elbow segment length.
    pub upper_arm_length: f64,
    /// Elbow-to-grip segment length (forearm plus the hand up to the hold
    /// point on the object).
    pub forearm_length: f64,
}

impl BodyParams {
    pub fn new(height: f64, shoulder_span: f64, upper_arm_length: f64, forearm_length: f64) -> Self {
        Self { height, shoulder_span, upper_arm_length, forearm_length }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("height", self.height),
            ("shoulder_span", self.shoulder_span),
            ("upper_arm_length", self.upper_arm_length),
            ("forearm_length", self.forearm_length),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidBody(format!("{name} must be positive, got {v}")));
            }
        }
        if self.upper_arm_length + self.forearm_length >= self.height {
            return Err(Error::InvalidBody(format!(
                "arm length {} must be shorter than body height {}",
                self.upper_arm_length + self.forearm_length,
                self.height
            )));
        }
        Ok(())
    }
}

/// Shoulder and elbow flexion, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAngles {
    pub shoulder_deg: f64,
    pub elbow_deg: f64,
}

impl JointAngles {
    pub const fn new(shoulder_deg: f64, elbow_deg: f64) -> Self {
        Self { shoulder_deg, elbow_deg }
    }
}

/// Scaled two-link arm with a fixed world-frame shoulder anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanModel {
    /// Upper-arm length (L1), meters.
    pub l_upper: f64,
    /// Forearm-to-grip length (L2), meters.
    pub l_fore: f64,
    pub shoulder_anchor: Point2,
    pub shoulder_limits_deg: (f64, f64),
    pub elbow_limits_deg: (f64, f64),
}

/// Nominal shoulder anchor for a body standing on the stance line.
pub fn default_anchor(body: &BodyParams) -> Point2 {
    Point2::new(DEFAULT_STANCE_X, SHOULDER_HEIGHT_RATIO * body.height)
}

/// Builds the per-participant arm model from measured segment lengths.
pub fn scale_model(body: &BodyParams, anchor: Point2) -> Result<HumanModel> {
    body.validate()?;
    if !anchor.is_finite() {
        return Err(Error::InvalidBody(format!("anchor must be finite, got ({}, {})", anchor.x, anchor.z)));
    }
    Ok(HumanModel {
        l_upper: body.upper_arm_length,
        l_fore: body.forearm_length,
        shoulder_anchor: anchor,
        shoulder_limits_deg: SHOULDER_LIMITS_DEG,
        elbow_limits_deg: ELBOW_LIMITS_DEG,
    })
}

impl HumanModel {
    /// Reachable radial interval `[|L1-L2|, L1+L2]` around the shoulder.
    pub fn reach_interval(&self) -> (f64, f64) {
        ((self.l_upper - self.l_fore).abs(), self.l_upper + self.l_fore)
    }

    pub fn within_limits(&self, q: JointAngles) -> bool {
        let (s_lo, s_hi) = self.shoulder_limits_deg;
        let (e_lo, e_hi) = self.elbow_limits_deg;
        q.shoulder_deg >= s_lo - LIMIT_TOL_DEG
            && q.shoulder_deg <= s_hi + LIMIT_TOL_DEG
            && q.elbow_deg >= e_lo - LIMIT_TOL_DEG
            && q.elbow_deg <= e_hi + LIMIT_TOL_DEG
    }

    /// Convenience: IK followed by solution selection.
    pub fn solve(&self, ee: Point2) -> Option<JointAngles> {
        select_solution(self, &inverse_kinematics(self, ee))
    }
}

/// Grip-point position for given joint angles. Total in the angles: inputs
/// outside the joint limits are mapped like any other configuration.
pub fn forward_kinematics(model: &HumanModel, q: JointAngles) -> Point2 {
    let ts = q.shoulder_deg.to_radians();
    let tse = (q.shoulder_deg + q.elbow_deg).to_radians();
    let reach = model.l_upper * ts.sin() + model.l_fore * tse.sin();
    let rise = -model.l_upper * ts.cos() - model.l_fore * tse.cos();
    Point2::new(model.shoulder_anchor.x - reach, model.shoulder_anchor.z + rise)
}

/// Up to two joint configurations reaching one grip point.
#[derive(Debug, Clone, Copy, Default)]
pub struct IkCandidates {
    sols: [Option<JointAngles>; 2],
}

impl IkCandidates {
    fn empty() -> Self {
        Self::default()
    }

    fn one(q: JointAngles) -> Self {
        Self { sols: [Some(q), None] }
    }

    fn two(a: JointAngles, b: JointAngles) -> Self {
        Self { sols: [Some(a), Some(b)] }
    }

    pub fn len(&self) -> usize {
        self.sols.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.sols[0].is_none()
    }

    pub fn iter(&self) -> impl Iterator<Item = JointAngles> + '_ {
        self.sols.iter().flatten().copied()
    }
}

/// Closed-form two-link inverse kinematics.
///
/// Returns 0 candidates outside the reachable annulus, 1 on its boundary
/// (within a small slack, where both elbow configurations coincide), and 2
/// strictly inside (mirrored elbow configurations, flexion-positive first).
/// Joint limits are not applied here; see [`select_solution`].
pub fn inverse_kinematics(model: &HumanModel, ee: Point2) -> IkCandidates {
    // Arm-frame coordinates: u along the reach direction (toward the robot,
    // i.e. decreasing world x), v up.
    let u = model.shoulder_anchor.x - ee.x;
    let v = ee.z - model.shoulder_anchor.z;
    let r = u.hypot(v);
    if !r.is_finite() {
        return IkCandidates::empty();
    }

    let (l1, l2) = (model.l_upper, model.l_fore);
    let (r_min, r_max) = model.reach_interval();
    if r > r_max + REACH_TOL_M || r < r_min - REACH_TOL_M {
        return IkCandidates::empty();
    }

    // Shoulder direction toward the target, measured from the downward
    // vertical (u-axis angle plus 90°).
    let base_deg = v.atan2(u).to_degrees() + 90.0;

    if r >= r_max - REACH_TOL_M {
        // Fully stretched: the mirrored solutions coincide at zero flexion.
        return IkCandidates::one(JointAngles::new(normalize_deg(base_deg), 0.0));
    }
    if r <= r_min + REACH_TOL_M {
        // Fully folded.
        return IkCandidates::one(JointAngles::new(normalize_deg(base_deg), 180.0));
    }

    let cos_elbow = ((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let elbow = cos_elbow.acos();

    let candidate = |elbow_rad: f64| {
        let wrist_offset = (l2 * elbow_rad.sin()).atan2(l1 + l2 * elbow_rad.cos());
        JointAngles::new(
            normalize_deg(base_deg - wrist_offset.to_degrees()),
            elbow_rad.to_degrees(),
        )
    };
    IkCandidates::two(candidate(elbow), candidate(-elbow))
}

/// Picks the physically valid, natural configuration: candidates violating
/// the joint limits are discarded; if both remain the smaller shoulder
/// flexion (elbow-below configuration) wins.
pub fn select_solution(model: &HumanModel, candidates: &IkCandidates) -> Option<JointAngles> {
    candidates
        .iter()
        .filter(|q| model.within_limits(*q))
        .min_by(|a, b| a.shoulder_deg.total_cmp(&b.shoulder_deg))
}

/// Grip position of the human hand for an object centered at `obj`.
/// The hand holds the near end of the object, half its length toward the
/// partner (increasing x).
pub fn human_ee_from_object(obj: Point2, l_object: f64) -> Point2 {
    Point2::new(obj.x + l_object / 2.0, obj.z)
}

/// Tool point of the robot for an object centered at `obj`: half the
/// standard object length toward the base.
pub fn robot_ee_from_object(obj: Point2) -> Point2 {
    Point2::new(obj.x - 0.65, obj.z)
}

/// Folds an angle into `(-180, 180]` degrees.
pub fn normalize_deg(deg: f64) -> f64 {
    let mut a = deg % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

const SQRT3_HALF: f64 = 0.866_025_403_784_438_6;
// sin/cos at k*30° for k = 0..11.
const SIN_TABLE: [f64; 12] =
    [0.0, 0.5, SQRT3_HALF, 1.0, SQRT3_HALF, 0.5, 0.0, -0.5, -SQRT3_HALF, -1.0, -SQRT3_HALF, -0.5];
const COS_TABLE: [f64; 12] =
    [1.0, SQRT3_HALF, 0.5, 0.0, -0.5, -SQRT3_HALF, -1.0, -SQRT3_HALF, -0.5, 0.0, 0.5, SQRT3_HALF];

fn exact_index(deg: f64) -> Option<usize> {
    let k = deg / 30.0;
    if !k.is_finite() || k.abs() > 1e12 || k.fract() != 0.0 {
        return None;
    }
    Some(((k as i64).rem_euclid(12)) as usize)
}

/// Sine of an angle in degrees, exact at multiples of 30° so that axis
/// moves and reward terms come out without trigonometric round-off.
pub fn sind(deg: f64) -> f64 {
    match exact_index(deg) {
        Some(k) => SIN_TABLE[k],
        None => deg.to_radians().sin(),
    }
}

/// Cosine counterpart of [`sind`].
pub fn cosd(deg: f64) -> f64 {
    match exact_index(deg) {
        Some(k) => COS_TABLE[k],
        None => deg.to_radians().cos(),
    }
}
