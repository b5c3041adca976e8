//! Surrogate "real" environment: a perturbed human model observed through a
//! rate-sampled, noisy sensor pipeline.
//!
//! The perturbations (segment-length error, constant joint bias, per-sample
//! angle noise) stand in for kinematic-model simplifications and sensing
//! limitations. Magnitudes are configuration-exposed; they model a plausible
//! mismatch, not a measured one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::kinematics::{human_ee_from_object, HumanModel, JointAngles, Point2};
use crate::risk::{erg_level, pain_state, RiskSummary};
use crate::{Error, Result};

/// Perturbation and sensing parameters of the surrogate real environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapConfig {
    /// Half-width of the uniform per-segment length error, as a fraction.
    pub segment_length_error: f64,
    /// Constant per-joint offset magnitude, degrees (sign seeded per joint).
    pub joint_bias_deg: f64,
    /// Per-sample Gaussian angle noise, degrees.
    pub angle_noise_sigma_deg: f64,
    /// Sensor update rate, Hz.
    pub sensor_rate_hz: f64,
    /// Object transport speed, m/s.
    pub ee_speed_mps: f64,
    /// Fixed per-step latency (settling, command overhead), seconds.
    pub per_step_overhead_s: f64,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            segment_length_error: 0.03,
            joint_bias_deg: 2.0,
            angle_noise_sigma_deg: 2.0,
            sensor_rate_hz: 60.0,
            ee_speed_mps: 0.05,
            per_step_overhead_s: 1.0,
        }
    }
}

impl GapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.2).contains(&self.segment_length_error) {
            return Err(Error::InvalidConfig(format!(
                "segment_length_error must be in [0, 0.2], got {}",
                self.segment_length_error
            )));
        }
        for (name, v) in [("sensor_rate_hz", self.sensor_rate_hz), ("ee_speed_mps", self.ee_speed_mps)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.joint_bias_deg < 0.0 || self.angle_noise_sigma_deg < 0.0 || self.per_step_overhead_s < 0.0 {
            return Err(Error::InvalidConfig("bias, noise and overhead must be non-negative".into()));
        }
        Ok(())
    }
}

/// Applies the seeded segment-length error to a nominal model. The anchor
/// and joint limits are unchanged; the same seed reproduces the same model.
pub fn perturb_model(model: &HumanModel, cfg: &GapConfig, seed: u64) -> HumanModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = cfg.segment_length_error;
    let mut scale = || 1.0 + rng.gen_range(-f..=f);
    HumanModel { l_upper: model.l_upper * scale(), l_fore: model.l_fore * scale(), ..*model }
}

/// Joint-angle observer: constant per-joint bias (seeded sign) plus
/// per-sample Gaussian noise, mimicking an IMU-based capture pipeline.
#[derive(Debug, Clone)]
pub struct Observer {
    bias_shoulder_deg: f64,
    bias_elbow_deg: f64,
    sigma_deg: f64,
    rng: ChaCha8Rng,
}

impl Observer {
    pub fn new(cfg: &GapConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sign = |r: &mut ChaCha8Rng| if r.gen::<bool>() { 1.0 } else { -1.0 };
        Self {
            bias_shoulder_deg: sign(&mut rng) * cfg.joint_bias_deg,
            bias_elbow_deg: sign(&mut rng) * cfg.joint_bias_deg,
            sigma_deg: cfg.angle_noise_sigma_deg,
            rng,
        }
    }

    pub fn observe(&mut self, q: JointAngles) -> JointAngles {
        let ns: f64 = self.rng.sample(StandardNormal);
        let ne: f64 = self.rng.sample(StandardNormal);
        JointAngles::new(
            q.shoulder_deg + self.bias_shoulder_deg + self.sigma_deg * ns,
            q.elbow_deg + self.bias_elbow_deg + self.sigma_deg * ne,
        )
    }
}

/// One observed posture with its assessed risks.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SensorSample {
    pub timestamp_s: f64,
    pub shoulder_deg: f64,
    pub elbow_deg: f64,
    pub erg: u8,
    pub pain: u8,
}

#[derive(Debug, Clone, Copy)]
pub struct MotionOutcome {
    pub risk: RiskSummary,
    pub elapsed_s: f64,
    pub sample_count: usize,
}

/// Moves the object along `from → to` at the configured speed and assesses
/// risk from corrupted joint readings at the sensor rate, starting from the
/// initial state. The true posture comes from the real (perturbed) model;
/// an unreachable sample is an infeasible-path error.
pub fn simulate_motion_with(
    true_model: &HumanModel,
    observer: &mut Observer,
    from_obj: Point2,
    to_obj: Point2,
    l_object: f64,
    cfg: &GapConfig,
    mut on_sample: impl FnMut(&SensorSample),
) -> Result<MotionOutcome> {
    let dist = from_obj.distance(to_obj);
    let travel_s = dist / cfg.ee_speed_mps;
    let ticks = if dist == 0.0 { 0 } else { (travel_s * cfg.sensor_rate_hz).ceil().max(1.0) as usize };

    let mut erg_sum = 0.0;
    let mut pain_sum = 0.0;
    for i in 0..=ticks {
        let t = i as f64 / cfg.sensor_rate_hz;
        let frac = if dist == 0.0 { 0.0 } else { ((t * cfg.ee_speed_mps) / dist).min(1.0) };
        let obj = Point2::new(from_obj.x + (to_obj.x - from_obj.x) * frac, from_obj.z + (to_obj.z - from_obj.z) * frac);
        let q_true = true_model
            .solve(human_ee_from_object(obj, l_object))
            .ok_or(Error::InfeasiblePath { pos: obj })?;
        let q_obs = observer.observe(q_true);
        let sample = SensorSample {
            timestamp_s: t,
            shoulder_deg: q_obs.shoulder_deg,
            elbow_deg: q_obs.elbow_deg,
            erg: erg_level(q_obs),
            pain: pain_state(q_obs.elbow_deg),
        };
        erg_sum += f64::from(sample.erg);
        pain_sum += f64::from(sample.pain);
        on_sample(&sample);
    }

    let n = (ticks + 1) as f64;
    Ok(MotionOutcome {
        risk: RiskSummary { avg_erg: erg_sum / n, avg_pain: pain_sum / n },
        elapsed_s: travel_s + cfg.per_step_overhead_s,
        sample_count: ticks + 1,
    })
}

/// Sample-collecting variant of [`simulate_motion_with`].
pub fn simulate_motion(
    true_model: &HumanModel,
    observer: &mut Observer,
    from_obj: Point2,
    to_obj: Point2,
    l_object: f64,
    cfg: &GapConfig,
) -> Result<(RiskSummary, f64, Vec<SensorSample>)> {
    let mut samples = Vec::new();
    let out = simulate_motion_with(true_model, observer, from_obj, to_obj, l_object, cfg, |s| samples.push(*s))?;
    Ok((out.risk, out.elapsed_s, samples))
}
