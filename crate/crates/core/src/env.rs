//! The co-manipulation MDP: lift-area geometry, both action spaces, action
//! shaping, reward computation, and the episode lifecycle.
//!
//! Object positions live in lift-area-local coordinates (`x ∈ [0, width]`,
//! `z ∈ [0, height]`, meters). The area sits `x_origin_world` from the robot
//! base and `z_origin_world` above the floor; the human model works in world
//! coordinates.

use serde::{Deserialize, Serialize};

use crate::gap::{simulate_motion_with, GapConfig, Observer};
use crate::kinematics::{cosd, human_ee_from_object, scale_model, sind, BodyParams, HumanModel, Point2};
use crate::risk::{path_feasible, path_risk_sampled, RiskSummary};
use crate::{Error, Result};

/// Slack for floating-point boundary checks on the lift area, meters.
const BOUNDS_TOL_M: f64 = 1e-12;

/// Cartesian area in which the object can be displaced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub width: f64,
    pub height: f64,
    /// Distance from the robot base to the near edge of the area, meters.
    pub x_origin_world: f64,
    /// Height of the bottom edge above the floor, meters.
    pub z_origin_world: f64,
    /// Length of the transported object, meters.
    pub l_object: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Self { width: 0.40, height: 0.90, x_origin_world: 1.0, z_origin_world: 0.5, l_object: 1.30 }
    }
}

impl Workspace {
    pub fn world_from_local(&self, p: Point2) -> Point2 {
        Point2::new(p.x + self.x_origin_world, p.z + self.z_origin_world)
    }

    pub fn local_from_world(&self, p: Point2) -> Point2 {
        Point2::new(p.x - self.x_origin_world, p.z - self.z_origin_world)
    }

    pub fn contains_local(&self, p: Point2) -> bool {
        p.x >= -BOUNDS_TOL_M
            && p.x <= self.width + BOUNDS_TOL_M
            && p.z >= -BOUNDS_TOL_M
            && p.z <= self.height + BOUNDS_TOL_M
    }
}

/// Movement directions of the continuous action set, degrees. Restricted to
/// the upper half-plane so the object can never move backward (down).
pub const DQN_ALPHAS_DEG: [f64; 7] = [0.0, 30.0, 60.0, 90.0, 120.0, 150.0, 180.0];
/// Step distances of the continuous action set, meters.
pub const DQN_DISTANCES_M: [f64; 5] = [0.02, 0.03, 0.05, 0.2, 0.4];
pub const DQN_ACTION_COUNT: usize = DQN_ALPHAS_DEG.len() * DQN_DISTANCES_M.len();

/// A direction/distance pair `(α, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DqnAction {
    pub alpha_deg: f64,
    pub dist_m: f64,
}

impl DqnAction {
    /// Row-major index ↔ action bijection: `α` outer, `d` inner.
    pub fn from_index(index: usize) -> Self {
        assert!(index < DQN_ACTION_COUNT);
        Self {
            alpha_deg: DQN_ALPHAS_DEG[index / DQN_DISTANCES_M.len()],
            dist_m: DQN_DISTANCES_M[index % DQN_DISTANCES_M.len()],
        }
    }

    pub fn index(&self) -> usize {
        let a = DQN_ALPHAS_DEG.iter().position(|&x| x == self.alpha_deg).expect("unknown direction");
        let d = DQN_DISTANCES_M.iter().position(|&x| x == self.dist_m).expect("unknown distance");
        a * DQN_DISTANCES_M.len() + d
    }

    /// Cartesian displacement `(d·cos α, d·sin α)`.
    pub fn delta(&self) -> (f64, f64) {
        (self.dist_m * cosd(self.alpha_deg), self.dist_m * sind(self.alpha_deg))
    }

    /// Purely horizontal moves feed the consecutive-sideways counter.
    pub fn is_horizontal(&self) -> bool {
        sind(self.alpha_deg) == 0.0
    }

    pub fn all() -> impl Iterator<Item = DqnAction> {
        (0..DQN_ACTION_COUNT).map(DqnAction::from_index)
    }
}

/// Grid moves of the tabular action set. Backward (downward) moves are not
/// part of the set; diagonal-up moves are optional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridAction {
    Up,
    Left,
    Right,
    UpLeft,
    UpRight,
}

impl GridAction {
    pub const BASE: [GridAction; 3] = [GridAction::Up, GridAction::Left, GridAction::Right];
    pub const WITH_DIAGONALS: [GridAction; 5] =
        [GridAction::Up, GridAction::Left, GridAction::Right, GridAction::UpLeft, GridAction::UpRight];

    pub fn delta(&self) -> (i32, i32) {
        match self {
            GridAction::Up => (0, 1),
            GridAction::Left => (-1, 0),
            GridAction::Right => (1, 0),
            GridAction::UpLeft => (-1, 1),
            GridAction::UpRight => (1, 1),
        }
    }

    pub fn is_horizontal(&self) -> bool {
        matches!(self, GridAction::Left | GridAction::Right)
    }
}

/// Grid resolution of the tabular state space: 10 cm vertically, 6.5 cm
/// horizontally, lattice points `(col 0..=6, row 0..=9)` on the lift area.
pub const QL_COL_STEP_M: f64 = 0.065;
pub const QL_ROW_STEP_M: f64 = 0.10;
pub const QL_MAX_COL: u8 = 6;
pub const QL_MAX_ROW: u8 = 9;

pub fn cell_local(col: u8, row: u8) -> Point2 {
    Point2::new(f64::from(col) * QL_COL_STEP_M, f64::from(row) * QL_ROW_STEP_M)
}

/// Per-participant task definition: scaled body, per-session shoulder
/// anchors, initial states, and end-of-episode conditions for both
/// controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantPreset {
    /// Height label used to reference the preset, e.g. "1.79".
    pub id: String,
    pub body: BodyParams,
    /// Shoulder anchor measured for the tabular-control session, world
    /// coordinates. Anchors are calibrated so the whole lift corridor stays
    /// inside the arm's comfortable annulus.
    pub anchor_ql: Point2,
    /// Shoulder anchor measured for the continuous-control session.
    pub anchor_dqn: Point2,
    /// Grid start `(col, row)`.
    pub ql_initial: (u8, u8),
    /// Continuous start: `x` measured from the robot base, `z` from the
    /// bottom edge of the lift area.
    pub dqn_initial: Point2,
    /// Grid success row (clamped to the top row at use).
    pub ql_target_row: u8,
    /// Success margin: done when `z ≥ height − Δz`, meters.
    pub dqn_delta_z: f64,
}

impl ParticipantPreset {
    pub fn anchor_for(&self, kind: ControlKind) -> Point2 {
        match kind {
            ControlKind::Ql => self.anchor_ql,
            ControlKind::Dqn => self.anchor_dqn,
        }
    }

    pub fn model_for(&self, kind: ControlKind) -> Result<HumanModel> {
        scale_model(&self.body, self.anchor_for(kind))
    }

    pub fn ql_target_row_effective(&self) -> u8 {
        self.ql_target_row.min(QL_MAX_ROW)
    }

    pub fn dqn_initial_local(&self, ws: &Workspace) -> Point2 {
        Point2::new(self.dqn_initial.x - ws.x_origin_world, self.dqn_initial.z)
    }
}

#[allow(clippy::too_many_arguments)]
fn preset(
    id: &str,
    height: f64,
    arm_ratio: f64,
    anchor_ql: Point2,
    anchor_dqn: Point2,
    ql_initial: (u8, u8),
    dqn_initial: Point2,
    ql_target_row: u8,
    dqn_delta_z: f64,
) -> ParticipantPreset {
    // Segment lengths scale with stature (total arm 0.44·height, measured
    // to the grip point, split by the per-participant forearm/upper-arm
    // ratio). The distal segment includes the hand up to the hold point.
    let round3 = |v: f64| (v * 1000.0).round() / 1000.0;
    let upper = 0.44 * height / (1.0 + arm_ratio);
    ParticipantPreset {
        id: id.to_string(),
        body: BodyParams::new(height, round3(0.259 * height), round3(upper), round3(0.44 * height - upper)),
        anchor_ql,
        anchor_dqn,
        ql_initial,
        dqn_initial,
        ql_target_row,
        dqn_delta_z,
    }
}

/// The four built-in participant presets.
///
/// Every preset is self-checked at load time: the initial postures of both
/// controllers must admit a valid arm solution, otherwise loading fails.
pub fn load_presets() -> Result<Vec<ParticipantPreset>> {
    let presets = vec![
        preset("1.62", 1.62, 0.75, Point2::new(2.330, 1.060), Point2::new(2.330, 1.240), (4, 1), Point2::new(1.3, 0.434), 9, 0.20),
        preset("1.69", 1.69, 0.75, Point2::new(2.410, 1.090), Point2::new(2.300, 1.250), (4, 1), Point2::new(1.35, 0.454), 9, 0.15),
        preset("1.79", 1.79, 0.75, Point2::new(2.385, 1.140), Point2::new(2.320, 1.240), (4, 1), Point2::new(1.3, 0.434), 10, 0.03),
        preset("1.83", 1.83, 0.75, Point2::new(2.525, 1.140), Point2::new(2.360, 1.280), (5, 2), Point2::new(1.35, 0.474), 10, 0.03),
    ];
    let ws = Workspace::default();
    for p in &presets {
        self_check(p, &ws)?;
    }
    Ok(presets)
}

pub fn preset_by_id(id: &str) -> Result<ParticipantPreset> {
    load_presets()?
        .into_iter()
        .find(|p| p.id == id)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown participant preset {id:?}")))
}

/// Startup feasibility check: both initial postures must be solvable under
/// their session's model.
pub fn self_check(p: &ParticipantPreset, ws: &Workspace) -> Result<()> {
    let dqn_local = p.dqn_initial_local(ws);
    if !ws.contains_local(dqn_local) {
        return Err(Error::InvalidConfig(format!(
            "preset {}: continuous start ({:.3}, {:.3}) outside the lift area",
            p.id, dqn_local.x, dqn_local.z
        )));
    }
    if p.dqn_delta_z <= 0.0 || p.dqn_delta_z >= ws.height {
        return Err(Error::InvalidConfig(format!("preset {}: bad success margin {}", p.id, p.dqn_delta_z)));
    }
    let (col, row) = p.ql_initial;
    if col > QL_MAX_COL || row > QL_MAX_ROW {
        return Err(Error::InvalidConfig(format!("preset {}: grid start off the lattice", p.id)));
    }
    for (kind, obj_local) in [(ControlKind::Dqn, dqn_local), (ControlKind::Ql, cell_local(col, row))] {
        let model = p.model_for(kind)?;
        let hand = human_ee_from_object(ws.world_from_local(obj_local), ws.l_object);
        if model.solve(hand).is_none() {
            return Err(Error::InvalidConfig(format!(
                "preset {}: initial posture for object ({:.3}, {:.3}) has no valid arm solution",
                p.id, obj_local.x, obj_local.z
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Rewards
// ---------------------------------------------------------------------------

/// Ergonomic term: 0 at level 1, −100 at level 3.
pub fn erg_rew(avg_erg: f64) -> f64 {
    -50.0 * avg_erg + 50.0
}

/// Consecutive-sideways penalty, linear up to five moves, saturated after.
pub fn x_mov_rew(count_x: u32) -> f64 {
    if count_x <= 5 {
        -20.0 * f64::from(count_x)
    } else {
        -100.0
    }
}

/// Vertical-progress term, normalized to 100 at the largest vertical step.
pub fn z_step_rew(dist_m: f64, alpha_deg: f64) -> f64 {
    dist_m * sind(alpha_deg) * 100.0 / 0.4
}

/// Full continuous-control reward: hard pain penalty, otherwise a weighted
/// blend of the ergonomic, vertical-progress, and sideways terms. The pain
/// branch triggers on any pain along the sampled path.
pub fn reward_dqn(risk: &RiskSummary, action: &DqnAction, count_x: u32) -> f64 {
    if risk.avg_pain > 0.0 {
        return -100.0;
    }
    0.15 * erg_rew(risk.avg_erg) + 0.3 * z_step_rew(action.dist_m, action.alpha_deg) + 0.05 * x_mov_rew(count_x)
}

/// Tabular-control reward: the same structure minus the vertical-progress
/// term (grid moves have fixed magnitudes).
pub fn reward_ql(risk: &RiskSummary, count_x: u32) -> f64 {
    if risk.avg_pain > 0.0 {
        return -100.0;
    }
    0.15 * erg_rew(risk.avg_erg) + 0.05 * x_mov_rew(count_x)
}

// ---------------------------------------------------------------------------
// Episode state and the environment
// ---------------------------------------------------------------------------

/// Object position: continuous (lift-area-local) or a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ObjPos {
    Cart(Point2),
    Cell { col: u8, row: u8 },
}

impl ObjPos {
    pub fn local_point(&self) -> Point2 {
        match *self {
            ObjPos::Cart(p) => p,
            ObjPos::Cell { col, row } => cell_local(col, row),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub pos: ObjPos,
    /// Consecutive horizontal moves; reset by any vertical component.
    pub count_x: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DoneReason {
    Target,
    EmptyShapedSet,
    PainAbort,
    StepLimit,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: EnvState,
    pub reward: f64,
    pub done: bool,
    pub done_reason: Option<DoneReason>,
    pub risk: RiskSummary,
    /// Number of sampled postures behind `risk`, for pooled averaging.
    pub risk_samples: u32,
    /// Surrogate wall-clock duration of the motion, seconds.
    pub elapsed_s: f64,
    /// Shaped action set of `next`, reused by callers for selection and
    /// bootstrapping.
    pub next_shaped: Vec<usize>,
}

/// Which controller drives the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlKind {
    Ql,
    Dqn,
}

#[derive(Debug, Clone, Copy)]
pub struct EnvOptions {
    pub step_limit: u32,
    /// Sampling spacing for risk averaging and shaping checks, meters.
    pub risk_step_m: f64,
    /// Adds diagonal-up moves to the grid action set.
    pub ql_diagonals: bool,
}

impl Default for EnvOptions {
    fn default() -> Self {
        Self { step_limit: 100, risk_step_m: 0.01, ql_diagonals: false }
    }
}

enum Mode {
    Sim,
    Real { true_model: HumanModel, observer: Observer, cfg: GapConfig },
}

/// One episode-stateful environment instance. Instances are share-nothing:
/// run one per experiment worker.
pub struct Env {
    pub ws: Workspace,
    /// Nominal (believed) human model; always used for action shaping.
    pub model: HumanModel,
    pub preset: ParticipantPreset,
    kind: ControlKind,
    opts: EnvOptions,
    mode: Mode,
    state: EnvState,
    steps: u32,
}

impl Env {
    pub fn sim(preset: ParticipantPreset, kind: ControlKind, opts: EnvOptions) -> Result<Self> {
        let ws = Workspace::default();
        self_check(&preset, &ws)?;
        let model = preset.model_for(kind)?;
        let state = initial_state(&preset, kind, &ws);
        Ok(Self { ws, model, preset, kind, opts, mode: Mode::Sim, state, steps: 0 })
    }

    /// Surrogate "real" environment: risks come from a perturbed human model
    /// observed through a noisy, rate-sampled sensor pipeline, and any pain
    /// sample aborts the episode.
    pub fn real(
        preset: ParticipantPreset,
        kind: ControlKind,
        opts: EnvOptions,
        cfg: GapConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let ws = Workspace::default();
        self_check(&preset, &ws)?;
        let model = preset.model_for(kind)?;
        let true_model = crate::gap::perturb_model(&model, &cfg, seed);
        let observer = Observer::new(&cfg, seed.wrapping_add(1));
        let state = initial_state(&preset, kind, &ws);
        Ok(Self { ws, model, preset, kind, opts, mode: Mode::Real { true_model, observer, cfg }, state, steps: 0 })
    }

    pub fn kind(&self) -> ControlKind {
        self.kind
    }

    pub fn is_real(&self) -> bool {
        matches!(self.mode, Mode::Real { .. })
    }

    pub fn options(&self) -> &EnvOptions {
        &self.opts
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn steps_taken(&self) -> u32 {
        self.steps
    }

    pub fn reset(&mut self) -> EnvState {
        self.state = initial_state(&self.preset, self.kind, &self.ws);
        self.steps = 0;
        self.state
    }

    pub fn action_count(&self) -> usize {
        match self.kind {
            ControlKind::Dqn => DQN_ACTION_COUNT,
            ControlKind::Ql => self.grid_actions().len(),
        }
    }

    pub fn grid_actions(&self) -> &'static [GridAction] {
        if self.opts.ql_diagonals {
            &GridAction::WITH_DIAGONALS
        } else {
            &GridAction::BASE
        }
    }

    pub fn obj_world(&self, state: &EnvState) -> Point2 {
        self.ws.world_from_local(state.pos.local_point())
    }

    /// Target position for an action, if it stays on the lift area.
    fn displaced(&self, state: &EnvState, action: usize) -> Option<ObjPos> {
        match (self.kind, state.pos) {
            (ControlKind::Dqn, ObjPos::Cart(p)) => {
                let (dx, dz) = DqnAction::from_index(action).delta();
                let target = Point2::new(p.x + dx, p.z + dz);
                self.ws.contains_local(target).then_some(ObjPos::Cart(target))
            }
            (ControlKind::Ql, ObjPos::Cell { col, row }) => {
                let (dc, dr) = self.grid_actions()[action].delta();
                let (c, r) = (i32::from(col) + dc, i32::from(row) + dr);
                (c >= 0 && c <= i32::from(QL_MAX_COL) && r >= 0 && r <= i32::from(QL_MAX_ROW))
                    .then_some(ObjPos::Cell { col: c as u8, row: r as u8 })
            }
            _ => panic!("state/controller mismatch"),
        }
    }

    fn action_is_horizontal(&self, action: usize) -> bool {
        match self.kind {
            ControlKind::Dqn => DqnAction::from_index(action).is_horizontal(),
            ControlKind::Ql => self.grid_actions()[action].is_horizontal(),
        }
    }

    /// The shaped action set: indices whose target stays on the lift area
    /// and whose whole motion path admits a valid arm posture under the
    /// nominal model.
    pub fn shaped_actions(&self, state: &EnvState) -> Vec<usize> {
        let from_w = self.obj_world(state);
        (0..self.action_count())
            .filter(|&a| {
                let Some(next) = self.displaced(state, a) else { return false };
                let to_w = self.ws.world_from_local(next.local_point());
                path_feasible(&self.model, from_w, to_w, self.opts.risk_step_m, self.ws.l_object)
            })
            .collect()
    }

    fn target_reached(&self, pos: &ObjPos) -> bool {
        match (self.kind, pos) {
            (ControlKind::Dqn, ObjPos::Cart(p)) => p.z >= self.ws.height - self.preset.dqn_delta_z,
            (ControlKind::Ql, ObjPos::Cell { row, .. }) => *row == self.preset.ql_target_row_effective(),
            _ => unreachable!(),
        }
    }

    /// Termination conditions that do not depend on the motion just taken:
    /// target area reached, no shaped action left, or the step limit.
    pub fn is_terminal(&self, state: &EnvState) -> Option<DoneReason> {
        if self.target_reached(&state.pos) {
            Some(DoneReason::Target)
        } else if self.steps >= self.opts.step_limit {
            Some(DoneReason::StepLimit)
        } else if self.shaped_actions(state).is_empty() {
            Some(DoneReason::EmptyShapedSet)
        } else {
            None
        }
    }

    /// Executes one action from the shaped set and advances the episode.
    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let shaped = self.shaped_actions(&self.state);
        if !shaped.contains(&action) {
            return Err(Error::ActionNotShaped { index: action });
        }
        let next_pos = self.displaced(&self.state, action).expect("shaped action has a target");
        let from_w = self.obj_world(&self.state);
        let to_w = self.ws.world_from_local(next_pos.local_point());

        let (risk, risk_samples, elapsed_s) = match &mut self.mode {
            Mode::Sim => {
                let (risk, samples) =
                    path_risk_sampled(&self.model, from_w, to_w, self.opts.risk_step_m, self.ws.l_object)?;
                let cfg = GapConfig::default();
                (risk, samples as u32, from_w.distance(to_w) / cfg.ee_speed_mps + cfg.per_step_overhead_s)
            }
            Mode::Real { true_model, observer, cfg } => {
                match simulate_motion_with(true_model, observer, from_w, to_w, self.ws.l_object, cfg, |_| {}) {
                    Ok(m) => (m.risk, m.sample_count as u32, m.elapsed_s),
                    Err(Error::InfeasiblePath { .. }) => {
                        // The commanded motion exceeds the real partner's
                        // reach: register it as a pain event. Ergonomic level
                        // falls back to the nominal-model estimate, which is
                        // feasible by shaping.
                        let (nominal, samples) =
                            path_risk_sampled(&self.model, from_w, to_w, self.opts.risk_step_m, self.ws.l_object)?;
                        let risk = RiskSummary { avg_erg: nominal.avg_erg, avg_pain: 1.0 };
                        (risk, samples as u32, from_w.distance(to_w) / cfg.ee_speed_mps + cfg.per_step_overhead_s)
                    }
                    Err(e) => return Err(e),
                }
            }
        };

        let count_x = if self.action_is_horizontal(action) { self.state.count_x + 1 } else { 0 };
        let reward = match self.kind {
            ControlKind::Dqn => reward_dqn(&risk, &DqnAction::from_index(action), count_x),
            ControlKind::Ql => reward_ql(&risk, count_x),
        };

        self.steps += 1;
        let next = EnvState { pos: next_pos, count_x };
        let next_shaped = self.shaped_actions(&next);

        let pain_abort = self.is_real() && risk.avg_pain > 0.0;
        let done_reason = if pain_abort {
            Some(DoneReason::PainAbort)
        } else if self.target_reached(&next.pos) {
            Some(DoneReason::Target)
        } else if next_shaped.is_empty() {
            Some(DoneReason::EmptyShapedSet)
        } else if self.steps >= self.opts.step_limit {
            Some(DoneReason::StepLimit)
        } else {
            None
        };

        self.state = next;
        Ok(StepOutcome {
            next,
            reward,
            done: done_reason.is_some(),
            done_reason,
            risk,
            risk_samples,
            elapsed_s,
            next_shaped,
        })
    }
}

fn initial_state(preset: &ParticipantPreset, kind: ControlKind, ws: &Workspace) -> EnvState {
    let pos = match kind {
        ControlKind::Dqn => ObjPos::Cart(preset.dqn_initial_local(ws)),
        ControlKind::Ql => ObjPos::Cell { col: preset.ql_initial.0, row: preset.ql_initial.1 },
    };
    EnvState { pos, count_x: 0 }
}
