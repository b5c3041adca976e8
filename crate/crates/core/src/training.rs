//! Training loops (pre-train, fine-tune), greedy evaluation, and the
//! hyperparameter grid search with early stopping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::agents::{
    epsilon, mask_from_shaped, ql_update, select_action, DqnAgent, Hyperparameters, QTable, QlParams,
};
use crate::env::{ControlKind, DoneReason, Env, EnvOptions, EnvState, ObjPos, ParticipantPreset, StepOutcome, Workspace};
use crate::logging::{EpisodeRecord, NullSink, StepRecord, StepSink};
use crate::nnet::normalize_state;
use crate::{Error, Result};

/// Termination criteria for both training phases, plus episode caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminationSpec {
    /// Moving-average window for the simulation criterion, episodes.
    pub window: usize,
    /// Maximum spread of the trailing moving averages to call them constant.
    pub flatness_tol: f64,
    /// Fine-tuning requires the episode ergonomic level below this.
    pub erg_threshold: f64,
    /// Fine-tuning requires this many consecutive clean episodes.
    pub consecutive_required: usize,
    pub pretrain_cap: usize,
    pub finetune_cap: usize,
}

impl Default for TerminationSpec {
    fn default() -> Self {
        Self {
            window: 100,
            flatness_tol: 1.0,
            erg_threshold: 2.5,
            consecutive_required: 10,
            pretrain_cap: 5000,
            finetune_cap: 500,
        }
    }
}

/// Exploration restart used when adapting a pre-trained policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSchedule {
    pub eps_start: f64,
    pub decay_episodes: usize,
}

impl Default for FinetuneSchedule {
    fn default() -> Self {
        Self { eps_start: 0.2, decay_episodes: 50 }
    }
}

impl FinetuneSchedule {
    pub fn epsilon(&self, episode: usize) -> f64 {
        self.eps_start * epsilon(episode, self.decay_episodes)
    }
}

/// Detects a flat reward curve: fires once the trailing `window` moving
/// averages (of `window`-episode returns) span less than `tol`, and the
/// returns inside the current window do too, so a stream that oscillates
/// around a constant mean does not count as converged. Needs two full
/// windows of episodes before it can fire.
#[derive(Debug, Clone)]
pub struct ConvergenceDetector {
    window: usize,
    tol: f64,
    returns: VecDeque<f64>,
    sum: f64,
    averages: VecDeque<f64>,
    seen: usize,
}

impl ConvergenceDetector {
    pub fn new(window: usize, tol: f64) -> Self {
        assert!(window > 0);
        Self { window, tol, returns: VecDeque::new(), sum: 0.0, averages: VecDeque::new(), seen: 0 }
    }

    /// Feeds one episode return; true when the curve has flattened.
    pub fn push(&mut self, ep_return: f64) -> bool {
        self.seen += 1;
        self.returns.push_back(ep_return);
        self.sum += ep_return;
        if self.returns.len() > self.window {
            self.sum -= self.returns.pop_front().unwrap();
        }
        if self.returns.len() == self.window {
            self.averages.push_back(self.sum / self.window as f64);
            if self.averages.len() > self.window {
                self.averages.pop_front();
            }
        }
        if self.seen < 2 * self.window || self.averages.len() < self.window {
            return false;
        }
        let spread = |xs: &VecDeque<f64>| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &x in xs {
                lo = lo.min(x);
                hi = hi.max(x);
            }
            hi - lo
        };
        spread(&self.averages) < self.tol && spread(&self.returns) < self.tol
    }

    pub fn episodes_seen(&self) -> usize {
        self.seen
    }
}

/// Aggregates of one evaluated or trained episode. Risk averages pool all
/// sampled postures along the episode trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub reward: f64,
    pub steps: u32,
    pub avg_erg: f64,
    pub avg_pain: f64,
    /// Path length traveled by the object, meters.
    pub distance_m: f64,
    /// Surrogate wall-clock duration, seconds.
    pub time_s: f64,
    pub done_reason: Option<DoneReason>,
    /// Steps with any pain along their motion.
    pub pain_events: u32,
}

/// Anything that can pick shaped actions and learn from transitions.
pub trait Policy {
    fn select(&mut self, state: &EnvState, ws: &Workspace, shaped: &[usize], eps: f64, rng: &mut ChaCha8Rng) -> usize;
    fn observe(&mut self, ctx: &StepContext<'_>, rng: &mut ChaCha8Rng);
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn select(&mut self, state: &EnvState, ws: &Workspace, shaped: &[usize], eps: f64, rng: &mut ChaCha8Rng) -> usize {
        (**self).select(state, ws, shaped, eps, rng)
    }

    fn observe(&mut self, ctx: &StepContext<'_>, rng: &mut ChaCha8Rng) {
        (**self).observe(ctx, rng)
    }
}

pub struct StepContext<'a> {
    pub state: &'a EnvState,
    pub action: usize,
    pub outcome: &'a StepOutcome,
    pub ws: &'a Workspace,
}

/// Tabular agent: a Q-table over grid cells.
pub struct QlAgent {
    pub table: QTable,
    pub params: QlParams,
    pub seed: u64,
}

impl QlAgent {
    pub fn new(n_actions: usize, params: QlParams, seed: u64) -> Self {
        Self { table: QTable::new(n_actions), params, seed }
    }
}

fn cell_of(state: &EnvState) -> (u8, u8) {
    match state.pos {
        ObjPos::Cell { col, row } => (col, row),
        ObjPos::Cart(_) => panic!("tabular agent driven with a continuous state"),
    }
}

impl Policy for QlAgent {
    fn select(&mut self, state: &EnvState, _ws: &Workspace, shaped: &[usize], eps: f64, rng: &mut ChaCha8Rng) -> usize {
        let values = self.table.action_values(cell_of(state));
        select_action(&values, shaped, eps, rng)
    }

    fn observe(&mut self, ctx: &StepContext<'_>, _rng: &mut ChaCha8Rng) {
        ql_update(
            &mut self.table,
            cell_of(ctx.state),
            ctx.action,
            ctx.outcome.reward,
            cell_of(&ctx.outcome.next),
            &ctx.outcome.next_shaped,
            ctx.outcome.done,
            self.params.learning_rate,
            self.params.discount,
        );
    }
}

impl Policy for DqnAgent {
    fn select(&mut self, state: &EnvState, ws: &Workspace, shaped: &[usize], eps: f64, rng: &mut ChaCha8Rng) -> usize {
        let values = self.q_values(normalize_state(state.pos.local_point(), ws));
        select_action(&values, shaped, eps, rng)
    }

    fn observe(&mut self, ctx: &StepContext<'_>, rng: &mut ChaCha8Rng) {
        self.buffer.push(crate::agents::Transition {
            state: normalize_state(ctx.state.pos.local_point(), ctx.ws),
            action: ctx.action,
            reward: ctx.outcome.reward,
            next_state: normalize_state(ctx.outcome.next.pos.local_point(), ctx.ws),
            done: ctx.outcome.done,
            next_mask: mask_from_shaped(&ctx.outcome.next_shaped),
        });
        self.dqn_update(rng);
    }
}

/// Runs one episode; learning updates are applied when `learn` is set.
pub fn run_episode<P: Policy>(
    env: &mut Env,
    policy: &mut P,
    eps: f64,
    learn: bool,
    episode_index: usize,
    rng: &mut ChaCha8Rng,
    sink: &mut dyn StepSink,
) -> Result<EpisodeMetrics> {
    let mut state = env.reset();
    let mut shaped = env.shaped_actions(&state);
    let mut m = EpisodeMetrics {
        reward: 0.0,
        steps: 0,
        avg_erg: 0.0,
        avg_pain: 0.0,
        distance_m: 0.0,
        time_s: 0.0,
        done_reason: None,
        pain_events: 0,
    };
    if shaped.is_empty() {
        m.done_reason = Some(DoneReason::EmptyShapedSet);
        return Ok(m);
    }
    let mut sample_total = 0.0;
    loop {
        let action = policy.select(&state, &env.ws, &shaped, eps, rng);
        let out = env.step(action)?;
        let w = f64::from(out.risk_samples.max(1));
        m.reward += out.reward;
        m.steps += 1;
        m.avg_erg += out.risk.avg_erg * w;
        m.avg_pain += out.risk.avg_pain * w;
        sample_total += w;
        m.pain_events += u32::from(out.risk.avg_pain > 0.0);
        m.distance_m += state.pos.local_point().distance(out.next.pos.local_point());
        m.time_s += out.elapsed_s;
        sink.on_step(&StepRecord {
            episode: episode_index,
            step: m.steps,
            state: state.pos,
            action,
            reward: out.reward,
            avg_erg: out.risk.avg_erg,
            avg_pain: out.risk.avg_pain,
            done_reason: out.done_reason,
        });
        if learn {
            policy.observe(&StepContext { state: &state, action, outcome: &out, ws: &env.ws }, rng);
        }
        let done = out.done;
        m.done_reason = out.done_reason;
        state = out.next;
        shaped = out.next_shaped;
        if done {
            break;
        }
    }
    m.avg_erg /= sample_total.max(1.0);
    m.avg_pain /= sample_total.max(1.0);
    Ok(m)
}

/// Result of one training phase.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainResult {
    pub converged: bool,
    /// First episode (1-based) satisfying the phase criterion.
    pub convergence_episode: Option<usize>,
    pub episodes: usize,
    pub returns: Vec<f64>,
    /// Total surrogate wall-clock time spent moving the object, seconds.
    pub sim_time_s: f64,
}

/// ε-greedy training in simulation until the reward curve flattens
/// (or `cap` episodes).
pub fn pretrain<P: Policy>(
    env: &mut Env,
    policy: &mut P,
    decay_episodes: usize,
    spec: &TerminationSpec,
    cap: usize,
    rng: &mut ChaCha8Rng,
    sink: &mut dyn StepSink,
) -> Result<TrainResult> {
    let mut detector = ConvergenceDetector::new(spec.window, spec.flatness_tol);
    let mut returns = Vec::with_capacity(cap.min(1 << 16));
    let mut sim_time = 0.0;
    let mut converged_at = None;
    for ep in 0..cap {
        let eps = epsilon(ep, decay_episodes);
        let m = run_episode(env, policy, eps, true, ep, rng, sink)?;
        sink.on_episode(&EpisodeRecord {
            episode: ep,
            ret: m.reward,
            steps: m.steps,
            avg_erg: m.avg_erg,
            avg_pain: m.avg_pain,
            epsilon: eps,
        });
        returns.push(m.reward);
        sim_time += m.time_s;
        if detector.push(m.reward) {
            converged_at = Some(detector.episodes_seen());
            break;
        }
    }
    Ok(TrainResult {
        converged: converged_at.is_some(),
        convergence_episode: converged_at,
        episodes: returns.len(),
        returns,
        sim_time_s: sim_time,
    })
}

/// Continues training in the surrogate real environment until the episode
/// ergonomic level stays under the threshold with zero pain for the
/// required number of consecutive episodes (or the cap).
pub fn finetune<P: Policy>(
    env: &mut Env,
    policy: &mut P,
    schedule: &FinetuneSchedule,
    spec: &TerminationSpec,
    rng: &mut ChaCha8Rng,
    sink: &mut dyn StepSink,
) -> Result<TrainResult> {
    let mut returns = Vec::new();
    let mut sim_time = 0.0;
    let mut streak = 0usize;
    let mut converged_at = None;
    for ep in 0..spec.finetune_cap {
        let eps = schedule.epsilon(ep);
        let m = run_episode(env, policy, eps, true, ep, rng, sink)?;
        sink.on_episode(&EpisodeRecord {
            episode: ep,
            ret: m.reward,
            steps: m.steps,
            avg_erg: m.avg_erg,
            avg_pain: m.avg_pain,
            epsilon: eps,
        });
        returns.push(m.reward);
        sim_time += m.time_s;
        if m.pain_events == 0 && m.avg_erg < spec.erg_threshold {
            streak += 1;
        } else {
            streak = 0;
        }
        if streak >= spec.consecutive_required {
            converged_at = Some(ep + 1);
            break;
        }
    }
    Ok(TrainResult {
        converged: converged_at.is_some(),
        convergence_episode: converged_at,
        episodes: returns.len(),
        returns,
        sim_time_s: sim_time,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub std: f64,
}

fn stats(xs: impl Iterator<Item = f64> + Clone) -> MetricStats {
    let n = xs.clone().count().max(1) as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    MetricStats { mean, std: var.sqrt() }
}

/// Mean ± std of the evaluation episodes, plus pain-abort counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub reward: MetricStats,
    pub steps: MetricStats,
    pub avg_erg: MetricStats,
    pub avg_pain: MetricStats,
    pub distance_m: MetricStats,
    pub time_s: MetricStats,
    pub pain_abort_episodes: usize,
    pub episodes: Vec<EpisodeMetrics>,
}

impl EvalReport {
    pub fn pain_free(&self) -> bool {
        self.avg_pain.mean == 0.0 && self.pain_abort_episodes == 0
    }
}

/// Greedy (ε = 0) evaluation over `n` episodes. The tie-break generator is
/// seeded per call, so repeated evaluation of a frozen policy in a
/// deterministic environment reproduces identical metrics.
pub fn evaluate<P: Policy>(env: &mut Env, policy: &mut P, n: usize, seed: u64) -> Result<EvalReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE7A1_5EED);
    let mut episodes = Vec::with_capacity(n);
    let mut sink = NullSink;
    for ep in 0..n {
        episodes.push(run_episode(env, policy, 0.0, false, ep, &mut rng, &mut sink)?);
    }
    Ok(report_from_episodes(episodes))
}

pub fn report_from_episodes(episodes: Vec<EpisodeMetrics>) -> EvalReport {
    let f = |sel: fn(&EpisodeMetrics) -> f64| stats(episodes.iter().map(sel));
    EvalReport {
        n: episodes.len(),
        reward: f(|m| m.reward),
        steps: f(|m| f64::from(m.steps)),
        avg_erg: f(|m| m.avg_erg),
        avg_pain: f(|m| m.avg_pain),
        distance_m: f(|m| m.distance_m),
        time_s: f(|m| m.time_s),
        pain_abort_episodes: episodes
            .iter()
            .filter(|m| m.done_reason == Some(DoneReason::PainAbort))
            .count(),
        episodes,
    }
}

// ---------------------------------------------------------------------------
// Hyperparameter grid search
// ---------------------------------------------------------------------------

/// Value lists for every hyperparameter axis; the grid is their Cartesian
/// product in a fixed (row-major, learning rate outermost) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpoSpace {
    pub learning_rate: Vec<f64>,
    pub discount: Vec<f64>,
    pub epsilon_decay_episodes: Vec<usize>,
    pub soft_update_rate: Vec<f64>,
    pub buffer_size: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub hidden_dim: Vec<usize>,
}

impl HpoSpace {
    /// The full published search space (3⁷ combinations).
    pub fn default_search_space() -> Self {
        Self {
            learning_rate: vec![1e-5, 1e-4, 1e-3],
            discount: vec![0.5, 0.9, 0.999],
            epsilon_decay_episodes: vec![1500, 2000, 2500],
            soft_update_rate: vec![1e-4, 1e-3, 1e-2],
            buffer_size: vec![5000, 10000, 20000],
            batch_size: vec![64, 128, 256],
            hidden_dim: vec![128, 256, 512],
        }
    }

    pub fn len(&self) -> usize {
        self.learning_rate.len()
            * self.discount.len()
            * self.epsilon_decay_episodes.len()
            * self.soft_update_rate.len()
            * self.buffer_size.len()
            * self.batch_size.len()
            * self.hidden_dim.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn combinations(&self) -> Vec<Hyperparameters> {
        let mut out = Vec::with_capacity(self.len());
        for &lr in &self.learning_rate {
            for &gamma in &self.discount {
                for &decay in &self.epsilon_decay_episodes {
                    for &tau in &self.soft_update_rate {
                        for &buffer in &self.buffer_size {
                            for &batch in &self.batch_size {
                                for &hidden in &self.hidden_dim {
                                    out.push(Hyperparameters {
                                        learning_rate: lr,
                                        discount: gamma,
                                        epsilon_decay_episodes: decay,
                                        soft_update_rate: tau,
                                        buffer_size: buffer,
                                        batch_size: batch,
                                        hidden_dim: hidden,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// One grid entry after training and greedy evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HpoOutcome {
    pub index: usize,
    pub hp: Hyperparameters,
    pub converged: bool,
    pub convergence_episode: Option<usize>,
    pub episodes: usize,
    pub reward_mean: f64,
    pub steps_mean: f64,
    pub erg_mean: f64,
    pub pain_mean: f64,
    pub pain_aborts: usize,
}

impl HpoOutcome {
    pub fn pain_free(&self) -> bool {
        self.pain_mean == 0.0 && self.pain_aborts == 0
    }

    // Lexicographic selection: convergence, then zero pain, then the
    // ergonomic bound, then fewest steps, then highest reward; the grid
    // index breaks exact ties so the ranking is a total order.
    fn rank_key(&self) -> (u8, u8, u8, f64, f64, usize) {
        (
            u8::from(!self.converged),
            u8::from(!self.pain_free()),
            u8::from(!(self.erg_mean <= 2.5)),
            self.steps_mean,
            -self.reward_mean,
            self.index,
        )
    }
}

/// Deterministic per-combination seed (splitmix over the base seed).
pub fn combo_seed(base_seed: u64, index: usize) -> u64 {
    let mut z = base_seed ^ (index as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_hpo_combo(
    index: usize,
    hp: Hyperparameters,
    preset: &ParticipantPreset,
    spec: &TerminationSpec,
    eval_episodes: usize,
    base_seed: u64,
) -> Result<HpoOutcome> {
    let seed = combo_seed(base_seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agent_seed = rng.gen::<u64>();
    let mut env = Env::sim(preset.clone(), ControlKind::Dqn, EnvOptions::default())?;
    let mut agent = DqnAgent::new(hp, agent_seed)?;
    // Early stopping: a run may not outlive twice its exploration decay.
    let cap = spec.pretrain_cap.min(2 * hp.epsilon_decay_episodes);
    let train = pretrain(&mut env, &mut agent, hp.epsilon_decay_episodes, spec, cap, &mut rng, &mut NullSink)?;
    let eval = evaluate(&mut env, &mut agent, eval_episodes, seed)?;
    Ok(HpoOutcome {
        index,
        hp,
        converged: train.converged,
        convergence_episode: train.convergence_episode,
        episodes: train.episodes,
        reward_mean: eval.reward.mean,
        steps_mean: eval.steps.mean,
        erg_mean: eval.avg_erg.mean,
        pain_mean: eval.avg_pain.mean,
        pain_aborts: eval.pain_abort_episodes,
    })
}

/// Trains every combination (share-nothing workers), then ranks by the
/// selection rule. `workers = 0` uses all available parallelism.
pub fn run_hpo(
    combos: &[Hyperparameters],
    preset: &ParticipantPreset,
    spec: &TerminationSpec,
    eval_episodes: usize,
    base_seed: u64,
    workers: usize,
) -> Result<Vec<HpoOutcome>> {
    if combos.is_empty() {
        return Err(Error::InvalidConfig("empty hyperparameter grid".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let mut results = pool.install(|| {
        combos
            .par_iter()
            .enumerate()
            .map(|(i, hp)| run_hpo_combo(i, *hp, preset, spec, eval_episodes, base_seed))
            .collect::<Result<Vec<_>>>()
    })?;
    results.sort_by(|a, b| a.rank_key().partial_cmp(&b.rank_key()).expect("finite metrics"));
    Ok(results)
}

/// The model the protocol carries forward: best-ranked converged entry.
pub fn champion(ranked: &[HpoOutcome]) -> Option<&HpoOutcome> {
    ranked.iter().find(|r| r.converged)
}

/// Ranked results as CSV, one row per combination.
pub fn hpo_results_csv(ranked: &[HpoOutcome]) -> String {
    use std::fmt::Write as _;
    let mut csv = String::from(
        "rank,grid_index,learning_rate,discount,epsilon_decay_episodes,soft_update_rate,buffer_size,batch_size,hidden_dim,converged,convergence_episode,episodes,reward_mean,steps_mean,erg_mean,pain_mean,pain_aborts\n",
    );
    for (rank, r) in ranked.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            rank,
            r.index,
            r.hp.learning_rate,
            r.hp.discount,
            r.hp.epsilon_decay_episodes,
            r.hp.soft_update_rate,
            r.hp.buffer_size,
            r.hp.batch_size,
            r.hp.hidden_dim,
            r.converged,
            r.convergence_episode.map(|e| e.to_string()).unwrap_or_default(),
            r.episodes,
            r.reward_mean,
            r.steps_mean,
            r.erg_mean,
            r.pain_mean,
            r.pain_aborts,
        );
    }
    csv
}
