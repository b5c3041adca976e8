//! Cross-module behavior: surrogate-real episodes, pain aborts, timing,
//! and the fine-tune termination contract.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ergolift_core::agents::{DqnAgent, Hyperparameters, QlParams};
use ergolift_core::env::{preset_by_id, ControlKind, DoneReason, Env, EnvOptions};
use ergolift_core::gap::GapConfig;
use ergolift_core::logging::NullSink;
use ergolift_core::training::{evaluate, finetune, pretrain, run_episode, FinetuneSchedule, Policy, QlAgent, StepContext, TerminationSpec};
use ergolift_core::Result;

fn quiet_gap() -> GapConfig {
    GapConfig { segment_length_error: 0.0, joint_bias_deg: 0.0, angle_noise_sigma_deg: 0.0, ..GapConfig::default() }
}

/// Replays a fixed action script; learns nothing.
struct Scripted(Vec<usize>, usize);

impl Policy for Scripted {
    fn select(
        &mut self,
        _state: &ergolift_core::env::EnvState,
        _ws: &ergolift_core::env::Workspace,
        shaped: &[usize],
        _eps: f64,
        _rng: &mut ChaCha8Rng,
    ) -> usize {
        let a = self.0[self.1 % self.0.len()];
        self.1 += 1;
        if shaped.contains(&a) {
            a
        } else {
            shaped[0]
        }
    }

    fn observe(&mut self, _ctx: &StepContext<'_>, _rng: &mut ChaCha8Rng) {}
}

#[test]
fn quiet_real_mode_matches_sim_metrics() -> Result<()> {
    let preset = preset_by_id("1.69")?;
    // Straight up, twice.
    let up = ergolift_core::env::DqnAction { alpha_deg: 90.0, dist_m: 0.2 }.index();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let mut env_sim = Env::sim(preset.clone(), ControlKind::Dqn, EnvOptions::default())?;
    let mut pol = Scripted(vec![up], 0);
    let sim = run_episode(&mut env_sim, &mut pol, 0.0, false, 0, &mut rng, &mut NullSink)?;

    let mut env_real = Env::real(preset, ControlKind::Dqn, EnvOptions::default(), quiet_gap(), 7)?;
    let mut pol = Scripted(vec![up], 0);
    let real = run_episode(&mut env_real, &mut pol, 0.0, false, 0, &mut rng, &mut NullSink)?;

    assert_eq!(sim.steps, real.steps);
    assert!((sim.avg_erg - real.avg_erg).abs() <= 0.05, "sim {} vs real {}", sim.avg_erg, real.avg_erg);
    assert_eq!(real.avg_pain, 0.0);
    // Surrogate timing: distance / speed + 1 s per step.
    let expect = sim.distance_m / 0.05 + f64::from(sim.steps);
    assert!((real.time_s - expect).abs() < 1e-9);
    Ok(())
}

#[test]
fn strong_bias_aborts_episodes_in_real_mode() -> Result<()> {
    let preset = preset_by_id("1.69")?;
    let cfg = GapConfig { joint_bias_deg: 25.0, angle_noise_sigma_deg: 0.0, ..GapConfig::default() };
    let up = ergolift_core::env::DqnAction { alpha_deg: 90.0, dist_m: 0.2 }.index();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut aborted = 0;
    for seed in 0..8 {
        let mut env = Env::real(preset.clone(), ControlKind::Dqn, EnvOptions::default(), cfg, seed)?;
        let mut pol = Scripted(vec![up], 0);
        let m = run_episode(&mut env, &mut pol, 0.0, false, 0, &mut rng, &mut NullSink)?;
        if m.done_reason == Some(DoneReason::PainAbort) {
            assert_eq!(m.reward, -100.0 * f64::from(m.pain_events), "pain steps carry the hard penalty");
            aborted += 1;
        }
    }
    assert!(aborted >= 3, "a 25-degree bias must abort a good share of episodes, got {aborted}/8");
    Ok(())
}

#[test]
fn finetune_stops_after_exactly_ten_clean_episodes() -> Result<()> {
    // A policy that is already pain-free with low ergonomic level meets the
    // real-environment criterion in exactly `consecutive_required` episodes.
    let preset = preset_by_id("1.79")?;
    let spec = TerminationSpec::default();
    let params = QlParams::default();
    let mut env = Env::sim(preset.clone(), ControlKind::Ql, EnvOptions::default())?;
    let mut agent = QlAgent::new(env.action_count(), params, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    pretrain(&mut env, &mut agent, params.epsilon_decay_episodes, &spec, spec.pretrain_cap, &mut rng, &mut NullSink)?;

    let mut env_real = Env::real(preset, ControlKind::Ql, EnvOptions::default(), quiet_gap(), 3)?;
    // Freeze exploration so behavior stays greedy during adaptation.
    let schedule = FinetuneSchedule { eps_start: 0.0, decay_episodes: 1 };
    let result = finetune(&mut env_real, &mut agent, &schedule, &spec, &mut rng, &mut NullSink)?;
    assert!(result.converged);
    assert_eq!(result.episodes, spec.consecutive_required);
    Ok(())
}

#[test]
fn greedy_evaluation_is_idempotent() -> Result<()> {
    let preset = preset_by_id("1.69")?;
    let spec = TerminationSpec::default();
    let params = QlParams::default();
    let mut env = Env::sim(preset, ControlKind::Ql, EnvOptions::default())?;
    let mut agent = QlAgent::new(env.action_count(), params, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    pretrain(&mut env, &mut agent, params.epsilon_decay_episodes, &spec, spec.pretrain_cap, &mut rng, &mut NullSink)?;
    let a = evaluate(&mut env, &mut agent, 10, 42)?;
    let b = evaluate(&mut env, &mut agent, 10, 42)?;
    assert_eq!(a.reward.mean.to_bits(), b.reward.mean.to_bits());
    assert_eq!(a.steps.mean.to_bits(), b.steps.mean.to_bits());
    assert_eq!(a.reward.std, 0.0);
    Ok(())
}

#[test]
fn dqn_finetune_is_faster_than_ql_on_the_surrogate_clock() -> Result<()> {
    // Ordering check on the surrogate wall-clock: the continuous controller
    // adapts in less simulated time than the tabular one for the same
    // participant and seed set.
    let preset = preset_by_id("1.79")?;
    let spec = TerminationSpec::default();
    let seed = 3;

    let params = QlParams::default();
    let mut env = Env::sim(preset.clone(), ControlKind::Ql, EnvOptions::default())?;
    let mut ql = QlAgent::new(env.action_count(), params, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pretrain(&mut env, &mut ql, params.epsilon_decay_episodes, &spec, spec.pretrain_cap, &mut rng, &mut NullSink)?;
    let mut env_real = Env::real(preset.clone(), ControlKind::Ql, EnvOptions::default(), GapConfig::default(), seed)?;
    let ql_ft = finetune(&mut env_real, &mut ql, &FinetuneSchedule::default(), &spec, &mut rng, &mut NullSink)?;

    let hp = Hyperparameters::champion();
    let mut env = Env::sim(preset.clone(), ControlKind::Dqn, EnvOptions::default())?;
    let mut dqn = DqnAgent::new(hp, seed ^ 0xD00D)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pretrain(&mut env, &mut dqn, hp.epsilon_decay_episodes, &spec, spec.pretrain_cap, &mut rng, &mut NullSink)?;
    let mut env_real = Env::real(preset, ControlKind::Dqn, EnvOptions::default(), GapConfig::default(), seed)?;
    let dqn_ft = finetune(&mut env_real, &mut dqn, &FinetuneSchedule::default(), &spec, &mut rng, &mut NullSink)?;

    assert!(ql_ft.converged && dqn_ft.converged);
    assert!(
        dqn_ft.sim_time_s < ql_ft.sim_time_s,
        "dqn {:.1}s vs ql {:.1}s",
        dqn_ft.sim_time_s,
        ql_ft.sim_time_s
    );
    Ok(())
}
