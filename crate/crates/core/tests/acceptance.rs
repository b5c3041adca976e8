//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values (run with `--nocapture` to see them).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use ergolift_core::agents::{
    mask_from_shaped, masked_max, select_action, DqnAgent, Hyperparameters, QlParams, ReplayBuffer,
    Transition,
};
use ergolift_core::env::{
    erg_rew, preset_by_id, reward_dqn, x_mov_rew, z_step_rew, ControlKind, DqnAction, Env,
    EnvOptions, EnvState, ObjPos, Workspace,
};
use ergolift_core::gap::GapConfig;
use ergolift_core::kinematics::{
    forward_kinematics, human_ee_from_object, inverse_kinematics, scale_model, BodyParams, JointAngles, Point2,
};
use ergolift_core::logging::NullSink;
use ergolift_core::nnet::{soft_update, Gradients, Mlp};
use ergolift_core::risk::{pain_state, path_samples, RiskSummary};
use ergolift_core::training::{
    champion, evaluate, finetune, hpo_results_csv, pretrain, run_hpo, EvalReport, HpoSpace, QlAgent,
    TerminationSpec, TrainResult,
};

const QL_SEED_RANGE: std::ops::RangeInclusive<u64> = 1..=5;

fn spec() -> TerminationSpec {
    TerminationSpec::default()
}

fn train_ql(preset_id: &str, seed: u64) -> (TrainResult, EvalReport) {
    let preset = preset_by_id(preset_id).unwrap();
    let mut env = Env::sim(preset, ControlKind::Ql, EnvOptions::default()).unwrap();
    let params = QlParams::default();
    let mut agent = QlAgent::new(env.action_count(), params, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = pretrain(
        &mut env,
        &mut agent,
        params.epsilon_decay_episodes,
        &spec(),
        spec().pretrain_cap,
        &mut rng,
        &mut NullSink,
    )
    .unwrap();
    let eval = evaluate(&mut env, &mut agent, 10, seed).unwrap();
    (out, eval)
}

fn train_dqn(preset_id: &str, seed: u64) -> (TrainResult, EvalReport, DqnAgent) {
    let preset = preset_by_id(preset_id).unwrap();
    let hp = Hyperparameters::champion();
    let mut env = Env::sim(preset, ControlKind::Dqn, EnvOptions::default()).unwrap();
    let mut agent = DqnAgent::new(hp, seed ^ 0xD00D).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = pretrain(
        &mut env,
        &mut agent,
        hp.epsilon_decay_episodes,
        &spec(),
        spec().pretrain_cap,
        &mut rng,
        &mut NullSink,
    )
    .unwrap();
    let eval = evaluate(&mut env, &mut agent, 10, seed).unwrap();
    (out, eval, agent)
}

#[test]
fn criterion_1_reward_equation_unit_suite() {
    assert_eq!(erg_rew(3.0), -100.0);
    assert_eq!(erg_rew(1.0), 0.0);
    assert_eq!(x_mov_rew(6), -100.0);
    assert_eq!(z_step_rew(0.4, 90.0), 100.0);
    let pain = RiskSummary { avg_erg: 1.0, avg_pain: 1.0 };
    for action in DqnAction::all() {
        assert_eq!(reward_dqn(&pain, &action, 0), -100.0);
    }
    println!("criterion 1 PASS: reward equations exact (erg/xmov/zstep/pain branch)");
}

#[test]
fn criterion_2_ql_reward_reconstruction() {
    // Synthetic oracle: nine pain-free steps at constant level 2, no
    // horizontal moves.
    let risk = RiskSummary { avg_erg: 2.0, avg_pain: 0.0 };
    let episode_return: f64 = (0..9).map(|_| ergolift_core::env::reward_ql(&risk, 0)).sum();
    assert_eq!(episode_return, -67.5);

    // The learned policy on the matching preset must reproduce the reported
    // return within 5 reward units.
    let (_, eval) = train_ql("1.79", 1);
    let delta = (eval.reward.mean - (-70.0)).abs();
    assert!(delta <= 5.0, "learned return {:.2}, |Δ| = {delta:.2} > 5", eval.reward.mean);
    println!(
        "criterion 2 PASS: synthetic return -67.5 exact; learned return {:.1} within 5 of -70",
        eval.reward.mean
    );
}

#[test]
fn criterion_3_ql_pretraining_bands() {
    let results: Vec<(u64, TrainResult, EvalReport)> = QL_SEED_RANGE
        .map(|seed| {
            let (out, eval) = train_ql("1.79", seed);
            (seed, out, eval)
        })
        .collect();
    let mut ok = 0;
    for (seed, out, eval) in &results {
        let conv = out.convergence_episode.unwrap_or(usize::MAX);
        let good = out.converged
            && (95..=500).contains(&conv)
            && (8.0..=10.0).contains(&eval.steps.mean)
            && (1.85..=2.25).contains(&eval.avg_erg.mean)
            && eval.avg_pain.mean == 0.0
            && eval.pain_abort_episodes == 0;
        println!(
            "  seed {seed}: conv {conv} steps {:.1} erg {:.3} pain {:.3} -> {}",
            eval.steps.mean,
            eval.avg_erg.mean,
            eval.avg_pain.mean,
            if good { "ok" } else { "MISS" }
        );
        ok += usize::from(good);
    }
    assert!(ok >= 4, "only {ok}/5 seeds inside the bands");
    println!("criterion 3 PASS: {ok}/5 seeds converge to 9±1 steps, erg in [1.85,2.25], pain-free, episode in [95,500]");
}

#[test]
fn criterion_4_dqn_champion_bands() {
    let results: Vec<(u64, EvalReport)> = (1..=5u64)
        .map(|seed| {
            let (_, eval, _) = train_dqn("1.79", seed);
            (seed, eval)
        })
        .collect();
    let mut ok = 0;
    for (seed, eval) in &results {
        let good = eval.steps.mean <= 6.0
            && eval.avg_pain.mean == 0.0
            && eval.pain_abort_episodes == 0
            && eval.avg_erg.mean <= 2.4;
        println!(
            "  seed {seed}: steps {:.1} erg {:.3} pain {:.3} -> {}",
            eval.steps.mean,
            eval.avg_erg.mean,
            eval.avg_pain.mean,
            if good { "ok" } else { "MISS" }
        );
        ok += usize::from(good);
    }
    assert!(ok >= 3, "only {ok}/5 seeds inside the bands");
    println!("criterion 4 PASS: {ok}/5 champion seeds at ≤6 steps, pain-free, erg ≤ 2.4");
}

#[test]
fn criterion_5_per_participant_table() {
    // Reported values by preset: (dqn_steps, dqn_erg, ql_steps, ql_erg).
    let targets = [
        ("1.62", 5.0, 2.14, 9.0, 2.25),
        ("1.69", 3.0, 2.05, 9.0, 2.12),
        ("1.79", 5.0, 2.12, 8.0, 2.00),
        ("1.83", 3.0, 2.15, 8.0, 2.09),
    ];
    let mut lines = Vec::new();
    for (id, dqn_steps, dqn_erg, ql_steps, ql_erg) in targets {
        let (_, ql) = train_ql(id, 1);
        assert!(
            (ql.steps.mean - ql_steps).abs() <= 1.0,
            "{id} QL steps {:.1} not within ±1 of {ql_steps}",
            ql.steps.mean
        );
        assert!(
            (ql.avg_erg.mean - ql_erg).abs() <= 0.2,
            "{id} QL erg {:.3} not within ±0.2 of {ql_erg}",
            ql.avg_erg.mean
        );
        assert_eq!(ql.avg_pain.mean, 0.0, "{id} QL pain");

        let (_, dqn, _) = train_dqn(id, 1);
        assert!(
            (dqn.steps.mean - dqn_steps).abs() <= 1.0,
            "{id} DQN steps {:.1} not within ±1 of {dqn_steps}",
            dqn.steps.mean
        );
        assert!(
            (dqn.avg_erg.mean - dqn_erg).abs() <= 0.2,
            "{id} DQN erg {:.3} not within ±0.2 of {dqn_erg}",
            dqn.avg_erg.mean
        );
        assert_eq!(dqn.avg_pain.mean, 0.0, "{id} DQN pain");
        lines.push(format!(
            "  {id}: DQN {:.0} steps erg {:.2} | QL {:.0} steps erg {:.2}",
            dqn.steps.mean, dqn.avg_erg.mean, ql.steps.mean, ql.avg_erg.mean
        ));
    }
    for l in &lines {
        println!("{l}");
    }
    println!("criterion 5 PASS: all four presets match the reported table within ±1 step / ±0.2 erg, pain-free");
}

#[test]
fn criterion_6_sim_to_real_gap_and_finetune() {
    for id in ["1.62", "1.69", "1.79", "1.83"] {
        let preset = preset_by_id(id).unwrap();
        let (_, sim_eval, agent) = train_dqn(id, 1);
        assert_eq!(sim_eval.avg_pain.mean, 0.0, "{id}: sim policy must be pain-free");

        // Deploying the pre-trained policy in the surrogate real
        // environment must drop reward and surface pain for most gap seeds.
        let mut degraded = 0;
        for gap_seed in 1..=5u64 {
            let mut env =
                Env::real(preset.clone(), ControlKind::Dqn, EnvOptions::default(), GapConfig::default(), gap_seed)
                    .unwrap();
            let mut frozen = clone_agent(&agent);
            let eval = evaluate(&mut env, &mut frozen, 10, gap_seed).unwrap();
            let dropped = eval.reward.mean < sim_eval.reward.mean;
            let pained = eval.pain_abort_episodes >= 1;
            println!(
                "  {id} gap seed {gap_seed}: reward {:.1} (sim {:.1}) pain-aborts {}/10",
                eval.reward.mean, sim_eval.reward.mean, eval.pain_abort_episodes
            );
            degraded += usize::from(dropped && pained);
        }
        assert!(degraded >= 4, "{id}: gap visible for only {degraded}/5 seeds");

        // Fine-tuning in the surrogate real environment must restore the
        // real criterion: pain-free with ergonomic level under 2.5.
        let mut env =
            Env::real(preset.clone(), ControlKind::Dqn, EnvOptions::default(), GapConfig::default(), 1).unwrap();
        let mut adapted = clone_agent(&agent);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ft = finetune(
            &mut env,
            &mut adapted,
            &ergolift_core::training::FinetuneSchedule::default(),
            &spec(),
            &mut rng,
            &mut NullSink,
        )
        .unwrap();
        assert!(ft.converged, "{id}: fine-tuning did not meet the real criterion in {} episodes", ft.episodes);
        let eval = evaluate(&mut env, &mut adapted, 10, 99).unwrap();
        println!(
            "  {id} post-finetune: reward {:.1} erg {:.2} pain {:.3} aborts {}",
            eval.reward.mean, eval.avg_erg.mean, eval.avg_pain.mean, eval.pain_abort_episodes
        );
        assert_eq!(eval.pain_abort_episodes, 0, "{id}: pain aborts after fine-tuning");
        assert_eq!(eval.avg_pain.mean, 0.0, "{id}: residual pain after fine-tuning");
        assert!(eval.avg_erg.mean < 2.5, "{id}: ergonomic level {:.2} ≥ 2.5", eval.avg_erg.mean);
    }
    println!("criterion 6 PASS: gap reproduced (reward drop + pain aborts ≥4/5 seeds) and fine-tuning restores the real criterion");
}

fn clone_agent(agent: &DqnAgent) -> DqnAgent {
    // Evaluation-only copy: same networks, fresh buffer/optimizer.
    let mut fresh = DqnAgent::new(agent.hp, agent.seed).unwrap();
    fresh.online = agent.online.clone();
    fresh.target = agent.target.clone();
    fresh
}

// --- criterion 7: property suites -----------------------------------------

fn random_model(rng: &mut ChaCha8Rng) -> ergolift_core::kinematics::HumanModel {
    let upper = rng.gen_range(0.25..0.40);
    let fore = rng.gen_range(0.25..0.45);
    let body = BodyParams::new(1.8, 0.45, upper, fore);
    scale_model(&body, Point2::new(rng.gen_range(2.0..2.8), rng.gen_range(0.8..1.5))).unwrap()
}

#[test]
fn criterion_7a_ik_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for _ in 0..2000 {
        let model = random_model(&mut rng);
        let q = JointAngles::new(rng.gen_range(-59.0..179.0), rng.gen_range(0.5..149.5));
        let p = forward_kinematics(&model, q);
        let cands = inverse_kinematics(&model, p);
        assert!(!cands.is_empty());
        for c in cands.iter() {
            assert!(forward_kinematics(&model, c).distance(p) < 1e-9);
        }
        let recovered = cands
            .iter()
            .any(|c| (c.shoulder_deg - q.shoulder_deg).abs() < 1e-6 && (c.elbow_deg - q.elbow_deg).abs() < 1e-6);
        assert!(recovered, "q = {q:?} not among candidates {cands:?}");
    }
    println!("criterion 7a PASS: IK round trip ≤ 1e-9 m over 2000 random arms/postures");
}

#[test]
fn criterion_7b_ik_matches_brute_force_grid() {
    // Precompute the forward map on the 0.1° joint grid once, then find the
    // grid argmin for each target and compare with the analytic solution.
    let body = BodyParams::new(1.79, 0.464, 0.384, 0.404);
    let model = scale_model(&body, Point2::new(2.4, 1.1)).unwrap();
    let s_steps: usize = 2401; // -60..180 at 0.1°
    let e_steps: usize = 1501; // 0..150 at 0.1°
    let mut grid = Vec::with_capacity(s_steps * e_steps);
    for si in 0..s_steps {
        let s = -60.0 + si as f64 * 0.1;
        for ei in 0..e_steps {
            let e = ei as f64 * 0.1;
            let p = forward_kinematics(&model, JointAngles::new(s, e));
            grid.push((p.x, p.z));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    // Stay clear of the stretched-arm singularity, where joint angles are
    // ill-conditioned against position and a distance-minimizing grid probe
    // may legitimately sit a cell away.
    let targets: Vec<JointAngles> = (0..1024)
        .map(|_| JointAngles::new(rng.gen_range(-50.0..170.0), rng.gen_range(18.0..132.0)))
        .collect();
    targets.par_iter().for_each(|q| {
        let p = forward_kinematics(&model, *q);
        let mut best = (f64::INFINITY, 0usize);
        for (i, (x, z)) in grid.iter().enumerate() {
            let d2 = (x - p.x) * (x - p.x) + (z - p.z) * (z - p.z);
            if d2 < best.0 {
                best = (d2, i);
            }
        }
        let bs = -60.0 + (best.1 / e_steps) as f64 * 0.1;
        let be = (best.1 % e_steps) as f64 * 0.1;
        // The grid only spans in-limit postures, so compare against the
        // candidate the limit filter selects.
        let picked = model.solve(p).expect("in-limit posture must solve");
        assert!(
            (picked.shoulder_deg - bs).abs() <= 0.15 && (picked.elbow_deg - be).abs() <= 0.15,
            "analytic ({:.3},{:.3}) vs grid ({bs:.1},{be:.1})",
            picked.shoulder_deg,
            picked.elbow_deg
        );
    });
    println!("criterion 7b PASS: analytic IK matches the 0.1° brute-force grid on 1024 targets");
}

#[test]
fn criterion_7c_shaped_actions_are_feasible() {
    let preset = preset_by_id("1.69").unwrap();
    let env = Env::sim(preset.clone(), ControlKind::Dqn, EnvOptions::default()).unwrap();
    let model = preset.model_for(ControlKind::Dqn).unwrap();
    let ws = Workspace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    let mut checked = 0usize;
    for _ in 0..1000 {
        let state = EnvState {
            pos: ObjPos::Cart(Point2::new(rng.gen_range(0.0..0.4), rng.gen_range(0.0..0.9))),
            count_x: 0,
        };
        for a in env.shaped_actions(&state) {
            let act = DqnAction::from_index(a);
            let (dx, dz) = act.delta();
            let from = state.pos.local_point();
            let target = Point2::new(from.x + dx, from.z + dz);
            assert!(ws.contains_local(target), "target {target:?} escapes the area");
            // Independent re-check at a finer sampling than shaping uses.
            for p in path_samples(ws.world_from_local(from), ws.world_from_local(target), 0.005) {
                assert!(
                    model.solve(human_ee_from_object(p, ws.l_object)).is_some(),
                    "unreachable sample on shaped action {act:?} from {from:?}"
                );
            }
            checked += 1;
        }
    }
    assert!(checked > 1000);
    println!("criterion 7c PASS: {checked} shaped actions all in-bounds and solvable along their paths");
}

#[test]
fn criterion_7d_pain_interval_predicate() {
    let mut rng = ChaCha8Rng::seed_from_u64(74);
    for _ in 0..10_000 {
        let angle = rng.gen_range(-20.0..170.0);
        let expected = u8::from((0.0..=30.0).contains(&angle) || (115.0..=150.0).contains(&angle));
        assert_eq!(pain_state(angle), expected, "angle {angle}");
    }
    println!("criterion 7d PASS: pain predicate matches the closed intervals on 10^4 angles");
}

#[test]
fn criterion_7e_masked_argmax_and_bootstrap() {
    let mut rng = ChaCha8Rng::seed_from_u64(75);
    for _ in 0..100_000 {
        let n = rng.gen_range(2..36);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let shaped: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.4)).collect();
        if shaped.is_empty() {
            continue;
        }
        let eps = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..1.0) };
        let a = select_action(&values, &shaped, eps, &mut rng);
        assert!(shaped.contains(&a), "selected {a} outside shaped {shaped:?}");
        if eps == 0.0 {
            let best = shaped.iter().map(|&i| values[i]).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(values[a], best);
        }
        let mask = mask_from_shaped(&shaped);
        let mm = masked_max(&values, mask).unwrap();
        let expect = shaped.iter().map(|&i| values[i]).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(mm, expect);
    }
    println!("criterion 7e PASS: masked selection/bootstrap correct over 10^5 trials");
}

#[test]
fn criterion_7f_mlp_gradients_match_finite_differences() {
    // ~51 parameters per net × 20 nets ≥ 10^3 probes.
    let mut worst_overall: f64 = 0.0;
    for seed in 0..20u64 {
        let net = Mlp::from_seed(2, 8, 3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF00D);
        let input = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut hidden = Vec::new();
        let mut out = Vec::new();
        net.forward_into(&input, &mut hidden, &mut out);
        let mut grads = Gradients::zeros_like(&net);
        net.backward_into(&input, &hidden, &c, &mut grads);
        let loss = |n: &Mlp| -> f64 { n.forward(&input).iter().zip(&c).map(|(o, c)| o * c).sum() };
        let h = 1e-5;
        let analytic: Vec<(usize, usize, f64)> = grads
            .w1
            .iter()
            .enumerate()
            .map(|(i, &g)| (0, i, g))
            .chain(grads.b1.iter().enumerate().map(|(i, &g)| (1, i, g)))
            .chain(grads.w2.iter().enumerate().map(|(i, &g)| (2, i, g)))
            .chain(grads.b2.iter().enumerate().map(|(i, &g)| (3, i, g)))
            .collect();
        for (comp, idx, g) in analytic {
            let tweak = |net: &Mlp, delta: f64| {
                let mut n = net.clone();
                match comp {
                    0 => n.w1[idx] += delta,
                    1 => n.b1[idx] += delta,
                    2 => n.w2[idx] += delta,
                    _ => n.b2[idx] += delta,
                }
                n
            };
            let numeric = (loss(&tweak(&net, h)) - loss(&tweak(&net, -h))) / (2.0 * h);
            let rel = (numeric - g).abs() / numeric.abs().max(g.abs()).max(1e-8);
            worst_overall = worst_overall.max(rel);
            assert!(rel <= 1e-6, "seed {seed} comp {comp} idx {idx}: rel err {rel}");
        }
    }
    println!("criterion 7f PASS: gradient check worst relative error {worst_overall:.2e} ≤ 1e-6");
}

#[test]
fn criterion_7g_soft_update_contraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..1000u64 {
        let online = Mlp::from_seed(2, 6, 4, trial);
        let mut target = Mlp::from_seed(2, 6, 4, trial ^ 0xAAAA);
        let tau = rng.gen_range(0.0..=1.0);
        let gaps: Vec<f64> = target.w1.iter().zip(&online.w1).map(|(t, o)| t - o).collect();
        soft_update(&mut target, &online, tau).unwrap();
        for ((t, o), g) in target.w1.iter().zip(&online.w1).zip(&gaps) {
            assert!(((t - o) - (1.0 - tau) * g).abs() <= 1e-12);
        }
    }
    println!("criterion 7g PASS: soft update contracts gaps by exactly (1-τ) over 1000 trials");
}

#[test]
fn criterion_7h_replay_fifo() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    for _ in 0..1000 {
        let cap = rng.gen_range(1..64usize);
        let extra = rng.gen_range(0..96usize);
        let mut buf = ReplayBuffer::new(cap);
        for i in 0..cap + extra {
            buf.push(Transition {
                state: [i as f64, 0.0],
                action: 0,
                reward: 0.0,
                next_state: [0.0, 0.0],
                done: false,
                next_mask: 1,
            });
        }
        assert_eq!(buf.len(), cap.min(cap + extra));
        let mut kept: Vec<usize> = buf.iter().map(|t| t.state[0] as usize).collect();
        kept.sort_unstable();
        let expect: Vec<usize> = (extra..cap + extra).collect();
        assert_eq!(kept, expect, "cap {cap} extra {extra}");
    }
    println!("criterion 7h PASS: replay buffer evicts strictly oldest-first over 1000 cap/overflow draws");
}

#[test]
fn criterion_7i_seed_determinism() {
    // Full training runs with the same seed must be bit-identical.
    let run_ql = || {
        let (out, eval) = train_ql("1.69", 3);
        (out.returns, eval.reward.mean.to_bits(), eval.steps.mean.to_bits())
    };
    let (ra, wa, sa) = run_ql();
    let (rb, wb, sb) = run_ql();
    assert_eq!(ra, rb);
    assert_eq!((wa, sa), (wb, sb));

    let run_dqn = || {
        let preset = preset_by_id("1.69").unwrap();
        let hp = Hyperparameters {
            learning_rate: 1e-3,
            discount: 0.99,
            epsilon_decay_episodes: 60,
            soft_update_rate: 1e-3,
            buffer_size: 1000,
            batch_size: 32,
            hidden_dim: 32,
        };
        let mut env = Env::sim(preset, ControlKind::Dqn, EnvOptions::default()).unwrap();
        let mut agent = DqnAgent::new(hp, 99).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = pretrain(&mut env, &mut agent, 60, &spec(), 150, &mut rng, &mut NullSink).unwrap();
        let qs = agent.q_values([0.25, -0.5]);
        (out.returns, qs.iter().map(|q| q.to_bits()).collect::<Vec<_>>())
    };
    let (da, qa) = run_dqn();
    let (db, qb) = run_dqn();
    assert_eq!(da, db, "episode returns must be bit-identical");
    assert_eq!(qa, qb, "final network outputs must be bit-identical");
    println!("criterion 7i PASS: identical seeds reproduce training bit-for-bit (QL and DQN)");
}

#[test]
fn criterion_8_hpo_harness() {
    // Full published grid is enumerated by count only.
    let full = HpoSpace::default_search_space();
    assert_eq!(full.len(), 2187);
    assert_eq!(full.combinations().len(), 2187);

    // Desk-scale mini-grid: 2×2×2 = 8 combinations.
    // Decays must leave room for the 2·window flatness check inside the
    // 2·decay early-stop budget; the 1e-5 learning rate rows exercise the
    // early-stop path.
    let mini = HpoSpace {
        learning_rate: vec![1e-3, 1e-5],
        discount: vec![0.99],
        epsilon_decay_episodes: vec![300, 450],
        soft_update_rate: vec![1e-3],
        buffer_size: vec![2000],
        batch_size: vec![32],
        hidden_dim: vec![32, 64],
    };
    let combos = mini.combinations();
    assert_eq!(combos.len(), 8);
    let preset = preset_by_id("1.69").unwrap();
    let results = run_hpo(&combos, &preset, &spec(), 10, 7, 0).unwrap();
    assert_eq!(results.len(), 8);

    // Early stopping: no run may outlive twice its decay duration.
    for r in &results {
        assert!(
            r.episodes <= 2 * r.hp.epsilon_decay_episodes + 1,
            "combination {} ran {} episodes with decay {}",
            r.index,
            r.episodes,
            r.hp.epsilon_decay_episodes
        );
    }

    let csv = hpo_results_csv(&results);
    assert_eq!(csv.lines().count(), 9, "header plus one row per combination");

    let best = champion(&results).expect("a combination must converge");
    assert!(best.pain_free(), "champion has pain {} / {} aborts", best.pain_mean, best.pain_aborts);
    println!(
        "criterion 8 PASS: 8-run mini-grid completed (champion index {}, steps {:.1}), early-stop bound held, full grid enumerates 2187",
        best.index, best.steps_mean
    );
}

#[test]
fn hpo_rerun_reproduces_results() {
    // Determinism addendum to criterion 8: same grid, same seed, same CSV.
    let mini = HpoSpace {
        learning_rate: vec![1e-3],
        discount: vec![0.99],
        epsilon_decay_episodes: vec![80],
        soft_update_rate: vec![1e-3],
        buffer_size: vec![500],
        batch_size: vec![16],
        hidden_dim: vec![24, 48],
    };
    let combos = mini.combinations();
    let preset = preset_by_id("1.69").unwrap();
    let a = hpo_results_csv(&run_hpo(&combos, &preset, &spec(), 5, 11, 2).unwrap());
    let b = hpo_results_csv(&run_hpo(&combos, &preset, &spec(), 5, 11, 1).unwrap());
    assert_eq!(a, b, "ranking must not depend on worker scheduling");
    println!("hpo determinism PASS: per-combination seeding is scheduler-independent");
}
