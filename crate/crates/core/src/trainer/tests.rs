#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::agent::{Agent, AgentConfig, Variant, ADAPT, CRITIC};
use crate::diffcore::{sgd_step, GradCheck, ParamSet, Tensor};
use crate::gridhouse::{HousePool, Split};
use crate::gtn::GtnConfig;
use crate::knowgraph::{build_from_cooccurrence, ObjectVocabulary, OBS_SLICE_DIM};

fn small_config() -> AgentConfig {
    AgentConfig {
        embed_dim: 4,
        input_dim: 8,
        hidden: 6,
        adapt_hidden: 3,
        gtn: GtnConfig {
            feature_dim: OBS_SLICE_DIM + 4,
            hidden: 3,
            q_dim: 4,
            ..GtnConfig::default()
        },
        freeze_graph_weight: false,
    }
}

struct Fixture {
    pool: HousePool,
    graph: Arc<crate::knowgraph::AdjacencyTensor>,
}

fn fixture() -> Fixture {
    let vocab = Arc::new(ObjectVocabulary::standard());
    let pool = HousePool::new(Arc::clone(&vocab), Split::Train, 2);
    let views = pool.harvest_views(40, &mut ChaCha8Rng::seed_from_u64(0));
    let graph = Arc::new(build_from_cooccurrence(views, &vocab, 3));
    Fixture { pool, graph }
}

impl Fixture {
    fn agent(&self, variant: Variant, config: AgentConfig) -> Agent {
        Agent::new(variant, config, Arc::clone(self.pool.vocab()), Some(Arc::clone(&self.graph))).unwrap()
    }
}

fn train_cfg(episodes: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        episodes,
        seed: 5,
        ..TrainConfig::default()
    };
    cfg.a3c.workers = 1;
    cfg.a3c.segment_length = 20;
    cfg
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---- returns -------------------------------------------------------------

#[test]
fn returns_worked_example() {
    let g = compute_returns(&[-0.01, -0.01, 5.0], 0.99, 0.0);
    let expect = [-0.01 + 0.99 * (-0.01 + 0.99 * 5.0), -0.01 + 0.99 * 5.0, 5.0];
    for (a, b) in g.iter().zip(expect) {
        assert!(close(*a, b, 1e-12));
    }
    assert!(close(g[0], 4.8806, 1e-12));
    assert!(close(g[1], 4.94, 1e-12));
}

#[test]
fn zero_discount_returns_the_rewards() {
    let r = [0.3, -1.0, 2.0, 5.0];
    assert_eq!(compute_returns(&r, 0.0, 7.0), r.to_vec());
}

#[test]
fn bootstrap_decays_geometrically() {
    let g = compute_returns(&[0.0; 5], 0.9, 2.0);
    for (t, v) in g.iter().enumerate() {
        assert!(close(*v, 2.0 * 0.9f64.powi(5 - t as i32), 1e-12));
    }
}

proptest! {
    #[test]
    fn returns_match_double_loop(
        rewards in prop::collection::vec(-1.0f64..5.0, 1..200),
        gamma in 0.0f64..1.0,
    ) {
        let g = compute_returns(&rewards, gamma, 0.0);
        for t in 0..rewards.len() {
            let mut brute = 0.0;
            for j in t..rewards.len() {
                brute += gamma.powi((j - t) as i32) * rewards[j];
            }
            prop_assert!((g[t] - brute).abs() <= 1e-12 * brute.abs().max(1.0), "t={} {} vs {}", t, g[t], brute);
        }
    }
}

// ---- losses --------------------------------------------------------------

fn buffer(rewards: &[f64], values: &[f64], probs: &[f64]) -> TrajectoryBuffer {
    use crate::agent::entropy;
    use crate::gridhouse::{Action, Observation, Pitch};
    use crate::knowgraph::{ObjectId, RoomType};
    let obs = Observation {
        objects: vec![Default::default(); 20],
        room: RoomType::Kitchen,
        pitch: Pitch::Level,
        wall_ahead: false,
        target: ObjectId(0),
    };
    TrajectoryBuffer {
        steps: rewards
            .iter()
            .zip(values)
            .map(|(&r, &v)| TrajectoryStep {
                observation: obs.clone(),
                action: Action::MoveAhead,
                reward: r,
                log_prob: probs[0].ln(),
                entropy: entropy(probs),
                value: Some(v),
                done: false,
            })
            .collect(),
        bootstrap: 0.0,
    }
}

#[test]
fn perfect_critic_has_zero_value_loss() {
    let r = [-0.01, -0.01, 5.0];
    let g = compute_returns(&r, 0.99, 0.0);
    let b = buffer(&r, &g, &[1.0 / 6.0; 6]);
    let (_, lv) = a3c_losses(&b, &g, &A3CConfig::default()).unwrap();
    assert_eq!(lv, 0.0);
}

#[test]
fn uniform_policy_with_zero_advantage_scores_the_entropy_bonus() {
    let cfg = A3CConfig {
        gamma: 1.0,
        ..A3CConfig::default()
    };
    // V_t = r_t + V_{t+1} with a terminal 0 makes every TD error vanish.
    let r = [0.5, -0.25, 1.0, 0.0];
    let g = compute_returns(&r, 1.0, 0.0);
    let b = buffer(&r, &g, &[1.0 / 6.0; 6]);
    let (lp, _) = a3c_losses(&b, &g, &cfg).unwrap();
    assert!(close(lp, -cfg.entropy_beta * 4.0 * 6f64.ln(), 1e-12));
}

#[test]
fn single_step_advantage_and_value_loss() {
    let cfg = A3CConfig {
        entropy_beta: 0.0,
        ..A3CConfig::default()
    };
    let adv = advantages(&[5.0], &[1.0], &[5.0], 0.0, &cfg);
    assert_eq!(adv, vec![4.0]);
    let probs = [0.5, 0.1, 0.1, 0.1, 0.1, 0.1];
    let b = buffer(&[5.0], &[1.0], &probs);
    let (lp, lv) = a3c_losses(&b, &[5.0], &cfg).unwrap();
    assert_eq!(lv, 8.0);
    assert!(close(lp, -0.5f64.ln() * 4.0, 1e-12));
}

#[test]
fn nstep_advantage_uses_returns() {
    let cfg = A3CConfig {
        nstep: true,
        ..A3CConfig::default()
    };
    assert_eq!(advantages(&[1.0, 2.0], &[0.5, 0.25], &[3.0, 2.0], 0.0, &cfg), vec![2.5, 1.75]);
}

#[test]
fn loss_length_mismatch_is_an_error() {
    let b = buffer(&[1.0, 2.0], &[0.0, 0.0], &[1.0 / 6.0; 6]);
    assert!(matches!(a3c_losses(&b, &[1.0], &A3CConfig::default()), Err(crate::Error::Contract(_))));
    let mut missing = b.clone();
    missing.steps[1].value = None;
    assert!(a3c_losses(&missing, &[1.0, 2.0], &A3CConfig::default()).is_err());
}

// ---- store ---------------------------------------------------------------

fn scalar_set(entries: &[(&str, f64)]) -> ParamSet {
    let mut p = ParamSet::new();
    for (n, v) in entries {
        p.insert(*n, Tensor::scalar(*v)).unwrap();
    }
    p
}

#[test]
fn zero_gradient_leaves_parameters_unchanged() {
    let p = scalar_set(&[("a", 1.5), ("b", -2.0)]);
    let store = SharedParamStore::new(p.clone(), OptimizerKind::Sgd, LearningRates::uniform(0.3), 10.0);
    store.apply_gradients(p.zeros_like()).unwrap();
    assert_eq!(store.params(), p);
    assert_eq!(store.episodes(), 1);
}

#[test]
fn clipping_scales_the_update() {
    let p = scalar_set(&[("a", 0.0), ("b", 0.0)]);
    let store = SharedParamStore::new(p, OptimizerKind::Sgd, LearningRates::uniform(1.0), 1.0);
    store.apply_gradients(scalar_set(&[("a", 6.0), ("b", 8.0)])).unwrap();
    let after = store.params();
    assert!(close(after.require("a").unwrap().at(0, 0), -0.6, 1e-15));
    assert!(close(after.require("b").unwrap().at(0, 0), -0.8, 1e-15));
}

#[test]
fn learning_rates_split_on_adaptation_prefix() {
    let rates = LearningRates { main: 0.1, adapt: 0.01 };
    let p = scalar_set(&[("actor.w", 0.0), ("adapt.out.w", 0.0)]);
    let store = SharedParamStore::new(p, OptimizerKind::Sgd, rates, 100.0);
    store.apply_gradients(scalar_set(&[("actor.w", 1.0), ("adapt.out.w", 1.0)])).unwrap();
    let after = store.params();
    assert!(close(after.require("actor.w").unwrap().at(0, 0), -0.1, 1e-15));
    assert!(close(after.require("adapt.out.w").unwrap().at(0, 0), -0.01, 1e-15));
}

#[test]
fn applies_commute_in_counter_effect() {
    let p = scalar_set(&[("a", 0.0)]);
    let g1 = scalar_set(&[("a", 1.0)]);
    let g2 = scalar_set(&[("a", -3.0)]);
    for order in [[&g1, &g2], [&g2, &g1]] {
        let store = SharedParamStore::new(p.clone(), OptimizerKind::Sgd, LearningRates::uniform(0.1), 10.0);
        for g in order {
            store.apply_gradients(g.clone()).unwrap();
        }
        assert_eq!(store.episodes(), 2);
        assert_eq!(store.updates(), 2);
    }
}

#[test]
fn budget_claims_stop_at_the_limit() {
    let store = SharedParamStore::new(scalar_set(&[("a", 0.0)]), OptimizerKind::Sgd, LearningRates::uniform(0.1), 1.0);
    let claimed: Vec<u64> = std::iter::from_fn(|| store.begin_episode(3).map(|(i, _)| i)).collect();
    assert_eq!(claimed, vec![0, 1, 2]);
}

#[test]
fn non_finite_gradients_are_rejected() {
    let store = SharedParamStore::new(scalar_set(&[("a", 0.0)]), OptimizerKind::Sgd, LearningRates::uniform(0.1), 1.0);
    assert!(store.apply_gradients(scalar_set(&[("a", f64::NAN)])).is_err());
    assert_eq!(store.episodes(), 0);
}

// ---- adaptation loss and inner updates -------------------------------------

fn window_loss(
    agent: &Agent,
    observations: &[crate::gridhouse::Observation],
    tape: &mut crate::diffcore::Tape,
    bound: &crate::diffcore::Bound,
) -> crate::Result<crate::diffcore::Var> {
    let mut h = agent.zero_hidden(tape);
    let mut window = Vec::new();
    for o in observations {
        let out = agent.step(tape, bound, None, o, h, false)?;
        h = out.hidden;
        window.push((out.hidden.h, out.probs));
    }
    adaptation_loss(tape, bound, &window)
}

fn sample_observations(f: &Fixture, n: usize) -> Vec<crate::gridhouse::Observation> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..n)
        .map(|_| {
            let spec = f.pool.sample_spec(&mut rng, 50);
            f.pool.start(&spec).unwrap().1
        })
        .collect()
}

#[test]
fn zeroed_output_head_gives_zero_loss_and_identity_update() {
    let f = fixture();
    let a = f.agent(Variant::A3CMaml, small_config());
    let mut p = a.init_params(1);
    for name in [crate::agent::ADAPT_OUT_W, crate::agent::ADAPT_OUT_B] {
        p.get_mut(name).unwrap().data_mut().fill(0.0);
    }
    let obs = sample_observations(&f, 4);
    let mut tape = crate::diffcore::Tape::new();
    let bound = tape.bind(&p);
    let loss = window_loss(&a, &obs, &mut tape, &bound).unwrap();
    assert_eq!(tape.scalar(loss), 0.0);
    tape.backward(loss).unwrap();
    let g = tape.grads(&bound, &p).unwrap();
    assert_eq!(maml_inner_update(&p, &g, 0.1).unwrap(), p);
}

#[test]
fn adaptation_loss_ignores_window_order() {
    let f = fixture();
    let a = f.agent(Variant::A3CMaml, small_config());
    let p = a.init_params(2);
    let mut tape = crate::diffcore::Tape::new();
    let bound = tape.bind(&p);
    let rows: Vec<_> = (0..4)
        .map(|i| {
            let h = tape.constant_row((0..6).map(|j| ((i * 7 + j) as f64 * 0.37).sin()).collect());
            let pr = tape.constant_row(vec![1.0 / 6.0 + 0.01 * i as f64; 6]);
            (h, pr)
        })
        .collect();
    let forward = adaptation_loss(&mut tape, &bound, &rows).unwrap();
    let reversed: Vec<_> = rows.iter().rev().copied().collect();
    let backward = adaptation_loss(&mut tape, &bound, &reversed).unwrap();
    assert!(close(tape.scalar(forward), tape.scalar(backward), 1e-12));
    assert!(tape.scalar(forward) >= 0.0);
    assert!(adaptation_loss(&mut tape, &bound, &[]).is_err());
}

#[test]
fn adaptation_loss_gradient_check() {
    let f = fixture();
    let a = f.agent(Variant::A3CMaml, small_config());
    let p = a.init_params(3);
    let obs = sample_observations(&f, 3);
    let check = GradCheck {
        eps: 1e-6,
        max_coords: Some(10),
    };
    let report = check
        .run(&p, |tape, bound| window_loss(&a, &obs, tape, bound))
        .unwrap();
    assert!(report.max_rel_err <= 1e-5, "{report:?}");
    assert!(report.checked > 50);
}

#[test]
fn inner_update_scalar_example() {
    let p = scalar_set(&[("actor.b", 1.0), ("critic.b", 1.0)]);
    let g = scalar_set(&[("actor.b", 2.0), ("critic.b", 2.0)]);
    let out = maml_inner_update(&p, &g, 0.1).unwrap();
    assert!(close(out.require("actor.b").unwrap().at(0, 0), 0.8, 1e-15));
    assert_eq!(out.require("critic.b").unwrap().at(0, 0), 1.0, "critic is not adapted");
    let zero = maml_inner_update(&p, &g.zeros_like(), 0.1).unwrap();
    assert_eq!(zero, p);
}

#[test]
fn consecutive_updates_sum_only_for_linear_losses() {
    let theta = scalar_set(&[("actor.w", 0.7)]);
    let alpha = 0.05;
    let value = |p: &ParamSet| p.require("actor.w").unwrap().at(0, 0);
    // Linear: L = 3 theta, gradient constant.
    let lin = |_: &ParamSet| scalar_set(&[("actor.w", 3.0)]);
    // Quadratic: L = theta^2, gradient 2 theta.
    let quad = |p: &ParamSet| scalar_set(&[("actor.w", 2.0 * value(p))]);
    for (grad, linear) in [(&lin as &dyn Fn(&ParamSet) -> ParamSet, true), (&quad, false)] {
        let g0 = grad(&theta);
        let step1 = maml_inner_update(&theta, &g0, alpha).unwrap();
        let g1 = grad(&step1);
        let two = maml_inner_update(&step1, &g1, alpha).unwrap();
        let mut summed = g0.clone();
        summed.add_assign(&grad(&theta)).unwrap();
        let one = maml_inner_update(&theta, &summed, alpha).unwrap();
        assert_eq!(close(value(&two), value(&one), 1e-15), linear);
    }
}

// ---- meta-gradient ---------------------------------------------------------

#[test]
fn adaptation_meta_gradient_matches_phi_differences() {
    // The mixed partial d2 L_adapt / d phi d theta along v, taken once by
    // differencing in theta (implementation) and once in phi (oracle).
    let f = fixture();
    let a = f.agent(Variant::A3CMaml, small_config());
    let p = a.init_params(4);
    let cfg = MamlConfig {
        inner_lr: 0.05,
        interval: 3,
        max_inner_updates: 2,
        inner_grad_clip: 1e9,
        ..MamlConfig::default()
    };
    let schedule = AdaptSchedule {
        inner_lr: cfg.inner_lr,
        interval: cfg.interval,
        max_updates: cfg.max_inner_updates,
        grad_clip: cfg.inner_grad_clip,
    };
    let mut ro = None;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = f.pool.sample_spec(&mut rng, 30);
        let opts = RolloutOptions {
            with_value: false,
            adapt: Some(schedule),
        };
        let r = rollout(&a, &p, &f.pool, &spec, &mut rng, opts).unwrap();
        if !r.chunks.is_empty() {
            ro = Some(r);
            break;
        }
    }
    let ro = ro.expect("some episode lasts past one window");
    let mut v = p.subset(&crate::agent::ADAPTED_GROUPS);
    for (i, (_, t)) in v.iter_mut().enumerate() {
        for (j, x) in t.data_mut().iter_mut().enumerate() {
            *x = ((i * 31 + j) as f64 * 0.61).sin() * 0.1;
        }
    }
    let meta = meta_gradient_adapt_params(&a, &p, &ro, &v, &cfg).unwrap();

    let h = 1e-5;
    let mut checked = 0;
    for (name, t) in p.subset(&[ADAPT]).iter() {
        for idx in [0, t.len() / 2, t.len() - 1] {
            let objective = |sign: f64| {
                let mut q = p.clone();
                q.get_mut(name).unwrap().data_mut()[idx] += sign * h;
                let mut total = 0.0;
                for chunk in &ro.chunks {
                    let mut at = q.clone();
                    at.overlay(&chunk.params).unwrap();
                    let g = adaptation_loss_grads(&a, &at, &ro, chunk).unwrap();
                    for (n, vt) in v.iter() {
                        let gt = g.require(n).unwrap();
                        total += vt.data().iter().zip(gt.data()).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
                -cfg.inner_lr * total
            };
            let numeric = (objective(1.0) - objective(-1.0)) / (2.0 * h);
            let analytic = meta.require(name).unwrap().data()[idx];
            let tol = 1e-4 * numeric.abs().max(analytic.abs()).max(1e-3);
            assert!((numeric - analytic).abs() <= tol, "{name}[{idx}]: {analytic} vs {numeric}");
            checked += 1;
        }
    }
    assert!(checked >= 12);
}

// ---- rollouts and replay -----------------------------------------------------

#[test]
fn zero_inner_rate_replays_the_unadapted_trajectory() {
    let f = fixture();
    let a = f.agent(Variant::GveMaml, small_config());
    let p = a.init_params(6);
    let mut spec_rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let spec = f.pool.sample_spec(&mut spec_rng, 40);
        let plain = rollout(&a, &p, &f.pool, &spec, &mut ChaCha8Rng::seed_from_u64(1), RolloutOptions {
            with_value: true,
            adapt: None,
        })
        .unwrap();
        let schedule = AdaptSchedule {
            inner_lr: 0.0,
            interval: 2,
            max_updates: 4,
            grad_clip: 1.0,
        };
        let adapted = rollout(&a, &p, &f.pool, &spec, &mut ChaCha8Rng::seed_from_u64(1), RolloutOptions {
            with_value: true,
            adapt: Some(schedule),
        })
        .unwrap();
        assert_eq!(plain.buffer, adapted.buffer);
        assert_eq!(adapted.final_params, p);
    }
}

#[test]
fn policy_loss_sends_no_gradient_to_the_critic() {
    let f = fixture();
    for variant in [Variant::A3C, Variant::Gve] {
        let a = f.agent(variant, small_config());
        let p = a.init_params(7);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = f.pool.sample_spec(&mut rng, 30);
        let ro = rollout(&a, &p, &f.pool, &spec, &mut rng, RolloutOptions {
            with_value: true,
            adapt: None,
        })
        .unwrap();
        let rep = replay(&a, &p, &ro.buffer, &A3CConfig::default()).unwrap();
        for (name, g) in rep.policy_grads.subset(&[CRITIC]).iter() {
            assert!(g.data().iter().all(|x| *x == 0.0), "{name} received policy gradient");
        }
        assert!(rep.value_grads.subset(&[CRITIC]).global_norm() > 0.0);
    }
}

#[test]
fn critic_regression_decreases_monotonically() {
    let f = fixture();
    let a = f.agent(Variant::A3C, small_config());
    let mut p = a.init_params(8);
    let cfg = A3CConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let buffers: Vec<TrajectoryBuffer> = (0..4)
        .map(|_| {
            let spec = f.pool.sample_spec(&mut rng, 20);
            rollout(&a, &p, &f.pool, &spec, &mut rng, RolloutOptions {
                with_value: true,
                adapt: None,
            })
            .unwrap()
            .buffer
        })
        .collect();
    let mut prev = f64::INFINITY;
    for _ in 0..100 {
        let mut lv = 0.0;
        let mut grads = p.subset(&[CRITIC]).zeros_like();
        for b in &buffers {
            let rep = replay(&a, &p, b, &cfg).unwrap();
            lv += rep.loss_v;
            grads.add_assign(&rep.value_grads.subset(&[CRITIC])).unwrap();
        }
        assert!(lv < prev, "{lv} after {prev}");
        prev = lv;
        let stepped = sgd_step(&p.subset(&[CRITIC]), &grads, 1e-3).unwrap();
        p.overlay(&stepped).unwrap();
    }
}

// ---- training ----------------------------------------------------------------

fn run(agent: &Agent, pool: &HousePool, cfg: &TrainConfig, seed: u64) -> (SharedParamStore, Vec<ProgressRow>) {
    let store = cfg.new_store(agent, agent.init_params(seed));
    let mut rows = Vec::new();
    train(agent, pool, &store, cfg, &AtomicBool::new(false), |r, _| {
        rows.push(*r);
        Ok(())
    })
    .unwrap();
    (store, rows)
}

#[test]
fn single_worker_training_is_deterministic() {
    let f = fixture();
    for variant in [Variant::A3C, Variant::GveMaml] {
        let a = f.agent(variant, small_config());
        let cfg = train_cfg(12);
        let (s1, r1) = run(&a, &f.pool, &cfg, 1);
        let (s2, r2) = run(&a, &f.pool, &cfg, 1);
        assert_eq!(s1.params().digest(), s2.params().digest());
        assert_eq!(r1, r2);
        assert_eq!(s1.episodes(), 12);
    }
}

#[test]
fn frozen_graph_weight_matches_the_baseline() {
    let f = fixture();
    let base = f.agent(Variant::A3C, small_config());
    let gve = f.agent(Variant::Gve, AgentConfig {
        freeze_graph_weight: true,
        ..small_config()
    });
    let cfg = train_cfg(25);
    let (sb, rb) = run(&base, &f.pool, &cfg, 3);
    let (sg, rg) = run(&gve, &f.pool, &cfg, 3);
    assert_eq!(rb, rg);
    let shared = sb.params();
    let gp = sg.params();
    for (name, t) in shared.iter() {
        assert_eq!(t, gp.require(name).unwrap(), "{name}");
    }
    assert!(gp.require(crate::agent::CRITIC_W_GRAPH).unwrap().data().iter().all(|x| *x == 0.0));
}

#[test]
fn multi_worker_training_spends_the_budget_exactly() {
    let f = fixture();
    let a = f.agent(Variant::Gve, small_config());
    let mut cfg = train_cfg(20);
    cfg.a3c.workers = 3;
    let (store, rows) = run(&a, &f.pool, &cfg, 0);
    assert_eq!(store.episodes(), 20);
    assert_eq!(rows.len(), 20);
    let mut seen: Vec<u64> = rows.iter().map(|r| r.episode).collect();
    seen.sort_unstable();
    assert_eq!(seen, (1..=20).collect::<Vec<_>>());
    assert!(store.params().is_finite());
}

#[test]
fn progress_callback_errors_stop_training() {
    let f = fixture();
    let a = f.agent(Variant::A3C, small_config());
    let cfg = train_cfg(50);
    let store = cfg.new_store(&a, a.init_params(0));
    let err = train(&a, &f.pool, &store, &cfg, &AtomicBool::new(false), |r, _| {
        if r.episode == 3 {
            Err(crate::Error::Contract("halt".into()))
        } else {
            Ok(())
        }
    });
    assert!(err.is_err());
    assert!(store.episodes() < 50);
}

#[test]
fn stop_flag_prevents_new_episodes() {
    let f = fixture();
    let a = f.agent(Variant::A3C, small_config());
    let cfg = train_cfg(50);
    let store = cfg.new_store(&a, a.init_params(0));
    train(&a, &f.pool, &store, &cfg, &AtomicBool::new(true), |_, _| Ok(())).unwrap();
    assert_eq!(store.episodes(), 0);
}

#[test]
fn progress_rows_render_as_csv() {
    let row = ProgressRow {
        episode: 4,
        worker: 1,
        reward: 4.98,
        loss_pi: -0.5,
        loss_v: 2.0,
        entropy: 1.25,
        steps: 3,
        success: true,
    };
    assert_eq!(row.csv(), "4,1,4.980000,-0.500000,2.000000,1.250000,3,1");
    assert_eq!(row.csv().split(',').count(), PROGRESS_HEADER.split(',').count());
}

// ---- checkpoints -------------------------------------------------------------

#[test]
fn checkpoint_round_trip_resumes_identically() {
    let f = fixture();
    let a = f.agent(Variant::GveMaml, small_config());
    let cfg = train_cfg(6);
    let (store, _) = run(&a, &f.pool, &cfg, 2);
    let dir = tempfile::tempdir().unwrap();
    let mut extra = BTreeMap::new();
    extra.insert("seed".to_string(), "2".to_string());
    let digest = save_checkpoint(dir.path(), &a, &store, &extra).unwrap();
    let ck = load_checkpoint(dir.path(), &a).unwrap();
    assert_eq!(ck.params.digest(), digest);
    assert_eq!(ck.episodes, 6);
    assert_eq!(ck.metadata["seed"], "2");
    let snap = store.snapshot();
    let adam = ck.adam.clone().unwrap();
    let orig = snap.adam.unwrap();
    assert_eq!((adam.m, adam.v, adam.t), (orig.m, orig.v, orig.t));

    // Continuing from the checkpoint matches continuing the live store.
    let more = TrainConfig { episodes: 9, ..cfg };
    let resumed = SharedParamStore::resume(
        ck.params,
        ck.adam,
        ck.episodes,
        store.optimizer(),
        more.learning_rates(&a),
        more.a3c.grad_clip,
    );
    train(&a, &f.pool, &resumed, &more, &AtomicBool::new(false), |_, _| Ok(())).unwrap();
    train(&a, &f.pool, &store, &more, &AtomicBool::new(false), |_, _| Ok(())).unwrap();
    assert_eq!(resumed.params().digest(), store.params().digest());
    assert_eq!(resumed.episodes(), 9);
}

#[test]
fn checkpoint_for_another_variant_is_refused() {
    let f = fixture();
    let a = f.agent(Variant::A3C, small_config());
    let store = train_cfg(1).new_store(&a, a.init_params(0));
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &a, &store, &BTreeMap::new()).unwrap();
    let other = f.agent(Variant::A3CMaml, small_config());
    let err = load_checkpoint(dir.path(), &other).unwrap_err();
    assert!(matches!(err, crate::Error::Checkpoint { .. }), "{err}");
    let wider = f.agent(Variant::A3C, AgentConfig {
        hidden: 7,
        ..small_config()
    });
    assert!(load_checkpoint(dir.path(), &wider).is_err());
}
