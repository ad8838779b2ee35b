use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::agent::{Agent, AgentConfig, Variant};
use crate::gridhouse::{AgentPose, Heading, HousePool, Pitch, Split, STEP_PENALTY};
use crate::gtn::GtnConfig;
use crate::knowgraph::{ObjectVocabulary, OBS_SLICE_DIM};
use crate::trainer::AdaptSchedule;

fn spec(room: RoomType, max_steps: usize) -> EpisodeSpec {
    EpisodeSpec {
        house_seed: 0,
        room,
        spawn: AgentPose {
            x: 1,
            y: 1,
            heading: Heading::North,
            pitch: Pitch::Level,
        },
        target: ObjectId(0),
        max_steps,
        split: Split::Test,
    }
}

/// A record of `steps` actions ending in success or not.
fn record(success: bool, steps: usize, optimal: usize) -> EpisodeRecord {
    let mut rewards = vec![STEP_PENALTY; steps];
    if success {
        rewards[steps - 1] = SUCCESS_REWARD;
    }
    EpisodeRecord {
        spec: spec(RoomType::Kitchen, 200),
        success,
        steps,
        optimal,
        values: Vec::new(),
        rewards,
        mc_returns: None,
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn rates_of_uniform_outcomes() {
    let wins: Vec<_> = (0..5).map(|_| record(true, 4, 4)).collect();
    let losses: Vec<_> = (0..5).map(|_| record(false, 7, 3)).collect();
    assert_eq!(success_rate(&wins), 1.0);
    assert_eq!(success_rate(&losses), 0.0);
    assert_eq!(spl(&wins), 1.0);
    assert_eq!(spl(&losses), 0.0);
    assert_eq!(success_rate(&[]), 0.0);
}

#[test]
fn spl_term_examples() {
    assert_eq!(record(true, 6, 6).spl_term(), 1.0);
    assert_eq!(record(false, 6, 6).spl_term(), 0.0);
    assert_eq!(record(true, 8, 4).spl_term(), 0.5);
}

#[test]
fn filtered_metrics_absent_when_no_long_episode() {
    let short: Vec<_> = (1..=5).map(|l| record(true, l, l)).collect();
    assert_eq!(filtered_metrics(&short, LONG_EPISODE_MIN_LENGTH), None);
    assert_eq!(MetricsReport::from_records(&short).long, None);
}

#[test]
fn filtered_metrics_hand_count() {
    // (success, P, L)
    let rows = [
        (true, 6, 6),
        (false, 20, 9),
        (true, 12, 8),
        (true, 3, 3),
        (false, 10, 5),
        (true, 14, 7),
        (false, 200, 6),
        (true, 5, 5),
        (true, 30, 10),
        (false, 1, 2),
    ];
    let records: Vec<_> = rows.iter().map(|&(s, p, l)| record(s, p, l)).collect();
    // L > 5: rows 0, 1, 2, 5, 6, 8 -> successes 0, 2, 5, 8.
    let long = filtered_metrics(&records, 5).unwrap();
    assert_eq!(long.episodes, 6);
    assert_eq!(long.sr, 4.0 / 6.0);
    let expect_spl = (1.0 + 8.0 / 12.0 + 7.0 / 14.0 + 10.0 / 30.0) / 6.0;
    assert!(close(long.spl, expect_spl, 1e-15));
}

#[test]
fn per_room_breakdown_partitions_the_records() {
    let mut a = record(true, 4, 4);
    a.spec.room = RoomType::Bedroom;
    let b = record(false, 4, 4);
    let c = record(true, 8, 4);
    let m = MetricsReport::from_records(&[a, b, c]);
    assert_eq!(m.per_room.len(), 2);
    assert_eq!(m.per_room[&RoomType::Bedroom].sr, 1.0);
    assert_eq!(m.per_room[&RoomType::Kitchen].episodes, 2);
    assert_eq!(m.per_room[&RoomType::Kitchen].spl, 0.25);
    assert_eq!(m.overall.episodes, 3);
}

proptest! {
    #[test]
    fn spl_never_exceeds_sr(rows in prop::collection::vec((any::<bool>(), 1usize..200, 1usize..60), 1..80)) {
        let records: Vec<_> = rows.iter().map(|&(s, p, l)| record(s, p.max(l), l)).collect();
        prop_assert!(spl(&records) <= success_rate(&records) + 1e-15);
        for r in &records {
            prop_assert!(r.validate().is_ok());
        }
    }

    #[test]
    fn curve_counts_never_increase(lengths in prop::collection::vec(1usize..40, 1..60)) {
        let records: Vec<_> = lengths
            .iter()
            .map(|&n| {
                let mut r = record(false, n, 1);
                r.values = vec![0.1; n];
                r
            })
            .collect();
        let c = value_error_curve(&records, 0.99, ErrorKind::Absolute, GroundTruth::ReturnToGo, 1);
        prop_assert!(c.points.windows(2).all(|w| w[0].n >= w[1].n));
        prop_assert_eq!(c.points.len(), *lengths.iter().max().unwrap());
    }
}

#[test]
fn record_validation_catches_inconsistencies() {
    assert!(record(true, 4, 4).validate().is_ok());
    assert!(record(true, 3, 4).validate().is_err(), "shorter than optimal");
    let mut flag = record(true, 4, 4);
    flag.success = false;
    assert!(flag.validate().is_err());
    assert!(record(false, 4, 0).validate().is_err());
    let mut values = record(false, 4, 2);
    values.values = vec![0.0; 3];
    assert!(values.validate().is_err());
}

#[test]
fn return_to_go_closed_forms() {
    let (r, gamma, t) = (0.37, 0.93, 40);
    let g = return_to_go(&vec![r; t], gamma);
    assert!(close(g[0], r * (1.0 - gamma.powi(t as i32)) / (1.0 - gamma), 1e-10));
    let g = return_to_go(&[-0.01, -0.01, 5.0], 0.99);
    assert!(close(g[0], 4.8806, 1e-12));
    assert_eq!(return_to_go(&[1.0, 2.0, 3.0], 1.0), vec![6.0, 5.0, 3.0]);
}

#[test]
fn value_error_examples() {
    let mut r = record(true, 3, 3);
    r.values = return_to_go(&r.rewards, 0.99);
    let c = value_error_curve(&[r.clone()], 0.99, ErrorKind::Absolute, GroundTruth::ReturnToGo, 1);
    assert!(c.points.iter().all(|p| p.mean == 0.0 && p.std == 0.0));

    r.values = vec![0.0; 3];
    let c = value_error_curve(&[r.clone()], 0.99, ErrorKind::Absolute, GroundTruth::ReturnToGo, 1);
    let means: Vec<f64> = c.points.iter().map(|p| p.mean).collect();
    for (m, e) in means.iter().zip([4.8806, 4.94, 5.0]) {
        assert!(close(*m, e, 1e-12));
    }
    let sq = value_error_curve(&[r], 0.99, ErrorKind::Squared, GroundTruth::ReturnToGo, 1);
    assert!(close(sq.points[2].mean, 25.0, 1e-12));
}

#[test]
fn curve_truncates_below_minimum_samples() {
    let records: Vec<_> = (0..40)
        .map(|i| {
            let n = if i < 30 { 10 } else { 20 };
            let mut r = record(false, n, 1);
            r.values = vec![0.0; n];
            r
        })
        .collect();
    let c = value_error_curve(&records, 0.99, ErrorKind::Absolute, GroundTruth::ReturnToGo, MIN_CURVE_SAMPLES);
    assert_eq!(c.points.len(), 10);
    assert_eq!(c.points[9].n, 40);
    let c = value_error_curve(&records, 0.99, ErrorKind::Absolute, GroundTruth::ReturnToGo, 10);
    assert_eq!(c.points.len(), 20);
}

#[test]
fn curve_std_is_population_std() {
    let mk = |v: f64| {
        let mut r = record(false, 1, 1);
        r.values = vec![v];
        r
    };
    // Targets are -0.01; errors 1 and 3.
    let c = value_error_curve(&[mk(0.99), mk(2.99)], 0.99, ErrorKind::Absolute, GroundTruth::ReturnToGo, 1);
    assert!(close(c.points[0].mean, 2.0, 1e-12));
    assert!(close(c.points[0].std, 1.0, 1e-12));
    assert!(close(c.mean_from(0).unwrap(), 2.0, 1e-12));
    assert_eq!(c.mean_from(1), None);
}

#[test]
fn monte_carlo_targets_come_from_the_record() {
    let mut r = record(false, 2, 1);
    r.values = vec![1.0, 1.0];
    assert!(value_error_curve(&[r.clone()], 0.99, ErrorKind::Absolute, GroundTruth::MonteCarlo, 1)
        .points
        .is_empty());
    r.mc_returns = Some(vec![0.5, 2.0]);
    let c = value_error_curve(&[r], 0.99, ErrorKind::Absolute, GroundTruth::MonteCarlo, 1);
    assert_eq!(c.points.iter().map(|p| p.mean).collect::<Vec<_>>(), vec![0.5, 1.0]);
}

#[test]
fn paired_error_uses_steps_both_runs_reach() {
    let mk = |n: usize, v: f64| {
        let mut r = record(false, n, 1);
        r.values = vec![v; n];
        r
    };
    let a = vec![mk(12, 0.0), mk(15, 0.0)];
    let b = vec![mk(11, 0.0), mk(20, 0.0)];
    let p = paired_value_error(&a, &b, 0.99, 10, ErrorKind::Absolute).unwrap();
    assert_eq!(p.samples, 1 + 5);
    let mut other = b.clone();
    other[0].spec.room = RoomType::Bathroom;
    assert!(paired_value_error(&a, &other, 0.99, 10, ErrorKind::Absolute).is_err());
    assert!(paired_value_error(&a, &b[..1], 0.99, 10, ErrorKind::Absolute).is_err());
    assert!(paired_value_error(&a, &b, 0.99, 30, ErrorKind::Absolute).is_err());
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = record(true, 3, 2);
    r.values = vec![0.25, -1.5, 3.0];
    r.mc_returns = Some(vec![1.0, 2.0, 3.0]);
    let records = vec![r, record(false, 200, 9)];
    let path = dir.path().join("episodes.jsonl");
    write_records(&path, &records).unwrap();
    assert_eq!(read_records(&path).unwrap(), records);

    let curve = ValueErrorCurve {
        points: vec![
            CurvePoint {
                t: 0,
                mean: 0.5,
                std: 0.25,
                n: 40,
            },
            CurvePoint {
                t: 1,
                mean: 0.125,
                std: 0.0,
                n: 31,
            },
        ],
    };
    let path = dir.path().join("value_error.csv");
    write_value_error_csv(&path, &curve).unwrap();
    assert_eq!(read_value_error_csv(&path).unwrap(), curve);
    assert!(std::fs::read_to_string(&path).unwrap().starts_with(VALUE_ERROR_HEADER));

    let rows = vec![MetricsRow {
        variant: "A3C".into(),
        split: "test".into(),
        report: MetricsReport::from_records(&records),
    }];
    let path = dir.path().join("metrics.csv");
    write_metrics_csv(&path, &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], METRICS_HEADER);
    assert_eq!(lines[1], "A3C,test,2,0.500000,0.333333,0.000000,0.000000");
}

#[test]
fn malformed_curve_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "step,err\n0,1\n").unwrap();
    assert!(read_value_error_csv(&path).is_err());
}

// ---- runner ------------------------------------------------------------------

fn small_agent(variant: Variant, pool: &HousePool) -> Agent {
    let config = AgentConfig {
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
    };
    let views = pool.harvest_views(20, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0));
    let graph = Arc::new(crate::knowgraph::build_from_cooccurrence(views, pool.vocab(), 3));
    Agent::new(variant, config, Arc::clone(pool.vocab()), Some(graph)).unwrap()
}

fn test_pool() -> HousePool {
    HousePool::new(Arc::new(ObjectVocabulary::standard()), Split::Test, 2)
}

#[test]
fn evaluation_is_deterministic_and_agent_independent() {
    let pool = test_pool();
    let cfg = EvalConfig {
        episodes: 12,
        seed: 4,
        max_steps: 60,
        ..EvalConfig::default()
    };
    let a = small_agent(Variant::A3C, &pool);
    let g = small_agent(Variant::GveMaml, &pool);
    let pa = a.init_params(1);
    let first = evaluate(&a, &pa, &pool, &cfg).unwrap();
    assert_eq!(first, evaluate(&a, &pa, &pool, &cfg).unwrap());
    let other = evaluate(&g, &g.init_params(1), &pool, &cfg).unwrap();
    let random = evaluate_random(&pool, &cfg).unwrap();
    for ((x, y), z) in first.iter().zip(&other).zip(&random) {
        assert_eq!(x.spec, y.spec);
        assert_eq!(x.spec, z.spec);
        assert_eq!(x.optimal, z.optimal);
        x.validate().unwrap();
        z.validate().unwrap();
        assert_eq!(x.values.len(), x.steps);
        assert!(z.values.is_empty());
    }
    let reseeded = EvalConfig { seed: 5, ..cfg };
    assert_ne!(evaluate_random(&pool, &reseeded).unwrap()[0].spec, random[0].spec);
}

#[test]
fn zero_rate_adaptation_reproduces_plain_evaluation() {
    let pool = test_pool();
    let a = small_agent(Variant::GveMaml, &pool);
    let p = a.init_params(2);
    let plain = EvalConfig {
        episodes: 8,
        max_steps: 40,
        ..EvalConfig::default()
    };
    let adapted = EvalConfig {
        adapt: Some(AdaptSchedule {
            inner_lr: 0.0,
            interval: 3,
            max_updates: 4,
            grad_clip: 1.0,
        }),
        ..plain
    };
    assert_eq!(evaluate(&a, &p, &pool, &plain).unwrap(), evaluate(&a, &p, &pool, &adapted).unwrap());
}

#[test]
fn monte_carlo_targets_are_bounded_returns() {
    let pool = test_pool();
    let a = small_agent(Variant::A3C, &pool);
    let p = a.init_params(3);
    let cfg = EvalConfig {
        episodes: 3,
        max_steps: 15,
        mc_rollouts: 4,
        ..EvalConfig::default()
    };
    for r in evaluate(&a, &p, &pool, &cfg).unwrap() {
        let mc = r.mc_returns.unwrap();
        assert_eq!(mc.len(), r.steps);
        assert!(mc.iter().all(|g| (-0.15..=SUCCESS_REWARD).contains(g)));
    }
    let both = EvalConfig {
        adapt: Some(AdaptSchedule {
            inner_lr: 0.01,
            interval: 3,
            max_updates: 1,
            grad_clip: 1.0,
        }),
        ..cfg
    };
    assert!(matches!(evaluate(&a, &p, &pool, &both), Err(crate::Error::Config(_))));
}

#[test]
fn wrong_parameters_are_rejected() {
    let pool = test_pool();
    let a = small_agent(Variant::A3C, &pool);
    let g = small_agent(Variant::Gve, &pool);
    assert!(evaluate(&a, &g.init_params(0), &pool, &EvalConfig::default()).is_err());
}
