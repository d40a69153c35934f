use petbench_core::harness::Treatment;
use petbench_core::learners::ModelKind;
use petbench_core::tradeoff::{
    pareto_front, rank_by_dataset, scenario, scenario_presets, scenario_rank, PrivacyScale, ScenarioWeights,
    TradeoffPoint,
};
use proptest::prelude::*;

fn pt(treatment: Treatment, model: ModelKind, joules: f64, accuracy: f64) -> TradeoffPoint {
    let privacy = PrivacyScale::default().rank(treatment);
    TradeoffPoint { dataset: "d".into(), treatment, model, joules, accuracy, privacy }
}

fn oracle_front(points: &[TradeoffPoint]) -> Vec<usize> {
    (0..points.len()).filter(|&i| !points.iter().any(|q| q.dominates(&points[i]))).collect()
}

fn arb_points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<TradeoffPoint>> {
    // coarse grids so ties show up often
    prop::collection::vec((0u32..20, 0u32..20, 0u32..4), n).prop_map(|raw| {
        raw.into_iter()
            .map(|(j, a, p)| TradeoffPoint {
                dataset: "d".into(),
                treatment: Treatment::Benchmark,
                model: ModelKind::Knn,
                joules: f64::from(j) * 1.5,
                accuracy: f64::from(a) / 20.0,
                privacy: p,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn front_matches_quadratic_oracle(points in arb_points(200..201)) {
        prop_assert_eq!(pareto_front(&points), oracle_front(&points));
    }

    #[test]
    fn front_matches_oracle_on_small_sets(points in arb_points(1..30)) {
        let front = pareto_front(&points);
        prop_assert_eq!(&front, &oracle_front(&points));
        prop_assert!(!front.is_empty());
        for i in 0..points.len() {
            if front.binary_search(&i).is_err() {
                prop_assert!(front.iter().any(|&f| points[f].dominates(&points[i])));
            }
        }
    }

    #[test]
    fn monotone_rescaling_keeps_the_order(points in arb_points(2..40), w in (0.0f64..1.0, 0.0f64..1.0, 0.01f64..1.0)) {
        let w = ScenarioWeights::new(w.0, w.1, w.2).unwrap();
        let before = scenario_rank(&points, &w);
        // affine on each axis leaves min-max scores unchanged
        let scaled: Vec<TradeoffPoint> = points.iter().map(|p| TradeoffPoint {
            joules: 3.0 * p.joules + 7.0,
            accuracy: 0.5 * p.accuracy + 0.1,
            ..p.clone()
        }).collect();
        let after = scenario_rank(&scaled, &w);
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((a.score - b.score).abs() < 1e-9);
        }
        prop_assert_eq!(pareto_front(&points), pareto_front(&scaled));
    }

    #[test]
    fn scores_are_bounded_and_ranks_dense(points in arb_points(1..40)) {
        for s in scenario_presets() {
            let ranked = scenario_rank(&points, &s.weights());
            prop_assert_eq!(ranked.len(), points.len());
            for (i, r) in ranked.iter().enumerate() {
                prop_assert_eq!(r.rank, i + 1);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&r.score));
            }
            prop_assert!(ranked.windows(2).all(|w| w[0].score >= w[1].score));
        }
    }
}

#[test]
fn dominance_basics() {
    let a = pt(Treatment::KAnon(3), ModelKind::LogReg, 10.0, 0.8);
    let b = pt(Treatment::KAnon(3), ModelKind::Nn, 12.0, 0.8);
    assert!(a.dominates(&b));
    assert!(!b.dominates(&a));
    assert!(!a.dominates(&a));
    assert_eq!(pareto_front(&[a.clone()]), vec![0]);
    assert_eq!(pareto_front(&[b, a]), vec![1]);
    assert!(pareto_front(&[]).is_empty());
}

#[test]
fn presets() {
    let p = scenario_presets();
    assert_eq!(p.iter().map(|s| s.id).collect::<Vec<_>>(), vec![0, 1, 2]);
    let third = 1.0 / 3.0;
    assert_eq!(p[0].weights(), ScenarioWeights { accuracy: third, energy: third, privacy: third });
    assert_eq!(p[1].weights(), ScenarioWeights { accuracy: 1.0, energy: 0.0, privacy: 0.0 });
    assert_eq!(p[2].weights(), ScenarioWeights { accuracy: 0.0, energy: 1.0, privacy: 0.0 });
    assert!(scenario(3).is_none());
    assert!(ScenarioWeights::new(0.0, 0.0, 0.0).is_err());
    assert!(ScenarioWeights::new(-1.0, 2.0, 0.0).is_err());
    assert!(ScenarioWeights::new(f64::NAN, 1.0, 0.0).is_err());
}

#[test]
fn accuracy_only_picks_the_argmax() {
    let points = vec![
        pt(Treatment::Benchmark, ModelKind::Knn, 5.0, 0.70),
        pt(Treatment::KAnon(10), ModelKind::LogReg, 50.0, 0.91),
        pt(Treatment::Synthetic(1), ModelKind::Nn, 1.0, 0.60),
    ];
    let ranked = scenario_rank(&points, &scenario(1).unwrap().weights());
    assert_eq!(ranked[0].point, points[1]);
}

#[test]
fn identical_points_score_equally() {
    let p = pt(Treatment::KAnon(27), ModelKind::Knn, 4.0, 0.8);
    let q = TradeoffPoint { model: ModelKind::Nn, ..p.clone() };
    let ranked = scenario_rank(&[q, p], &scenario(0).unwrap().weights());
    assert_eq!(ranked[0].score, ranked[1].score);
    // deterministic tie-break by model name
    assert_eq!(ranked[0].point.model, ModelKind::Knn);
    assert!(ranked.iter().all(|r| r.on_front));
}

#[test]
fn privacy_scale() {
    let s = PrivacyScale::default();
    assert_eq!(s.rank(Treatment::Benchmark), 0);
    assert_eq!(s.rank(Treatment::KAnon(3)), 1);
    assert_eq!(s.rank(Treatment::KAnon(12)), 2);
    assert_eq!(s.rank(Treatment::KAnon(2)), 1);
    assert_eq!(s.rank(Treatment::KAnon(100)), 3);
    assert_eq!(s.rank(Treatment::Synthetic(0)), 3);
    assert!(PrivacyScale::from_json(r#"{"benchmark": 5}"#).is_err());
    let custom = PrivacyScale::from_json(r#"{"benchmark": 0, "k_anonymity": {"5": 2}, "synthetic": 4}"#).unwrap();
    assert_eq!(custom.rank(Treatment::KAnon(7)), 2);
}

/// Benchmark joules times (1 + deviation), reference accuracy.
fn reference_points(dataset: &str, rows: &[(Treatment, [(f64, f64); 3])], bench: [f64; 3]) -> Vec<TradeoffPoint> {
    let models = [ModelKind::Knn, ModelKind::LogReg, ModelKind::Nn];
    rows.iter()
        .flat_map(|(t, cells)| {
            models.iter().zip(cells).zip(bench).map(move |((m, (dev, acc)), b)| TradeoffPoint {
                dataset: dataset.into(),
                treatment: *t,
                model: *m,
                joules: b * (1.0 + dev / 100.0),
                accuracy: *acc,
                privacy: PrivacyScale::default().rank(*t),
            })
        })
        .collect()
}

#[test]
fn energy_scenario_picks_synthetic_logreg_over_nn() {
    let student = reference_points(
        "student_performance",
        &[(Treatment::Synthetic(0), [(2.0, 0.728), (3.0, 0.756), (-2.0, 0.755)])],
        [2.16, 2.95, 61.20],
    );
    let lr = &student[1];
    assert!((lr.joules - 3.04).abs() < 0.01);
    assert!((student[2].joules - 59.98).abs() < 0.01);
    let ranked = scenario_rank(&student, &scenario(2).unwrap().weights());
    let pos = |m| ranked.iter().position(|r| r.point.model == m).unwrap();
    assert!(pos(ModelKind::LogReg) < pos(ModelKind::Nn));
}

#[test]
fn energy_scenario_on_census_prefers_anonymity() {
    let census = reference_points(
        "census_income",
        &[
            (Treatment::Benchmark, [(0.0, 0.820), (0.0, 0.846), (0.0, 0.846)]),
            (Treatment::KAnon(3), [(-67.0, 0.828), (-46.0, 0.848), (-42.0, 0.847)]),
            (Treatment::KAnon(10), [(-68.0, 0.832), (-62.0, 0.842), (-47.0, 0.842)]),
            (Treatment::KAnon(27), [(-73.0, 0.828), (-78.0, 0.837), (-51.0, 0.837)]),
            (Treatment::Synthetic(0), [(-4.0, 0.802), (-10.0, 0.828), (0.0, 0.828)]),
        ],
        [329.33, 73.70, 157.59],
    );
    let ranked = rank_by_dataset(&census, &scenario(2).unwrap().weights());
    assert_eq!(ranked[0].point.treatment, Treatment::KAnon(27));
    assert_eq!(ranked[0].point.model, ModelKind::LogReg);
    assert!(ranked[0].on_front);
    // benchmark rows are all dominated by some k-anonymity row
    let front = pareto_front(&census);
    assert!(front.iter().all(|&i| census[i].treatment != Treatment::Benchmark));
}
