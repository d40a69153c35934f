use petbench_core::data::{Column, ColumnData, DataTable};
use petbench_core::synthesis::{fit, sample, spearman_matrix, utility_report, CopulaModel, Marginal, SynthesisError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn correlated(n: usize, seed: u64) -> DataTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut age = Vec::new();
    let mut hours = Vec::new();
    let mut band = Vec::new();
    let mut status = Vec::new();
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let e: f64 = StandardNormal.sample(&mut rng);
        age.push(Some((40.0 + 12.0 * z).round()));
        hours.push(Some(35.0 + 5.0 * (0.6 * z + 0.8 * e)));
        band.push(if z + 0.5 * e > 0.7 { "high" } else if z > -0.5 { "mid" } else { "low" });
        status.push(if rng.random::<f64>() < 0.2 { None } else if rng.random::<f64>() < 0.5 { Some("a") } else { Some("b") });
    }
    DataTable::new(vec![
        Column::numeric("age", age),
        Column::numeric("hours", hours),
        Column::categorical("band", band.into_iter().map(Some)),
        Column::categorical("status", status),
    ])
    .unwrap()
}

#[test]
fn constant_column() {
    let t = DataTable::new(vec![Column::categorical("c", vec![Some("x"); 10])]).unwrap();
    let m = fit(&t).unwrap();
    assert_eq!(m.marginals[0], Marginal::Categorical { categories: vec![Some("x".into())], frequencies: vec![1.0] });
    let s = sample(&m, 25, 3).unwrap();
    assert_eq!(s.n_rows(), 25);
    assert!((0..25).all(|r| s.row_key(r) == t.row_key(0)));

    let t = DataTable::new(vec![Column::numeric("v", vec![Some(7.5); 4])]).unwrap();
    let s = sample(&fit(&t).unwrap(), 10, 1).unwrap();
    match &s.column("v").unwrap().data {
        ColumnData::Numeric(v) => assert!(v.iter().all(|x| *x == Some(7.5))),
        _ => panic!("kind changed"),
    }
}

#[test]
fn perfectly_rank_correlated_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
    let t = DataTable::new(vec![
        Column::numeric("x", x.iter().map(|&v| Some(v)).collect()),
        Column::numeric("y", x.iter().map(|&v| Some(2.0 * v)).collect()),
    ])
    .unwrap();
    let m = fit(&t).unwrap();
    assert!((m.correlation[1] - 1.0).abs() < 0.02, "{}", m.correlation[1]);
}

#[test]
fn independent_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = DataTable::new(vec![
        Column::numeric("x", (0..1000).map(|_| Some(rng.random::<f64>())).collect()),
        Column::numeric("y", (0..1000).map(|_| Some(rng.random::<f64>())).collect()),
    ])
    .unwrap();
    assert!(fit(&t).unwrap().correlation[1].abs() < 0.1);
}

#[test]
fn sample_preserves_spearman_and_is_deterministic() {
    let t = correlated(2000, 5);
    let m = fit(&t).unwrap();
    let s = sample(&m, t.n_rows(), 9).unwrap();
    let (a, b) = (spearman_matrix(&t), spearman_matrix(&s));
    // age vs hours
    assert!((a[1] - b[1]).abs() < 0.1, "{} vs {}", a[1], b[1]);
    assert_eq!(s, sample(&m, t.n_rows(), 9).unwrap());
    assert_ne!(s, sample(&m, t.n_rows(), 10).unwrap());
}

#[test]
fn marginals_and_correlations_hold_at_five_thousand() {
    let t = correlated(5000, 6);
    let m = fit(&t).unwrap();
    let s = sample(&m, 5000, 1).unwrap();
    let r = utility_report(&t, &s).unwrap();
    assert!(r.max_categorical_tv() <= 0.05, "{r:?}");
    assert!(r.max_spearman_deviation <= 0.1, "{r:?}");
    assert!(r.columns.iter().all(|c| (0.0..=1.0).contains(&c.distance)));
    assert!((0.0..=1.0).contains(&r.exact_match_rate));
    // missing cells are sampled at about their original share
    let missing = (0..s.n_rows()).filter(|&i| s.column("status").unwrap().data.is_missing(i)).count();
    assert!((missing as f64 / 5000.0 - 0.2).abs() < 0.03);
}

#[test]
fn utility_identity_and_disjoint() {
    let t = correlated(300, 7);
    let r = utility_report(&t, &t).unwrap();
    assert_eq!(r.exact_match_rate, 1.0);
    assert!(r.columns.iter().all(|c| c.distance == 0.0));
    assert_eq!(r.max_spearman_deviation, 0.0);

    let a = DataTable::new(vec![Column::categorical("c", [Some("x"), Some("y")])]).unwrap();
    let b = DataTable::new(vec![Column::categorical("c", [Some("p"), Some("q")])]).unwrap();
    let r = utility_report(&a, &b).unwrap();
    assert_eq!(r.columns[0].distance, 1.0);
    assert_eq!(r.exact_match_rate, 0.0);

    let other = DataTable::new(vec![Column::categorical("d", [Some("p")])]).unwrap();
    assert!(matches!(utility_report(&a, &other), Err(SynthesisError::SchemaMismatch(_))));
}

#[test]
fn model_round_trips_through_json() {
    let m = fit(&correlated(100, 8)).unwrap();
    let back = CopulaModel::from_json(&m.to_json()).unwrap();
    assert_eq!(back, m);
    assert_eq!(sample(&back, 50, 2).unwrap(), sample(&m, 50, 2).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fitted_model_invariants(rows in prop::collection::vec((0u8..4, -100i32..100, prop::option::of(0u8..3)), 2..80)) {
        let t = DataTable::new(vec![
            Column::categorical("c", rows.iter().map(|r| format!("v{}", r.0)).collect::<Vec<_>>().iter().map(|s| Some(s.as_str()))),
            Column::numeric("n", rows.iter().map(|r| Some(f64::from(r.1))).collect()),
            Column::numeric("m", rows.iter().map(|r| r.2.map(f64::from)).collect()),
        ]).unwrap();
        let m = fit(&t).unwrap();
        for marginal in &m.marginals {
            match marginal {
                Marginal::Categorical { frequencies, .. } => prop_assert!((frequencies.iter().sum::<f64>() - 1.0).abs() < 1e-9),
                Marginal::Numeric { quantiles, .. } => prop_assert!(quantiles.windows(2).all(|w| w[0] <= w[1])),
            }
        }
        let c = m.correlation_matrix();
        for i in 0..3 {
            prop_assert_eq!(c[(i, i)], 1.0);
        }
        let eig = nalgebra::SymmetricEigen::new(c);
        prop_assert!(eig.eigenvalues.iter().all(|&l| l > -1e-9));
    }
}
