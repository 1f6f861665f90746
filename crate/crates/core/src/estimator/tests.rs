use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use super::*;
use crate::features::{FeatureKind, FeatureMap, FeatureSpec};
use crate::generators::erdos_renyi;
use crate::graph::fixtures::{generic_features, set};
use crate::graph::{Dag, NodeSet};
use crate::network::fixtures::small;
use crate::rng;
use crate::sem::{simulate, true_tau, SemConfig};

fn frac() -> FeatureSpec {
    FeatureSpec::single(FeatureKind::FracTreatedParents)
}

fn er_map(n: usize, seed: u64) -> FeatureMap {
    let net = erdos_renyi(n, 10.0 / n as f64, &mut rng::stream(seed, &[]));
    FeatureMap::new(&net, &frac()).unwrap()
}

fn example_data(n: usize, seed: u64) -> (FeatureMap, crate::sem::Dataset, SemConfig) {
    let cfg = SemConfig::example(vec![2.0, 1.0], vec![0.4, 1.1]);
    let map = er_map(n, seed);
    let ds = simulate(&cfg, &map, &mut rng::stream(seed, &[1])).unwrap();
    (map, ds, cfg)
}

#[test]
fn design_layouts() {
    let (_, ds, _) = example_data(100, 1);
    let full = build_design(&ds, &RegressorSpec::FullyAdjusted(vec!["C2".into()])).unwrap();
    assert_eq!(full.columns, ["intercept", "X1", "W", "O1", "C2"]);
    assert_eq!(full.alpha0_columns(), [Some(0), Some(1)]);
    assert_eq!(full.alpha1_columns(), [Some(2), Some(3)]);
    let naive = build_design(&ds, &RegressorSpec::Naive).unwrap();
    assert_eq!(naive.columns, ["intercept", "W"]);
    assert_eq!(naive.alpha1_columns(), [Some(1), None]);
    let conf = build_design(&ds, &RegressorSpec::ConfoundingAdjusted(vec!["C2".into()])).unwrap();
    assert_eq!(conf.columns, ["intercept", "W", "C2"]);

    let mut two = ds.clone();
    two.x = DMatrix::from_fn(100, 2, |i, k| ds.x[(i, 0)] * (k + 1) as f64);
    two.o = crate::features::interactions(&two.x, &two.w);
    let inter = build_design(&two, &RegressorSpec::InterferenceAdjusted).unwrap();
    assert_eq!(inter.columns.len(), 6);

    assert!(build_design(&ds, &RegressorSpec::FullyAdjusted(vec!["C9".into()])).is_err());
    assert!(build_design(&ds, &RegressorSpec::FullyAdjusted(vec!["W".into()])).is_err());
    assert!(build_design(
        &ds,
        &RegressorSpec::FullyAdjusted(vec!["C2".into(), "C2".into()])
    )
    .is_err());
}

#[test]
fn ols_recovers_noiseless_line() {
    let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.37 - 2.0).collect();
    let m = DMatrix::from_fn(20, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let y = DVector::from_fn(20, |i, _| 2.0 + 3.0 * x[i]);
    let fit = ols_fit(&m, &y).unwrap();
    assert!((fit.coef[0] - 2.0).abs() < 1e-10 && (fit.coef[1] - 3.0).abs() < 1e-10);
    assert!(fit.residuals.amax() < 1e-10);
}

#[test]
fn duplicated_column_is_singular_and_named() {
    let (_, mut ds, _) = example_data(200, 2);
    let c2 = ds.covariate("C2").unwrap();
    ds.covariate_names.push("C2copy".into());
    let k = ds.covariates.ncols();
    ds.covariates = ds.covariates.clone().insert_column(k, 0.0);
    for (i, v) in c2.iter().enumerate() {
        ds.covariates[(i, k)] = *v;
    }
    let w = Weights::assumed_exposure(1, 0.7, 0.2).unwrap();
    let err = estimate(
        &ds,
        &RegressorSpec::FullyAdjusted(vec!["C2".into(), "C2copy".into()]),
        &w,
        0.95,
    )
    .unwrap_err();
    match err {
        Error::Singular { columns, condition } => {
            assert!(condition > CONDITION_LIMIT);
            assert_eq!(columns, ["C2", "C2copy"]);
        }
        other => panic!("{other}"),
    }
}

#[test]
fn tau_from_coefficients() {
    let w = closed_form_weights(&FeatureMap::new(&small(), &frac()).unwrap(), 1.0, 0.0).unwrap();
    assert!((estimate_tau(&[2.0, 1.0], &[0.4, 1.1], &w).unwrap() - 2.5).abs() < 1e-12);
    let w = closed_form_weights(&FeatureMap::new(&small(), &frac()).unwrap(), 0.7, 0.2).unwrap();
    assert!((estimate_tau(&[2.0, 1.0], &[0.4, 1.1], &w).unwrap() - 1.195).abs() < 1e-12);
    let mut zero = w.clone();
    zero.omega0 = vec![0.0; 2];
    zero.omega1 = vec![0.0; 2];
    assert_eq!(estimate_tau(&[2.0, 1.0], &[0.4, 1.1], &zero).unwrap(), 0.0);
    // alpha1 = 0 leaves (omega0 + omega1) . alpha0
    let a0 = [0.3, -1.7];
    let expect: f64 = (0..2).map(|k| (w.omega0[k] + w.omega1[k]) * a0[k]).sum();
    assert!((estimate_tau(&a0, &[0.0, 0.0], &w).unwrap() - expect).abs() < 1e-12);
    assert!(estimate_tau(&[1.0], &[1.0, 2.0], &w).is_err());
}

#[test]
fn confidence_intervals() {
    let (lo, hi) = confidence_interval(1.0, 4.0, 400, 0.95).unwrap();
    assert!((lo - 0.8040).abs() < 5e-5 && (hi - 1.1960).abs() < 5e-5);
    assert_eq!(confidence_interval(1.0, 0.0, 10, 0.95).unwrap(), (1.0, 1.0));
    let (lo99, hi99) = confidence_interval(1.0, 4.0, 400, 0.99).unwrap();
    assert!(lo99 < lo && hi99 > hi);
    assert!(confidence_interval(1.0, 4.0, 400, 1.0).is_err());
}

#[test]
fn sandwich_degenerate_cases() {
    let m = DMatrix::from_fn(10, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
    let v = DVector::from_vec(vec![0.5, 1.0]);
    assert_eq!(sandwich_variance(&m, &DVector::zeros(10), &v).unwrap(), 0.0);
    let e = DVector::from_fn(10, |i, _| (i as f64).sin());
    assert_eq!(sandwich_variance(&m, &e, &DVector::zeros(2)).unwrap(), 0.0);
}

/// Robust covariance through explicit inverses.
fn textbook_robust(m: &DMatrix<f64>, e: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let n = m.nrows() as f64;
    let a_inv = (m.transpose() * m / n).try_inverse().unwrap();
    let mut b = DMatrix::zeros(m.ncols(), m.ncols());
    for i in 0..m.nrows() {
        let r = m.row(i).transpose();
        b += &r * r.transpose() * e[i] * e[i];
    }
    b /= n;
    (v.transpose() * &a_inv * b * &a_inv * v)[(0, 0)]
}

#[test]
fn sandwich_matches_explicit_inverse() {
    let (map, ds, _) = example_data(500, 3);
    let w = closed_form_weights(&map, 0.7, 0.2).unwrap();
    let design = build_design(&ds, &RegressorSpec::FullyAdjusted(vec!["C2".into()])).unwrap();
    let report = estimate_design(&design, &w, 0.95).unwrap();
    let e = &design.response - &design.matrix * DVector::from_vec(report.alpha_full_hat.clone());
    let v = contrast(&design, &w).unwrap();
    let expect = textbook_robust(&design.matrix, &e, &v);
    assert!((report.sigma2_hat / expect - 1.0).abs() < 1e-8);
}

#[test]
fn sandwich_tracks_sampling_variance_on_iid_data() {
    // y = 1 + 2 w + 0.5 z + e with independent regressors and heteroskedastic noise.
    let n = 2000;
    let reps = 400;
    let v = DVector::from_vec(vec![0.0, 1.0, 0.0]);
    let mut r = rng::stream(5, &[]);
    let (mut est, mut var_hat) = (Vec::new(), Vec::new());
    for _ in 0..reps {
        use rand::Rng;
        let m = DMatrix::from_fn(n, 3, |_, j| match j {
            0 => 1.0,
            1 => f64::from(u8::from(r.random_bool(0.4))),
            _ => r.random_range(-1.0..1.0),
        });
        let y = DVector::from_fn(n, |i, _| {
            let sd = 0.5 + m[(i, 1)];
            1.0 + 2.0 * m[(i, 1)] + 0.5 * m[(i, 2)] + sd * r.random_range(-1.7..1.7)
        });
        let fit = ols_fit(&m, &y).unwrap();
        est.push(v.dot(&fit.coef));
        var_hat.push(sandwich_variance(&m, &fit.residuals, &v).unwrap() / n as f64);
    }
    let (_, empirical) = crate::sem::mean_var(&est);
    let mean_hat = var_hat.iter().sum::<f64>() / reps as f64;
    assert!(
        (mean_hat / empirical - 1.0).abs() < 0.15,
        "{mean_hat} vs {empirical}"
    );
}

#[test]
fn scaling_response_scales_estimate() {
    let (map, ds, _) = example_data(300, 4);
    let w = closed_form_weights(&map, 0.7, 0.2).unwrap();
    let spec = RegressorSpec::FullyAdjusted(vec!["C2".into()]);
    let base = estimate(&ds, &spec, &w, 0.95).unwrap();
    let mut scaled = ds.clone();
    scaled.y.iter_mut().for_each(|y| *y *= -3.0);
    let other = estimate(&scaled, &spec, &w, 0.95).unwrap();
    assert!((other.tau_hat + 3.0 * base.tau_hat).abs() < 1e-9);
    assert!((other.sigma2_hat - 9.0 * base.sigma2_hat).abs() < 1e-9 * base.sigma2_hat.max(1.0));
}

#[test]
fn naive_estimate_is_scaled_treatment_coefficient() {
    let (map, ds, _) = example_data(300, 6);
    let w = closed_form_weights(&map, 0.7, 0.2).unwrap();
    let r = estimate(&ds, &RegressorSpec::Naive, &w, 0.95).unwrap();
    assert!((r.tau_hat - 0.5 * r.alpha_full_hat[1]).abs() < 1e-12);
    assert!(r.ci.0 <= r.tau_hat && r.tau_hat <= r.ci.1);
}

#[test]
fn equal_policies_give_zero() {
    let (map, ds, _) = example_data(300, 7);
    let w = closed_form_weights(&map, 0.4, 0.4).unwrap();
    for variant in Variant::ALL {
        let r = estimate(&ds, &variant.with_adjustment(&["C2".into()]), &w, 0.95).unwrap();
        assert_eq!(r.tau_hat, 0.0);
        assert_eq!(r.sigma2_hat, 0.0);
    }
}

#[test]
fn adjustment_selection_with_hidden_c1() {
    let (map, ds, cfg) = example_data(4800, 8);
    let g = generic_features();
    let opts = AdjustOptions {
        unobserved: set(&["C1"]),
        ..AdjustOptions::default()
    };
    let r = adjust_and_estimate(&ds, &g, Some(&map), 0.7, 0.2, &opts).unwrap();
    let sel = r.selection.as_ref().unwrap();
    assert_eq!(sel.chosen, set(&["C2"]));
    assert_eq!(sel.valid_sets, vec![set(&["C2"]), set(&["C2", "C3"])]);
    let truth = true_tau(&cfg, &closed_form_weights(&map, 0.7, 0.2).unwrap()).unwrap();
    assert!((truth - 1.195).abs() < 1e-3);
    assert!(
        (r.tau_hat - truth).abs() < 4.0 * r.std_error,
        "{} vs {truth}",
        r.tau_hat
    );
    assert!(r.diagnostics.max_degree.is_some());
}

#[test]
fn identifiability_failures() {
    let (map, ds, _) = example_data(200, 9);
    let g = generic_features();
    let opts = AdjustOptions {
        unobserved: set(&["C1", "C2"]),
        ..AdjustOptions::default()
    };
    let err = adjust_and_estimate(&ds, &g, Some(&map), 0.7, 0.2, &opts).unwrap_err();
    assert_eq!(err.class(), crate::error::ErrorClass::Identifiability);
    let opts = AdjustOptions {
        adjust: AdjustChoice::Explicit(set(&["C3"])),
        ..AdjustOptions::default()
    };
    let err = adjust_and_estimate(&ds, &g, Some(&map), 0.7, 0.2, &opts).unwrap_err();
    assert!(matches!(err, Error::Identifiability(_)));
}

#[test]
fn unconfounded_graph_selects_empty_set() {
    let (map, ds, _) = example_data(500, 10);
    let g = generic_features();
    let text = g
        .to_text()
        .replace("C2 -> W\n", "")
        .replace("C3 -> W\n", "");
    let g: Dag = text.parse().unwrap();
    let r = adjust_and_estimate(&ds, &g, Some(&map), 0.7, 0.2, &AdjustOptions::default()).unwrap();
    assert_eq!(r.selection.as_ref().unwrap().chosen, NodeSet::new());
    let w = closed_form_weights(&map, 0.7, 0.2).unwrap();
    let plain = estimate(&ds, &RegressorSpec::InterferenceAdjusted, &w, 0.95).unwrap();
    assert_eq!(plain.tau_hat, r.tau_hat);
    assert_eq!(plain.sigma2_hat, r.sigma2_hat);
}

fn transformed(w: &Weights, a: f64, b: f64) -> Weights {
    let mut t = w.clone();
    t.omega0[1] = a * w.omega0[1] + b * w.omega0[0];
    t.omega1[1] = a * w.omega1[1] + b * w.omega1[0];
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn affine_feature_transform_leaves_estimate_unchanged(
        a in prop_oneof![-5.0f64..-0.2, 0.2f64..5.0],
        b in -3.0f64..3.0,
        seed in 0u64..1000,
    ) {
        let (map, ds, _) = example_data(400, seed);
        let w = closed_form_weights(&map, 0.7, 0.2).unwrap();
        let spec = RegressorSpec::FullyAdjusted(vec!["C2".into()]);
        let base = estimate(&ds, &spec, &w, 0.95).unwrap();
        let mut t = ds.clone();
        t.x = ds.x.map(|v| a * v + b);
        t.o = crate::features::interactions(&t.x, &t.w);
        let other = estimate(&t, &spec, &transformed(&w, a, b), 0.95).unwrap();
        prop_assert!((base.tau_hat - other.tau_hat).abs() < 1e-8);
    }

    #[test]
    fn sandwich_ignores_unit_order(seed in 0u64..1000) {
        let (map, ds, _) = example_data(150, seed);
        let w = closed_form_weights(&map, 0.7, 0.2).unwrap();
        let d = build_design(&ds, &RegressorSpec::FullyAdjusted(vec!["C2".into()])).unwrap();
        let base = estimate_design(&d, &w, 0.95).unwrap();
        let n = d.n_rows();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + seed as usize) % n).collect();
        let mut shuffled = d.clone();
        shuffled.matrix = DMatrix::from_fn(n, d.matrix.ncols(), |i, j| d.matrix[(perm[i], j)]);
        shuffled.response = DVector::from_fn(n, |i, _| d.response[perm[i]]);
        let other = estimate_design(&shuffled, &w, 0.95).unwrap();
        prop_assert!((base.sigma2_hat - other.sigma2_hat).abs() <= 1e-9 * base.sigma2_hat.abs().max(1.0));
    }
}
