use super::*;
use crate::data::{CellOutcome, Covariates};
use crate::nuisance::Formula;
use crate::rng;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn random_cell(seed: u64, n: usize, rc: bool) -> CellData {
    let mut r = rng::stream(seed, &[]);
    let x1: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
    let x2: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
    let treated: Vec<bool> = x1
        .iter()
        .map(|&v| r.random::<f64>() < crate::nuisance::expit(0.5 * v))
        .collect();
    let post: Vec<bool> = (0..n).map(|_| r.random::<bool>()).collect();
    // exposure moves treatment only after exposure in the RC layout
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let on = treated[i] && (!rc || post[i]);
            f64::from(u8::from(r.random::<f64>() < if on { 0.7 } else { 0.2 }))
        })
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| x1[i] - 0.5 * x2[i] + d[i] + r.sample::<f64, _>(StandardNormal))
        .collect();
    let outcome = if rc {
        CellOutcome::Rc { y, d, post }
    } else {
        CellOutcome::Panel { dy: y, dd: d }
    };
    CellData {
        e: 2,
        t: 2,
        kind: ControlKind::NeverExposed,
        n_total: n + 7,
        rows: (3..n + 3).collect(),
        treated,
        covariates: Covariates::new(vec!["x1".into(), "x2".into()], vec![x1, x2]).unwrap(),
        outcome,
    }
}

fn cfg(estimator: Estimator, spec: ModelSpec) -> EstimatorConfig {
    let mut c = EstimatorConfig::new(estimator, ControlKind::NeverExposed, spec);
    c.weak_threshold = 0.0;
    c
}

fn linear() -> ModelSpec {
    ModelSpec::new("x1 + x2".parse().unwrap(), "x1 + x2".parse().unwrap()).unwrap()
}

#[test]
fn identical_outcome_and_treatment_give_one() {
    let mut c = random_cell(1, 200, false);
    if let CellOutcome::Panel { dy, dd } = &mut c.outcome {
        *dy = dd.iter().map(|v| v + 0.0).collect();
        dd[0] = 1.0;
        dy[0] = 1.0;
    }
    let est = estimate_on_cell(&c, &cfg(Estimator::Dr, linear())).unwrap();
    assert!((est.tau - 1.0).abs() < 1e-12);
    let mut c = random_cell(2, 200, true);
    if let CellOutcome::Rc { y, d, .. } = &mut c.outcome {
        *y = d.clone();
    }
    let est = estimate_on_cell(&c, &cfg(Estimator::Dr, linear())).unwrap();
    assert!((est.tau - 1.0).abs() < 1e-12);
}

#[test]
fn zero_outcome_gives_zero() {
    let mut c = random_cell(3, 150, false);
    if let CellOutcome::Panel { dy, .. } = &mut c.outcome {
        dy.iter_mut().for_each(|v| *v = 0.0);
    }
    let est = estimate_on_cell(&c, &cfg(Estimator::Dr, linear())).unwrap();
    assert!(est.tau.abs() < 1e-12);
}

#[test]
fn constant_models_reduce_to_wald_did() {
    let c = random_cell(4, 300, false);
    let est = estimate_on_cell(&c, &cfg(Estimator::Dr, ModelSpec::constant())).unwrap();
    let CellOutcome::Panel { dy, dd } = &c.outcome else {
        unreachable!()
    };
    let group_mean = |v: &[f64], z: bool| {
        let sel: Vec<f64> = v
            .iter()
            .zip(&c.treated)
            .filter(|(_, &t)| t == z)
            .map(|(x, _)| *x)
            .collect();
        sel.iter().sum::<f64>() / sel.len() as f64
    };
    let wald = (group_mean(dy, true) - group_mean(dy, false))
        / (group_mean(dd, true) - group_mean(dd, false));
    assert!((est.tau - wald).abs() < 1e-12);
}

#[test]
fn constant_mean_functions_have_no_kappa() {
    let c = random_cell(5, 300, true);
    let est = estimate_on_cell(&c, &cfg(Estimator::Dr, ModelSpec::constant())).unwrap();
    assert!(est.diagnostics.kappa_y.unwrap().abs() < 1e-14);
    assert!(est.diagnostics.kappa_d.unwrap().abs() < 1e-14);
}

#[test]
fn ipws_equals_ipw_with_constant_propensity() {
    let c = random_cell(6, 300, false);
    let spec = ModelSpec::new(Formula::constant(), "x1 + x2".parse().unwrap()).unwrap();
    let a = estimate_on_cell(&c, &cfg(Estimator::Ipw, spec.clone())).unwrap();
    let b = estimate_on_cell(&c, &cfg(Estimator::Ipws, spec)).unwrap();
    assert!((a.tau - b.tau).abs() < 1e-10);
}

#[test]
fn weak_first_stage_is_an_error() {
    let mut c = random_cell(7, 100, false);
    if let CellOutcome::Panel { dd, .. } = &mut c.outcome {
        dd.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut conf = cfg(Estimator::Dr, linear());
    conf.weak_threshold = 1e-3;
    assert!(matches!(
        estimate_on_cell(&c, &conf),
        Err(IdidError::WeakFirstStage { .. })
    ));
}

#[test]
fn scale_equivariance() {
    let c = random_cell(8, 250, false);
    let mut scaled = c.clone();
    if let CellOutcome::Panel { dy, .. } = &mut scaled.outcome {
        dy.iter_mut().for_each(|v| *v *= -3.0);
    }
    let a = estimate_on_cell(&c, &cfg(Estimator::Dr, linear())).unwrap();
    let b = estimate_on_cell(&scaled, &cfg(Estimator::Dr, linear())).unwrap();
    assert!((b.tau + 3.0 * a.tau).abs() < 1e-10);
    assert!((b.se - 3.0 * a.se).abs() < 1e-10);
}

#[test]
fn dml_reports_both_standard_errors() {
    let c = random_cell(9, 400, true);
    let est = estimate_on_cell(&c, &cfg(Estimator::Dml, linear())).unwrap();
    assert_eq!(est.diagnostics.folds, 5);
    assert!(est.diagnostics.se_adjusted.unwrap() > 0.0 && est.se > 0.0);
}

#[test]
fn remainder_proxies_are_finite() {
    let c = random_cell(10, 400, true);
    let conf = cfg(Estimator::Dr, linear());
    let fit = fit_nuisances(&c, &conf, 1).unwrap();
    let rep = remainder_diagnostics(&c, &fit, &conf.spec, 1).unwrap();
    assert!(rep.product.is_finite() && rep.product >= 0.0);
    assert!(rep.weight_gap.is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dr_influence_function_has_zero_mean(seed: u64, rc: bool, n in 60usize..200) {
        let c = random_cell(seed, n, rc);
        let est = estimate_on_cell(&c, &cfg(Estimator::Dr, linear())).unwrap();
        let m = est.if_values.iter().sum::<f64>() / est.if_values.len() as f64;
        prop_assert!(m.abs() < 1e-10);
        let md = est.den_if.iter().sum::<f64>() / est.den_if.len() as f64;
        prop_assert!(md.abs() < 1e-10);
        prop_assert!(est.if_values[..3].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dml_with_one_fold_is_dr(seed: u64, rc: bool, n in 60usize..200) {
        let c = random_cell(seed, n, rc);
        let dr = estimate_on_cell(&c, &cfg(Estimator::Dr, linear())).unwrap();
        let mut conf = cfg(Estimator::Dml, linear());
        conf.folds = 1;
        let dml = estimate_on_cell(&c, &conf).unwrap();
        prop_assert!((dr.tau - dml.tau).abs() < 1e-10);
        prop_assert!((dr.den - dml.den).abs() < 1e-10);
        prop_assert!((dr.se - dml.diagnostics.se_adjusted.unwrap()).abs() < 1e-10);
    }

    #[test]
    fn estimators_are_deterministic(seed: u64, rc: bool) {
        let c = random_cell(seed, 120, rc);
        for est in Estimator::ALL {
            let conf = cfg(est, linear());
            prop_assert_eq!(estimate_on_cell(&c, &conf).ok(), estimate_on_cell(&c, &conf).ok());
        }
    }
}
