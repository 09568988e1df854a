//! Logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};

use super::ols::{independent_columns, submatrix};
use crate::error::{IdidError, Result};

const MAX_ITER: usize = 100;
const STEP_TOL: f64 = 1e-8;
/// Linear predictors beyond this magnitude mean the classes are (quasi-)separated.
const ETA_CAP: f64 = 30.0;

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    pub dropped: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub separation: bool,
}

impl LogisticFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let b = DVector::from_column_slice(&self.coef);
        (x * b).iter().map(|&eta| expit(eta)).collect()
    }
}

fn log_lik(eta: &DVector<f64>, z: &[f64]) -> f64 {
    eta.iter()
        .zip(z)
        .map(|(&e, &zi)| {
            // log(1 + exp(e)) computed stably
            let softplus = if e > 0.0 {
                e + (-e).exp().ln_1p()
            } else {
                e.exp().ln_1p()
            };
            zi * e - softplus
        })
        .sum()
}

/// Maximum-likelihood logit of `z[rows]` on `x[rows, ·]`.
pub fn fit_logistic(x: &DMatrix<f64>, z: &[bool], rows: &[usize]) -> Result<LogisticFit> {
    let n1 = rows.iter().filter(|&&i| z[i]).count();
    if n1 == 0 || n1 == rows.len() {
        return Err(IdidError::DegenerateFit(
            "logistic fit needs both classes in the training sample".into(),
        ));
    }
    let all: Vec<usize> = (0..x.ncols()).collect();
    let local: Vec<usize> = (0..rows.len()).collect();
    let xs = submatrix(x, rows, &all);
    let keep = independent_columns(&xs);
    let dropped: Vec<usize> = all.iter().copied().filter(|j| !keep.contains(j)).collect();
    if !dropped.is_empty() {
        log::warn!("dropping collinear propensity columns {dropped:?}");
    }
    let xk = submatrix(&xs, &local, &keep);
    let zs: Vec<f64> = rows.iter().map(|&i| f64::from(u8::from(z[i]))).collect();
    let p = keep.len();

    let mut beta = DVector::zeros(p);
    let mut eta = &xk * &beta;
    let mut ll = log_lik(&eta, &zs);
    let mut converged = false;
    let mut separation = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let mu: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let w: Vec<f64> = mu.iter().map(|&m| (m * (1.0 - m)).max(1e-12)).collect();
        let resid = DVector::from_iterator(zs.len(), zs.iter().zip(&mu).map(|(z, m)| z - m));
        let score = xk.transpose() * resid;
        let mut xw = xk.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let info = xk.transpose() * xw;
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&score),
            None => info
                .lu()
                .solve(&score)
                .ok_or_else(|| IdidError::DegenerateFit("singular information matrix".into()))?,
        };
        let mut scale = 1.0;
        let (mut cand, mut cand_eta, mut cand_ll);
        loop {
            cand = &beta + &step * scale;
            cand_eta = &xk * &cand;
            cand_ll = log_lik(&cand_eta, &zs);
            if cand_ll >= ll - 1e-12 || scale < 1e-10 {
                break;
            }
            scale *= 0.5;
        }
        let delta = (&cand - &beta).amax();
        beta = cand;
        eta = cand_eta;
        ll = cand_ll;
        if eta.amax() > ETA_CAP {
            separation = true;
            break;
        }
        if delta < STEP_TOL {
            converged = true;
            break;
        }
    }
    if separation {
        log::warn!("logistic fit: classes (quasi-)separated; coefficients capped");
    } else if !converged {
        log::warn!("logistic fit did not converge in {MAX_ITER} iterations");
    }
    let mut coef = vec![0.0; x.ncols()];
    for (k, &j) in keep.iter().enumerate() {
        coef[j] = beta[k];
    }
    Ok(LogisticFit {
        coef,
        dropped,
        iterations,
        converged,
        separation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn symmetric_design_has_zero_intercept() {
        let xs = [-2.0, -1.0, 1.0, 2.0, -2.0, -1.0, 1.0, 2.0];
        let z = [false, true, false, true, true, false, true, false];
        let x = DMatrix::from_fn(8, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let fit = fit_logistic(&x, &z, &(0..8).collect::<Vec<_>>()).unwrap();
        assert!(fit.converged);
        assert!(fit.coef[0].abs() < 1e-10);
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = DMatrix::from_element(4, 1, 1.0);
        assert!(matches!(
            fit_logistic(&x, &[true; 4], &[0, 1, 2, 3]),
            Err(IdidError::DegenerateFit(_))
        ));
    }

    #[test]
    fn separated_classes_are_flagged() {
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let z = [false, false, false, true, true, true];
        let fit = fit_logistic(&x, &z, &(0..6).collect::<Vec<_>>()).unwrap();
        assert!(fit.separation);
        assert!(fit.coef.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn independent_label_recovers_prevalence() {
        let mut r = rng::stream(11, &[]);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let z: Vec<bool> = (0..n).map(|_| r.random::<f64>() < 0.3).collect();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let fit = fit_logistic(&x, &z, &(0..n).collect::<Vec<_>>()).unwrap();
        // se of the intercept ≈ 1/sqrt(n p (1-p))
        let se = 1.0 / (n as f64 * 0.21).sqrt();
        assert!((fit.coef[0] - logit(0.3)).abs() < 3.0 * se);
        assert!(fit.coef[1].abs() < 3.0 * se);
    }

    #[test]
    fn recovers_known_slope() {
        let mut r = rng::stream(12, &[]);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let z: Vec<bool> = xs
            .iter()
            .map(|&v| r.random::<f64>() < expit(0.8 * v))
            .collect();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let rows: Vec<usize> = (0..n).collect();
        let fit = fit_logistic(&x, &z, &rows).unwrap();
        assert!((fit.coef[1] - 0.8).abs() < 0.02);
        let p = fit.predict(&x);
        let score0: f64 = z
            .iter()
            .zip(&p)
            .map(|(&zi, pi)| f64::from(u8::from(zi)) - pi)
            .sum();
        let score1: f64 = z
            .iter()
            .zip(&p)
            .zip(&xs)
            .map(|((&zi, pi), xi)| (f64::from(u8::from(zi)) - pi) * xi)
            .sum();
        assert!(score0.abs() < 1e-6 && score1.abs() < 1e-6);
    }
}
