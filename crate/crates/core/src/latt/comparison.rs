//! Single-model comparison estimators. Their influence values ignore the
//! estimation of the nuisance functions.

use super::dr::{dr, Accumulator, Moments};
use super::weights::{mean, odds, panel_weights, rc_weights};
use crate::data::{CellData, CellOutcome};
use crate::error::{IdidError, Result};
use crate::nuisance::{MeanFunctions, NuisanceFit};

/// Outcome regression: exposed-cohort mean of the observed change minus the
/// imputed control change.
pub fn reg(cell: &CellData, fit: &NuisanceFit) -> Result<Moments> {
    match (&cell.outcome, &fit.mean) {
        (CellOutcome::Panel { dy, dd }, MeanFunctions::Panel { m_c, g_c }) => {
            let w = panel_weights(cell, &fit.p_hat)?;
            let part = |v: &[f64], m: &[f64]| {
                let mut acc = Accumulator::new(v.len());
                acc.add(1.0, &w.trt, |i| v[i] - m[i]);
                acc
            };
            let (n, d) = (part(dy, m_c), part(dd, g_c));
            Ok(Moments {
                num: n.value,
                den: d.value,
                if_num: n.infl,
                if_den: d.infl,
                kappa: None,
            })
        }
        (CellOutcome::Rc { y, d, post }, MeanFunctions::Rc { y: my, d: md }) => {
            let w = rc_weights(cell, &fit.p_hat, post)?;
            let part = |v: &[f64], m: &crate::nuisance::ArmPeriod| {
                let mut acc = Accumulator::new(v.len());
                acc.add(1.0, &w.trt_post, |i| v[i]);
                acc.add(-1.0, &w.trt_pre, |i| v[i]);
                acc.add(-1.0, &w.trt_any, |i| m.ctl_post[i] - m.ctl_pre[i]);
                acc
            };
            let (n, dn) = (part(y, my), part(d, md));
            Ok(Moments {
                num: n.value,
                den: dn.value,
                if_num: n.infl,
                if_den: dn.infl,
                kappa: None,
            })
        }
        _ => unreachable!(),
    }
}

fn centered(a: &[f64], v: &[f64]) -> (f64, Vec<f64>) {
    let m = a.iter().zip(v).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64;
    (m, a.iter().zip(v).map(|(x, y)| x * y - m).collect())
}

/// Inverse probability weighting with unnormalized control weights.
pub fn ipw(cell: &CellData, fit: &NuisanceFit) -> Result<Moments> {
    let z: Vec<f64> = cell
        .treated
        .iter()
        .map(|&t| f64::from(u8::from(t)))
        .collect();
    let rho = mean(&z);
    let o: Vec<f64> = fit.p_hat.iter().map(|&p| odds(p)).collect();
    let (a, v, dv): (Vec<f64>, &[f64], &[f64]) = match &cell.outcome {
        CellOutcome::Panel { dy, dd } => (
            (0..z.len())
                .map(|i| (z[i] - (1.0 - z[i]) * o[i]) / rho)
                .collect(),
            dy,
            dd,
        ),
        CellOutcome::Rc { y, d, post } => {
            let lam_post = post.iter().filter(|&&p| p).count() as f64 / post.len() as f64;
            let lam_pre = 1.0 - lam_post;
            if lam_post == 0.0 || lam_pre == 0.0 {
                return Err(IdidError::degenerate(
                    cell.e,
                    cell.t,
                    "a period has no rows",
                ));
            }
            let a = (0..z.len())
                .map(|i| {
                    let arm = z[i] - (1.0 - z[i]) * o[i];
                    if post[i] {
                        arm / (rho * lam_post)
                    } else {
                        -arm / (rho * lam_pre)
                    }
                })
                .collect();
            (a, y, d)
        }
    };
    let (num, if_num) = centered(&a, v);
    let (den, if_den) = centered(&a, dv);
    Ok(Moments {
        num,
        den,
        if_num,
        if_den,
        kappa: None,
    })
}

/// Inverse probability weighting with self-normalized weights: the doubly
/// robust formula with every mean function set to zero.
pub fn ipws(cell: &CellData, fit: &NuisanceFit) -> Result<Moments> {
    dr(cell, &fit.without_means())
}
