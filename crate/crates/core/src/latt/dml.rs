//! Cross-fitted (DML2) ratio estimator built on the orthogonal scores.

use super::weights::{panel_weights, rc_weights};
use crate::data::{CellData, CellOutcome};
use crate::error::Result;
use crate::nuisance::{MeanFunctions, NuisanceFit};

/// Per-row scores `ψ_b` (numerator) and `ψ_a` (denominator). The estimating
/// equation is `mean(ψ_b) − τ·mean(ψ_a) = 0`.
pub fn scores(cell: &CellData, fit: &NuisanceFit) -> Result<(Vec<f64>, Vec<f64>)> {
    match (&cell.outcome, &fit.mean) {
        (CellOutcome::Panel { dy, dd }, MeanFunctions::Panel { m_c, g_c }) => {
            let w = panel_weights(cell, &fit.p_hat)?;
            let s = |v: &[f64], m: &[f64]| -> Vec<f64> {
                (0..v.len())
                    .map(|i| (w.trt[i] - w.ctl[i]) * (v[i] - m[i]))
                    .collect()
            };
            Ok((s(dy, m_c), s(dd, g_c)))
        }
        (CellOutcome::Rc { y, d, post }, MeanFunctions::Rc { y: my, d: md }) => {
            let w = rc_weights(cell, &fit.p_hat, post)?;
            let s = |v: &[f64], m: &crate::nuisance::ArmPeriod| -> Vec<f64> {
                (0..v.len())
                    .map(|i| {
                        let (mt, mc) = if post[i] {
                            (m.trt_post[i], m.ctl_post[i])
                        } else {
                            (m.trt_pre[i], m.ctl_pre[i])
                        };
                        let shift = (m.trt_post[i] - m.trt_pre[i]) - (m.ctl_post[i] - m.ctl_pre[i]);
                        w.trt(i) * (v[i] - mt) - w.ctl(i) * (v[i] - mc) + w.trt_any[i] * shift
                    })
                    .collect()
            };
            Ok((s(y, my), s(d, md)))
        }
        _ => unreachable!(),
    }
}

/// Average over folds of the within-fold means.
pub fn fold_mean(v: &[f64], fold_id: &[usize]) -> f64 {
    let k = fold_id.iter().copied().max().unwrap_or(0) + 1;
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&x, &f) in v.iter().zip(fold_id) {
        sums[f] += x;
        counts[f] += 1;
    }
    let used: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| s / c as f64)
        .collect();
    used.iter().sum::<f64>() / used.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct DmlSolution {
    pub tau: f64,
    /// Ĵ, the fold-averaged denominator score.
    pub jacobian: f64,
    /// `(ψ_b − τψ_a)/Ĵ` per row.
    pub if_tau: Vec<f64>,
    /// `ψ_a − Ĵ` per row.
    pub if_den: Vec<f64>,
    /// `σ̂² = Ĵ⁻² · K⁻¹Σ_k P_n^k (ψ_b − τψ_a)²`
    pub sigma2: f64,
}

pub fn solve(psi_b: &[f64], psi_a: &[f64], fold_id: &[usize]) -> DmlSolution {
    let jacobian = fold_mean(psi_a, fold_id);
    let tau = fold_mean(psi_b, fold_id) / jacobian;
    let resid: Vec<f64> = psi_b.iter().zip(psi_a).map(|(b, a)| b - tau * a).collect();
    let sq: Vec<f64> = resid.iter().map(|r| r * r).collect();
    DmlSolution {
        tau,
        jacobian,
        sigma2: fold_mean(&sq, fold_id) / (jacobian * jacobian),
        if_tau: resid.iter().map(|r| r / jacobian).collect(),
        if_den: psi_a.iter().map(|a| a - jacobian).collect(),
    }
}
