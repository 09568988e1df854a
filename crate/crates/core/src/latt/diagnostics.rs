//! Empirical surrogates for the second-order remainder of the DR estimators.

use serde::Serialize;

use super::weights::odds;
use crate::data::{CellData, CellOutcome};
use crate::error::Result;
use crate::nuisance::{fit_cell_nuisances_on, FoldPlan, MeanFunctions, ModelSpec, NuisanceFit};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemainderReport {
    /// RMS gap of the fitted odds between two half-sample refits.
    pub odds_gap: f64,
    /// RMS gap of the fitted outcome mean functions between the same refits.
    pub mean_gap: f64,
    /// `odds_gap · mean_gap`, a proxy for the product-of-errors remainder.
    pub product: f64,
    /// Propensity predictions clipped in the full-sample fit.
    pub clipped: usize,
    /// RC only: |λ̂_t / ρ̂_{e,t} − 1/ρ̂|, the exposed post-period weight fluctuation.
    pub weight_gap: Option<f64>,
}

fn rms_gap(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn outcome_means(fit: &NuisanceFit) -> Vec<f64> {
    match &fit.mean {
        MeanFunctions::Panel { m_c, .. } => m_c.clone(),
        MeanFunctions::Rc { y, .. } => [&y.ctl_pre, &y.ctl_post, &y.trt_pre, &y.trt_post]
            .into_iter()
            .flatten()
            .copied()
            .collect(),
    }
}

pub fn remainder_diagnostics(
    cell: &CellData,
    fit: &NuisanceFit,
    spec: &ModelSpec,
    seed: u64,
) -> Result<RemainderReport> {
    let plan = FoldPlan::new(cell.n(), 2, seed)?;
    let halves = plan.splits();
    let a = fit_cell_nuisances_on(cell, spec, &halves[0].0)?;
    let b = fit_cell_nuisances_on(cell, spec, &halves[1].0)?;
    let oa: Vec<f64> = a.p_hat.iter().map(|&p| odds(p)).collect();
    let ob: Vec<f64> = b.p_hat.iter().map(|&p| odds(p)).collect();
    let odds_gap = rms_gap(&oa, &ob);
    let mean_gap = rms_gap(&outcome_means(&a), &outcome_means(&b));
    let weight_gap = match &cell.outcome {
        CellOutcome::Panel { .. } => None,
        CellOutcome::Rc { post, .. } => {
            let n = cell.n() as f64;
            let rho = cell.n_treated() as f64 / n;
            let lam = post.iter().filter(|&&p| p).count() as f64 / n;
            let rho_post = cell
                .treated
                .iter()
                .zip(post)
                .filter(|(&z, &p)| z && p)
                .count() as f64
                / n;
            Some((lam / rho_post - 1.0 / rho).abs())
        }
    };
    Ok(RemainderReport {
        odds_gap,
        mean_gap,
        product: odds_gap * mean_gap,
        clipped: fit.clipped,
        weight_gap,
    })
}
