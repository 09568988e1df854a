//! Cell-level LATT(e, t) estimators with influence-function standard errors.

pub mod comparison;
pub mod diagnostics;
pub mod dml;
pub mod dr;
pub mod weights;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use diagnostics::{remainder_diagnostics, RemainderReport};
pub use dr::Moments;

use crate::data::{build_cell, cell_index, CellData, ControlKind, Dataset, Sampling};
use crate::error::{IdidError, Result};
use crate::nuisance::{fit_cell_nuisances, FoldPlan, ModelSpec, NuisanceFit};
use crate::rng::derive_seed;
use crate::stats::z_crit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Dr,
    Dml,
    Reg,
    Ipw,
    Ipws,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Dr,
        Estimator::Dml,
        Estimator::Reg,
        Estimator::Ipw,
        Estimator::Ipws,
    ];
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Dr => "dr",
            Estimator::Dml => "dml",
            Estimator::Reg => "reg",
            Estimator::Ipw => "ipw",
            Estimator::Ipws => "ipws",
        })
    }
}

impl FromStr for Estimator {
    type Err = IdidError;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| IdidError::Config(format!("unknown estimator `{s}`")))
    }
}

/// Everything needed to turn a cell into an estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub estimator: Estimator,
    pub kind: ControlKind,
    pub spec: ModelSpec,
    /// Cross-fitting folds (DML only).
    pub folds: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Smallest admissible |denominator|.
    pub weak_threshold: f64,
}

impl EstimatorConfig {
    pub fn new(estimator: Estimator, kind: ControlKind, spec: ModelSpec) -> Self {
        EstimatorConfig {
            estimator,
            kind,
            spec,
            folds: 5,
            seed: 0,
            alpha: 0.05,
            weak_threshold: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub clipped: usize,
    pub separation: bool,
    pub folds: usize,
    pub den_abs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_d: Option<f64>,
    /// DML only: standard error from the normalization-adjusted DR influence
    /// function evaluated at the cross-fitted nuisances.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_adjusted: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellEstimate {
    pub e: u32,
    pub t: u32,
    pub kind: ControlKind,
    pub estimator: Estimator,
    pub tau: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub num: f64,
    /// Denominator, the AET(e, t) estimate.
    pub den: f64,
    pub n_trt: usize,
    pub n_ctl: usize,
    pub diagnostics: Diagnostics,
    /// Influence values of τ̂ over the full dataset (zero off-cell).
    #[serde(skip)]
    pub if_values: Vec<f64>,
    /// Influence values of the denominator over the full dataset.
    #[serde(skip)]
    pub den_if: Vec<f64>,
}

/// Standard error from a full-sample influence vector.
pub fn if_se(if_values: &[f64]) -> f64 {
    let n = if_values.len() as f64;
    (if_values.iter().map(|v| v * v).sum::<f64>() / n / n).sqrt()
}

fn cell_seed(seed: u64, e: u32, t: u32) -> u64 {
    derive_seed(seed, &[u64::from(e), u64::from(t)])
}

/// Fit nuisances for one cell with the given number of folds.
pub fn fit_nuisances(cell: &CellData, cfg: &EstimatorConfig, folds: usize) -> Result<NuisanceFit> {
    let plan = FoldPlan::new(cell.n(), folds, cell_seed(cfg.seed, cell.e, cell.t))?;
    fit_cell_nuisances(cell, &cfg.spec, &plan)
}

/// Estimator moments for the non-cross-fitted estimators.
pub fn moments(estimator: Estimator, cell: &CellData, fit: &NuisanceFit) -> Result<Moments> {
    match estimator {
        Estimator::Dr | Estimator::Dml => dr::dr(cell, fit),
        Estimator::Reg => comparison::reg(cell, fit),
        Estimator::Ipw => comparison::ipw(cell, fit),
        Estimator::Ipws => comparison::ipws(cell, fit),
    }
}

fn check_den(den: f64, cfg: &EstimatorConfig) -> Result<()> {
    if den.abs() >= cfg.weak_threshold {
        Ok(())
    } else {
        Err(IdidError::WeakFirstStage {
            den,
            threshold: cfg.weak_threshold,
        })
    }
}

/// Estimate LATT(e, t) on an already built cell.
pub fn estimate_on_cell(cell: &CellData, cfg: &EstimatorConfig) -> Result<CellEstimate> {
    let folds = if cfg.estimator == Estimator::Dml {
        cfg.folds
    } else {
        1
    };
    let fit = fit_nuisances(cell, cfg, folds)?;
    let mut diag = Diagnostics {
        clipped: fit.clipped,
        separation: fit.separation,
        folds,
        ..Diagnostics::default()
    };
    let (tau, num, den, if_values, den_if, se) = if cfg.estimator == Estimator::Dml {
        let (psi_b, psi_a) = dml::scores(cell, &fit)?;
        let sol = dml::solve(&psi_b, &psi_a, &fit.fold_id);
        check_den(sol.jacobian, cfg)?;
        let adjusted = dr::dr(cell, &fit)?;
        diag.se_adjusted = Some(if_se(&cell.embed(&adjusted.ratio_if())));
        diag.kappa_y = adjusted.kappa.map(|k| k.0);
        diag.kappa_d = adjusted.kappa.map(|k| k.1);
        let se = (sol.sigma2 / cell.n() as f64).sqrt();
        (
            sol.tau,
            sol.tau * sol.jacobian,
            sol.jacobian,
            cell.embed(&sol.if_tau),
            cell.embed(&sol.if_den),
            se,
        )
    } else {
        let m = moments(cfg.estimator, cell, &fit)?;
        check_den(m.den, cfg)?;
        diag.kappa_y = m.kappa.map(|k| k.0);
        diag.kappa_d = m.kappa.map(|k| k.1);
        let ifv = cell.embed(&m.ratio_if());
        let se = if_se(&ifv);
        (m.tau(), m.num, m.den, ifv, cell.embed(&m.if_den), se)
    };
    diag.den_abs = den.abs();
    let z = z_crit(cfg.alpha);
    Ok(CellEstimate {
        e: cell.e,
        t: cell.t,
        kind: cell.kind,
        estimator: cfg.estimator,
        tau,
        se,
        ci_lo: tau - z * se,
        ci_hi: tau + z * se,
        num,
        den,
        n_trt: cell.n_treated(),
        n_ctl: cell.n_control(),
        diagnostics: diag,
        if_values,
        den_if,
    })
}

pub fn estimate_cell(
    data: &Dataset,
    e: u32,
    t: u32,
    cfg: &EstimatorConfig,
) -> Result<CellEstimate> {
    estimate_on_cell(&build_cell(data, e, t, cfg.kind)?, cfg)
}

/// ATT-type estimate: the doubly robust numerator alone (denominator fixed
/// at one), for cohorts defined by the variable currently in the exposure slot.
pub fn estimate_att_cell(
    data: &Dataset,
    g: u32,
    t: u32,
    cfg: &EstimatorConfig,
) -> Result<CellEstimate> {
    let cell = build_cell(data, g, t, cfg.kind)?;
    let fit = fit_nuisances(&cell, cfg, 1)?;
    let m = dr::dr(&cell, &fit)?;
    let if_values = cell.embed(&m.if_num);
    let se = if_se(&if_values);
    let z = z_crit(cfg.alpha);
    Ok(CellEstimate {
        e: g,
        t,
        kind: cfg.kind,
        estimator: Estimator::Dr,
        tau: m.num,
        se,
        ci_lo: m.num - z * se,
        ci_hi: m.num + z * se,
        num: m.num,
        den: 1.0,
        n_trt: cell.n_treated(),
        n_ctl: cell.n_control(),
        diagnostics: Diagnostics {
            clipped: fit.clipped,
            separation: fit.separation,
            folds: 1,
            den_abs: 1.0,
            kappa_y: m.kappa.map(|k| k.0),
            kappa_d: None,
            se_adjusted: None,
        },
        den_if: vec![0.0; if_values.len()],
        if_values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkippedCell {
    pub e: u32,
    pub t: u32,
    pub reason: String,
}

/// Every admissible cell of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct LattTable {
    pub sampling: Sampling,
    pub kind: ControlKind,
    pub estimator: Estimator,
    pub n: usize,
    pub cells: Vec<CellEstimate>,
    pub skipped: Vec<SkippedCell>,
}

impl LattTable {
    pub fn get(&self, e: u32, t: u32) -> Option<&CellEstimate> {
        self.cells.iter().find(|c| c.e == e && c.t == t)
    }
}

/// Failures that make a single cell inestimable without invalidating the run.
fn is_cell_local(err: &IdidError) -> bool {
    matches!(
        err,
        IdidError::DegenerateCell { .. }
            | IdidError::DegenerateFit(_)
            | IdidError::WeakFirstStage { .. }
    )
}

pub fn estimate_all(data: &Dataset, cfg: &EstimatorConfig) -> Result<LattTable> {
    estimate_cells(
        data,
        cfg,
        &cell_index(data.exposure(), data.n_periods(), cfg.kind)?,
        false,
    )
}

/// Estimate the listed cells in parallel; results keep the listed order.
pub fn estimate_cells(
    data: &Dataset,
    cfg: &EstimatorConfig,
    cells: &[(u32, u32)],
    att: bool,
) -> Result<LattTable> {
    let results: Vec<Result<CellEstimate>> = cells
        .par_iter()
        .map(|&(e, t)| {
            if att {
                estimate_att_cell(data, e, t, cfg)
            } else {
                estimate_cell(data, e, t, cfg)
            }
        })
        .collect();
    let mut table = LattTable {
        sampling: data.sampling(),
        kind: cfg.kind,
        estimator: cfg.estimator,
        n: data.n_rows(),
        cells: Vec::new(),
        skipped: Vec::new(),
    };
    for (&(e, t), r) in cells.iter().zip(results) {
        match r {
            Ok(c) => table.cells.push(c),
            Err(err) if is_cell_local(&err) => {
                log::warn!("skipping cell (e={e}, t={t}): {err}");
                table.skipped.push(SkippedCell {
                    e,
                    t,
                    reason: err.to_string(),
                });
            }
            Err(err) => return Err(err),
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests;
