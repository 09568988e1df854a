//! Propensity scores and conditional mean functions fitted per comparison cell.

pub mod folds;
pub mod formula;
pub mod logistic;
pub mod ols;

pub use folds::FoldPlan;
pub use formula::{Family, Formula, Term};
pub use logistic::{expit, fit_logistic, LogisticFit};
pub use ols::{fit_linear, LinearFit};

use crate::data::{CellData, CellOutcome, Covariates};
use crate::error::{IdidError, Result};

pub const DEFAULT_CLIP: f64 = 1e-6;

/// Working models for the propensity score and the outcome/treatment regressions.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub propensity: Formula,
    pub outcome: Formula,
    pub clip: f64,
}

impl ModelSpec {
    pub fn new(propensity: Formula, outcome: Formula) -> Result<Self> {
        propensity.check_family(Family::Logistic)?;
        outcome.check_family(Family::Linear)?;
        Ok(ModelSpec {
            propensity,
            outcome,
            clip: DEFAULT_CLIP,
        })
    }

    /// Intercept-only models: treated share and control means.
    pub fn constant() -> Self {
        ModelSpec {
            propensity: Formula::constant(),
            outcome: Formula::constant(),
            clip: DEFAULT_CLIP,
        }
    }

    /// Every covariate entering linearly in both models.
    pub fn linear(x: &Covariates) -> Self {
        ModelSpec {
            propensity: Formula::all_linear(x),
            outcome: Formula::all_linear(x),
            clip: DEFAULT_CLIP,
        }
    }

    pub fn with_clip(mut self, clip: f64) -> Self {
        self.clip = clip;
        self
    }
}

/// Fitted values of one mean function in each (arm, period) stratum.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmPeriod {
    pub ctl_pre: Vec<f64>,
    pub ctl_post: Vec<f64>,
    pub trt_pre: Vec<f64>,
    pub trt_post: Vec<f64>,
}

impl ArmPeriod {
    fn zeros(n: usize) -> Self {
        ArmPeriod {
            ctl_pre: vec![0.0; n],
            ctl_post: vec![0.0; n],
            trt_pre: vec![0.0; n],
            trt_post: vec![0.0; n],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeanFunctions {
    /// Control-group regressions of the long differences.
    Panel { m_c: Vec<f64>, g_c: Vec<f64> },
    /// Regressions of Y (`y`) and D (`d`) per arm and period.
    Rc { y: ArmPeriod, d: ArmPeriod },
}

/// Nuisance predictions for every row of a cell.
#[derive(Clone, Debug, PartialEq)]
pub struct NuisanceFit {
    pub p_hat: Vec<f64>,
    pub mean: MeanFunctions,
    pub fold_id: Vec<usize>,
    pub clipped: usize,
    pub separation: bool,
}

impl NuisanceFit {
    /// All mean functions identically zero; used by the weighting-only estimators.
    pub fn without_means(&self) -> NuisanceFit {
        let n = self.p_hat.len();
        let mean = match &self.mean {
            MeanFunctions::Panel { .. } => MeanFunctions::Panel {
                m_c: vec![0.0; n],
                g_c: vec![0.0; n],
            },
            MeanFunctions::Rc { .. } => MeanFunctions::Rc {
                y: ArmPeriod::zeros(n),
                d: ArmPeriod::zeros(n),
            },
        };
        NuisanceFit {
            mean,
            ..self.clone()
        }
    }
}

fn scatter(dst: &mut [f64], src: &[f64], rows: &[usize]) {
    for &i in rows {
        dst[i] = src[i];
    }
}

/// Fit every nuisance function of `cell`, predicting each row from a model
/// trained without that row's fold (or in-sample when there is one fold).
pub fn fit_cell_nuisances(
    cell: &CellData,
    spec: &ModelSpec,
    folds: &FoldPlan,
) -> Result<NuisanceFit> {
    if folds.assignment().len() != cell.n() {
        return Err(IdidError::Domain(
            "fold plan does not match the cell size".into(),
        ));
    }
    fit_splits(cell, spec, folds.splits(), folds.assignment().to_vec())
}

/// Train on `train` (cell-row indices) and predict every row of the cell.
pub fn fit_cell_nuisances_on(
    cell: &CellData,
    spec: &ModelSpec,
    train: &[usize],
) -> Result<NuisanceFit> {
    let all = (0..cell.n()).collect();
    fit_splits(cell, spec, vec![(train.to_vec(), all)], vec![0; cell.n()])
}

fn fit_splits(
    cell: &CellData,
    spec: &ModelSpec,
    splits: Vec<(Vec<usize>, Vec<usize>)>,
    fold_id: Vec<usize>,
) -> Result<NuisanceFit> {
    let n = cell.n();
    let xp = spec.propensity.design(&cell.covariates, n)?;
    let xo = spec.outcome.design(&cell.covariates, n)?;
    let mut p_hat = vec![0.0; n];
    let mut separation = false;
    let mut mean = match &cell.outcome {
        CellOutcome::Panel { .. } => MeanFunctions::Panel {
            m_c: vec![0.0; n],
            g_c: vec![0.0; n],
        },
        CellOutcome::Rc { .. } => MeanFunctions::Rc {
            y: ArmPeriod::zeros(n),
            d: ArmPeriod::zeros(n),
        },
    };
    for (train, test) in splits {
        let ps = fit_logistic(&xp, &cell.treated, &train)?;
        separation |= ps.separation;
        scatter(&mut p_hat, &ps.predict(&xp), &test);

        match (&cell.outcome, &mut mean) {
            (CellOutcome::Panel { dy, dd }, MeanFunctions::Panel { m_c, g_c }) => {
                let ctl: Vec<usize> = train
                    .iter()
                    .copied()
                    .filter(|&i| !cell.treated[i])
                    .collect();
                scatter(m_c, &fit_linear(&xo, dy, &ctl)?.predict(&xo), &test);
                scatter(g_c, &fit_linear(&xo, dd, &ctl)?.predict(&xo), &test);
            }
            (CellOutcome::Rc { y, d, post }, MeanFunctions::Rc { y: my, d: md }) => {
                let strata = [(false, false), (false, true), (true, false), (true, true)];
                for (arm, period) in strata {
                    let rows: Vec<usize> = train
                        .iter()
                        .copied()
                        .filter(|&i| cell.treated[i] == arm && post[i] == period)
                        .collect();
                    if rows.is_empty() {
                        return Err(IdidError::degenerate(
                            cell.e,
                            cell.t,
                            format!(
                                "empty {} {} training stratum",
                                if arm { "exposed" } else { "control" },
                                if period { "post" } else { "pre" }
                            ),
                        ));
                    }
                    let (ty, td) = match (arm, period) {
                        (false, false) => (&mut my.ctl_pre, &mut md.ctl_pre),
                        (false, true) => (&mut my.ctl_post, &mut md.ctl_post),
                        (true, false) => (&mut my.trt_pre, &mut md.trt_pre),
                        (true, true) => (&mut my.trt_post, &mut md.trt_post),
                    };
                    scatter(ty, &fit_linear(&xo, y, &rows)?.predict(&xo), &test);
                    scatter(td, &fit_linear(&xo, d, &rows)?.predict(&xo), &test);
                }
            }
            _ => unreachable!(),
        }
    }
    let mut clipped = 0;
    for p in &mut p_hat {
        let c = p.clamp(spec.clip, 1.0 - spec.clip);
        if c != *p {
            clipped += 1;
            *p = c;
        }
    }
    Ok(NuisanceFit {
        p_hat,
        mean,
        fold_id,
        clipped,
        separation,
    })
}
