//! Treatment-cohort DiD comparator: ATT(g, t) from the doubly robust
//! numerator with treatment cohorts in place of exposure cohorts.

use crate::data::{Cohort, Dataset};
use crate::error::Result;
use crate::latt::{estimate_att_cell, estimate_cells, CellEstimate, EstimatorConfig, LattTable};

/// `treat_cohort` holds one entry per dataset row (per unit for panels).
pub fn csa_att(
    data: &Dataset,
    treat_cohort: &[Cohort],
    g: u32,
    t: u32,
    cfg: &EstimatorConfig,
) -> Result<CellEstimate> {
    estimate_att_cell(&data.with_exposure(treat_cohort.to_vec())?, g, t, cfg)
}

/// ATT(g, t) for every treated cohort `g` and `t ≥ g`.
pub fn csa_all(
    data: &Dataset,
    treat_cohort: &[Cohort],
    cfg: &EstimatorConfig,
) -> Result<LattTable> {
    let relabeled = data.with_exposure(treat_cohort.to_vec())?;
    let cells = crate::data::cell_index(relabeled.exposure(), relabeled.n_periods(), cfg.kind)?;
    estimate_cells(&relabeled, cfg, &cells, true)
}
