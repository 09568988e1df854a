//! Cell-level LATT on a simulated two-period panel, comparing the estimators.

use idid::data::{ControlKind, Sampling};
use idid::latt::{estimate_cell, Estimator, EstimatorConfig};
use idid::nuisance::ModelSpec;
use idid::sim::{gen_exp1, Exp1Config};

pub fn run() -> idid::Result<()> {
    let draw = gen_exp1(&Exp1Config::dgp(1, 2000, Sampling::Panel)?, 1)?;
    let data = &draw.dataset;
    let spec = ModelSpec::linear(data.covariates());
    println!("true LATT(2,2) = {:.3}", draw.truth.latt[&(2, 2)]);
    for est in Estimator::ALL {
        let cfg = EstimatorConfig::new(est, ControlKind::NeverExposed, spec.clone());
        let c = estimate_cell(data, 2, 2, &cfg)?;
        println!(
            "{est:>5}: {:.3}  se {:.3}  [{:.3}, {:.3}]  first stage {:.3}",
            c.tau, c.se, c.ci_lo, c.ci_hi, c.den
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> idid::Result<()> {
    run()
}
