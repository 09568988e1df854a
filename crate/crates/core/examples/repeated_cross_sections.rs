//! Same target from repeated cross-sections, where each row is a fresh draw.

use idid::data::{ControlKind, Sampling};
use idid::latt::{estimate_cell, Estimator, EstimatorConfig};
use idid::nuisance::ModelSpec;
use idid::sim::{gen_exp1, Exp1Config};

pub fn run() -> idid::Result<()> {
    let draw = gen_exp1(&Exp1Config::dgp(1, 3000, Sampling::Rc)?, 2)?;
    let data = &draw.dataset;
    let spec = ModelSpec::linear(data.covariates());
    for est in [Estimator::Dr, Estimator::Dml] {
        let cfg = EstimatorConfig::new(est, ControlKind::NeverExposed, spec.clone());
        let c = estimate_cell(data, 2, 2, &cfg)?;
        let d = &c.diagnostics;
        println!(
            "{est}: {:.3} (se {:.3}); kappa_y {:?}, kappa_d {:?}",
            c.tau, c.se, d.kappa_y, d.kappa_d
        );
        if let Some(s) = d.se_adjusted {
            println!("  fold-adjusted se {s:.3}");
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> idid::Result<()> {
    run()
}
