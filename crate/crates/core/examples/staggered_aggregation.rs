//! Staggered exposure: estimate every admissible cell, then summarize.

use idid::aggregate::{aggregate, AggOptions, WeightScheme};
use idid::data::ControlKind;
use idid::latt::{estimate_all, Estimator, EstimatorConfig};
use idid::nuisance::ModelSpec;
use idid::sim::{gen_exp2, Exp2Config};

pub fn run() -> idid::Result<()> {
    for kind in [ControlKind::NeverExposed, ControlKind::NotYetExposed] {
        let draw = gen_exp2(
            &Exp2Config {
                n: 4000,
                kind,
                ..Exp2Config::default()
            },
            3,
        )?;
        let data = &draw.dataset;
        let cfg = EstimatorConfig::new(Estimator::Dr, kind, ModelSpec::linear(data.covariates()));
        let table = estimate_all(data, &cfg)?;
        println!(
            "{kind}: {} cells, {} skipped",
            table.cells.len(),
            table.skipped.len()
        );
        for c in &table.cells {
            println!("  LATT({},{}) = {:.3} ({:.3})", c.e, c.t, c.tau, c.se);
        }
        let mut schemes = WeightScheme::parse_list("es:0..2")?;
        schemes.extend(
            ["overall", "csa-overall", "cumcal:5"].map(|s| s.parse::<WeightScheme>().unwrap()),
        );
        for s in schemes {
            let a = aggregate(
                &table,
                data.exposure(),
                data.n_periods(),
                s,
                AggOptions::default(),
            )?;
            println!(
                "  {:<12} {:.3} [{:.3}, {:.3}]",
                a.scheme, a.theta, a.ci_lo, a.ci_hi
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> idid::Result<()> {
    run()
}
