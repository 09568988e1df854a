//! Effects that differ between two groups: aggregate in each, then difference.

use idid::aggregate::{group_difference, AggOptions, WeightScheme};
use idid::data::ControlKind;
use idid::latt::{Estimator, EstimatorConfig};
use idid::nuisance::ModelSpec;
use idid::sim::{gen_exp2, Exp2Config};

pub fn run() -> idid::Result<()> {
    let cfg = Exp2Config {
        n: 6000,
        with_group: true,
        ..Exp2Config::default()
    };
    let draw = gen_exp2(&cfg, 5)?;
    let data = &draw.dataset;
    let est = EstimatorConfig::new(
        Estimator::Dr,
        ControlKind::NeverExposed,
        ModelSpec::linear(data.covariates()),
    );
    let schemes = WeightScheme::parse_list("es:0..2")?;
    let gd = group_difference(data, &est, &schemes, AggOptions::default())?;
    println!("groups {} and {}", gd.labels.0, gd.labels.1);
    for ((a, b), d) in gd.first.iter().zip(&gd.second).zip(&gd.difference) {
        println!(
            "{:<5} {:.3} vs {:.3}: difference {:.3} [{:.3}, {:.3}]",
            a.scheme, a.theta, b.theta, d.theta, d.ci_lo, d.ci_hi
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> idid::Result<()> {
    run()
}
