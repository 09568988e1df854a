//! Uniform bands over an event study via the multiplier bootstrap.

use idid::aggregate::{aggregate, AggOptions, WeightScheme};
use idid::bootstrap::{simultaneous_bands, IfMatrix, Multiplier};
use idid::data::ControlKind;
use idid::latt::{estimate_all, Estimator, EstimatorConfig};
use idid::nuisance::ModelSpec;
use idid::sim::{gen_exp2, Exp2Config};

pub fn run() -> idid::Result<()> {
    let draw = gen_exp2(
        &Exp2Config {
            n: 4000,
            ..Exp2Config::default()
        },
        4,
    )?;
    let data = &draw.dataset;
    let cfg = EstimatorConfig::new(
        Estimator::Dr,
        ControlKind::NeverExposed,
        ModelSpec::linear(data.covariates()),
    );
    let table = estimate_all(data, &cfg)?;
    let aggs = WeightScheme::parse_list("es:0..3")?
        .into_iter()
        .map(|s| {
            aggregate(
                &table,
                data.exposure(),
                data.n_periods(),
                s,
                AggOptions::default(),
            )
        })
        .collect::<idid::Result<Vec<_>>>()?;
    let ifm = IfMatrix::new(
        aggs.iter().map(|a| a.scheme.clone()).collect(),
        aggs.iter().map(|a| a.theta).collect(),
        aggs.into_iter().map(|a| a.if_values).collect(),
    )?;
    let bands = simultaneous_bands(&ifm, 999, 0.05, Multiplier::Mammen, 7)?;
    println!("critical value {:.3} (pointwise normal 1.960)", bands.crit);
    for b in &bands.bands {
        println!(
            "{:<6} {:.3}  band [{:.3}, {:.3}]  pointwise [{:.3}, {:.3}]",
            b.label, b.point, b.lo, b.hi, b.pointwise_lo, b.pointwise_hi
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> idid::Result<()> {
    run()
}
