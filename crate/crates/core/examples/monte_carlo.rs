//! A small version of the double-robustness study.

use idid::data::Sampling;
use idid::latt::Estimator;
use idid::sim::{run_monte_carlo, McConfig, Paper};

pub fn run() -> idid::Result<()> {
    let cfg = McConfig {
        n: 1000,
        b_mc: 20,
        estimators: vec![Estimator::Dr, Estimator::Reg, Estimator::Ipw],
        ..McConfig::paper(Paper::Exp1, Sampling::Panel)
    };
    let report = run_monte_carlo(&cfg)?;
    println!(
        "{:<6}{:<6}{:>9}{:>9}{:>8}",
        "DGP", "est", "bias", "RMSE", "cover"
    );
    for r in &report.rows {
        println!(
            "{:<6}{:<6}{:>9.4}{:>9.4}{:>8.2}",
            r.design, r.estimator, r.avg_bias, r.rmse, r.cover
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> idid::Result<()> {
    run()
}
