//! With confounded adoption, LATT(e, t) recovers a complier-weighted mix of
//! horizon effects while a treatment-timing comparison does not.

use idid::data::ControlKind;
use idid::latt::{estimate_all, Estimator, EstimatorConfig};
use idid::nuisance::ModelSpec;
use idid::sim::{bloom_oracle, csa_all, gen_exp3, Exp3Config};

pub fn run() -> idid::Result<()> {
    let draw = gen_exp3(
        &Exp3Config {
            n: 8000,
            ..Exp3Config::default()
        },
        6,
    )?;
    let data = &draw.dataset;
    let cfg = EstimatorConfig::new(
        Estimator::Dr,
        ControlKind::NeverExposed,
        ModelSpec::linear(data.covariates()),
    );
    let latt = estimate_all(data, &cfg)?;
    let treat = draw.latent.treat_cohort.clone().expect("absorbing design");
    let csa = csa_all(data, &treat, &cfg)?;
    println!("cell    LATT   oracle   ATT(g,t)");
    for c in &latt.cells {
        let oracle = bloom_oracle(&draw, c.e, c.t)?;
        let att = csa.get(c.e, c.t).map_or(f64::NAN, |a| a.tau);
        println!(
            "({},{})  {:.3}  {:.3}    {:.3}",
            c.e, c.t, c.tau, oracle, att
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> idid::Result<()> {
    run()
}
