//! Simulated draws survive a trip through the long CSV format unchanged.

use idid::data::{load_panel, load_rc, ControlKind, Dataset, Sampling, Schema};
use idid::latt::{estimate_all, Estimator, EstimatorConfig};
use idid::nuisance::ModelSpec;
use idid::sim::{
    gen_exp1, gen_exp2, gen_exp3, latent_path, Exp1Config, Exp2Config, Exp3Config, SimDraw,
};

fn reload(draw: &SimDraw, dir: &tempfile::TempDir, name: &str) -> Dataset {
    let path = dir.path().join(name);
    draw.write(&path).unwrap();
    let schema = Schema {
        group: draw.dataset.group().map(|_| "group".to_owned()),
        ..Schema::default()
    };
    match draw.dataset.sampling() {
        Sampling::Panel => load_panel(&path, &schema).unwrap().into(),
        Sampling::Rc => load_rc(&path, &schema).unwrap().into(),
    }
}

#[test]
fn exp1_export_at_full_size() {
    let dir = tempfile::tempdir().unwrap();
    for sampling in [Sampling::Panel, Sampling::Rc] {
        let draw = gen_exp1(&Exp1Config::dgp(1, 5000, sampling).unwrap(), 17).unwrap();
        let back = reload(&draw, &dir, "exp1.csv");
        assert_eq!(back, draw.dataset);
        let cfg = EstimatorConfig::new(
            Estimator::Dr,
            ControlKind::NeverExposed,
            ModelSpec::linear(back.covariates()),
        );
        let a = estimate_all(&draw.dataset, &cfg).unwrap();
        let b = estimate_all(&back, &cfg).unwrap();
        assert_eq!(a.cells[0].tau.to_bits(), b.cells[0].tau.to_bits());
    }
}

#[test]
fn staggered_and_group_designs() {
    let dir = tempfile::tempdir().unwrap();
    let draws = [
        gen_exp2(
            &Exp2Config {
                n: 600,
                ..Exp2Config::default()
            },
            1,
        )
        .unwrap(),
        gen_exp2(
            &Exp2Config {
                n: 600,
                with_group: true,
                sampling: Sampling::Rc,
                ..Exp2Config::default()
            },
            2,
        )
        .unwrap(),
        gen_exp3(
            &Exp3Config {
                n: 600,
                ..Exp3Config::default()
            },
            3,
        )
        .unwrap(),
    ];
    for (k, draw) in draws.iter().enumerate() {
        let back = reload(draw, &dir, &format!("d{k}.csv"));
        assert_eq!(&back, &draw.dataset, "draw {k}");
    }
}

#[test]
fn latent_sidecar_has_one_row_per_unit_period() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e3.csv");
    let draw = gen_exp3(
        &Exp3Config {
            n: 300,
            ..Exp3Config::default()
        },
        4,
    )
    .unwrap();
    draw.write(&path).unwrap();
    let mut rdr = csv::Reader::from_path(latent_path(&path)).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_owned).collect();
    assert_eq!(
        header,
        ["unit", "period", "e", "d_never", "d_own", "y0", "y1", "h", "g"]
    );
    let rows = rdr.records().map(Result::unwrap).collect::<Vec<_>>();
    assert_eq!(rows.len(), 300 * draw.latent.n_periods as usize);
    // the observed outcome is the potential outcome picked by the own-exposure treatment
    let y: Vec<f64> = rows
        .iter()
        .map(|r| {
            let f = |j: usize| r[j].parse::<f64>().unwrap();
            if f(4) == 1.0 {
                f(6)
            } else {
                f(5)
            }
        })
        .collect();
    let Dataset::Panel(p) = &draw.dataset else {
        unreachable!()
    };
    for (k, v) in y.iter().enumerate() {
        let (i, t) = (k / 5, k as u32 % 5 + 1);
        assert_eq!(v.to_bits(), p.y(i, t).to_bits());
    }
}
