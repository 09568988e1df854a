//! Enumerable populations with a discrete covariate, for checking the
//! estimators against a brute-force evaluation of the identifying ratio.

use std::collections::BTreeMap;

use idid::data::{Cohort, ControlKind, Covariates, Dataset, PanelDataset, RcDataset};
use idid::latt::{Estimator, EstimatorConfig};
use idid::nuisance::ModelSpec;

/// Distinct unit types in the panel population: 4 covariate values × 2 arms × 3 take-up paths.
pub const PANEL_TYPES: usize = 24;
/// Distinct row types in the cross-section population: 4 × 2 arms × 2 periods × 2 treatment values.
pub const RC_TYPES: usize = 32;

/// DR with saturated working models in the four covariate values.
pub fn saturated(estimator: Estimator) -> EstimatorConfig {
    let f = "ind(x>0.5) + ind(x>1.5) + ind(x>2.5)";
    let spec = ModelSpec::new(f.parse().unwrap(), f.parse().unwrap()).unwrap();
    let mut cfg = EstimatorConfig::new(estimator, ControlKind::NeverExposed, spec);
    cfg.weak_threshold = 0.0;
    cfg
}

/// Count-weighted sums of (y, d) per (x, arm, period).
#[derive(Default)]
struct CellSums(BTreeMap<(u32, u32, u32), (f64, f64, f64)>);

impl CellSums {
    fn add(&mut self, key: (u32, u32, u32), w: f64, y: f64, d: f64) {
        let e = self.0.entry(key).or_default();
        e.0 += w;
        e.1 += w * y;
        e.2 += w * d;
    }

    fn mean(&self, key: (u32, u32, u32)) -> (f64, f64) {
        let (w, y, d) = self.0[&key];
        (y / w, d / w)
    }

    fn weight(&self, key: (u32, u32, u32)) -> f64 {
        self.0[&key].0
    }

    /// Σ_x P(x | exposed) · (exposed change − control change) in y over the same for d.
    fn ratio(&self) -> f64 {
        let mass = |x| self.weight((x, 1, 1)) + self.weight((x, 1, 0));
        let exposed: f64 = (0..4).map(mass).sum();
        let (mut num, mut den) = (0.0, 0.0);
        for x in 0..4 {
            let change = |z| {
                let (y1, d1) = self.mean((x, z, 1));
                let (y0, d0) = self.mean((x, z, 0));
                (y1 - y0, d1 - d0)
            };
            let (a, b) = (change(1), change(0));
            num += mass(x) / exposed * (a.0 - b.0);
            den += mass(x) / exposed * (a.1 - b.1);
        }
        num / den
    }
}

fn cohort(z: u32) -> Cohort {
    if z == 1 {
        Cohort::Period(2)
    } else {
        Cohort::Never
    }
}

/// Two-period panel; `counts[k]` replicates unit type k (each count ≥ 1).
pub fn panel_population(counts: &[u32; PANEL_TYPES]) -> (Dataset, f64) {
    let paths = [(0u8, 0u8), (0, 1), (1, 1)];
    let (mut ids, mut y, mut d, mut ex, mut xs) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut sums = CellSums::default();
    let mut k = 0;
    for x in 0..4u32 {
        for z in 0..2u32 {
            for (p, &(d1, d2)) in paths.iter().enumerate() {
                let count = counts[k];
                k += 1;
                let (xf, zf, pf) = (f64::from(x), f64::from(z), p as f64);
                let y1 = 0.3 * xf + 0.5 * zf + 0.2 * pf;
                let y2 = y1 + 0.4 + 0.25 * xf * zf + 1.5 * f64::from(d2) + 0.1 * pf;
                // changes only: the base period contributes zeros
                sums.add(
                    (x, z, 1),
                    f64::from(count),
                    y2 - y1,
                    f64::from(d2) - f64::from(d1),
                );
                sums.add((x, z, 0), f64::from(count), 0.0, 0.0);
                for _ in 0..count {
                    ids.push(ids.len().to_string());
                    y.extend([y1, y2]);
                    d.extend([d1, d2]);
                    ex.push(cohort(z));
                    xs.push(xf);
                }
            }
        }
    }
    let x = Covariates::new(vec!["x".into()], vec![xs]).unwrap();
    let data = PanelDataset::new(ids, 2, y, d, ex, x, None).unwrap();
    (data.into(), sums.ratio())
}

/// Two repeated cross-sections; `counts[k]` replicates row type k (each count ≥ 1).
pub fn rc_population(counts: &[u32; RC_TYPES]) -> (Dataset, f64) {
    let (mut y, mut d, mut ex, mut period, mut xs) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut sums = CellSums::default();
    let mut k = 0;
    for x in 0..4u32 {
        for z in 0..2u32 {
            for post in 0..2u32 {
                for dv in 0..2u32 {
                    let count = counts[k];
                    let xf = f64::from(x);
                    let yv = 0.5 * xf
                        + 1.2 * f64::from(z)
                        + 0.7 * f64::from(post)
                        + 1.8 * f64::from(dv)
                        + 0.3 * xf * f64::from(post * z)
                        + 0.05 * k as f64;
                    k += 1;
                    sums.add((x, z, post), f64::from(count), yv, f64::from(dv));
                    for _ in 0..count {
                        y.push(yv);
                        d.push(dv as u8);
                        ex.push(cohort(z));
                        period.push(post + 1);
                        xs.push(xf);
                    }
                }
            }
        }
    }
    let x = Covariates::new(vec!["x".into()], vec![xs]).unwrap();
    let data = RcDataset::new(2, y, d, ex, period, x, None).unwrap();
    (data.into(), sums.ratio())
}
