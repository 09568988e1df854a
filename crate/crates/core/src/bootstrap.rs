//! Multiplier bootstrap over influence-function columns and simultaneous bands.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IdidError, Result};
use crate::rng;
use crate::stats::{normal_quantile, quantile_sorted};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Multiplier {
    /// Two-point distribution with mean 0, variance 1 and third moment 1.
    Mammen,
    /// ±1 with equal probability.
    Rademacher,
}

impl Multiplier {
    fn draw(self, r: &mut rng::Stream) -> f64 {
        let s5 = 5f64.sqrt();
        match self {
            Multiplier::Mammen => {
                if r.random::<f64>() < (s5 + 1.0) / (2.0 * s5) {
                    (1.0 - s5) / 2.0
                } else {
                    (1.0 + s5) / 2.0
                }
            }
            Multiplier::Rademacher => {
                if r.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

impl fmt::Display for Multiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Multiplier::Mammen => "mammen",
            Multiplier::Rademacher => "rademacher",
        })
    }
}

impl FromStr for Multiplier {
    type Err = IdidError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mammen" => Ok(Multiplier::Mammen),
            "rademacher" => Ok(Multiplier::Rademacher),
            other => Err(IdidError::Config(format!("unknown multiplier `{other}`"))),
        }
    }
}

/// Influence values of J estimators over the same n rows.
#[derive(Clone, Debug, PartialEq)]
pub struct IfMatrix {
    pub labels: Vec<String>,
    pub point: Vec<f64>,
    /// One length-n column per parameter.
    pub columns: Vec<Vec<f64>>,
}

impl IfMatrix {
    pub fn new(labels: Vec<String>, point: Vec<f64>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != point.len() || point.len() != columns.len() || columns.is_empty() {
            return Err(IdidError::Domain(
                "influence matrix dimensions disagree".into(),
            ));
        }
        let n = columns[0].len();
        if n == 0 || columns.iter().any(|c| c.len() != n) {
            return Err(IdidError::Domain(
                "influence columns have unequal lengths".into(),
            ));
        }
        Ok(IfMatrix {
            labels,
            point,
            columns,
        })
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    pub fn j(&self) -> usize {
        self.columns.len()
    }
}

/// `B × J` perturbed root-n deviations `n^{-1/2} Σ_i ξ_i IF[i, j]`.
pub fn multiplier_draws(
    ifm: &IfMatrix,
    b: usize,
    multiplier: Multiplier,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if b < 100 {
        return Err(IdidError::Domain(format!(
            "need at least 100 bootstrap draws, got {b}"
        )));
    }
    let n = ifm.n();
    let root_n = (n as f64).sqrt();
    Ok((0..b)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, &[k as u64]);
            let mut acc = vec![0.0; ifm.j()];
            for i in 0..n {
                let xi = multiplier.draw(&mut r);
                for (a, col) in acc.iter_mut().zip(&ifm.columns) {
                    *a += xi * col[i];
                }
            }
            acc.into_iter().map(|a| a / root_n).collect()
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Band {
    pub label: String,
    pub point: f64,
    /// Bootstrap standard error of the estimator (IQR-based, already divided by √n).
    pub se_boot: f64,
    pub lo: f64,
    pub hi: f64,
    pub pointwise_lo: f64,
    pub pointwise_hi: f64,
    /// Zero bootstrap spread: left out of the sup and given a zero-width band.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandResult {
    pub alpha: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub multiplier: Multiplier,
    pub seed: u64,
    pub crit: f64,
    pub bands: Vec<Band>,
}

pub fn simultaneous_bands(
    ifm: &IfMatrix,
    b: usize,
    alpha: f64,
    multiplier: Multiplier,
    seed: u64,
) -> Result<BandResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(IdidError::Domain(format!("alpha {alpha} outside (0, 1)")));
    }
    let draws = multiplier_draws(ifm, b, multiplier, seed)?;
    let root_n = (ifm.n() as f64).sqrt();
    let iqr_scale = normal_quantile(0.75) - normal_quantile(0.25);
    let mut sorted_abs = Vec::with_capacity(ifm.j());
    let se: Vec<f64> = (0..ifm.j())
        .map(|j| {
            let mut col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            col.sort_by(f64::total_cmp);
            (quantile_sorted(&col, 0.75) - quantile_sorted(&col, 0.25)) / iqr_scale
        })
        .collect();
    let live: Vec<bool> = se.iter().map(|&s| s > 0.0 && s.is_finite()).collect();
    for (j, &ok) in live.iter().enumerate() {
        if !ok {
            log::warn!(
                "bootstrap column `{}` has no spread; excluded from the sup",
                ifm.labels[j]
            );
            sorted_abs.push(Vec::new());
            continue;
        }
        let mut col: Vec<f64> = draws.iter().map(|d| (d[j] / se[j]).abs()).collect();
        col.sort_by(f64::total_cmp);
        sorted_abs.push(col);
    }
    let mut sup: Vec<f64> = draws
        .iter()
        .map(|d| {
            (0..ifm.j())
                .filter(|&j| live[j])
                .map(|j| (d[j] / se[j]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    sup.sort_by(f64::total_cmp);
    let crit = quantile_sorted(&sup, 1.0 - alpha);
    let bands = (0..ifm.j())
        .map(|j| {
            let point = ifm.point[j];
            let s = if live[j] { se[j] / root_n } else { 0.0 };
            let q = if live[j] {
                quantile_sorted(&sorted_abs[j], 1.0 - alpha)
            } else {
                0.0
            };
            Band {
                label: ifm.labels[j].clone(),
                point,
                se_boot: s,
                lo: point - crit * s,
                hi: point + crit * s,
                pointwise_lo: point - q * s,
                pointwise_hi: point + q * s,
                degenerate: !live[j],
            }
        })
        .collect();
    Ok(BandResult {
        alpha,
        b,
        multiplier,
        seed,
        crit,
        bands,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn gaussian_column(seed: u64, n: usize) -> Vec<f64> {
        let mut r = rng::stream(seed, &[]);
        (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn zero_column_draws_are_zero_and_flagged() {
        let ifm = IfMatrix::new(
            vec!["a".into(), "b".into()],
            vec![1.0, 2.0],
            vec![gaussian_column(1, 50), vec![0.0; 50]],
        )
        .unwrap();
        let draws = multiplier_draws(&ifm, 200, Multiplier::Mammen, 3).unwrap();
        assert!(draws.iter().all(|d| d[1] == 0.0));
        let res = simultaneous_bands(&ifm, 200, 0.05, Multiplier::Mammen, 3).unwrap();
        assert!(res.bands[1].degenerate && res.bands[1].lo == 2.0);
        assert!(!res.bands[0].degenerate);
    }

    #[test]
    fn multiplier_moments() {
        for m in [Multiplier::Mammen, Multiplier::Rademacher] {
            let mut r = rng::stream(5, &[]);
            let xs: Vec<f64> = (0..200_000).map(|_| m.draw(&mut r)).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            assert!(mean.abs() < 0.01 && (var - 1.0).abs() < 0.01, "{m}");
        }
    }

    #[test]
    fn single_column_draw_sd_matches_analytic() {
        let col = gaussian_column(7, 400);
        let sd = (col.iter().map(|v| v * v).sum::<f64>() / 400.0).sqrt();
        let ifm = IfMatrix::new(vec!["a".into()], vec![0.0], vec![col]).unwrap();
        let draws = multiplier_draws(&ifm, 5000, Multiplier::Mammen, 1).unwrap();
        let v: Vec<f64> = draws.iter().map(|d| d[0]).collect();
        let boot_sd = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        assert!((boot_sd / sd - 1.0).abs() < 0.05);
    }

    #[test]
    fn single_column_crit_is_normal() {
        let ifm =
            IfMatrix::new(vec!["a".into()], vec![0.0], vec![gaussian_column(8, 2000)]).unwrap();
        let res = simultaneous_bands(&ifm, 5000, 0.05, Multiplier::Mammen, 2).unwrap();
        assert!(
            (res.crit / 1.959964 - 1.0).abs() < 0.03,
            "crit {}",
            res.crit
        );
    }

    #[test]
    fn duplicated_column_adds_nothing() {
        let c = gaussian_column(9, 300);
        let one = IfMatrix::new(vec!["a".into()], vec![0.0], vec![c.clone()]).unwrap();
        let two = IfMatrix::new(
            vec!["a".into(), "b".into()],
            vec![0.0, 1.0],
            vec![c.clone(), c],
        )
        .unwrap();
        let r1 = simultaneous_bands(&one, 999, 0.05, Multiplier::Mammen, 4).unwrap();
        let r2 = simultaneous_bands(&two, 999, 0.05, Multiplier::Mammen, 4).unwrap();
        assert!((r1.crit - r2.crit).abs() < 1e-12);
    }

    #[test]
    fn too_few_draws_rejected() {
        let ifm = IfMatrix::new(vec!["a".into()], vec![0.0], vec![vec![1.0, -1.0]]).unwrap();
        assert!(matches!(
            multiplier_draws(&ifm, 10, Multiplier::Mammen, 0),
            Err(IdidError::Domain(_))
        ));
    }

    #[test]
    fn bands_contain_pointwise_and_are_monotone_in_alpha() {
        let cols: Vec<Vec<f64>> = (0..4).map(|k| gaussian_column(20 + k, 250)).collect();
        let ifm = IfMatrix::new(
            (0..4).map(|k| k.to_string()).collect(),
            vec![0.5, 1.0, 1.5, 2.0],
            cols,
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for alpha in [0.01, 0.05, 0.1, 0.2] {
            let res = simultaneous_bands(&ifm, 500, alpha, Multiplier::Rademacher, 11).unwrap();
            assert!(res.crit <= last);
            last = res.crit;
            for b in &res.bands {
                assert!(b.lo <= b.pointwise_lo && b.hi >= b.pointwise_hi);
            }
            assert_eq!(
                res,
                simultaneous_bands(&ifm, 500, alpha, Multiplier::Rademacher, 11).unwrap()
            );
        }
    }
}
