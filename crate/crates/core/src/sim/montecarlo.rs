//! Replicate generate → estimate → record and summarize.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{gen_exp1, gen_exp2, gen_exp3, Exp1Config, Exp2Config, Exp3Config};
use super::{bloom_oracle, csa_all, SimDraw};
use crate::aggregate::{
    aggregate, group_difference, AggEstimate, AggOptions, SchemeKind, WeightScheme,
};
use crate::bootstrap::{simultaneous_bands, IfMatrix, Multiplier};
use crate::data::{Cohort, ControlKind, Sampling};
use crate::error::{IdidError, Result};
use crate::latt::{estimate_all, estimate_cell, Estimator, EstimatorConfig};
use crate::nuisance::ModelSpec;
use crate::rng::derive_seed;
use crate::stats::{mean, median, z_crit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paper {
    Exp1,
    Exp2,
    Exp3,
}

impl fmt::Display for Paper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paper::Exp1 => "exp1",
            Paper::Exp2 => "exp2",
            Paper::Exp3 => "exp3",
        })
    }
}

impl FromStr for Paper {
    type Err = IdidError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp1" | "1" => Ok(Paper::Exp1),
            "exp2" | "2" => Ok(Paper::Exp2),
            "exp3" | "3" => Ok(Paper::Exp3),
            other => Err(IdidError::Config(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McConfig {
    pub paper: Paper,
    pub sampling: Sampling,
    pub n: usize,
    pub b_mc: usize,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    /// Experiment 1 designs.
    pub dgps: Vec<u8>,
    /// Experiment 2 comparison groups.
    pub kinds: Vec<ControlKind>,
    /// Experiment 2: run the two-group variant and difference the aggregates.
    pub group: bool,
    /// Event-study horizons `0..=horizon` aggregated in experiment 2.
    pub horizon: u32,
    /// Multiplier-bootstrap draws for simultaneous bands over the event study; 0 disables.
    pub bands: usize,
    pub folds: usize,
    pub alpha: f64,
}

impl McConfig {
    /// Desk-scale defaults for each experiment.
    pub fn paper(paper: Paper, sampling: Sampling) -> Self {
        let base = McConfig {
            paper,
            sampling,
            n: 10_000,
            b_mc: 300,
            seed: 0,
            estimators: vec![Estimator::Dr],
            dgps: vec![1, 2, 3, 4],
            kinds: vec![ControlKind::NeverExposed],
            group: false,
            horizon: 2,
            bands: 0,
            folds: 5,
            alpha: 0.05,
        };
        match paper {
            Paper::Exp1 => McConfig {
                n: 5000,
                b_mc: 500,
                estimators: Estimator::ALL.to_vec(),
                ..base
            },
            Paper::Exp2 => McConfig {
                kinds: vec![ControlKind::NeverExposed, ControlKind::NotYetExposed],
                bands: 999,
                ..base
            },
            Paper::Exp3 => base,
        }
    }

    /// Switch to the two-group design at its default size.
    pub fn with_group(self) -> Self {
        McConfig {
            group: true,
            n: 20_000,
            ..self
        }
    }
}

/// One row per (design, estimator, target).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McRow {
    pub design: String,
    pub estimator: String,
    pub target: String,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    #[serde(rename = "Av. Bias")]
    pub avg_bias: f64,
    #[serde(rename = "Med. Bias")]
    pub med_bias: f64,
    #[serde(rename = "RMSE")]
    pub rmse: f64,
    #[serde(rename = "Asy. V")]
    pub asy_v: f64,
    #[serde(rename = "Cover")]
    pub cover: f64,
    #[serde(rename = "CIL")]
    pub cil: f64,
    pub ok: usize,
    pub failed: usize,
}

/// Joint coverage of a family of aggregates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandCoverage {
    pub design: String,
    pub family: String,
    pub simultaneous: f64,
    pub pointwise: f64,
    pub mean_crit: f64,
    pub ok: usize,
    pub failed: usize,
}

/// Bloom comparison per (e, t): IDiD estimate, latent oracle, and
/// treatment-cohort DiD for g = e.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BloomRow {
    pub e: u32,
    pub t: u32,
    #[serde(rename = "LATT")]
    pub latt: f64,
    #[serde(rename = "LATT SD")]
    pub latt_sd: f64,
    #[serde(rename = "Oracle")]
    pub oracle: f64,
    #[serde(rename = "ATT")]
    pub att: f64,
    #[serde(rename = "ATT SD")]
    pub att_sd: f64,
    #[serde(rename = "ATT truth")]
    pub att_truth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McReport {
    pub config: McConfig,
    pub rows: Vec<McRow>,
    pub bands: Vec<BandCoverage>,
    pub bloom: Vec<BloomRow>,
    /// Replications whose data generation failed outright.
    pub failed_replications: usize,
}

impl McReport {
    pub fn row(&self, design: &str, estimator: &str, target: &str) -> Option<&McRow> {
        self.rows
            .iter()
            .find(|r| r.design == design && r.estimator == estimator && r.target == target)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    design: String,
    estimator: String,
    target: String,
}

fn key(design: &str, estimator: impl fmt::Display, target: impl Into<String>) -> Key {
    Key {
        design: design.to_owned(),
        estimator: estimator.to_string(),
        target: target.into(),
    }
}

/// One estimate from one replication: truth, and (estimate, se) unless it failed.
struct Record {
    key: Key,
    truth: f64,
    value: Option<(f64, f64)>,
}

/// (design, family, simultaneous covered, pointwise covered, critical value).
struct BandRecord {
    design: String,
    family: String,
    value: Option<(bool, bool, f64)>,
}

#[derive(Default)]
struct Replication {
    records: Vec<Record>,
    bands: Vec<BandRecord>,
}

fn estimate_spec(draw: &SimDraw) -> ModelSpec {
    ModelSpec::linear(draw.dataset.covariates())
}

fn es_schemes(horizon: u32) -> Vec<WeightScheme> {
    (0..=horizon)
        .map(|l| WeightScheme::new(SchemeKind::Es(l)))
        .collect()
}

fn band_record(
    design: &str,
    family: &str,
    aggs: &[AggEstimate],
    truths: &[f64],
    cfg: &McConfig,
    seed: u64,
) -> BandRecord {
    let value = (|| {
        let ifm = IfMatrix::new(
            aggs.iter().map(|a| a.scheme.clone()).collect(),
            aggs.iter().map(|a| a.theta).collect(),
            aggs.iter().map(|a| a.if_values.clone()).collect(),
        )?;
        let res = simultaneous_bands(&ifm, cfg.bands, cfg.alpha, Multiplier::Mammen, seed)?;
        let sim = res
            .bands
            .iter()
            .zip(truths)
            .all(|(b, &v)| b.lo <= v && v <= b.hi);
        let pw = res
            .bands
            .iter()
            .zip(truths)
            .all(|(b, &v)| b.pointwise_lo <= v && v <= b.pointwise_hi);
        Ok::<_, IdidError>((sim, pw, res.crit))
    })();
    if let Err(err) = &value {
        log::debug!("band replication failed: {err}");
    }
    BandRecord {
        design: design.to_owned(),
        family: family.to_owned(),
        value: value.ok(),
    }
}

fn exp1_replication(cfg: &McConfig, seed: u64) -> Result<Replication> {
    let mut rep = Replication::default();
    for &dgp in &cfg.dgps {
        let draw = gen_exp1(&Exp1Config::dgp(dgp, cfg.n, cfg.sampling)?, seed)?;
        let design = format!("DGP{dgp}");
        let truth = draw.truth.latt[&(2, 2)];
        for &est in &cfg.estimators {
            let mut ec = EstimatorConfig::new(est, ControlKind::NeverExposed, estimate_spec(&draw));
            ec.folds = cfg.folds;
            ec.seed = seed;
            ec.alpha = cfg.alpha;
            let value = estimate_cell(&draw.dataset, 2, 2, &ec).map(|c| (c.tau, c.se));
            if let Err(err) = &value {
                log::debug!("{design}/{est} failed: {err}");
            }
            rep.records.push(Record {
                key: key(&design, est, "LATT(2,2)"),
                truth,
                value: value.ok(),
            });
        }
    }
    Ok(rep)
}

fn exp2_replication(cfg: &McConfig, seed: u64) -> Result<Replication> {
    let mut rep = Replication::default();
    let opts = AggOptions {
        fixed_weights: false,
        alpha: cfg.alpha,
    };
    let schemes = es_schemes(cfg.horizon);
    for (k, &kind) in cfg.kinds.iter().enumerate() {
        let draw = gen_exp2(
            &Exp2Config {
                n: cfg.n,
                with_group: cfg.group,
                sampling: cfg.sampling,
                kind,
                ..Exp2Config::default()
            },
            seed,
        )?;
        let design = kind.to_string();
        let mut ec = EstimatorConfig::new(Estimator::Dr, kind, estimate_spec(&draw));
        ec.alpha = cfg.alpha;
        ec.seed = seed;
        let band_seed = derive_seed(seed, &[k as u64, 99]);
        if cfg.group {
            let gd = group_difference(&draw.dataset, &ec, &schemes, opts);
            let t = &draw.truth.group_latt;
            let (t0, t1) = (t["0"], t["1"]);
            for (j, s) in schemes.iter().enumerate() {
                let pick = |f: &dyn Fn(&crate::aggregate::GroupDifference) -> &AggEstimate| {
                    gd.as_ref().ok().map(|g| {
                        let a = f(g);
                        (a.theta, a.se)
                    })
                };
                rep.records.push(Record {
                    key: key(&design, "dr", format!("{s} [0]")),
                    truth: t0,
                    value: pick(&|g| &g.first[j]),
                });
                rep.records.push(Record {
                    key: key(&design, "dr", format!("{s} [1]")),
                    truth: t1,
                    value: pick(&|g| &g.second[j]),
                });
                rep.records.push(Record {
                    key: key(&design, "dr", format!("{s} [0 - 1]")),
                    truth: t0 - t1,
                    value: pick(&|g| &g.difference[j]),
                });
            }
            if cfg.bands > 0 {
                let truths = vec![t0 - t1; schemes.len()];
                rep.bands.push(match &gd {
                    Ok(g) => band_record(
                        &design,
                        "es difference",
                        &g.difference,
                        &truths,
                        cfg,
                        band_seed,
                    ),
                    Err(_) => BandRecord {
                        design: design.clone(),
                        family: "es difference".into(),
                        value: None,
                    },
                });
            }
            continue;
        }
        let table = estimate_all(&draw.dataset, &ec)?;
        let cells =
            crate::data::cell_index(draw.dataset.exposure(), draw.dataset.n_periods(), kind)?;
        for (e, t) in cells {
            let truth = draw.truth.latt[&(e, t)];
            rep.records.push(Record {
                key: key(&design, "dr", format!("LATT({e},{t})")),
                truth,
                value: table.get(e, t).map(|c| (c.tau, c.se)),
            });
        }
        let aggs: Vec<Result<AggEstimate>> = schemes
            .iter()
            .map(|&s| {
                aggregate(
                    &table,
                    draw.dataset.exposure(),
                    draw.dataset.n_periods(),
                    s,
                    opts,
                )
            })
            .collect();
        for (s, a) in schemes.iter().zip(&aggs) {
            rep.records.push(Record {
                key: key(&design, "dr", s.to_string()),
                truth: cfg_tau(&draw),
                value: a.as_ref().ok().map(|a| (a.theta, a.se)),
            });
        }
        if cfg.bands > 0 {
            let ok: Option<Vec<AggEstimate>> = aggs.into_iter().map(|a| a.ok()).collect();
            let truths = vec![cfg_tau(&draw); schemes.len()];
            rep.bands.push(match ok {
                Some(aggs) => band_record(&design, "es", &aggs, &truths, cfg, band_seed),
                None => BandRecord {
                    design: design.clone(),
                    family: "es".into(),
                    value: None,
                },
            });
        }
    }
    Ok(rep)
}

/// Common cell-level effect of an experiment-2 draw.
fn cfg_tau(draw: &SimDraw) -> f64 {
    draw.truth.latt.values().next().copied().unwrap_or(f64::NAN)
}

fn exp3_replication(cfg: &McConfig, seed: u64) -> Result<Replication> {
    let mut rep = Replication::default();
    let draw = gen_exp3(
        &Exp3Config {
            n: cfg.n,
            sampling: cfg.sampling,
            ..Exp3Config::default()
        },
        seed,
    )?;
    let design = "never-exposed";
    let mut ec = EstimatorConfig::new(
        Estimator::Dr,
        ControlKind::NeverExposed,
        estimate_spec(&draw),
    );
    ec.alpha = cfg.alpha;
    ec.seed = seed;
    let table = estimate_all(&draw.dataset, &ec)?;
    let g = draw.latent.treat_cohort.as_ref().expect("absorbing design");
    let rows_g: Vec<Cohort> = match &draw.latent.row_unit {
        Some(units) => units.iter().map(|&i| g[i]).collect(),
        None => g.clone(),
    };
    let csa = csa_all(&draw.dataset, &rows_g, &ec);
    for (&(e, t), &att_truth) in &draw.truth.att {
        let oracle = bloom_oracle(&draw, e, t);
        rep.records.push(Record {
            key: key(design, "dr", format!("LATT({e},{t})")),
            truth: oracle.as_ref().copied().unwrap_or(f64::NAN),
            value: match oracle {
                Ok(_) => table.get(e, t).map(|c| (c.tau, c.se)),
                Err(_) => None,
            },
        });
        rep.records.push(Record {
            key: key(design, "csa", format!("ATT({e},{t})")),
            truth: att_truth,
            value: csa
                .as_ref()
                .ok()
                .and_then(|c| c.get(e, t))
                .map(|c| (c.tau, c.se)),
        });
    }
    Ok(rep)
}

/// Per-target (estimate, se, truth) draws plus the failure count.
type Keyed = Vec<(Key, Vec<(f64, f64, f64)>, usize)>;
/// Per-family (simultaneous hit, pointwise hit, crit) draws plus the failure count.
type BandDraws = Vec<(String, String, Vec<(bool, bool, f64)>, usize)>;

fn summarize(n: usize, alpha: f64, keyed: Keyed) -> Vec<McRow> {
    let z = z_crit(alpha);
    keyed
        .into_iter()
        .map(|(k, vals, failed)| {
            let est: Vec<f64> = vals.iter().map(|v| v.1).collect();
            let bias: Vec<f64> = vals.iter().map(|v| v.1 - v.0).collect();
            let truth = mean(&vals.iter().map(|v| v.0).collect::<Vec<_>>());
            let m = mean(&est);
            let sd = if est.len() > 1 {
                (est.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            let frac = |f: &dyn Fn(&(f64, f64, f64)) -> bool| {
                vals.iter().filter(|v| f(v)).count() as f64 / vals.len() as f64
            };
            McRow {
                design: k.design,
                estimator: k.estimator,
                target: k.target,
                truth,
                mean: m,
                sd,
                avg_bias: mean(&bias),
                med_bias: median(&bias),
                rmse: mean(&bias.iter().map(|b| b * b).collect::<Vec<_>>()).sqrt(),
                asy_v: mean(
                    &vals
                        .iter()
                        .map(|v| n as f64 * v.2 * v.2)
                        .collect::<Vec<_>>(),
                ),
                cover: frac(&|v| (v.1 - v.0).abs() <= z * v.2),
                cil: mean(&vals.iter().map(|v| 2.0 * z * v.2).collect::<Vec<_>>()),
                ok: vals.len(),
                failed,
            }
        })
        .collect()
}

fn bloom_rows(rows: &[McRow]) -> Vec<BloomRow> {
    rows.iter()
        .filter(|r| r.estimator == "dr")
        .filter_map(|r| {
            let inner = r.target.strip_prefix("LATT(")?.strip_suffix(')')?;
            let (e, t) = inner.split_once(',')?;
            let (e, t): (u32, u32) = (e.parse().ok()?, t.parse().ok()?);
            let att = rows
                .iter()
                .find(|a| a.estimator == "csa" && a.target == format!("ATT({e},{t})"))?;
            Some(BloomRow {
                e,
                t,
                latt: r.mean,
                latt_sd: r.sd,
                oracle: r.truth,
                att: att.mean,
                att_sd: att.sd,
                att_truth: att.truth,
            })
        })
        .collect()
}

/// Run `b_mc` replications in parallel (replication `b` uses seed
/// `derive_seed(seed, [b])`) and reduce in replication order.
pub fn run_monte_carlo(cfg: &McConfig) -> Result<McReport> {
    if cfg.b_mc == 0 {
        return Err(IdidError::Config("need at least one replication".into()));
    }
    if cfg.group && cfg.paper != Paper::Exp2 {
        return Err(IdidError::Config(
            "the two-group design exists for exp2 only".into(),
        ));
    }
    let reps: Vec<Result<Replication>> = (0..cfg.b_mc)
        .into_par_iter()
        .map(|b| {
            let seed = derive_seed(cfg.seed, &[b as u64]);
            match cfg.paper {
                Paper::Exp1 => exp1_replication(cfg, seed),
                Paper::Exp2 => exp2_replication(cfg, seed),
                Paper::Exp3 => exp3_replication(cfg, seed),
            }
        })
        .collect();

    let mut keyed: Keyed = Vec::new();
    let mut bands: BandDraws = Vec::new();
    let mut failed_replications = 0;
    for rep in &reps {
        let rep = match rep {
            Ok(r) => r,
            Err(err) => {
                log::warn!("replication failed: {err}");
                failed_replications += 1;
                continue;
            }
        };
        for rec in &rep.records {
            let slot = match keyed.iter().position(|k| k.0 == rec.key) {
                Some(p) => p,
                None => {
                    keyed.push((rec.key.clone(), Vec::new(), 0));
                    keyed.len() - 1
                }
            };
            match rec.value {
                Some((est, se)) if est.is_finite() && se.is_finite() && rec.truth.is_finite() => {
                    keyed[slot].1.push((rec.truth, est, se))
                }
                _ => keyed[slot].2 += 1,
            }
        }
        for b in &rep.bands {
            let slot = match bands
                .iter()
                .position(|x| x.0 == b.design && x.1 == b.family)
            {
                Some(p) => p,
                None => {
                    bands.push((b.design.clone(), b.family.clone(), Vec::new(), 0));
                    bands.len() - 1
                }
            };
            match b.value {
                Some(v) => bands[slot].2.push(v),
                None => bands[slot].3 += 1,
            }
        }
    }
    for k in &mut keyed {
        k.2 += failed_replications;
    }
    let rows = summarize(cfg.n, cfg.alpha, keyed);
    let bands = bands
        .into_iter()
        .map(|(design, family, v, failed)| {
            let k = v.len().max(1) as f64;
            BandCoverage {
                design,
                family,
                simultaneous: v.iter().filter(|x| x.0).count() as f64 / k,
                pointwise: v.iter().filter(|x| x.1).count() as f64 / k,
                mean_crit: v.iter().map(|x| x.2).sum::<f64>() / k,
                ok: v.len(),
                failed: failed + failed_replications,
            }
        })
        .collect();
    let bloom = if cfg.paper == Paper::Exp3 {
        bloom_rows(&rows)
    } else {
        Vec::new()
    };
    Ok(McReport {
        config: cfg.clone(),
        rows,
        bands,
        bloom,
        failed_replications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(paper: Paper) -> McConfig {
        McConfig {
            n: 600,
            b_mc: 3,
            seed: 5,
            bands: if paper == Paper::Exp2 { 100 } else { 0 },
            ..McConfig::paper(paper, Sampling::Panel)
        }
    }

    #[test]
    fn summaries_are_deterministic() {
        for p in [Paper::Exp1, Paper::Exp2, Paper::Exp3] {
            let cfg = small(p);
            assert_eq!(
                run_monte_carlo(&cfg).unwrap(),
                run_monte_carlo(&cfg).unwrap()
            );
        }
    }

    #[test]
    fn summary_invariants() {
        let report = run_monte_carlo(&McConfig {
            b_mc: 6,
            ..small(Paper::Exp1)
        })
        .unwrap();
        assert_eq!(report.rows.len(), 4 * Estimator::ALL.len());
        for r in &report.rows {
            assert!((0.0..=1.0).contains(&r.cover));
            assert_eq!(r.ok + r.failed, 6);
            if r.ok > 0 {
                assert!(r.rmse * r.rmse >= r.avg_bias * r.avg_bias - 1e-12);
            }
        }
    }

    #[test]
    fn exp3_report_has_bloom_layout() {
        let report = run_monte_carlo(&small(Paper::Exp3)).unwrap();
        assert_eq!(report.bloom.len(), 10);
        assert_eq!(report.bloom[0].att_truth, 0.5);
    }

    #[test]
    fn exp2_reports_bands_per_control_group() {
        let report = run_monte_carlo(&small(Paper::Exp2)).unwrap();
        assert_eq!(report.bands.len(), 2);
        assert!(report.row("never-exposed", "dr", "es:0").is_some());
        let g = run_monte_carlo(&McConfig {
            n: 1200,
            ..small(Paper::Exp2).with_group()
        })
        .unwrap();
        assert!(g.row("not-yet-exposed", "dr", "es:1 [0 - 1]").is_some());
    }
}
