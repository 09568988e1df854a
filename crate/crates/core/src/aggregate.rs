//! Weighted summaries of LATT(e, t) with influence functions that account
//! for estimated weights.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::data::{cell_index, Cohort, Dataset};
use crate::error::{IdidError, Result};
use crate::latt::{estimate_all, if_se, EstimatorConfig, LattTable};
use crate::stats::z_crit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    /// Event study at horizon l.
    Es(u32),
    /// Event study at horizon l over cohorts observed through horizon l′.
    BalEs(u32, u32),
    /// All periods of one cohort.
    Sel(u32),
    /// All cohorts in one calendar period.
    Cal(u32),
    /// Calendar-period summaries cumulated up to a period.
    CumCal(u32),
    /// Every cell, weighted by cohort share.
    Overall,
    /// Cohort-level summaries weighted by cohort share.
    OverallSel,
}

/// A weighting scheme. `aet` selects the complier-share weighted version;
/// without it the weights ignore AET(e, t).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct WeightScheme {
    pub kind: SchemeKind,
    pub aet: bool,
}

impl WeightScheme {
    pub fn new(kind: SchemeKind) -> Self {
        WeightScheme { kind, aet: true }
    }

    pub fn without_aet(kind: SchemeKind) -> Self {
        WeightScheme { kind, aet: false }
    }

    /// Parse a comma-free scheme list entry; ranges such as `es:0..2` expand.
    pub fn parse_list(s: &str) -> Result<Vec<WeightScheme>> {
        let s = s.trim();
        let (aet, body) = match s.strip_prefix("csa-") {
            Some(rest) => (false, rest),
            None => (true, s),
        };
        let (name, arg) = match body.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (body, None),
        };
        let bad = || IdidError::Config(format!("cannot parse weighting scheme `{s}`"));
        let num = |a: &str| a.trim().parse::<u32>().map_err(|_| bad());
        let range = |a: &str| -> Result<Vec<u32>> {
            match a.split_once("..") {
                Some((lo, hi)) => {
                    let (lo, hi) = (num(lo)?, num(hi)?);
                    if lo > hi {
                        return Err(bad());
                    }
                    Ok((lo..=hi).collect())
                }
                None => Ok(vec![num(a)?]),
            }
        };
        let kinds: Vec<SchemeKind> = match (name, arg) {
            ("es", Some(a)) => range(a)?.into_iter().map(SchemeKind::Es).collect(),
            ("bal", Some(a)) => {
                let (l, lp) = a.split_once(',').ok_or_else(bad)?;
                let lp = num(lp)?;
                range(l)?
                    .into_iter()
                    .map(|l| SchemeKind::BalEs(l, lp))
                    .collect()
            }
            ("sel", Some(a)) => range(a)?.into_iter().map(SchemeKind::Sel).collect(),
            ("cal", Some(a)) => range(a)?.into_iter().map(SchemeKind::Cal).collect(),
            ("cumcal", Some(a)) => range(a)?.into_iter().map(SchemeKind::CumCal).collect(),
            ("overall", None) => vec![SchemeKind::Overall],
            ("overall-sel", None) => vec![SchemeKind::OverallSel],
            _ => return Err(bad()),
        };
        Ok(kinds
            .into_iter()
            .map(|kind| WeightScheme { kind, aet })
            .collect())
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.aet {
            f.write_str("csa-")?;
        }
        match self.kind {
            SchemeKind::Es(l) => write!(f, "es:{l}"),
            SchemeKind::BalEs(l, lp) => write!(f, "bal:{l},{lp}"),
            SchemeKind::Sel(e) => write!(f, "sel:{e}"),
            SchemeKind::Cal(t) => write!(f, "cal:{t}"),
            SchemeKind::CumCal(t) => write!(f, "cumcal:{t}"),
            SchemeKind::Overall => f.write_str("overall"),
            SchemeKind::OverallSel => f.write_str("overall-sel"),
        }
    }
}

impl FromStr for WeightScheme {
    type Err = IdidError;

    fn from_str(s: &str) -> Result<Self> {
        let mut v = WeightScheme::parse_list(s)?;
        if v.len() != 1 {
            return Err(IdidError::Config(format!(
                "`{s}` names more than one scheme"
            )));
        }
        Ok(v.remove(0))
    }
}

/// Blocks of cells sharing a normalizing sum.
struct Blocks {
    blocks: Vec<Vec<(u32, u32)>>,
}

impl Blocks {
    fn cohorts(&self) -> BTreeSet<u32> {
        self.blocks.iter().flatten().map(|&(e, _)| e).collect()
    }
}

fn index_set(kind: SchemeKind, admissible: &BTreeSet<(u32, u32)>, n_periods: u32) -> Blocks {
    let pick = |f: &dyn Fn(u32, u32) -> bool| -> Vec<(u32, u32)> {
        admissible
            .iter()
            .copied()
            .filter(|&(e, t)| f(e, t))
            .collect()
    };
    let blocks = match kind {
        SchemeKind::Es(l) => vec![pick(&|e, t| t == e + l)],
        SchemeKind::BalEs(l, lp) => vec![pick(&|e, t| {
            t == e + l && admissible.contains(&(e, e + lp))
        })],
        SchemeKind::Sel(x) => vec![pick(&|e, _| e == x)],
        SchemeKind::Cal(x) => vec![pick(&|_, t| t == x)],
        SchemeKind::CumCal(x) => (2..=x.min(n_periods))
            .map(|s| pick(&|_, t| t == s))
            .collect(),
        SchemeKind::Overall => vec![pick(&|_, _| true)],
        SchemeKind::OverallSel => {
            let cohorts: BTreeSet<u32> = admissible.iter().map(|&(e, _)| e).collect();
            cohorts.into_iter().map(|c| pick(&|e, _| e == c)).collect()
        }
    };
    Blocks {
        blocks: blocks.into_iter().filter(|b| !b.is_empty()).collect(),
    }
}

/// P̂(E = e | E ∈ S) for every e in `set`, with influence values over rows.
pub fn cohort_shares(
    exposure: &[Cohort],
    set: &BTreeSet<u32>,
) -> Result<BTreeMap<u32, (f64, Vec<f64>)>> {
    let n = exposure.len() as f64;
    let in_set: Vec<bool> = exposure
        .iter()
        .map(|c| c.period().is_some_and(|e| set.contains(&e)))
        .collect();
    let n_set = in_set.iter().filter(|&&b| b).count();
    if n_set == 0 {
        return Err(IdidError::Domain(
            "conditioning event for cohort shares is empty".into(),
        ));
    }
    let p_set = n_set as f64 / n;
    Ok(set
        .iter()
        .map(|&e| {
            let n_e = exposure.iter().filter(|c| c.is(e)).count();
            let s = n_e as f64 / n_set as f64;
            let infl = exposure
                .iter()
                .zip(&in_set)
                .map(|(c, &b)| (f64::from(u8::from(c.is(e))) - s * f64::from(u8::from(b))) / p_set)
                .collect();
            (e, (s, infl))
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Component {
    pub e: u32,
    pub t: u32,
    pub weight: f64,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggEstimate {
    pub scheme: String,
    pub theta: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub components: Vec<Component>,
    #[serde(skip)]
    pub if_values: Vec<f64>,
}

impl AggEstimate {
    pub fn weight_sum(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    fn with_if(
        scheme: String,
        theta: f64,
        if_values: Vec<f64>,
        components: Vec<Component>,
        alpha: f64,
    ) -> Self {
        let se = if_se(&if_values);
        let z = z_crit(alpha);
        AggEstimate {
            scheme,
            theta,
            se,
            ci_lo: theta - z * se,
            ci_hi: theta + z * se,
            components,
            if_values,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggOptions {
    /// Treat the weights as known (drop their influence values).
    pub fixed_weights: bool,
    pub alpha: f64,
}

impl Default for AggOptions {
    fn default() -> Self {
        AggOptions {
            fixed_weights: false,
            alpha: 0.05,
        }
    }
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (s, v) in acc.iter_mut().zip(x) {
        *s += a * v;
    }
}

/// Aggregate the cells of `table` under `scheme`. `exposure` and `n_periods`
/// describe the dataset the table was estimated on.
pub fn aggregate(
    table: &LattTable,
    exposure: &[Cohort],
    n_periods: u32,
    scheme: WeightScheme,
    opts: AggOptions,
) -> Result<AggEstimate> {
    let admissible: BTreeSet<(u32, u32)> = cell_index(exposure, n_periods, table.kind)?
        .into_iter()
        .collect();
    let blocks = index_set(scheme.kind, &admissible, n_periods);
    if blocks.blocks.is_empty() {
        return Err(IdidError::Domain(format!(
            "scheme {scheme} selects no cells"
        )));
    }
    let missing: Vec<(u32, u32)> = blocks
        .blocks
        .iter()
        .flatten()
        .copied()
        .filter(|&(e, t)| table.get(e, t).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(IdidError::MissingCell(missing));
    }
    let shares = cohort_shares(exposure, &blocks.cohorts())?;
    let n = table.n;
    let zeros = vec![0.0; n];

    // w = o(e)·r(e,t)/R_block with R_block = Σ r over the block
    let uses_share_outside = matches!(scheme.kind, SchemeKind::OverallSel);
    let uses_share_inside = matches!(
        scheme.kind,
        SchemeKind::Es(_)
            | SchemeKind::BalEs(..)
            | SchemeKind::Cal(_)
            | SchemeKind::CumCal(_)
            | SchemeKind::Overall
    );
    let uses_aet = scheme.aet && !matches!(scheme.kind, SchemeKind::Overall);

    let mut theta = 0.0;
    let mut if_theta = vec![0.0; n];
    let mut components = Vec::new();
    for block in &blocks.blocks {
        let mut r = Vec::with_capacity(block.len());
        let mut if_r: Vec<Vec<f64>> = Vec::with_capacity(block.len());
        for &(e, t) in block {
            let cell = table.get(e, t).expect("checked above");
            let (s, if_s) = &shares[&e];
            let (a, if_a) = if uses_aet {
                (cell.den, &cell.den_if)
            } else {
                (1.0, &zeros)
            };
            let (sv, if_sv) = if uses_share_inside {
                (*s, if_s)
            } else {
                (1.0, &zeros)
            };
            r.push(sv * a);
            let mut v = vec![0.0; n];
            axpy(&mut v, a, if_sv);
            axpy(&mut v, sv, if_a);
            if_r.push(v);
        }
        let big_r: f64 = r.iter().sum();
        let mut if_big_r = vec![0.0; n];
        for v in &if_r {
            axpy(&mut if_big_r, 1.0, v);
        }
        for (k, &(e, t)) in block.iter().enumerate() {
            let cell = table.get(e, t).expect("checked above");
            let (s, if_s) = &shares[&e];
            let (o, if_o) = if uses_share_outside {
                (*s, if_s)
            } else {
                (1.0, &zeros)
            };
            let local = r[k] / big_r;
            let w = o * local;
            theta += w * cell.tau;
            axpy(&mut if_theta, w, &cell.if_values);
            if !opts.fixed_weights {
                // IF(w) = IF(o)·r/R + (o/R)(IF(r) − (r/R)·IF(R))
                axpy(&mut if_theta, local * cell.tau, if_o);
                axpy(&mut if_theta, o / big_r * cell.tau, &if_r[k]);
                axpy(&mut if_theta, -o / big_r * local * cell.tau, &if_big_r);
            }
            components.push(Component {
                e,
                t,
                weight: w,
                tau: cell.tau,
            });
        }
    }
    Ok(AggEstimate::with_if(
        scheme.to_string(),
        theta,
        if_theta,
        components,
        opts.alpha,
    ))
}

/// Per-group aggregates and their difference, first label minus second.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupDifference {
    pub labels: (String, String),
    pub first: Vec<AggEstimate>,
    pub second: Vec<AggEstimate>,
    pub difference: Vec<AggEstimate>,
    pub first_table: LattTableSummary,
    pub second_table: LattTableSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LattTableSummary {
    pub n: usize,
    pub cells: usize,
    pub skipped: usize,
}

/// Lift a subgroup influence vector to the full sample: `1{B = m}/P(B = m) · φ_m`.
fn embed_group(sub_if: &[f64], members: &[usize], n: usize) -> Vec<f64> {
    let scale = n as f64 / members.len() as f64;
    let mut out = vec![0.0; n];
    for (&i, &v) in members.iter().zip(sub_if) {
        out[i] = v * scale;
    }
    out
}

/// Run the full pipeline separately in the two groups named by the dataset's
/// group column and difference the aggregates.
pub fn group_difference(
    data: &Dataset,
    cfg: &EstimatorConfig,
    schemes: &[WeightScheme],
    opts: AggOptions,
) -> Result<GroupDifference> {
    let groups = data
        .group()
        .ok_or_else(|| IdidError::Schema("dataset has no group column".into()))?;
    let labels: BTreeSet<&String> = groups.iter().collect();
    if labels.len() != 2 {
        return Err(IdidError::Domain(format!(
            "group difference needs exactly two groups, found {}",
            labels.len()
        )));
    }
    let labels: Vec<String> = labels.into_iter().cloned().collect();
    let n = data.n_rows();
    let run = |label: &str| -> Result<(Vec<AggEstimate>, LattTableSummary)> {
        let members: Vec<usize> = (0..n).filter(|&i| groups[i] == label).collect();
        let sub = data.subset(&members);
        let table = estimate_all(&sub, cfg)?;
        let aggs = schemes
            .iter()
            .map(|&s| {
                let mut a = aggregate(&table, sub.exposure(), sub.n_periods(), s, opts)?;
                a.if_values = embed_group(&a.if_values, &members, n);
                Ok(AggEstimate::with_if(
                    a.scheme,
                    a.theta,
                    a.if_values,
                    a.components,
                    opts.alpha,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let summary = LattTableSummary {
            n: members.len(),
            cells: table.cells.len(),
            skipped: table.skipped.len(),
        };
        Ok((aggs, summary))
    };
    let (first, first_table) = run(&labels[0])?;
    let (second, second_table) = run(&labels[1])?;
    let difference = first
        .iter()
        .zip(&second)
        .map(|(a, b)| {
            let if_values: Vec<f64> = a
                .if_values
                .iter()
                .zip(&b.if_values)
                .map(|(x, y)| x - y)
                .collect();
            AggEstimate::with_if(
                format!("{} [{} - {}]", a.scheme, labels[0], labels[1]),
                a.theta - b.theta,
                if_values,
                Vec::new(),
                opts.alpha,
            )
        })
        .collect();
    Ok(GroupDifference {
        labels: (labels[0].clone(), labels[1].clone()),
        first,
        second,
        difference,
        first_table,
        second_table,
    })
}
