//! Observation tables, CSV ingestion and the 2×2 comparison cells.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{IdidError, Result};

/// First period in which a unit's instrument switches on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cohort {
    Period(u32),
    Never,
}

impl Cohort {
    pub fn period(self) -> Option<u32> {
        match self {
            Cohort::Period(p) => Some(p),
            Cohort::Never => None,
        }
    }

    pub fn is(self, e: u32) -> bool {
        self == Cohort::Period(e)
    }

    /// Not yet exposed at the end of period `t`.
    pub fn unexposed_at(self, t: u32) -> bool {
        self > Cohort::Period(t)
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cohort::Period(p) => write!(f, "{p}"),
            Cohort::Never => write!(f, "inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlKind {
    NeverExposed,
    NotYetExposed,
}

impl fmt::Display for ControlKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControlKind::NeverExposed => "never-exposed",
            ControlKind::NotYetExposed => "not-yet-exposed",
        })
    }
}

impl FromStr for ControlKind {
    type Err = IdidError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "never" | "never-exposed" | "nev" => Ok(ControlKind::NeverExposed),
            "notyet" | "not-yet" | "not-yet-exposed" | "nye" => Ok(ControlKind::NotYetExposed),
            other => Err(IdidError::Config(format!("unknown control kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    Panel,
    Rc,
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampling::Panel => "panel",
            Sampling::Rc => "rc",
        })
    }
}

impl FromStr for Sampling {
    type Err = IdidError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "panel" => Ok(Sampling::Panel),
            "rc" | "repeated-cross-sections" => Ok(Sampling::Rc),
            other => Err(IdidError::Config(format!("unknown sampling `{other}`"))),
        }
    }
}

/// Named real-valued covariate columns, stored column-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Covariates {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Covariates {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(IdidError::Schema(
                "covariate names and columns differ in count".into(),
            ));
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(IdidError::Schema(
                    "covariate columns have unequal lengths".into(),
                ));
            }
        }
        Ok(Covariates { names, columns })
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.columns[j].as_slice())
    }

    pub fn select(&self, rows: &[usize]) -> Covariates {
        Covariates {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

/// Balanced panel: one row per unit, periods `1..=n_periods`.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelDataset {
    unit_ids: Vec<String>,
    n_periods: u32,
    outcome: Vec<f64>,
    treatment: Vec<u8>,
    exposure: Vec<Cohort>,
    covariates: Covariates,
    group: Option<Vec<String>>,
}

impl PanelDataset {
    /// `outcome` and `treatment` are unit-major `n_units × n_periods` tables.
    pub fn new(
        unit_ids: Vec<String>,
        n_periods: u32,
        outcome: Vec<f64>,
        treatment: Vec<u8>,
        exposure: Vec<Cohort>,
        covariates: Covariates,
        group: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = unit_ids.len();
        let cells = n * n_periods as usize;
        if outcome.len() != cells || treatment.len() != cells {
            return Err(IdidError::Schema(
                "outcome/treatment table has wrong size".into(),
            ));
        }
        if exposure.len() != n || (covariates.n_rows() != n && !covariates.columns.is_empty()) {
            return Err(IdidError::Schema("per-unit column has wrong length".into()));
        }
        if group.as_ref().is_some_and(|g| g.len() != n) {
            return Err(IdidError::Schema("group column has wrong length".into()));
        }
        if treatment.iter().any(|&d| d > 1) {
            return Err(IdidError::Domain("treatment must be 0 or 1".into()));
        }
        validate_exposure(&exposure, n_periods)?;
        Ok(PanelDataset {
            unit_ids,
            n_periods,
            outcome,
            treatment,
            exposure,
            covariates,
            group,
        })
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_periods(&self) -> u32 {
        self.n_periods
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    /// Outcome of unit `i` in period `t` (1-based).
    pub fn y(&self, i: usize, t: u32) -> f64 {
        self.outcome[i * self.n_periods as usize + (t as usize - 1)]
    }

    pub fn d(&self, i: usize, t: u32) -> u8 {
        self.treatment[i * self.n_periods as usize + (t as usize - 1)]
    }

    pub fn exposure(&self) -> &[Cohort] {
        &self.exposure
    }

    pub fn covariates(&self) -> &Covariates {
        &self.covariates
    }

    pub fn group(&self) -> Option<&[String]> {
        self.group.as_deref()
    }

    pub fn subset(&self, units: &[usize]) -> PanelDataset {
        let tp = self.n_periods as usize;
        let pick = |v: &[f64]| {
            units
                .iter()
                .flat_map(|&i| v[i * tp..(i + 1) * tp].iter().copied())
                .collect()
        };
        PanelDataset {
            unit_ids: units.iter().map(|&i| self.unit_ids[i].clone()).collect(),
            n_periods: self.n_periods,
            outcome: pick(&self.outcome),
            treatment: units
                .iter()
                .flat_map(|&i| self.treatment[i * tp..(i + 1) * tp].iter().copied())
                .collect(),
            exposure: units.iter().map(|&i| self.exposure[i]).collect(),
            covariates: self.covariates.select(units),
            group: self
                .group
                .as_ref()
                .map(|g| units.iter().map(|&i| g[i].clone()).collect()),
        }
    }

    /// Same data with the cohort variable replaced (e.g. by a treatment cohort).
    pub fn with_exposure(&self, exposure: Vec<Cohort>) -> Result<PanelDataset> {
        if exposure.len() != self.n_units() {
            return Err(IdidError::Schema(
                "replacement cohort column has wrong length".into(),
            ));
        }
        validate_exposure(&exposure, self.n_periods)?;
        Ok(PanelDataset {
            exposure,
            ..self.clone()
        })
    }
}

/// Pooled repeated cross-sections: each row is one unit seen in one period.
#[derive(Clone, Debug, PartialEq)]
pub struct RcDataset {
    n_periods: u32,
    outcome: Vec<f64>,
    treatment: Vec<u8>,
    exposure: Vec<Cohort>,
    period: Vec<u32>,
    covariates: Covariates,
    group: Option<Vec<String>>,
}

impl RcDataset {
    /// Rows are reordered canonically (stable sort by period).
    pub fn new(
        n_periods: u32,
        outcome: Vec<f64>,
        treatment: Vec<u8>,
        exposure: Vec<Cohort>,
        period: Vec<u32>,
        covariates: Covariates,
        group: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = outcome.len();
        if treatment.len() != n
            || exposure.len() != n
            || period.len() != n
            || (covariates.n_rows() != n && !covariates.columns.is_empty())
            || group.as_ref().is_some_and(|g| g.len() != n)
        {
            return Err(IdidError::Schema("columns have unequal lengths".into()));
        }
        if treatment.iter().any(|&d| d > 1) {
            return Err(IdidError::Domain("treatment must be 0 or 1".into()));
        }
        if let Some(&bad) = period.iter().find(|&&t| t < 1 || t > n_periods) {
            return Err(IdidError::Domain(format!(
                "period {bad} outside 1..={n_periods}"
            )));
        }
        validate_exposure(&exposure, n_periods)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| period[i]);
        let ds = RcDataset {
            n_periods,
            outcome,
            treatment,
            exposure,
            period,
            covariates,
            group,
        };
        Ok(ds.subset(&order))
    }

    pub fn n_obs(&self) -> usize {
        self.outcome.len()
    }

    pub fn n_periods(&self) -> u32 {
        self.n_periods
    }

    pub fn y(&self) -> &[f64] {
        &self.outcome
    }

    pub fn d(&self) -> &[u8] {
        &self.treatment
    }

    pub fn period(&self) -> &[u32] {
        &self.period
    }

    pub fn exposure(&self) -> &[Cohort] {
        &self.exposure
    }

    pub fn covariates(&self) -> &Covariates {
        &self.covariates
    }

    pub fn group(&self) -> Option<&[String]> {
        self.group.as_deref()
    }

    pub fn subset(&self, rows: &[usize]) -> RcDataset {
        RcDataset {
            n_periods: self.n_periods,
            outcome: rows.iter().map(|&i| self.outcome[i]).collect(),
            treatment: rows.iter().map(|&i| self.treatment[i]).collect(),
            exposure: rows.iter().map(|&i| self.exposure[i]).collect(),
            period: rows.iter().map(|&i| self.period[i]).collect(),
            covariates: self.covariates.select(rows),
            group: self
                .group
                .as_ref()
                .map(|g| rows.iter().map(|&i| g[i].clone()).collect()),
        }
    }

    pub fn with_exposure(&self, exposure: Vec<Cohort>) -> Result<RcDataset> {
        if exposure.len() != self.n_obs() {
            return Err(IdidError::Schema(
                "replacement cohort column has wrong length".into(),
            ));
        }
        validate_exposure(&exposure, self.n_periods)?;
        Ok(RcDataset {
            exposure,
            ..self.clone()
        })
    }
}

fn validate_exposure(exposure: &[Cohort], n_periods: u32) -> Result<()> {
    for c in exposure {
        if let Cohort::Period(e) = *c {
            if e < 2 || e > n_periods {
                return Err(IdidError::Domain(format!(
                    "exposure cohort {e} outside 2..={n_periods}"
                )));
            }
        }
    }
    Ok(())
}

/// Either sampling design.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Panel(PanelDataset),
    Rc(RcDataset),
}

impl Dataset {
    pub fn sampling(&self) -> Sampling {
        match self {
            Dataset::Panel(_) => Sampling::Panel,
            Dataset::Rc(_) => Sampling::Rc,
        }
    }

    /// Rows over which influence functions are indexed: units for panels,
    /// observations for repeated cross-sections.
    pub fn n_rows(&self) -> usize {
        match self {
            Dataset::Panel(p) => p.n_units(),
            Dataset::Rc(r) => r.n_obs(),
        }
    }

    pub fn n_periods(&self) -> u32 {
        match self {
            Dataset::Panel(p) => p.n_periods(),
            Dataset::Rc(r) => r.n_periods(),
        }
    }

    pub fn exposure(&self) -> &[Cohort] {
        match self {
            Dataset::Panel(p) => p.exposure(),
            Dataset::Rc(r) => r.exposure(),
        }
    }

    pub fn covariates(&self) -> &Covariates {
        match self {
            Dataset::Panel(p) => p.covariates(),
            Dataset::Rc(r) => r.covariates(),
        }
    }

    pub fn group(&self) -> Option<&[String]> {
        match self {
            Dataset::Panel(p) => p.group(),
            Dataset::Rc(r) => r.group(),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        match self {
            Dataset::Panel(p) => Dataset::Panel(p.subset(rows)),
            Dataset::Rc(r) => Dataset::Rc(r.subset(rows)),
        }
    }

    pub fn with_exposure(&self, exposure: Vec<Cohort>) -> Result<Dataset> {
        Ok(match self {
            Dataset::Panel(p) => Dataset::Panel(p.with_exposure(exposure)?),
            Dataset::Rc(r) => Dataset::Rc(r.with_exposure(exposure)?),
        })
    }
}

impl From<PanelDataset> for Dataset {
    fn from(p: PanelDataset) -> Self {
        Dataset::Panel(p)
    }
}

impl From<RcDataset> for Dataset {
    fn from(r: RcDataset) -> Self {
        Dataset::Rc(r)
    }
}

/// Finite exposure cohorts for which LATT(e, t) is defined under `kind`.
///
/// With not-yet-exposed controls the latest exposed cohort has nobody left to
/// compare against and is dropped, unless never-exposed units exist (they stay
/// unexposed forever, so the latest cohort is "infinity").
pub fn exposure_universe(exposure: &[Cohort], kind: ControlKind) -> Result<Vec<u32>> {
    let cohorts: BTreeSet<Cohort> = exposure.iter().copied().collect();
    let has_never = cohorts.contains(&Cohort::Never);
    let mut finite: Vec<u32> = cohorts.iter().filter_map(|c| c.period()).collect();
    match kind {
        ControlKind::NeverExposed => {
            if !has_never {
                return Err(IdidError::NoControl("no never-exposed units".into()));
            }
        }
        ControlKind::NotYetExposed => {
            if !has_never {
                finite.pop();
            }
        }
    }
    if finite.is_empty() {
        return Err(IdidError::NoControl(format!(
            "no exposure cohort has a {kind} comparison group"
        )));
    }
    Ok(finite)
}

/// All (e, t) pairs with e in the universe, e ≤ t ≤ 𝒯, and a nonempty
/// potential control group.
pub fn cell_index(
    exposure: &[Cohort],
    n_periods: u32,
    kind: ControlKind,
) -> Result<Vec<(u32, u32)>> {
    let universe = exposure_universe(exposure, kind)?;
    let latest = exposure.iter().copied().max().unwrap_or(Cohort::Never);
    let mut cells = Vec::new();
    for &e in &universe {
        for t in e..=n_periods {
            if kind == ControlKind::NotYetExposed && !latest.unexposed_at(t) {
                continue;
            }
            cells.push((e, t));
        }
    }
    Ok(cells)
}

/// Outcome columns of a cell.
#[derive(Clone, Debug, PartialEq)]
pub enum CellOutcome {
    /// Long differences `V_t − V_{e−1}` per included unit.
    Panel { dy: Vec<f64>, dd: Vec<f64> },
    /// Raw levels; `post` marks rows observed in period t (else e − 1).
    Rc {
        y: Vec<f64>,
        d: Vec<f64>,
        post: Vec<bool>,
    },
}

/// The 2×2 comparison: exposure cohort e against its controls, base period
/// e − 1 against period t.
#[derive(Clone, Debug, PartialEq)]
pub struct CellData {
    pub e: u32,
    pub t: u32,
    pub kind: ControlKind,
    /// Rows in the full dataset.
    pub n_total: usize,
    /// Dataset row index of every included row.
    pub rows: Vec<usize>,
    /// True for exposure-cohort rows, false for control rows.
    pub treated: Vec<bool>,
    pub covariates: Covariates,
    pub outcome: CellOutcome,
}

impl CellData {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn n_treated(&self) -> usize {
        self.treated.iter().filter(|&&z| z).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    pub fn is_panel(&self) -> bool {
        matches!(self.outcome, CellOutcome::Panel { .. })
    }

    /// Exposure-cohort indicator over the full dataset.
    pub fn treated_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n_total];
        for (&r, &z) in self.rows.iter().zip(&self.treated) {
            m[r] = z;
        }
        m
    }

    /// Control indicator over the full dataset.
    pub fn control_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n_total];
        for (&r, &z) in self.rows.iter().zip(&self.treated) {
            m[r] = !z;
        }
        m
    }

    /// Lift a per-cell-row influence function to the full dataset.
    ///
    /// Cell-level quantities are normalized within the cell; the same
    /// functional evaluated on the whole sample has influence values scaled
    /// by `n_total / n_cell` on cell rows and zero elsewhere.
    pub fn embed(&self, values: &[f64]) -> Vec<f64> {
        let scale = self.n_total as f64 / self.n() as f64;
        let mut out = vec![0.0; self.n_total];
        for (&r, &v) in self.rows.iter().zip(values) {
            out[r] = v * scale;
        }
        out
    }
}

/// Build the comparison cell for (e, t).
pub fn build_cell(data: &Dataset, e: u32, t: u32, kind: ControlKind) -> Result<CellData> {
    let n_periods = data.n_periods();
    if e < 2 || t < e || t > n_periods {
        return Err(IdidError::Domain(format!(
            "cell (e={e}, t={t}) requires 2 ≤ e ≤ t ≤ {n_periods}"
        )));
    }
    let is_control = |c: Cohort| match kind {
        ControlKind::NeverExposed => c == Cohort::Never,
        ControlKind::NotYetExposed => !c.is(e) && c.unexposed_at(t),
    };
    let exposure = data.exposure();
    let mut rows = Vec::new();
    let mut treated = Vec::new();
    let mut outcome = match data {
        Dataset::Panel(_) => CellOutcome::Panel {
            dy: Vec::new(),
            dd: Vec::new(),
        },
        Dataset::Rc(_) => CellOutcome::Rc {
            y: Vec::new(),
            d: Vec::new(),
            post: Vec::new(),
        },
    };
    for (i, &c) in exposure.iter().enumerate() {
        let z = c.is(e);
        if !z && !is_control(c) {
            continue;
        }
        match (data, &mut outcome) {
            (Dataset::Panel(p), CellOutcome::Panel { dy, dd }) => {
                dy.push(p.y(i, t) - p.y(i, e - 1));
                dd.push(f64::from(p.d(i, t)) - f64::from(p.d(i, e - 1)));
            }
            (Dataset::Rc(r), CellOutcome::Rc { y, d, post }) => {
                let ti = r.period()[i];
                if ti != t && ti != e - 1 {
                    continue;
                }
                y.push(r.y()[i]);
                d.push(f64::from(r.d()[i]));
                post.push(ti == t);
            }
            _ => unreachable!(),
        }
        rows.push(i);
        treated.push(z);
    }
    let n_trt = treated.iter().filter(|&&z| z).count();
    if n_trt == 0 {
        return Err(IdidError::degenerate(e, t, "no exposure-cohort rows"));
    }
    if n_trt == rows.len() {
        return Err(IdidError::degenerate(
            e,
            t,
            format!("no {kind} control rows"),
        ));
    }
    Ok(CellData {
        e,
        t,
        kind,
        n_total: data.n_rows(),
        covariates: data.covariates().select(&rows),
        rows,
        treated,
        outcome,
    })
}

/// Column names for CSV input and output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub unit: String,
    pub period: String,
    pub y: String,
    pub d: String,
    pub e: String,
    /// Period column of repeated cross-section files.
    pub t: String,
    /// Covariate columns; `None` takes every column not otherwise mapped.
    pub covariates: Option<Vec<String>>,
    pub group: Option<String>,
    /// Cell text marking a never-exposed unit.
    pub never: String,
    /// Number of periods for repeated cross-sections; defaults to the largest observed.
    pub periods: Option<u32>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            unit: "unit".into(),
            period: "period".into(),
            y: "y".into(),
            d: "d".into(),
            e: "e".into(),
            t: "t".into(),
            covariates: None,
            group: None,
            never: "inf".into(),
            periods: None,
        }
    }
}

struct Columns {
    headers: Vec<String>,
}

impl Columns {
    fn find(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IdidError::Schema(format!("missing column `{name}`")))
    }

    fn covariates(&self, schema: &Schema, reserved: &[&str]) -> Result<Vec<(String, usize)>> {
        match &schema.covariates {
            Some(names) => names
                .iter()
                .map(|n| Ok((n.clone(), self.find(n)?)))
                .collect(),
            None => Ok(self
                .headers
                .iter()
                .enumerate()
                .filter(|(_, h)| {
                    !reserved.contains(&h.as_str()) && Some(h.as_str()) != schema.group.as_deref()
                })
                .map(|(j, h)| (h.clone(), j))
                .collect()),
        }
    }
}

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| IdidError::Schema(format!("line {line}: `{field}` is not a number ({what})")))
}

fn parse_u32(field: &str, what: &str, line: u64) -> Result<u32> {
    field
        .trim()
        .parse::<u32>()
        .map_err(|_| IdidError::Schema(format!("line {line}: `{field}` is not a period ({what})")))
}

fn parse_binary(field: &str, line: u64) -> Result<u8> {
    let v = parse_f64(field, "treatment", line)?;
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(IdidError::Domain(format!(
            "line {line}: treatment {field} not in {{0,1}}"
        )))
    }
}

fn parse_cohort(field: &str, never: &str, line: u64) -> Result<Cohort> {
    if field.trim() == never {
        Ok(Cohort::Never)
    } else {
        parse_u32(field, "exposure cohort", line).map(Cohort::Period)
    }
}

/// Sort key that orders integer-looking ids numerically.
fn unit_order(ids: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    if ids.iter().all(|s| s.parse::<i64>().is_ok()) {
        order.sort_by_key(|&i| ids[i].parse::<i64>().unwrap());
    } else {
        order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    }
    order
}

pub fn load_panel(path: impl AsRef<Path>, schema: &Schema) -> Result<PanelDataset> {
    read_panel(std::fs::File::open(path)?, schema)
}

struct UnitRows {
    cohort: Cohort,
    rows: BTreeMap<u32, (f64, u8)>,
    x: Vec<f64>,
    x_period: u32,
    group: Option<String>,
}

pub fn read_panel<R: Read>(reader: R, schema: &Schema) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let cols = Columns {
        headers: rdr.headers()?.iter().map(str::to_owned).collect(),
    };
    let (ju, jp, jy, jd, je) = (
        cols.find(&schema.unit)?,
        cols.find(&schema.period)?,
        cols.find(&schema.y)?,
        cols.find(&schema.d)?,
        cols.find(&schema.e)?,
    );
    let jg = schema.group.as_deref().map(|g| cols.find(g)).transpose()?;
    let reserved = [
        schema.unit.as_str(),
        schema.period.as_str(),
        schema.y.as_str(),
        schema.d.as_str(),
        schema.e.as_str(),
    ];
    let xcols = cols.covariates(schema, &reserved)?;

    let mut units: BTreeMap<String, UnitRows> = BTreeMap::new();
    let mut periods = BTreeSet::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k as u64 + 2;
        let unit = rec[ju].to_owned();
        let period = parse_u32(&rec[jp], "period", line)?;
        if period < 1 {
            return Err(IdidError::Domain(format!(
                "line {line}: period must be ≥ 1"
            )));
        }
        let y = parse_f64(&rec[jy], "outcome", line)?;
        let d = parse_binary(&rec[jd], line)?;
        let cohort = parse_cohort(&rec[je], &schema.never, line)?;
        let x = xcols
            .iter()
            .map(|(name, j)| parse_f64(&rec[*j], name, line))
            .collect::<Result<Vec<_>>>()?;
        let group = jg.map(|j| rec[j].to_owned());
        periods.insert(period);
        let entry = units.entry(unit.clone()).or_insert_with(|| UnitRows {
            cohort,
            rows: BTreeMap::new(),
            x: x.clone(),
            x_period: period,
            group: group.clone(),
        });
        if entry.cohort != cohort {
            return Err(IdidError::InconsistentCohort { unit });
        }
        if entry.rows.insert(period, (y, d)).is_some() {
            return Err(IdidError::Domain(format!(
                "duplicate row for unit {unit}, period {period}"
            )));
        }
        if period < entry.x_period {
            entry.x = x;
            entry.x_period = period;
            entry.group = group;
        }
    }
    let n_periods = periods.iter().next_back().copied().unwrap_or(0);
    if n_periods < 2 {
        return Err(IdidError::Domain("panel needs at least two periods".into()));
    }
    let ids: Vec<String> = units.keys().cloned().collect();
    let order = unit_order(&ids);
    let units: Vec<UnitRows> = units.into_values().collect();

    let n = ids.len();
    let tp = n_periods as usize;
    let mut outcome = vec![0.0; n * tp];
    let mut treatment = vec![0u8; n * tp];
    let mut exposure = Vec::with_capacity(n);
    let mut columns = vec![Vec::with_capacity(n); xcols.len()];
    let mut group = jg.map(|_| Vec::with_capacity(n));
    let mut unit_ids = Vec::with_capacity(n);
    for (pos, &i) in order.iter().enumerate() {
        let u = &units[i];
        for t in 1..=n_periods {
            let (y, d) = *u.rows.get(&t).ok_or_else(|| IdidError::BalancedPanel {
                unit: ids[i].clone(),
                period: t,
            })?;
            outcome[pos * tp + t as usize - 1] = y;
            treatment[pos * tp + t as usize - 1] = d;
        }
        exposure.push(u.cohort);
        for (c, &v) in columns.iter_mut().zip(&u.x) {
            c.push(v);
        }
        if let Some(g) = group.as_mut() {
            g.push(u.group.clone().unwrap_or_default());
        }
        unit_ids.push(ids[i].clone());
    }
    let names = xcols.into_iter().map(|(n, _)| n).collect();
    PanelDataset::new(
        unit_ids,
        n_periods,
        outcome,
        treatment,
        exposure,
        Covariates::new(names, columns)?,
        group,
    )
}

pub fn load_rc(path: impl AsRef<Path>, schema: &Schema) -> Result<RcDataset> {
    read_rc(std::fs::File::open(path)?, schema)
}

pub fn read_rc<R: Read>(reader: R, schema: &Schema) -> Result<RcDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let cols = Columns {
        headers: rdr.headers()?.iter().map(str::to_owned).collect(),
    };
    let (jy, jd, je, jt) = (
        cols.find(&schema.y)?,
        cols.find(&schema.d)?,
        cols.find(&schema.e)?,
        cols.find(&schema.t)?,
    );
    let jg = schema.group.as_deref().map(|g| cols.find(g)).transpose()?;
    let reserved = [
        schema.y.as_str(),
        schema.d.as_str(),
        schema.e.as_str(),
        schema.t.as_str(),
    ];
    let xcols = cols.covariates(schema, &reserved)?;
    let (mut y, mut d, mut e, mut t) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut columns = vec![Vec::new(); xcols.len()];
    let mut group = jg.map(|_| Vec::new());
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k as u64 + 2;
        y.push(parse_f64(&rec[jy], "outcome", line)?);
        d.push(parse_binary(&rec[jd], line)?);
        e.push(parse_cohort(&rec[je], &schema.never, line)?);
        let ti = parse_u32(&rec[jt], "period", line)?;
        if ti < 1 || schema.periods.is_some_and(|p| ti > p) {
            return Err(IdidError::Domain(format!(
                "line {line}: period {ti} out of range"
            )));
        }
        t.push(ti);
        for (c, (name, j)) in columns.iter_mut().zip(&xcols) {
            c.push(parse_f64(&rec[*j], name, line)?);
        }
        if let (Some(g), Some(j)) = (group.as_mut(), jg) {
            g.push(rec[j].to_owned());
        }
    }
    let n_periods = schema
        .periods
        .unwrap_or_else(|| t.iter().copied().max().unwrap_or(0));
    if n_periods < 2 {
        return Err(IdidError::Domain(
            "repeated cross-sections need at least two periods".into(),
        ));
    }
    let names = xcols.into_iter().map(|(n, _)| n).collect();
    RcDataset::new(
        n_periods,
        y,
        d,
        e,
        t,
        Covariates::new(names, columns)?,
        group,
    )
}

fn cohort_text(c: Cohort, never: &str) -> String {
    match c {
        Cohort::Period(p) => p.to_string(),
        Cohort::Never => never.to_owned(),
    }
}

/// Write a panel in long format, one row per (unit, period).
pub fn write_panel<W: Write>(data: &PanelDataset, writer: W, schema: &Schema) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        schema.unit.clone(),
        schema.period.clone(),
        schema.y.clone(),
        schema.d.clone(),
        schema.e.clone(),
    ];
    header.extend(data.covariates.names.iter().cloned());
    if data.group.is_some() {
        header.push(schema.group.clone().unwrap_or_else(|| "group".into()));
    }
    w.write_record(&header)?;
    for i in 0..data.n_units() {
        for t in 1..=data.n_periods {
            let mut rec = vec![
                data.unit_ids[i].clone(),
                t.to_string(),
                data.y(i, t).to_string(),
                data.d(i, t).to_string(),
                cohort_text(data.exposure[i], &schema.never),
            ];
            rec.extend(data.covariates.columns.iter().map(|c| c[i].to_string()));
            if let Some(g) = &data.group {
                rec.push(g[i].clone());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_rc<W: Write>(data: &RcDataset, writer: W, schema: &Schema) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        schema.y.clone(),
        schema.d.clone(),
        schema.e.clone(),
        schema.t.clone(),
    ];
    header.extend(data.covariates.names.iter().cloned());
    if data.group.is_some() {
        header.push(schema.group.clone().unwrap_or_else(|| "group".into()));
    }
    w.write_record(&header)?;
    for i in 0..data.n_obs() {
        let mut rec = vec![
            data.outcome[i].to_string(),
            data.treatment[i].to_string(),
            cohort_text(data.exposure[i], &schema.never),
            data.period[i].to_string(),
        ];
        rec.extend(data.covariates.columns.iter().map(|c| c[i].to_string()));
        if let Some(g) = &data.group {
            rec.push(g[i].clone());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
