//! Simulation designs with potential-outcome bookkeeping, oracle quantities
//! and Monte Carlo studies.

pub mod csa;
pub mod dgp;
pub mod montecarlo;
pub mod oracle;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use csa::{csa_all, csa_att};
pub use dgp::{gen_exp1, gen_exp2, gen_exp3, Exp1Config, Exp2Config, Exp3Config};
pub use montecarlo::{run_monte_carlo, BandCoverage, BloomRow, McConfig, McReport, McRow, Paper};
pub use oracle::{bloom_oracle, bloom_weights, complier_effect};

use crate::data::{write_panel, write_rc, Cohort, Dataset, Schema};
use crate::error::Result;

/// Unit-level latent variables, stored unit-major as `n_units × n_periods`
/// tables for every unit whether or not a period was sampled.
#[derive(Clone, Debug, PartialEq)]
pub struct Latent {
    pub n_periods: u32,
    pub exposure: Vec<Cohort>,
    /// `D_t(∞)`.
    pub d_never: Vec<u8>,
    /// `D_t(E)` along the unit's own exposure path (equal to `D_t(∞)` before exposure).
    pub d_own: Vec<u8>,
    pub y0: Vec<f64>,
    /// Treated potential outcome; `Y_t(G)` under absorbing treatment.
    pub y1: Vec<f64>,
    pub hidden: Option<Vec<f64>>,
    /// First treated period, when treatment is absorbing.
    pub treat_cohort: Option<Vec<Cohort>>,
    /// Repeated cross-sections: the unit behind each dataset row.
    pub row_unit: Option<Vec<usize>>,
}

impl Latent {
    pub fn n_units(&self) -> usize {
        self.exposure.len()
    }

    fn at(&self, i: usize, t: u32) -> usize {
        i * self.n_periods as usize + (t - 1) as usize
    }

    pub fn d(&self, i: usize, t: u32) -> u8 {
        self.d_own[self.at(i, t)]
    }

    pub fn y0(&self, i: usize, t: u32) -> f64 {
        self.y0[self.at(i, t)]
    }

    pub fn y1(&self, i: usize, t: u32) -> f64 {
        self.y1[self.at(i, t)]
    }

    /// Observed outcome: `Y_t(1)` when treated at t, `Y_t(0)` otherwise.
    pub fn y(&self, i: usize, t: u32) -> f64 {
        let k = self.at(i, t);
        if self.d_own[k] == 1 {
            self.y1[k]
        } else {
            self.y0[k]
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Truth {
    /// LATT(e, t) by cell.
    pub latt: BTreeMap<(u32, u32), f64>,
    /// ATT(g, t) by treatment cohort.
    pub att: BTreeMap<(u32, u32), f64>,
    /// Common LATT within each group label.
    pub group_latt: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimDraw {
    pub dataset: Dataset,
    pub latent: Latent,
    pub truth: Truth,
}

/// Path of the latent-variable file written next to `path`.
pub fn latent_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".latent.csv");
    PathBuf::from(s)
}

impl SimDraw {
    /// Write the observed data in the CSV schema and the latents to a sidecar file.
    pub fn write(&self, path: &Path) -> Result<()> {
        let schema = Schema {
            group: self.dataset.group().map(|_| "group".to_owned()),
            ..Schema::default()
        };
        let out = BufWriter::new(File::create(path)?);
        match &self.dataset {
            Dataset::Panel(p) => write_panel(p, out, &schema)?,
            Dataset::Rc(r) => write_rc(r, out, &schema)?,
        }
        self.write_latent(BufWriter::new(File::create(latent_path(path))?))
    }

    pub fn write_latent<W: Write>(&self, writer: W) -> Result<()> {
        let l = &self.latent;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "unit", "period", "e", "d_never", "d_own", "y0", "y1", "h", "g",
        ])?;
        let cohort = |c: Cohort| {
            c.period()
                .map_or_else(|| "inf".to_owned(), |p| p.to_string())
        };
        for i in 0..l.n_units() {
            for t in 1..=l.n_periods {
                let k = l.at(i, t);
                w.write_record([
                    (i + 1).to_string(),
                    t.to_string(),
                    cohort(l.exposure[i]),
                    l.d_never[k].to_string(),
                    l.d_own[k].to_string(),
                    l.y0[k].to_string(),
                    l.y1[k].to_string(),
                    l.hidden
                        .as_ref()
                        .map_or_else(String::new, |h| h[k].to_string()),
                    l.treat_cohort
                        .as_ref()
                        .map_or_else(String::new, |g| cohort(g[i])),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
