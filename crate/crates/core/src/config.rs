//! Run configuration shared by the command-line front end.
//!
//! A TOML file supplies defaults; `IDID_*` environment variables and flags
//! override it in that order. `RunConfig::canonical` dumps the resolved
//! configuration so a run can be reproduced from the file alone.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bootstrap::Multiplier;
use crate::data::{ControlKind, Covariates, Sampling, Schema};
use crate::error::{IdidError, Result};
use crate::latt::{Estimator, EstimatorConfig};
use crate::nuisance::{Formula, ModelSpec, DEFAULT_CLIP};
use crate::sim::Paper;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutFormat {
    #[default]
    Json,
    Csv,
}

impl fmt::Display for OutFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutFormat::Json => "json",
            OutFormat::Csv => "csv",
        })
    }
}

impl FromStr for OutFormat {
    type Err = IdidError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutFormat::Json),
            "csv" => Ok(OutFormat::Csv),
            other => Err(IdidError::Config(format!(
                "unknown output format `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub exp: Paper,
    /// Defaults to the experiment's standard size.
    pub n: Option<usize>,
    /// Experiment 1 design (1 to 4).
    pub dgp: u8,
    /// Experiment 2 two-group variant.
    pub group: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            exp: Paper::Exp1,
            n: None,
            dgp: 1,
            group: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    pub paper: Paper,
    pub bmc: Option<usize>,
    pub n: Option<usize>,
    pub group: bool,
    pub estimators: Option<Vec<Estimator>>,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        MonteCarloSection {
            paper: Paper::Exp1,
            bmc: None,
            n: None,
            group: false,
            estimators: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: OutFormat,
    pub output: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub sampling: Sampling,
    pub control: ControlKind,
    pub estimator: Estimator,
    /// Propensity formula; every covariate enters linearly when absent.
    pub propensity: Option<String>,
    /// Outcome/treatment regression formula; every covariate linearly when absent.
    pub outcome: Option<String>,
    pub clip: f64,
    pub folds: usize,
    pub alpha: f64,
    pub weak_threshold: f64,
    pub schemes: Vec<String>,
    pub bands: bool,
    pub bootstrap: usize,
    pub multiplier: Multiplier,
    pub fixed_weights: bool,
    pub columns: Schema,
    pub simulate: SimulateSection,
    pub montecarlo: MonteCarloSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: None,
            out: OutFormat::Json,
            output: None,
            input: None,
            sampling: Sampling::Panel,
            control: ControlKind::NeverExposed,
            estimator: Estimator::Dr,
            propensity: None,
            outcome: None,
            clip: DEFAULT_CLIP,
            folds: 5,
            alpha: 0.05,
            weak_threshold: 1e-3,
            schemes: Vec::new(),
            bands: false,
            bootstrap: 999,
            multiplier: Multiplier::Mammen,
            fixed_weights: false,
            columns: Schema::default(),
            simulate: SimulateSection::default(),
            montecarlo: MonteCarloSection::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| IdidError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| IdidError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Normalized TOML dump; `parse(canonical())` reproduces the config.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(IdidError::Config(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if self.folds == 0 {
            return Err(IdidError::Config("folds must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&self.clip) {
            return Err(IdidError::Config(format!(
                "clip {} outside [0, 0.5)",
                self.clip
            )));
        }
        if self.bands && self.bootstrap < 100 {
            return Err(IdidError::Config(
                "bootstrap needs at least 100 draws".into(),
            ));
        }
        if self.threads == Some(0) {
            return Err(IdidError::Config("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn model_spec(&self, x: &Covariates) -> Result<ModelSpec> {
        let formula = |f: &Option<String>| -> Result<Formula> {
            match f {
                Some(s) => s.parse(),
                None => Ok(Formula::all_linear(x)),
            }
        };
        Ok(
            ModelSpec::new(formula(&self.propensity)?, formula(&self.outcome)?)?
                .with_clip(self.clip),
        )
    }

    pub fn estimator_config(&self, x: &Covariates) -> Result<EstimatorConfig> {
        let mut cfg = EstimatorConfig::new(self.estimator, self.control, self.model_spec(x)?);
        cfg.folds = self.folds;
        cfg.seed = self.seed;
        cfg.alpha = self.alpha;
        cfg.weak_threshold = self.weak_threshold;
        Ok(cfg)
    }
}
