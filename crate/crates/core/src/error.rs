use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum IdidError {
    #[error("unbalanced panel: unit {unit} has no row for period {period}")]
    BalancedPanel { unit: String, period: u32 },

    #[error("exposure cohort varies within unit {unit}")]
    InconsistentCohort { unit: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no valid control group: {0}")]
    NoControl(String),

    #[error("degenerate cell (e={e}, t={t}): {reason}")]
    DegenerateCell { e: u32, t: u32, reason: String },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("weak first stage: |denominator| = {den:.3e} below threshold {threshold:.1e}")]
    WeakFirstStage { den: f64, threshold: f64 },

    #[error("scheme references missing cells: {0:?}")]
    MissingCell(Vec<(u32, u32)>),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl IdidError {
    /// Process exit code for the command-line front end.
    ///
    /// 2 is a usage/config problem, 3 a data problem, 4 a numerical one.
    pub fn exit_code(&self) -> i32 {
        match self {
            IdidError::Config(_) => 2,
            IdidError::WeakFirstStage { .. } | IdidError::DegenerateFit(_) => 4,
            _ => 3,
        }
    }

    pub(crate) fn degenerate(e: u32, t: u32, reason: impl Into<String>) -> Self {
        IdidError::DegenerateCell {
            e,
            t,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, IdidError>;
