use std::fmt;

use thiserror::Error;

/// Which regularity gate failed while solving for the closed-loop strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GateFailure {
    /// `Rhat` is not positive semidefinite.
    Psd,
    /// The columns of `Lcal` are not in the range of `Rhat`.
    Range,
    /// The feedforward vector `w` is not in the range of `Rhat`.
    RangeFeedforward,
}

impl fmt::Display for GateFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateFailure::Psd => "PSD",
            GateFailure::Range => "RANGE",
            GateFailure::RangeFeedforward => "RANGE_FEEDFORWARD",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("non-finite state on path {path} at step {step}")]
    StateBlowUp { path: usize, step: usize },

    #[error("regularity violation at t={time}: {which}")]
    RegularityViolation { time: f64, which: GateFailure },

    #[error("closed-loop unsolvable at t={time}: {reason}")]
    ClosedLoopUnsolvable { time: f64, reason: GateFailure },

    #[error("t={t} outside horizon [{t0}, {t_end}]")]
    OutOfHorizon { t: f64, t0: f64, t_end: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid problem:\n{0}")]
    Validation(ValidationErrors),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("schema error: missing or invalid field `{0}`")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// One violated constraint with its location in the problem data.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub grid_index: Option<usize>,
    pub mark_index: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)?;
        if let Some(i) = self.mark_index {
            write!(f, " (mark {i})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationErrors(pub Vec<Violation>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
