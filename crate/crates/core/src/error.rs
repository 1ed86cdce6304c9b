use std::path::PathBuf;

use thiserror::Error;

use crate::ldg::SimulationFailure;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One problem found while reading a measurement file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseIssue {
    /// 1-based line number in the source file (the header is line 1).
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ParseIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("position {x} lies outside [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("quadrature: {0}")]
    Quadrature(String),

    #[error("{path}: {} problem(s):\n{}", issues.len(), render_issues(issues))]
    Parse { path: PathBuf, issues: Vec<ParseIssue> },

    #[error("data: {0}")]
    Data(String),

    #[error(transparent)]
    Diverged(#[from] Box<SimulationFailure>),

    #[error("calibration: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

fn render_issues(issues: &[ParseIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}
