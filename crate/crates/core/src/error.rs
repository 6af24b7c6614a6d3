use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MrpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MrpError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// `row` is the 1-based data row (header excluded), `column` the 1-based field index.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate covariance: {0}; use fewer spreads or more data")]
    Degenerate(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("all lag moments vanish after whitening; the objective is identically zero")]
    ZeroObjective,

    #[error(
        "variance level {nu} is infeasible; minimum variance on the budget hyperplane is {nu_min}"
    )]
    Infeasible { nu: f64, nu_min: f64 },

    #[error("GTRS hard case: root of the secular equation lies at the interval boundary ({0})")]
    HardCase(String),

    #[error("GTRS numerical failure: {0}")]
    Numerical(String),

    #[error("GTRS failed at MM iteration {iteration}: {source}")]
    Subproblem {
        iteration: usize,
        #[source]
        source: Box<MrpError>,
    },

    #[error("training spread has zero variance")]
    ZeroVariance,

    #[error("Sharpe ratio undefined: ROI series has zero standard deviation")]
    SharpeUndefined,

    #[error("series of length {len} is too short: need at least {needed}")]
    InsufficientLength { len: usize, needed: usize },
}
