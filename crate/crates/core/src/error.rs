use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the estimation library.
///
/// Solver non-convergence is not an error: it is reported on the fit itself.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("no covariate columns selected")]
    NoCovariates,
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    MalformedCell { row: usize, column: String, value: String },
    #[error("row {row}: treatment value {value} is not 0 or 1")]
    InvalidTreatment { row: usize, value: f64 },
    #[error("no treated rows (T = 1)")]
    NoTreated,
    #[error("no untreated rows (T = 0)")]
    NoUntreated,
    #[error("row {row}: outcome is missing but required by this estimator")]
    MissingOutcome { row: usize },
    #[error("covariate `{0}` is constant and cannot be standardized")]
    ConstantColumn(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite loss evaluation for {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("row {row}: fitted probability {value} leaves a zero denominator")]
    DegenerateWeight { row: usize, value: f64 },
    #[error("fold {fold} contains a single treatment class")]
    DegenerateFold { fold: usize },
    #[error("not fitted at lambda {lambda}: the path diverged at a larger lambda")]
    PathTruncated { lambda: f64 },
    #[error("no grid point produced a convergent fit on every fold")]
    NoValidLambda,
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
