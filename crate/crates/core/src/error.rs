use std::path::PathBuf;

use thiserror::Error;

use crate::hull::FeasibilityVerdict;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed delimited file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path} contains no data rows")]
    EmptyFile { path: PathBuf },

    #[error("missing value at data row {row}, column `{column}`")]
    MissingValue { row: usize, column: String },

    #[error("cannot parse `{value}` as a number at data row {row}, column `{column}`")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("duplicate covariate name `{0}`")]
    DuplicateName(String),

    #[error(
        "covariates do not align by name (in aggregate data only: [{}]; in patient data only: [{}])",
        .only_in_ad.join(", "),
        .only_in_ipd.join(", ")
    )]
    Alignment {
        only_in_ad: Vec<String>,
        only_in_ipd: Vec<String>,
    },

    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),

    #[error("variance for `{name}` must be positive, got {value}")]
    NonPositiveVariance { name: String, value: f64 },

    #[error("constant covariate(s) cannot be standardized: {}", .0.join(", "))]
    ConstantCovariate(Vec<String>),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("refusing to fit weights: aggregate means are {}", .0.status.describe())]
    NotInterior(Box<FeasibilityVerdict>),

    #[error("no convex weights reproduce the aggregate means: they are {}", .0.status.describe())]
    Infeasible(Box<FeasibilityVerdict>),

    #[error(
        "weight fit did not converge after {iterations} iterations \
         (gradient {gradient_norm:e}, moment residual {moment_residual:e})"
    )]
    NoConvergence {
        iterations: usize,
        gradient_norm: f64,
        moment_residual: f64,
    },

    #[error(
        "sample covariance is singular (condition estimate {condition:e}); near-collinear covariates: {}",
        .covariates.join(", ")
    )]
    SingularCovariance {
        covariates: Vec<String>,
        condition: f64,
    },

    #[error("need more patients than covariates (n = {n}, p = {p})")]
    TooFewPatients { n: usize, p: usize },

    #[error("two-sample statistic needs the aggregate sample size `n_ad`")]
    MissingAdSampleSize,

    #[error("resampling needs at least 100 draws, got {0}")]
    InvalidDraws(usize),

    #[error("all weights are zero")]
    ZeroWeights,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("simplex pivot limit ({0}) reached")]
    PivotLimit(usize),

    #[error("weighted scatter plot needs exactly 2 covariates, got {0}; use the `pca` dot plots instead")]
    PlotDimension(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
