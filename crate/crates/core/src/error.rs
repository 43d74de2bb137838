use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0}: expected 1, 2 or 3")]
    UnsupportedDimension(usize),

    #[error("extents must be positive along every axis, got {0:?}")]
    NonPositiveExtent(Vec<i64>),

    #[error("cannot refine from level {from} down to level {to}")]
    RefinementDirection { from: i32, to: i32 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("operation needs {cells} cells, above the memory guard of {limit}")]
    ResourceLimit { cells: u128, limit: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("translation is not representable on the dyadic grid: {0}")]
    Representability(String),

    #[error("scale exponent {j} outside the configured window |j| <= {max}")]
    ScaleOutOfRange { j: i32, max: i32 },

    #[error("unknown norm identifier `{0}`")]
    UnknownNorm(String),

    #[error("unknown scalar map `{0}`")]
    UnknownMap(String),

    #[error("scalar map `{name}` sends 0 to {value}, composition would lose compact support")]
    SupportViolation { name: String, value: f64 },

    #[error("usage error: {0}")]
    Usage(String),

    #[error(
        "aligned tail elements are not Cauchy in L1 on compacts (distance {distance:.3e} > {tolerance:.3e}); \
         retry on a thinned subsequence, e.g. stride {suggested_stride}"
    )]
    NonConvergentSubsequence {
        distance: f64,
        tolerance: f64,
        suggested_stride: usize,
    },

    #[error("malformed input {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
