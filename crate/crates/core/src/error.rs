//! Shared error type for the pipeline stages.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no liquid short-maturity options after filtering")]
    NoLiquidOptions,

    #[error("no instantaneous volatility available for timestamp {0}")]
    MissingInstantaneousVol(String),

    #[error("observation at {timestamp} is off the sampling grid (offset {offset_secs}s, interval {interval_secs}s)")]
    OffGridTimestamp {
        timestamp: String,
        offset_secs: i64,
        interval_secs: i64,
    },

    #[error("only {kept} instruments meet the observed-fraction threshold; at least 2 required")]
    TooFewAssets { kept: usize },

    #[error("similarity matrix must be at least 3x3, got {0}x{0}")]
    GraphTooSmall(usize),

    #[error("non-finite entry in matrix at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("singular {kind} submatrix on vertices {vertices:?} (ridge retry failed)")]
    SingularSubmatrix { kind: &'static str, vertices: Vec<usize> },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("degenerate surface sample at {timestamp}: {reason}")]
    DegenerateSurface { timestamp: String, reason: String },

    #[error("insufficient observations: need {needed}, got {got} ({context})")]
    InsufficientObservations {
        needed: usize,
        got: usize,
        context: &'static str,
    },

    #[error("data cannot be clustered into {k} regimes: {reason}")]
    CannotCluster { k: usize, reason: String },

    #[error("length mismatch: {left} vs {right} ({context})")]
    LengthMismatch {
        left: usize,
        right: usize,
        context: &'static str,
    },

    #[error("price {price} outside no-arbitrage bounds [{lower}, {upper}]")]
    PriceOutOfBounds { price: f64, lower: f64, upper: f64 },

    #[error("all clusters were skipped: none has enough observations")]
    AllClustersSkipped,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
