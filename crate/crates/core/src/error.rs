//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("bad container magic in {path}: expected {expected:?}, got {got:?}")]
    BadMagic {
        path: String,
        expected: [u8; 4],
        got: [u8; 4],
    },

    #[error("unsupported container version {got} in {path}")]
    BadVersion { path: String, got: u16 },

    #[error("declared dimensions do not match payload in {path}: {detail}")]
    DimensionMismatch { path: String, detail: String },

    #[error("probability value {value} out of [0,1] at pixel {index} in {path}")]
    ProbabilityOutOfRange {
        path: String,
        index: usize,
        value: f32,
    },

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("manifest references missing file {path} for stack {stack_id}")]
    MissingFile { path: String, stack_id: String },

    #[error("duplicate stack id in manifest: {0}")]
    DuplicateStackId(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("rank-deficient design matrix: {0}")]
    RankDeficient(String),

    #[error("knapsack capacity ceiling exceeded: {cells} DP cells needed, ceiling {ceiling}; raise the quantum (currently {quantum}s)")]
    CapacityCeiling {
        cells: u128,
        ceiling: u64,
        quantum: f64,
    },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
