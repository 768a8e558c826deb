use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed CSV: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}:{row}: {message}")]
    Parse {
        path: PathBuf,
        /// 1-based data row (header not counted).
        row: usize,
        message: String,
    },

    #[error("{path}: no parseable rows")]
    EmptyFile { path: PathBuf },

    #[error("{path}:{row}: timestamp {timestamp} not after its predecessor")]
    NonMonotoneTimestamps {
        path: PathBuf,
        row: usize,
        timestamp: String,
    },

    #[error("{path}:{row}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp {
        path: PathBuf,
        row: usize,
        timestamp: String,
    },

    #[error("series {name}: inconsistent resolution: gap of {gap_minutes} min is not a multiple of {resolution_minutes} min")]
    InconsistentResolution {
        name: String,
        gap_minutes: i64,
        resolution_minutes: u32,
    },

    #[error("{0}")]
    InvalidInput(String),

    #[error("dataset has {0} rows; at least 5 required to split")]
    DatasetTooSmall(usize),

    #[error("hyperparameter grid is empty")]
    EmptyGrid,

    #[error("target is constant; the requested statistic is undefined")]
    ConstantTarget,

    #[error("attribution matrix is all zeros; importances are undefined")]
    AllZeroAttributions,

    #[error("tree {tree}, node {node}: internal node with non-positive cover {cover}")]
    ZeroCover { tree: usize, node: usize, cover: f64 },

    #[error("{active} features are split on; brute-force enumeration supports at most {limit}")]
    TooManyFeatures { active: usize, limit: usize },

    #[error("model format error: {0}")]
    ModelFormat(String),
}
