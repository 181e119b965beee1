use std::path::PathBuf;

/// Errors produced anywhere in the retrieval pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("failed to parse {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("{}: expected {expected} bytes, found {actual}", path.display())]
    DimensionMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("ground truth for query {query} points at gallery {gallery}, but gallery_count is {gallery_count}")]
    GroundTruthOutOfRange {
        query: usize,
        gallery: usize,
        gallery_count: usize,
    },

    #[error("ground truth does not cover queries exactly once: {0}")]
    GroundTruthCoverage(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("row {row} has norm {norm:e}, too small to normalize")]
    ZeroVector { row: usize, norm: f64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("{0} matrix must be L2-normalized")]
    NotNormalized(&'static str),

    #[error("k = {k} out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },

    #[error("batch of {0} pairs is too small, need at least 2")]
    BatchTooSmall(usize),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("rank pointer {position} for query {query} outside list of length {len}")]
    PointerOutOfBounds {
        query: usize,
        position: usize,
        len: usize,
    },

    #[error("ranked list for query {0} is empty")]
    EmptyList(usize),

    #[error("instance {rows}x{cols} is too large for exhaustive assignment (limit {limit})")]
    TooLarge {
        rows: usize,
        cols: usize,
        limit: usize,
    },

    #[error("no ground truth for query {0}")]
    MissingGroundTruth(usize),

    #[error("k = {k} exceeds ranked list depth {depth}")]
    KExceedsDepth { k: usize, depth: usize },

    #[error("reports are not comparable: {0}")]
    MismatchedRuns(String),

    #[error("malformed input at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
