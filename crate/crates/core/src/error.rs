use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("header is missing required columns: {0:?}")]
    HeaderMismatch(Vec<String>),
    #[error("no records left after cleaning")]
    EmptyAfterCleaning,
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("region {region} cannot be represented by the {scheme} scheme")]
    UnknownRegion { region: String, scheme: String },
    #[error("column {0} is missing")]
    MissingColumn(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("duplicate column {0}")]
    DuplicateColumn(String),
    #[error("column {0} has zero variance")]
    ZeroVarianceColumn(String),
    #[error("feature {0} has zero variance")]
    ZeroVariance(String),
    #[error("design matrix is rank deficient at column {column}")]
    RankDeficient { column: String },
    #[error("features are not standardized (column {column} has magnitude {magnitude:e})")]
    NotStandardized { column: String, magnitude: f64 },
    #[error("optimization diverged: {0}")]
    Diverged(String),
    #[error("non-finite gradient at coordinate {0}")]
    NonFiniteGradient(usize),
    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("need at least {needed} rows, got {actual}")]
    TooFewRows { needed: usize, actual: usize },
    #[error("all records share a single region")]
    SingleRegion,
    #[error("non-finite or missing plot data: {0}")]
    NonFiniteData(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
