use std::path::PathBuf;

use thiserror::Error;

use crate::models::Series;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed CSV at row {row}: {message}")]
    Csv {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: row {row}: cannot parse `{value}` in column `{column}`")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{context}: year gap, {missing} is missing (row {row})")]
    YearGap {
        context: String,
        row: usize,
        missing: i32,
    },

    #[error("{context}: year {year} out of order (row {row}); rows must run in ascending year order")]
    YearOrder {
        context: String,
        row: usize,
        year: i32,
    },
    #[error("{context}: duplicate year {year} (row {row})")]
    DuplicateYear {
        context: String,
        row: usize,
        year: i32,
    },

    #[error("non-positive value {value} in {year}; logarithm undefined")]
    NonPositive { year: i32, value: f64 },

    #[error("negative yield {value} in {year}")]
    NegativeYield { year: i32, value: f64 },

    #[error("series too short: need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("series are not aligned: {0}")]
    Misaligned(String),

    #[error("no inflation-linked series is present in {0}")]
    EmptyYear(i32),

    #[error("unit mismatch: expected {expected}, got {got}")]
    Unit { expected: String, got: String },

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("unknown variant `{variant}` for series {series}")]
    UnknownVariant { series: String, variant: String },

    #[error("unknown series `{0}`")]
    UnknownSeries(String),

    #[error("{series}: unknown parameter `{name}`")]
    UnknownParameter { series: Series, name: String },

    #[error("{series}: missing parameter `{name}`")]
    MissingParameter { series: Series, name: String },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: String,
        value: f64,
        reason: &'static str,
    },

    #[error("{series} needs the `{input}` input series")]
    MissingInput { series: Series, input: &'static str },

    #[error("real component of the long rate is non-positive ({value}) in {year}")]
    NonPositiveRealRate { year: i32, value: f64 },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("objective is not finite at the starting point")]
    NonFiniteStart,

    #[error("optimizer did not converge from any start")]
    NonConvergence,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{needed_by} requires the {missing} model (cascade dependency)")]
    MissingDependency { missing: Series, needed_by: Series },

    #[error("no fitted {0} model was supplied")]
    MissingFit(Series),

    #[error("fits end in different years: {0}")]
    MisalignedFits(String),

    #[error("fan needs at least {needed} paths, got {got}")]
    TooFewPaths { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed scenario file: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by numerics rather than by bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NonFiniteStart
                | Error::NonConvergence
                | Error::ZeroVariance
                | Error::NonPositiveRealRate { .. }
        )
    }
}
