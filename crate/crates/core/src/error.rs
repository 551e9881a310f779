use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the attribution pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error at offset {position}: expected {}", .expected.join(" or "))]
    Syntax {
        position: usize,
        expected: Vec<String>,
    },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("comparison on categorical feature `{0}`")]
    CategoricalComparison(String),
    #[error("missing value for feature `{0}`")]
    MissingFeature(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite model output")]
    NonFinite,

    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("ragged row at line {0}")]
    RaggedRow(usize),
    #[error("non-numeric cell at line {line}, column {column}")]
    NonNumericCell { line: usize, column: usize },
    #[error("missing value at line {line}, column {column}")]
    MissingValue { line: usize, column: usize },
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("invalid parametric law for `{feature}`: {reason}")]
    InvalidLaw { feature: String, reason: String },
    #[error("quadrature is not available for the law of `{0}`; enumerate instead")]
    UnsupportedLaw(String),

    #[error("invalid causal graph: {0}")]
    Graph(String),
    #[error("causal graph does not match the feature schema: {0}")]
    GraphSchemaMismatch(String),
    #[error("invalid reference distribution: {0}")]
    Reference(String),
    #[error("no reference rows support the conditioning values of {0}")]
    NoSupport(String),

    #[error(
        "{what} limited to {limit} features (got {features}); use sampled estimation or force"
    )]
    TooManyFeatures {
        what: &'static str,
        features: usize,
        limit: usize,
    },
    #[error("exact expectation unavailable: {0}")]
    QuadratureUnavailable(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
