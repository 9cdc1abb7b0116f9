use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("ingestion error in {path}: {reason}")]
    Ingest { path: PathBuf, reason: IngestError },

    #[error("infeasible correlation rho={rho} for marginals ({theta1}, {theta0}); feasible interval is [{lo}, {hi}]")]
    InfeasibleCorrelation {
        rho: f64,
        theta1: f64,
        theta0: f64,
        lo: f64,
        hi: f64,
    },

    #[error("infeasible correlation at draw {draw}, individual {individual}: {source}")]
    InfeasibleAt {
        draw: usize,
        individual: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("CATE vector has zero standard deviation")]
    DegenerateCate,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("prediction error: {0}")]
    Prediction(String),

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

/// Location-bearing reasons a dataset file is rejected.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("schema declares column `{0}` but the file has no such column")]
    MissingColumn(String),
    #[error("column `{0}` is not declared in the schema")]
    UnknownColumn(String),
    #[error("schema has no {0} column")]
    MissingRole(&'static str),
    #[error("schema declares more than one {0} column")]
    DuplicateRole(&'static str),
    #[error("row {row}, column `{column}`: value `{value}` {reason}")]
    InvalidValue {
        row: usize,
        column: String,
        value: String,
        reason: String,
    },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("file contains no data rows")]
    Empty,
    #[error("malformed schema: {0}")]
    Schema(String),
}

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
