use thiserror::Error;

use crate::linprog::LpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{0}`")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("integrity error: duplicate observation ({bank}, {year})")]
    Duplicate { bank: String, year: i32 },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("empty frontier: {0}")]
    EmptyFrontier(String),

    #[error("collinear columns: {}", .0.join(", "))]
    Collinear(Vec<String>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("linear program for DMU `{dmu}` failed: {source}")]
    Lp {
        dmu: String,
        #[source]
        source: LpError,
    },

    #[error("missing upstream result: {0}")]
    MissingStep(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
