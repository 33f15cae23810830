use thiserror::Error;

/// Errors produced by the completion library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("column {column} has no observed entries")]
    EmptyColumn { column: usize },

    #[error("entry ({row}, {column}) is duplicated")]
    DuplicateEntry { row: usize, column: usize },

    #[error("entry ({row}, {column}) is out of bounds for a {rows}x{columns} matrix")]
    OutOfBounds {
        row: usize,
        column: usize,
        rows: usize,
        columns: usize,
    },

    #[error("rating {value} at ({row}, {column}) is outside the scale 1..={levels}")]
    InvalidRating {
        row: usize,
        column: usize,
        value: i64,
        levels: u8,
    },

    #[error("cell ({row}, {column}) holds {value}, which is not a category of its column")]
    OffGrid { row: usize, column: usize, value: f64 },

    #[error("non-finite value {value} at cell ({row}, {column})")]
    NonFinite { row: usize, column: usize, value: f64 },

    #[error("singular value decomposition failed")]
    Svd,

    #[error("objective became non-finite at iteration {iteration} (lambda = {lambda}, mu = {mu})")]
    Diverged { iteration: usize, lambda: f64, mu: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{0}")]
    Attack(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
