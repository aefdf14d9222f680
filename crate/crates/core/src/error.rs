use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{column}`: {message}")]
    InvalidColumn { column: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("nothing to test: {0}")]
    NothingToTest(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error("edit rejected: {0}")]
    Edit(String),

    #[error("structural mismatch: {0}")]
    StructuralMismatch(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn column(column: &str, message: impl Into<String>) -> Self {
        Error::InvalidColumn {
            column: column.to_string(),
            message: message.into(),
        }
    }
}
