use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: {0}")]
    Shape(String),

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence { epoch: usize, reason: String },

    #[error("missing embedding for class {}", format_classes(.classes))]
    MissingEmbedding { classes: Vec<usize> },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("pairing error: source has {source_rows} rows, target has {target_rows}")]
    Pairing { source_rows: usize, target_rows: usize },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn format_classes(classes: &[usize]) -> String {
    classes
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
