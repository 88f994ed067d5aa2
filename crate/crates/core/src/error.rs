use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("unsupported conversion: {unit} is na. for category {category}")]
    Conversion { category: String, unit: String },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training set is empty")]
    EmptyTrain,

    #[error("filtered to empty after {step}")]
    FilteredToEmpty { step: &'static str },

    #[error("training diverged at epoch {epoch} (learning rate {lr})")]
    Divergence { epoch: usize, lr: f64 },

    #[error("missing greenness for {} item(s): {}", .0.len(), .0.join(", "))]
    MissingGreenness(Vec<String>),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("model artifact: {0}")]
    Artifact(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
