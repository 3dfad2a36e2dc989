use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Error, Debug)]
pub enum KtError {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<KtError>,
    },
}

pub type Result<T> = std::result::Result<T, KtError>;

impl KtError {
    /// Tags an error with the pipeline stage it came from.
    pub fn at(stage: &'static str) -> impl FnOnce(KtError) -> KtError {
        move |source| KtError::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// The innermost error beneath any stage tags.
    pub fn root(&self) -> &KtError {
        match self {
            KtError::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KtError::Io {
            path: path.into(),
            source,
        }
    }
}
