use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or descriptor input.
    #[error("configuration error: {0}")]
    Config(String),

    /// A named dataset, label or split does not exist.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Manifest header or column layout does not match the registry.
    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    /// A single manifest row could not be parsed. `row` is 1-based and
    /// counts the header as row 1.
    #[error("{path}: row {row}: {message}")]
    Row {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("split error: {0}")]
    Split(String),

    /// Records failed a precondition; every offending row is listed.
    #[error("validation error: {message} (rows {rows:?})")]
    Validation { message: String, rows: Vec<usize> },

    #[error("coverage error: {0}")]
    Coverage(String),

    /// Violated shape or range contract on a pure function.
    #[error("contract error: {0}")]
    Contract(String),

    /// Inputs bound to different registries or shapes.
    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("load error: parameter `{name}`: {message}")]
    Load { name: String, message: String },

    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("training diverged in stage `{stage}` at epoch {epoch}")]
    Diverged { stage: String, epoch: usize },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            other => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(other),
            },
        }
    }
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
