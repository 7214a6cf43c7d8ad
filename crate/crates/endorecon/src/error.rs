use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {message}", path.display())]
    Npy { path: PathBuf, message: String },
    #[error("{}: {message}", path.display())]
    Image { path: PathBuf, message: String },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Core(#[from] endorecon_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn npy(path: impl AsRef<Path>, message: impl Into<String>) -> Self {
        Error::Npy {
            path: path.as_ref().to_path_buf(),
            message: message.into(),
        }
    }

    pub fn image(path: impl AsRef<Path>, message: impl Into<String>) -> Self {
        Error::Image {
            path: path.as_ref().to_path_buf(),
            message: message.into(),
        }
    }

    pub fn csv(path: impl AsRef<Path>, message: impl ToString) -> Self {
        Error::Csv {
            path: path.as_ref().to_path_buf(),
            message: message.to_string(),
        }
    }
}

/// `std::fs` helpers that attach the path to the error.
pub(crate) mod fsx {
    use super::{Error, Result};
    use std::path::Path;

    pub fn read(path: &Path) -> Result<Vec<u8>> {
        std::fs::read(path).map_err(|e| Error::io(path, e))
    }

    pub fn read_to_string(path: &Path) -> Result<String> {
        std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
    }

    pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn create_dir_all(path: &Path) -> Result<()> {
        std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
    }
}
