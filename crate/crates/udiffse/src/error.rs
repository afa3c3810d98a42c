use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] udiffse_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("{}: expected mono audio, found {channels} channels", path.display())]
    Channels { path: PathBuf, channels: u16 },
    #[error("{}: unsupported sample format {format}", path.display())]
    Codec { path: PathBuf, format: String },
    #[error("{}: sample rate {found} Hz, expected {expected} Hz", path.display())]
    SampleRate { path: PathBuf, found: u32, expected: u32 },
    #[error("checkpoint {}: {reason}", path.display())]
    Checkpoint { path: PathBuf, reason: String },
    #[error("{}:{line}: {reason}", path.display())]
    Config { path: PathBuf, line: usize, reason: String },
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 1 usage, 2 validation, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config { .. } => 1,
            Error::Core(udiffse_core::Error::InvalidParameter { .. }) => 1,
            Error::Core(_) => 2,
            Error::Io { .. }
            | Error::Wav { .. }
            | Error::Channels { .. }
            | Error::Codec { .. }
            | Error::SampleRate { .. }
            | Error::Checkpoint { .. } => 3,
        }
    }
}
