//! The sync engine: `init`, `connect`, `status`, `up`, `ls_remote` and `down`
//! over dumb object storage, plus the on-disk layout they leave behind.

pub mod backend;
pub mod database;
pub mod layout;
pub mod log;
mod ops;
pub mod time;
pub mod tree;
pub mod webdav;

use std::path::PathBuf;

use thiserror::Error;

pub use backend::{BackendError, Connector, DefaultConnector, FixedConnector, LocalBackend, MemoryBackend, TransferBackend};
pub use database::{LocalDatabase, ViewEntry};
pub use layout::{FolderPaths, MasterFile, RepoDescriptor, UserPaths, SYNCANY_DIR};
pub use ops::{
    assemble_tree, open_database_object, pack_multichunk, unpack_multichunk, ConnectOutcome, ConnectTarget, DownSummary, Engine, InitOutcome, UpOutcome,
};
pub use time::{SimClock, SystemClock, TimeSource};
pub use tree::ChangeSet;
pub use webdav::{Captured, DavServer, HttpTransport, SimConnector, SimTransport, TcpTransport, WebDavBackend};

use crate::crypto::CryptoError;
use crate::model::ModelError;
use crate::parsers::ParseError;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("folder {0} is already initialized")]
    AlreadyInitialized(PathBuf),
    #[error("folder {0} is not initialized")]
    NotInitialized(PathBuf),
    #[error("a repository already exists at {0}")]
    RepoExists(String),
    #[error("no repository found at {0}")]
    RepoNotFound(String),
    #[error("backend unreachable: {0}")]
    BackendUnreachable(String),
    #[error("backend error: {0}")]
    Backend(BackendError),
    #[error("authentication failed: wrong password or tampered repository data")]
    AuthenticationFailure,
    #[error("multichunk {0} is referenced but missing from the repository")]
    MissingMultiChunk(String),
    #[error("folder {0} is locked by another operation")]
    Locked(PathBuf),
    #[error("corrupt {what}: {detail}")]
    Corrupt { what: String, detail: String },
    #[error(transparent)]
    Crypto(CryptoError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl From<CryptoError> for EngineError {
    fn from(e: CryptoError) -> Self {
        match e {
            CryptoError::AuthenticationFailure => EngineError::AuthenticationFailure,
            other => EngineError::Crypto(other),
        }
    }
}

impl From<BackendError> for EngineError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Unreachable(m) => EngineError::BackendUnreachable(m),
            other => EngineError::Backend(other),
        }
    }
}

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T, EngineError>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T, EngineError> {
        self.map_err(|source| EngineError::Io { path: path.into(), source })
    }
}
