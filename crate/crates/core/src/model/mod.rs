//! Repository data model: checksums, chunks, multichunks, file versions and
//! histories, database versions and vector clocks. Everything here is pure.

mod chunking;
mod clock;
mod digest;
mod machine;
mod version;

use thiserror::Error;

pub use chunking::{chunk_stream, Chunk, ChunkRef, ChunkingPolicy, MultiChunk};
pub use clock::{compare_clocks, increment_clock, ClockOrdering, VectorClock};
pub use digest::{checksum, Sha1Digest};
pub use machine::MachineName;
pub use version::{
    winning_version, DatabaseVersion, DatabaseVersionHeader, FileChange, FileContent,
    FileHistory, FileStatus, FileType, FileVersion, HistoryId,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid SHA-1 digest {0:?}")]
    InvalidDigest(String),
    #[error("invalid machine name {0:?}")]
    InvalidMachineName(String),
    #[error("invalid vector clock {0:?}")]
    InvalidClock(String),
    #[error("invalid chunking policy: {0}")]
    InvalidPolicy(String),
    #[error("multichunk has no members")]
    EmptyMultiChunk,
    #[error("corrupt multichunk: {0}")]
    CorruptMultiChunk(String),
    #[error("invalid file version: {0}")]
    InvalidFileVersion(String),
    #[error("invalid database version: {0}")]
    InvalidDatabaseVersion(String),
    #[error("unknown vocabulary term {0:?}")]
    UnknownVocabulary(String),
}
