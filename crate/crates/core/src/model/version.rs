use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{ClockOrdering, MachineName, ModelError, MultiChunk, Sha1Digest, VectorClock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FileType {
    File,
    Folder,
    Symlink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FileStatus {
    New,
    Changed,
    Deleted,
}

impl FileType {
    pub fn as_str(&self) -> &'static str {
        match self {
            FileType::File => "FILE",
            FileType::Folder => "FOLDER",
            FileType::Symlink => "SYMLINK",
        }
    }
}

impl FileStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FileStatus::New => "NEW",
            FileStatus::Changed => "CHANGED",
            FileStatus::Deleted => "DELETED",
        }
    }
}

impl fmt::Display for FileType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for FileStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FileType {
    type Err = ModelError;

    /// Case-insensitive.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "FILE" => Ok(FileType::File),
            "FOLDER" => Ok(FileType::Folder),
            "SYMLINK" => Ok(FileType::Symlink),
            _ => Err(ModelError::UnknownVocabulary(s.to_string())),
        }
    }
}

impl FromStr for FileStatus {
    type Err = ModelError;

    /// Case-insensitive; both `new` and `NEW` occur in the wild.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "NEW" => Ok(FileStatus::New),
            "CHANGED" => Ok(FileStatus::Changed),
            "DELETED" => Ok(FileStatus::Deleted),
            _ => Err(ModelError::UnknownVocabulary(s.to_string())),
        }
    }
}

/// File history identifier. Generated ids are 40 hex chars; ids read from
/// evidence are kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HistoryId(pub String);

impl HistoryId {
    pub fn generate() -> Self {
        let mut bytes = [0u8; 20];
        rand::thread_rng().fill_bytes(&mut bytes);
        HistoryId(hex::encode(bytes))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for HistoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One incarnation of a file, folder or symlink.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileVersion {
    pub version: u32,
    /// Repo-relative, forward slashes, no leading slash.
    pub path: String,
    pub kind: FileType,
    pub status: FileStatus,
    pub size: u64,
    pub last_modified: DateTime<Utc>,
    pub updated: DateTime<Utc>,
    pub content_checksum: Option<Sha1Digest>,
    pub posix_perms: String,
    pub dos_attrs: String,
}

impl FileVersion {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |why: &str| Err(ModelError::InvalidFileVersion(format!("{}: {why}", self.path)));
        if self.version == 0 {
            return bad("version must be >= 1");
        }
        if self.path.is_empty() || self.path.starts_with('/') || self.path.contains('\\') {
            return bad("path must be repo-relative with forward slashes");
        }
        if self.kind == FileType::Folder && self.content_checksum.is_some() {
            return bad("folders carry no content checksum");
        }
        if self.status == FileStatus::Deleted && self.version < 2 {
            return bad("a deleted version follows an earlier one");
        }
        Ok(())
    }

    pub fn is_deleted(&self) -> bool {
        self.status == FileStatus::Deleted
    }
}

/// The identity of a file across time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHistory {
    pub id: HistoryId,
    pub versions: Vec<FileVersion>,
}

impl FileHistory {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, v) in self.versions.iter().enumerate() {
            if v.version as usize != i + 1 {
                return Err(ModelError::InvalidFileVersion(format!(
                    "history {} is not contiguous at position {}",
                    self.id,
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn last(&self) -> Option<&FileVersion> {
        self.versions.last()
    }
}

/// Whole-file content: checksum, size and ordered chunk list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileContent {
    pub checksum: Sha1Digest,
    pub size: u64,
    pub chunks: Vec<Sha1Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseVersionHeader {
    pub client: MachineName,
    pub local_time: DateTime<Utc>,
    pub clock: VectorClock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChange {
    pub history_id: HistoryId,
    pub version: FileVersion,
}

/// A delta snapshot of the file tree produced by one client's upload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseVersion {
    pub header: DatabaseVersionHeader,
    pub changes: Vec<FileChange>,
    #[serde(default)]
    pub contents: Vec<FileContent>,
    #[serde(default)]
    pub multichunks: Vec<MultiChunk>,
}

impl DatabaseVersion {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.header.clock.get(&self.header.client) == 0 {
            return Err(ModelError::InvalidDatabaseVersion(
                "clock has no entry for its own client".into(),
            ));
        }
        if self.changes.is_empty() {
            return Err(ModelError::InvalidDatabaseVersion("no changes".into()));
        }
        self.changes.iter().try_for_each(|c| c.version.validate())
    }
}

/// Picks the winning incarnation among competing versions of one file.
///
/// A candidate whose clock is after every other wins outright. Otherwise the
/// maximal (non-dominated) candidates are concurrent and the earliest
/// `local_time` wins, then the lexicographically smallest client name. The
/// remaining keys only make the choice total so the result does not depend
/// on input order.
pub fn winning_version<'a>(
    candidates: &[(&'a DatabaseVersionHeader, &'a FileVersion)],
) -> Option<(&'a DatabaseVersionHeader, &'a FileVersion)> {
    candidates
        .iter()
        .filter(|(h, _)| {
            !candidates
                .iter()
                .any(|(o, _)| h.clock.compare(&o.clock) == ClockOrdering::Before)
        })
        .min_by(|(ha, fa), (hb, fb)| {
            ha.local_time
                .cmp(&hb.local_time)
                .then_with(|| ha.client.cmp(&hb.client))
                .then_with(|| ha.clock.serialize_text().cmp(&hb.clock.serialize_text()))
                .then_with(|| fb.version.cmp(&fa.version))
                .then_with(|| fa.path.cmp(&fb.path))
                .then_with(|| fa.status.cmp(&fb.status))
        })
        .copied()
}
