//! Normalized forensic events, their ordering, actor correlation and
//! coverage against a scripted ground truth.

pub mod bundle;
pub mod correlate;
pub mod coverage;
pub mod extract;
pub mod normalize;
pub mod order;
pub mod report;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use bundle::{ArtifactBundle, ArtifactError, FsEntry, Sourced, SyncFolderArtifacts, UserDirArtifacts, ZoneMap};
pub use correlate::{correlate, CorrelationMap, DisplayLink, Evidence, IpLink, RepoLink, DEFAULT_IP_WINDOW_SECS};
pub use coverage::{diff_ground_truth, ActionCoverage, CoverageReport, Script, ScriptedAction};
pub use extract::{extract_bundle, ExtractOutcome};
pub use normalize::normalize;
pub use order::{build_timeline, Timeline};

/// Declaration order is the tie-break priority at equal instants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    LocalDb,
    SyncanyLog,
    AccessLog,
    Xbel,
    DpkgLog,
    FsListing,
    NetCapture,
    Carved,
}

impl Source {
    pub const ALL: [Source; 8] = [
        Source::LocalDb,
        Source::SyncanyLog,
        Source::AccessLog,
        Source::Xbel,
        Source::DpkgLog,
        Source::FsListing,
        Source::NetCapture,
        Source::Carved,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Source::LocalDb => "LocalDb",
            Source::SyncanyLog => "SyncanyLog",
            Source::AccessLog => "AccessLog",
            Source::Xbel => "Xbel",
            Source::DpkgLog => "DpkgLog",
            Source::FsListing => "FsListing",
            Source::NetCapture => "NetCapture",
            Source::Carved => "Carved",
        }
    }

    pub fn parse(s: &str) -> Option<Source> {
        Source::ALL.into_iter().find(|x| x.as_str().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventType {
    Installed,
    DaemonStarted,
    RepoInitialized,
    RepoConnected,
    FileAdded,
    FileChanged,
    FileDeleted,
    FolderAdded,
    FolderRemoved,
    FolderAccessed,
    ObjectUploaded,
    ObjectDownloaded,
}

impl EventType {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventType::Installed => "Installed",
            EventType::DaemonStarted => "DaemonStarted",
            EventType::RepoInitialized => "RepoInitialized",
            EventType::RepoConnected => "RepoConnected",
            EventType::FileAdded => "FileAdded",
            EventType::FileChanged => "FileChanged",
            EventType::FileDeleted => "FileDeleted",
            EventType::FolderAdded => "FolderAdded",
            EventType::FolderRemoved => "FolderRemoved",
            EventType::FolderAccessed => "FolderAccessed",
            EventType::ObjectUploaded => "ObjectUploaded",
            EventType::ObjectDownloaded => "ObjectDownloaded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Details {
    /// Verbatim source record; never empty.
    pub raw: String,
    pub attrs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForensicEvent {
    /// Absent for records that carry no time of their own.
    pub time_utc: Option<DateTime<Utc>>,
    pub source: Source,
    /// Absent for details-only records.
    pub event_type: Option<EventType>,
    pub path: Option<String>,
    pub actor_machine: Option<String>,
    pub actor_ip: Option<String>,
    pub details: Details,
    /// The artifact the record came from.
    pub origin: String,
    /// Position of the record within `origin`.
    pub seq: u64,
}

impl ForensicEvent {
    pub fn actor(&self) -> Option<&str> {
        self.actor_machine.as_deref().or(self.actor_ip.as_deref())
    }
}
