use std::collections::BTreeMap;

use chrono::{DateTime, FixedOffset, Utc};
use serde::{Deserialize, Serialize};

use super::Source;
use crate::parsers::{
    AccessLogEntry, DaemonFolder, FileVersionRow, FolderConfigRecord, InstallEvent, LogEvent, XbelBookmark,
};
use crate::recovery::{CarveHit, NetExtraction, SaltSighting};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// Zone offsets for sources whose records carry naive wall-clock times.
/// Sources not listed are UTC.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZoneMap(pub BTreeMap<Source, String>);

/// Accepts `UTC`, `Z`, `+HH:MM`, `+HHMM` and `-HH`.
pub fn parse_offset(text: &str) -> Option<FixedOffset> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("utc") || t == "Z" {
        return FixedOffset::east_opt(0);
    }
    let (sign, rest) = match t.as_bytes().first()? {
        b'+' => (1, &t[1..]),
        b'-' => (-1, &t[1..]),
        _ => return None,
    };
    let digits: String = rest.chars().filter(|c| *c != ':').collect();
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let (h, m) = match digits.len() {
        2 => (digits.parse::<i32>().ok()?, 0),
        4 => (digits[..2].parse::<i32>().ok()?, digits[2..].parse::<i32>().ok()?),
        _ => return None,
    };
    if h > 23 || m > 59 {
        return None;
    }
    FixedOffset::east_opt(sign * (h * 3600 + m * 60))
}

impl ZoneMap {
    pub fn set(&mut self, source: Source, offset: &str) -> Result<(), String> {
        parse_offset(offset).ok_or_else(|| format!("bad zone offset {offset:?}"))?;
        self.0.insert(source, offset.to_string());
        Ok(())
    }

    pub fn zone(&self, source: Source) -> FixedOffset {
        self.0
            .get(&source)
            .and_then(|o| parse_offset(o))
            .unwrap_or_else(|| FixedOffset::east_opt(0).expect("zero offset"))
    }
}

/// Records from one artifact file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sourced<T> {
    pub origin: String,
    pub records: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsEntry {
    pub path: String,
    pub is_dir: bool,
    pub size: u64,
    pub modified: Option<DateTime<Utc>>,
    pub created: Option<DateTime<Utc>>,
}

/// One directory holding a `.syncany` sub-directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncFolderArtifacts {
    pub path: String,
    pub config: Option<Sourced<FolderConfigRecord>>,
    pub db: Option<Sourced<Vec<FileVersionRow>>>,
    pub logs: Vec<Sourced<Vec<LogEvent>>>,
    pub master_salt: Option<String>,
    pub listing: Vec<FsEntry>,
}

impl SyncFolderArtifacts {
    pub fn machine_name(&self) -> Option<&str> {
        self.config.as_ref().map(|c| c.records.machine_name.as_str())
    }
}

/// The per-user application directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserDirArtifacts {
    pub path: String,
    pub has_user_config: bool,
    pub daemon_folders: Vec<DaemonFolder>,
    pub pid: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactError {
    pub path: String,
    pub class: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NetArtifacts {
    pub extraction: NetExtraction,
    pub salts: Vec<SaltSighting>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactBundle {
    pub format_version: u32,
    pub timezones: ZoneMap,
    pub sync_folders: Vec<SyncFolderArtifacts>,
    pub user_dirs: Vec<UserDirArtifacts>,
    pub xbel: Vec<Sourced<Vec<XbelBookmark>>>,
    pub access_logs: Vec<Sourced<Vec<AccessLogEntry>>>,
    pub installs: Vec<Sourced<Vec<InstallEvent>>>,
    pub carve_hits: Vec<Sourced<Vec<CarveHit>>>,
    pub net: Vec<Sourced<NetArtifacts>>,
    pub errors: Vec<ArtifactError>,
}

impl Default for ArtifactBundle {
    fn default() -> Self {
        ArtifactBundle {
            format_version: BUNDLE_FORMAT_VERSION,
            timezones: ZoneMap::default(),
            sync_folders: Vec::new(),
            user_dirs: Vec::new(),
            xbel: Vec::new(),
            access_logs: Vec::new(),
            installs: Vec::new(),
            carve_hits: Vec::new(),
            net: Vec::new(),
            errors: Vec::new(),
        }
    }
}

impl ArtifactBundle {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let bundle: ArtifactBundle = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if bundle.format_version != BUNDLE_FORMAT_VERSION {
            return Err(format!("unsupported bundle format_version {}", bundle.format_version));
        }
        Ok(bundle)
    }

    pub fn artifact_count(&self) -> usize {
        self.sync_folders.len()
            + self.user_dirs.len()
            + self.xbel.len()
            + self.access_logs.len()
            + self.installs.len()
            + self.carve_hits.len()
            + self.net.len()
    }
}
