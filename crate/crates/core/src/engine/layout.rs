//! Names and formats of everything the engine writes, locally and remotely.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::crypto::{CipherSpec, DEFAULT_KDF_ITERATIONS};
use crate::model::{ChunkingPolicy, MachineName};
use crate::parsers::xml::parse_document;
use crate::parsers::ParseError;

pub const SYNCANY_DIR: &str = ".syncany";
pub const IGNORE_FILE: &str = ".sygnore";

pub const MASTER_OBJECT: &str = "master";
pub const DESCRIPTOR_OBJECT: &str = "syncany";
pub const DATABASES_DIR: &str = "databases";
pub const MULTICHUNKS_DIR: &str = "multichunks";
pub const ACTIONS_DIR: &str = "actions";
pub const REMOTE_DIRS: [&str; 3] = [DATABASES_DIR, MULTICHUNKS_DIR, ACTIONS_DIR];

/// Paths inside one sync folder.
#[derive(Debug, Clone)]
pub struct FolderPaths {
    pub root: PathBuf,
}

impl FolderPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FolderPaths { root: root.into() }
    }

    pub fn meta(&self) -> PathBuf {
        self.root.join(SYNCANY_DIR)
    }
    pub fn config(&self) -> PathBuf {
        self.meta().join("config.xml")
    }
    pub fn master(&self) -> PathBuf {
        self.meta().join(MASTER_OBJECT)
    }
    pub fn descriptor(&self) -> PathBuf {
        self.meta().join(DESCRIPTOR_OBJECT)
    }
    pub fn db_dir(&self) -> PathBuf {
        self.meta().join("db")
    }
    pub fn local_db(&self) -> PathBuf {
        self.db_dir().join("local.db")
    }
    pub fn logs_dir(&self) -> PathBuf {
        self.meta().join("logs")
    }
    pub fn log(&self) -> PathBuf {
        self.logs_dir().join("syncany.log")
    }
    pub fn lock(&self) -> PathBuf {
        self.meta().join("lock")
    }
    pub fn trash(&self) -> PathBuf {
        self.meta().join("trash")
    }
    pub fn cache(&self) -> PathBuf {
        self.meta().join("cache")
    }
    pub fn is_initialized(&self) -> bool {
        self.config().is_file()
    }
}

/// Files kept in the user-scope directory shared by all folders.
#[derive(Debug, Clone)]
pub struct UserPaths {
    pub root: PathBuf,
}

impl UserPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        UserPaths { root: root.into() }
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.xml")
    }
    pub fn daemon(&self) -> PathBuf {
        self.root.join("daemon.xml")
    }
    pub fn pid(&self) -> PathBuf {
        self.root.join("daemon.pid")
    }
}

/// The unencrypted `master` object: everything needed to re-derive the key
/// from a password.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasterFile {
    pub salt: Vec<u8>,
    pub iterations: u32,
}

impl MasterFile {
    pub fn to_xml(&self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<master>\n   <salt>{}</salt>\n   <iterations>{}</iterations>\n</master>\n",
            hex::encode(&self.salt),
            self.iterations
        )
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, ParseError> {
        let text = std::str::from_utf8(bytes).map_err(|_| ParseError::MalformedXml("master is not UTF-8".into()))?;
        let root = parse_document(text)?;
        if !root.is("master") {
            return Err(ParseError::MissingRequiredTag("master".into()));
        }
        let salt_hex = root.field("salt").ok_or_else(|| ParseError::MissingRequiredTag("salt".into()))?;
        let salt = hex::decode(&salt_hex).map_err(|_| ParseError::InvalidValue {
            line: 0,
            column: "salt".into(),
            value: salt_hex.clone(),
        })?;
        if salt.is_empty() {
            return Err(ParseError::InvalidValue { line: 0, column: "salt".into(), value: String::new() });
        }
        let iterations = match root.field("iterations") {
            None => DEFAULT_KDF_ITERATIONS,
            Some(v) => v.parse().map_err(|_| ParseError::InvalidValue {
                line: 0,
                column: "iterations".into(),
                value: v.clone(),
            })?,
        };
        Ok(MasterFile { salt, iterations })
    }
}

/// Repository parameters, stored sealed as the `syncany` object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoDescriptor {
    pub format_version: u32,
    pub repo_id: String,
    pub chunking: ChunkingPolicy,
    pub cipher: CipherSpec,
    pub compression: String,
    pub max_multichunk_bytes: usize,
}

impl RepoDescriptor {
    pub fn new(repo_id: String) -> Self {
        RepoDescriptor {
            format_version: 1,
            repo_id,
            chunking: ChunkingPolicy::default(),
            cipher: CipherSpec::default(),
            compression: "deflate".into(),
            max_multichunk_bytes: 4 * 1024 * 1024,
        }
    }
}

pub fn database_object(machine: &MachineName, seq: u64) -> String {
    format!("{DATABASES_DIR}/db-{}-{seq}", machine.as_str())
}

/// Splits `db-<machine>-<seq>` (with or without the directory prefix).
pub fn parse_database_object(name: &str) -> Option<(MachineName, u64)> {
    let base = name.rsplit('/').next()?;
    let rest = base.strip_prefix("db-")?;
    let (machine, seq) = rest.rsplit_once('-')?;
    let seq = seq.parse().ok().filter(|s| *s > 0)?;
    Some((MachineName::parse_lenient(machine).ok()?, seq))
}

pub fn multichunk_object(id: &str) -> String {
    format!("{MULTICHUNKS_DIR}/multichunk-{id}")
}

pub fn action_object(verb: &str, machine: &MachineName, at: DateTime<Utc>) -> String {
    format!("{ACTIONS_DIR}/{verb}-{}-{}", machine.as_str(), at.format("%Y%m%dT%H%M%S%.3fZ"))
}

/// Permissive reading of an action marker name.
pub fn parse_action_object(name: &str) -> Option<(String, String, String)> {
    let base = name.rsplit('/').next()?;
    let mut parts = base.splitn(3, '-');
    Some((parts.next()?.to_string(), parts.next()?.to_string(), parts.next()?.to_string()))
}

/// Forward-slash relative path, or None for paths outside `root`.
pub fn relative_path(root: &Path, path: &Path) -> Option<String> {
    let rel = path.strip_prefix(root).ok()?;
    let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
    (!parts.is_empty()).then(|| parts.join("/"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn master_round_trip() {
        let m = MasterFile { salt: vec![1, 2, 3, 250], iterations: 1234 };
        assert_eq!(MasterFile::parse(m.to_xml().as_bytes()).unwrap(), m);
        assert!(MasterFile::parse(b"<master/>").is_err());
    }

    #[test]
    fn database_names() {
        let m = MachineName::new("UYCrwWXGXKvbOYKtZBGc").unwrap();
        let name = database_object(&m, 12);
        assert_eq!(name, "databases/db-UYCrwWXGXKvbOYKtZBGc-12");
        assert_eq!(parse_database_object(&name), Some((m, 12)));
        assert_eq!(parse_database_object("databases/db-abc-0"), None);
        assert_eq!(parse_database_object("databases/other"), None);
    }
}
