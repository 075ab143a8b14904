//! Dumb object storage: list, upload, download and delete named objects.
//! Object names use `/` to separate the remote directory from the base name.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use super::webdav::{TcpTransport, WebDavBackend};
use crate::crypto::{ConnectionSettings, StorageKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("remote object not found: {0}")]
    NotFound(String),
    #[error("backend rejected {method} {name}: HTTP {status}")]
    Rejected { method: String, name: String, status: u16 },
    #[error("backend I/O error: {0}")]
    Io(String),
}

pub trait TransferBackend: Send + Sync {
    /// Human-readable location of an object, used in log lines.
    fn object_url(&self, name: &str) -> String;
    /// Creates the repository's directory structure. Idempotent.
    fn prepare(&self, dirs: &[&str]) -> Result<(), BackendError>;
    /// Full object names under `dir`, sorted.
    fn list(&self, dir: &str) -> Result<Vec<String>, BackendError>;
    fn upload(&self, name: &str, data: &[u8]) -> Result<(), BackendError>;
    fn download(&self, name: &str) -> Result<Vec<u8>, BackendError>;
    fn delete(&self, name: &str) -> Result<(), BackendError>;
    fn protocol(&self) -> &'static str;
}

fn check_name(name: &str) -> Result<(), BackendError> {
    let ok = !name.is_empty()
        && !name.starts_with('/')
        && name.split('/').all(|p| !p.is_empty() && p != "." && p != "..");
    if ok {
        Ok(())
    } else {
        Err(BackendError::Io(format!("invalid object name {name:?}")))
    }
}

/// Objects stored as files below a directory.
#[derive(Debug, Clone)]
pub struct LocalBackend {
    root: PathBuf,
}

impl LocalBackend {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        LocalBackend { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn io(e: std::io::Error, what: &Path) -> BackendError {
        BackendError::Io(format!("{}: {e}", what.display()))
    }
}

impl TransferBackend for LocalBackend {
    fn object_url(&self, name: &str) -> String {
        self.root.join(name).display().to_string()
    }

    fn prepare(&self, dirs: &[&str]) -> Result<(), BackendError> {
        for d in dirs {
            let p = self.root.join(d);
            fs::create_dir_all(&p).map_err(|e| Self::io(e, &p))?;
        }
        Ok(())
    }

    fn list(&self, dir: &str) -> Result<Vec<String>, BackendError> {
        let p = self.root.join(dir);
        if !self.root.is_dir() {
            return Err(BackendError::Unreachable(self.root.display().to_string()));
        }
        let entries = match fs::read_dir(&p) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Self::io(e, &p)),
        };
        let mut out = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Self::io(e, &p))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if entry.file_type().map(|t| t.is_file()).unwrap_or(false) && !name.starts_with(".tmp-") {
                out.push(format!("{dir}/{name}"));
            }
        }
        out.sort();
        Ok(out)
    }

    fn upload(&self, name: &str, data: &[u8]) -> Result<(), BackendError> {
        check_name(name)?;
        if !self.root.is_dir() {
            return Err(BackendError::Unreachable(self.root.display().to_string()));
        }
        let target = self.root.join(name);
        let parent = target.parent().unwrap_or(&self.root).to_path_buf();
        fs::create_dir_all(&parent).map_err(|e| Self::io(e, &parent))?;
        let tmp = parent.join(format!(".tmp-{}-{}", std::process::id(), rand::random::<u64>()));
        fs::write(&tmp, data).map_err(|e| Self::io(e, &tmp))?;
        fs::rename(&tmp, &target).map_err(|e| Self::io(e, &target))
    }

    fn download(&self, name: &str) -> Result<Vec<u8>, BackendError> {
        check_name(name)?;
        let target = self.root.join(name);
        fs::read(&target).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound if self.root.is_dir() => BackendError::NotFound(name.to_string()),
            std::io::ErrorKind::NotFound => BackendError::Unreachable(self.root.display().to_string()),
            _ => Self::io(e, &target),
        })
    }

    fn delete(&self, name: &str) -> Result<(), BackendError> {
        check_name(name)?;
        let target = self.root.join(name);
        fs::remove_file(&target).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => BackendError::NotFound(name.to_string()),
            _ => Self::io(e, &target),
        })
    }

    fn protocol(&self) -> &'static str {
        "Local"
    }
}

/// In-process object store that counts writes and can be switched offline.
#[derive(Debug, Default)]
pub struct MemoryBackend {
    objects: Mutex<BTreeMap<String, Vec<u8>>>,
    writes: AtomicUsize,
    offline: AtomicBool,
}

impl MemoryBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Uploads and deletes performed so far.
    pub fn write_count(&self) -> usize {
        self.writes.load(Ordering::SeqCst)
    }

    pub fn set_offline(&self, offline: bool) {
        self.offline.store(offline, Ordering::SeqCst);
    }

    pub fn snapshot(&self) -> BTreeMap<String, Vec<u8>> {
        self.objects.lock().unwrap().clone()
    }

    fn online(&self) -> Result<(), BackendError> {
        if self.offline.load(Ordering::SeqCst) {
            Err(BackendError::Unreachable("memory backend is offline".into()))
        } else {
            Ok(())
        }
    }
}

impl TransferBackend for MemoryBackend {
    fn object_url(&self, name: &str) -> String {
        format!("memory:{name}")
    }

    fn prepare(&self, _dirs: &[&str]) -> Result<(), BackendError> {
        self.online()
    }

    fn list(&self, dir: &str) -> Result<Vec<String>, BackendError> {
        self.online()?;
        let prefix = format!("{dir}/");
        Ok(self
            .objects
            .lock()
            .unwrap()
            .keys()
            .filter(|k| k.starts_with(&prefix) && !k[prefix.len()..].contains('/'))
            .cloned()
            .collect())
    }

    fn upload(&self, name: &str, data: &[u8]) -> Result<(), BackendError> {
        self.online()?;
        check_name(name)?;
        self.writes.fetch_add(1, Ordering::SeqCst);
        self.objects.lock().unwrap().insert(name.to_string(), data.to_vec());
        Ok(())
    }

    fn download(&self, name: &str) -> Result<Vec<u8>, BackendError> {
        self.online()?;
        self.objects
            .lock()
            .unwrap()
            .get(name)
            .cloned()
            .ok_or_else(|| BackendError::NotFound(name.to_string()))
    }

    fn delete(&self, name: &str) -> Result<(), BackendError> {
        self.online()?;
        self.writes.fetch_add(1, Ordering::SeqCst);
        self.objects
            .lock()
            .unwrap()
            .remove(name)
            .map(|_| ())
            .ok_or_else(|| BackendError::NotFound(name.to_string()))
    }

    fn protocol(&self) -> &'static str {
        "Memory"
    }
}

/// Turns stored connection settings into a live backend.
pub trait Connector: Send + Sync {
    fn open(&self, settings: &ConnectionSettings) -> Result<Arc<dyn TransferBackend>, BackendError>;
}

/// Local directories and WebDAV over TCP.
#[derive(Debug, Default, Clone, Copy)]
pub struct DefaultConnector;

impl Connector for DefaultConnector {
    fn open(&self, settings: &ConnectionSettings) -> Result<Arc<dyn TransferBackend>, BackendError> {
        match settings.kind {
            StorageKind::Local => Ok(Arc::new(LocalBackend::new(&settings.url))),
            StorageKind::Webdav => Ok(Arc::new(WebDavBackend::new(
                &settings.url,
                settings.username.clone(),
                settings.password.clone(),
                Arc::new(TcpTransport::default()),
            )?)),
        }
    }
}

/// Hands out one shared backend regardless of settings.
#[derive(Clone)]
pub struct FixedConnector(pub Arc<dyn TransferBackend>);

impl Connector for FixedConnector {
    fn open(&self, _settings: &ConnectionSettings) -> Result<Arc<dyn TransferBackend>, BackendError> {
        Ok(self.0.clone())
    }
}
