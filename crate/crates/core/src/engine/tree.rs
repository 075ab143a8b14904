//! Local file tree scanning and comparison against the database view.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use globset::{Glob, GlobSet, GlobSetBuilder};
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::database::ViewEntry;
use super::layout::{relative_path, IGNORE_FILE, SYNCANY_DIR};
use crate::model::{checksum, FileType, Sha1Digest};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalEntry {
    pub kind: FileType,
    pub size: u64,
    /// Truncated to whole seconds.
    pub mtime: DateTime<Utc>,
    pub perms: String,
    pub abs: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub added: Vec<String>,
    pub changed: Vec<String>,
    pub deleted: Vec<String>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.changed.is_empty() && self.deleted.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChangeKind {
    Added,
    Changed,
    Deleted,
}

/// One difference between the tree and the view.
#[derive(Debug, Clone)]
pub struct Detected {
    pub path: String,
    pub change: ChangeKind,
    pub local: Option<LocalEntry>,
    /// Content checksum of a local file, when it had to be computed.
    pub checksum: Option<Sha1Digest>,
}

pub fn truncate_secs(t: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp(t.timestamp(), 0).unwrap_or(t)
}

#[cfg(unix)]
fn mode_of(meta: &fs::Metadata) -> u32 {
    use std::os::unix::fs::PermissionsExt;
    meta.permissions().mode() & 0o777
}

#[cfg(not(unix))]
fn mode_of(meta: &fs::Metadata) -> u32 {
    if meta.permissions().readonly() {
        0o444
    } else {
        0o644
    }
}

pub fn perms_string(mode: u32) -> String {
    let mut s = String::with_capacity(9);
    for shift in [6, 3, 0] {
        let bits = (mode >> shift) & 7;
        s.push(if bits & 4 != 0 { 'r' } else { '-' });
        s.push(if bits & 2 != 0 { 'w' } else { '-' });
        s.push(if bits & 1 != 0 { 'x' } else { '-' });
    }
    s
}

pub fn parse_perms(s: &str) -> Option<u32> {
    let bytes = s.as_bytes();
    if bytes.len() != 9 {
        return None;
    }
    let mut mode = 0;
    for (i, b) in bytes.iter().enumerate() {
        let expected = b"rwx"[i % 3];
        match *b {
            b'-' => {}
            c if c == expected => mode |= 1 << (8 - i),
            _ => return None,
        }
    }
    Some(mode)
}

#[cfg(unix)]
pub fn apply_perms(path: &Path, perms: &str) -> std::io::Result<()> {
    use std::os::unix::fs::PermissionsExt;
    match parse_perms(perms) {
        Some(mode) => fs::set_permissions(path, fs::Permissions::from_mode(mode)),
        None => Ok(()),
    }
}

#[cfg(not(unix))]
pub fn apply_perms(_path: &Path, _perms: &str) -> std::io::Result<()> {
    Ok(())
}

/// Patterns from `<root>/.sygnore`, one glob per line; `#` starts a comment.
pub fn load_ignore(root: &Path) -> GlobSet {
    let mut builder = GlobSetBuilder::new();
    if let Ok(text) = fs::read_to_string(root.join(IGNORE_FILE)) {
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            if let Ok(g) = Glob::new(line) {
                builder.add(g);
            }
        }
    }
    builder.build().unwrap_or_else(|_| GlobSet::empty())
}

fn ignored(set: &GlobSet, rel: &str) -> bool {
    if set.is_empty() {
        return false;
    }
    let base = rel.rsplit('/').next().unwrap_or(rel);
    set.is_match(rel) || set.is_match(base)
}

pub fn entry_for(path: &Path, meta: &fs::Metadata) -> Option<LocalEntry> {
    let kind = if meta.is_dir() {
        FileType::Folder
    } else if meta.is_file() {
        FileType::File
    } else {
        return None;
    };
    let mtime = meta.modified().ok().map(DateTime::<Utc>::from).unwrap_or_default();
    Some(LocalEntry { kind, size: meta.len(), mtime: truncate_secs(mtime), perms: perms_string(mode_of(meta)), abs: path.to_path_buf() })
}

/// Every synced file and folder below `root`, keyed by relative path.
/// The metadata directory, ignored paths and symlinks are skipped.
pub fn scan_tree(root: &Path) -> std::io::Result<BTreeMap<String, LocalEntry>> {
    let ignore = load_ignore(root);
    let mut out = BTreeMap::new();
    let walker = WalkDir::new(root).min_depth(1).sort_by_file_name().into_iter().filter_entry(|e| {
        let rel = relative_path(root, e.path()).unwrap_or_default();
        rel != SYNCANY_DIR && !ignored(&ignore, &rel)
    });
    for entry in walker {
        let entry = entry.map_err(|e| std::io::Error::other(e.to_string()))?;
        if entry.path_is_symlink() {
            continue;
        }
        let meta = entry.metadata().map_err(|e| std::io::Error::other(e.to_string()))?;
        if let (Some(rel), Some(local)) = (relative_path(root, entry.path()), entry_for(entry.path(), &meta)) {
            out.insert(rel, local);
        }
    }
    Ok(out)
}

pub fn hash_file(path: &Path) -> std::io::Result<Sha1Digest> {
    Ok(checksum(&fs::read(path)?))
}

/// Compares the tree with the present entries of `view`. Files whose size
/// and mtime (whole seconds) match are unchanged; otherwise their content is
/// hashed, so a touched but identical file is not reported.
pub fn detect_changes(root: &Path, view: &BTreeMap<String, ViewEntry>) -> std::io::Result<Vec<Detected>> {
    let tree = scan_tree(root)?;
    let mut out = Vec::new();
    for (path, local) in &tree {
        let known = view.get(path).filter(|e| e.is_present());
        match known {
            None => {
                let checksum = match local.kind {
                    FileType::File => Some(hash_file(&local.abs)?),
                    _ => None,
                };
                out.push(Detected { path: path.clone(), change: ChangeKind::Added, local: Some(local.clone()), checksum });
            }
            Some(entry) if entry.version.kind != local.kind => {
                let checksum = match local.kind {
                    FileType::File => Some(hash_file(&local.abs)?),
                    _ => None,
                };
                out.push(Detected { path: path.clone(), change: ChangeKind::Changed, local: Some(local.clone()), checksum });
            }
            Some(entry) if local.kind == FileType::File => {
                let v = &entry.version;
                if v.size == local.size && truncate_secs(v.last_modified) == local.mtime {
                    continue;
                }
                let sum = hash_file(&local.abs)?;
                if Some(sum) != v.content_checksum {
                    out.push(Detected {
                        path: path.clone(),
                        change: ChangeKind::Changed,
                        local: Some(local.clone()),
                        checksum: Some(sum),
                    });
                }
            }
            Some(_) => {}
        }
    }
    for (path, entry) in view {
        if entry.is_present() && !tree.contains_key(path) {
            out.push(Detected { path: path.clone(), change: ChangeKind::Deleted, local: None, checksum: None });
        }
    }
    Ok(out)
}

pub fn change_set(detected: &[Detected]) -> ChangeSet {
    let mut cs = ChangeSet::default();
    for d in detected {
        match d.change {
            ChangeKind::Added => cs.added.push(d.path.clone()),
            ChangeKind::Changed => cs.changed.push(d.path.clone()),
            ChangeKind::Deleted => cs.deleted.push(d.path.clone()),
        }
    }
    cs.added.sort();
    cs.changed.sort();
    cs.deleted.sort();
    cs
}
