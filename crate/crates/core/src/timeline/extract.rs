//! Walks evidence roots and parses every recognised artifact into a bundle.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Utc};
use walkdir::WalkDir;

use super::bundle::{ArtifactBundle, ArtifactError, FsEntry, Sourced, SyncFolderArtifacts, UserDirArtifacts, ZoneMap};
use super::Source;
use crate::engine::{MasterFile, SYNCANY_DIR};
use crate::parsers::config::{parse_daemon, parse_daemon_pid, parse_folder_config};
use crate::parsers::{parse_access_log, parse_local_db, parse_log_text, parse_xbel, recognize_install_lines};

#[derive(Debug, Clone)]
pub struct ExtractOutcome {
    pub bundle: ArtifactBundle,
    pub roots_readable: usize,
}

impl ExtractOutcome {
    pub fn is_partial(&self) -> bool {
        !self.bundle.errors.is_empty()
    }
}

enum Class {
    Xbel,
    AccessLog,
    Install,
}

fn classify(name: &str) -> Option<Class> {
    let lower = name.to_ascii_lowercase();
    if lower == "recently-used.xbel" {
        Some(Class::Xbel)
    } else if lower.contains("access") && lower.contains("log") {
        Some(Class::AccessLog)
    } else if lower.starts_with("dpkg.log") || lower.starts_with("syslog") || lower.starts_with("history.log") {
        Some(Class::Install)
    } else {
        None
    }
}

fn read_text(path: &Path) -> std::io::Result<String> {
    fs::read(path).map(|b| String::from_utf8_lossy(&b).into_owned())
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn to_utc(t: std::io::Result<std::time::SystemTime>) -> Option<DateTime<Utc>> {
    t.ok().map(DateTime::<Utc>::from)
}

struct Walker {
    bundle: ArtifactBundle,
}

impl Walker {
    fn error(&mut self, path: &Path, class: &str, message: impl ToString) {
        self.bundle.errors.push(ArtifactError { path: display(path), class: class.into(), message: message.to_string() });
    }

    fn sync_folder(&mut self, folder: &Path) {
        let meta = folder.join(SYNCANY_DIR);
        let mut art = SyncFolderArtifacts {
            path: display(folder),
            config: None,
            db: None,
            logs: Vec::new(),
            master_salt: None,
            listing: Vec::new(),
        };
        let config = meta.join("config.xml");
        match read_text(&config).map(|t| parse_folder_config(&t)) {
            Ok(Ok(c)) => art.config = Some(Sourced { origin: display(&config), records: c }),
            Ok(Err(e)) => self.error(&config, "config", e),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => self.error(&config, "config", e),
        }
        let db = meta.join("db").join("local.db");
        match read_text(&db).map(|t| parse_local_db(&t)) {
            Ok(Ok(rows)) => art.db = Some(Sourced { origin: display(&db), records: rows }),
            Ok(Err(e)) => self.error(&db, "local.db", e),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => self.error(&db, "local.db", e),
        }
        let zone = self.bundle.timezones.zone(Source::SyncanyLog);
        let mut logs: Vec<PathBuf> = fs::read_dir(meta.join("logs"))
            .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_file()).collect())
            .unwrap_or_default();
        logs.sort();
        for log in logs {
            match read_text(&log) {
                Ok(text) => art.logs.push(Sourced { origin: display(&log), records: parse_log_text(&text, zone) }),
                Err(e) => self.error(&log, "syncany.log", e),
            }
        }
        let master = meta.join("master");
        if let Ok(bytes) = fs::read(&master) {
            match MasterFile::parse(&bytes) {
                Ok(m) => art.master_salt = Some(hex::encode(m.salt)),
                Err(e) => self.error(&master, "master", e),
            }
        }
        for entry in WalkDir::new(&meta).sort_by_file_name().into_iter().filter_map(Result::ok) {
            let Ok(md) = entry.metadata() else { continue };
            art.listing.push(FsEntry {
                path: display(entry.path()),
                is_dir: md.is_dir(),
                size: if md.is_dir() { 0 } else { md.len() },
                modified: to_utc(md.modified()),
                created: to_utc(md.created()),
            });
        }
        self.bundle.sync_folders.push(art);
    }

    fn user_dir(&mut self, dir: &Path) {
        let mut art = UserDirArtifacts {
            path: display(dir),
            has_user_config: dir.join("config.xml").is_file(),
            daemon_folders: Vec::new(),
            pid: None,
        };
        let daemon = dir.join("daemon.xml");
        match read_text(&daemon).map(|t| parse_daemon(&t)) {
            Ok(Ok(f)) => art.daemon_folders = f,
            Ok(Err(e)) => self.error(&daemon, "daemon.xml", e),
            Err(e) => self.error(&daemon, "daemon.xml", e),
        }
        let pid = dir.join("daemon.pid");
        if let Ok(text) = read_text(&pid) {
            match parse_daemon_pid(&text) {
                Ok(p) => art.pid = Some(p),
                Err(e) => self.error(&pid, "daemon.pid", e),
            }
        }
        self.bundle.user_dirs.push(art);
    }

    fn file(&mut self, path: &Path, class: Class) {
        let text = match read_text(path) {
            Ok(t) => t,
            Err(e) => return self.error(path, "file", e),
        };
        let origin = display(path);
        match class {
            Class::Xbel => match parse_xbel(&text) {
                Ok(b) => self.bundle.xbel.push(Sourced { origin, records: b }),
                Err(e) => self.error(path, "xbel", e),
            },
            Class::AccessLog => {
                let (ok, bad) = parse_access_log(&text);
                for (line, e) in bad {
                    self.error(path, "access log", format!("line {line}: {e}"));
                }
                self.bundle.access_logs.push(Sourced { origin, records: ok });
            }
            Class::Install => {
                // Syslog lines carry no year; take it from the file itself.
                let year = fs::metadata(path)
                    .and_then(|m| m.modified())
                    .map(|t| DateTime::<Utc>::from(t).year())
                    .unwrap_or(1970);
                let events = recognize_install_lines(text.lines(), year);
                if !events.is_empty() {
                    self.bundle.installs.push(Sourced { origin, records: events });
                }
            }
        }
    }
}

/// Parses everything recognisable under `roots`. Per-artifact failures are
/// recorded in the bundle rather than aborting the walk.
pub fn extract_bundle(roots: &[PathBuf], zones: ZoneMap) -> ExtractOutcome {
    let mut w = Walker { bundle: ArtifactBundle { timezones: zones, ..ArtifactBundle::default() } };
    let mut roots_readable = 0;
    for root in roots {
        if fs::metadata(root).is_err() {
            w.error(root, "root", "unreadable");
            continue;
        }
        roots_readable += 1;
        let walk = WalkDir::new(root)
            .sort_by_file_name()
            .into_iter()
            .filter_entry(|e| e.file_name() != SYNCANY_DIR);
        for entry in walk {
            let entry = match entry {
                Ok(e) => e,
                Err(e) => {
                    let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| root.clone());
                    w.error(&path, "walk", e);
                    continue;
                }
            };
            let path = entry.path();
            if entry.file_type().is_dir() {
                if path.join(SYNCANY_DIR).is_dir() {
                    w.sync_folder(path);
                }
                if path.join("daemon.xml").is_file() {
                    w.user_dir(path);
                }
            } else if entry.file_type().is_file() {
                if let Some(class) = entry.file_name().to_str().and_then(classify) {
                    w.file(path, class);
                }
            }
        }
    }
    ExtractOutcome { bundle: w.bundle, roots_readable }
}
