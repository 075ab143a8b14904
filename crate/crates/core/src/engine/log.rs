//! Appends `syncany.log` lines in the client's log grammar.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use super::time::TimeSource;
use crate::model::FileVersion;
use crate::parsers::syncany_log::{format_java_date, format_log_line};

pub struct LogWriter {
    path: PathBuf,
    clock: Arc<dyn TimeSource>,
}

impl LogWriter {
    pub fn new(path: PathBuf, clock: Arc<dyn TimeSource>) -> Self {
        LogWriter { path, clock }
    }

    /// Logging is best effort; a failed write never aborts an operation.
    pub fn line(&self, component: &str, thread: &str, level: &str, message: &str) {
        let text = format_log_line(&self.clock.now(), component, thread, level, message);
        if let Some(parent) = self.path.parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(&self.path) {
            let _ = writeln!(f, "{text}");
        }
    }

    pub fn info(&self, component: &str, message: &str) {
        self.line(component, "main", "INFO", message);
    }
}

pub fn describe_file_version(v: &FileVersion) -> String {
    format!(
        "FileVersion [version={}, path={}, type={}, status={}, size={}, lastModified={}, linkTarget=null, checksum={}, updated={}, posixPermissions={}, dosAttributes={}]",
        v.version,
        v.path,
        v.kind,
        v.status,
        v.size,
        format_java_date(&v.last_modified),
        v.content_checksum.map(|c| c.to_hex()).unwrap_or_else(|| "null".into()),
        format_java_date(&v.updated),
        v.posix_perms,
        v.dos_attrs,
    )
}
