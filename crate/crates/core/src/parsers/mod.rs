//! Parsers for the on-disk, server-side and foreign artifacts a sync client
//! leaves behind.

pub mod access_log;
pub mod config;
pub mod install;
pub mod local_db;
pub mod syncany_log;
pub mod xbel;
pub mod xml;

pub use access_log::{parse_access_log, parse_access_log_line, AccessLogEntry};
pub use config::{
    daemon_to_xml, parse_daemon, parse_daemon_pid, parse_folder_config, parse_user_config, ConnectionRecord,
    DaemonFolder, FolderConfigRecord, KeyMaterial, UserConfigRecord,
};
pub use install::{recognize_install_lines, InstallAction, InstallEvent, InstallSource};
pub use local_db::{decode_row_line, parse_local_db, FileVersionRow};
pub use syncany_log::{parse_log_line, parse_log_text, LogEvent, LogKind, LogLine, LoggedFileVersion};
pub use xbel::{parse_xbel, XbelApplication, XbelBookmark};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("missing required tag <{0}>")]
    MissingRequiredTag(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("missing required column {0}")]
    MissingColumn(String),
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    RowArityMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: invalid value {value:?} for {column}")]
    InvalidValue { line: usize, column: String, value: String },
    #[error("malformed log line: {0}")]
    MalformedLogLine(String),
    #[error("malformed pid: {0:?}")]
    MalformedPid(String),
}
