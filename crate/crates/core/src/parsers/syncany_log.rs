//! `syncany.log` lines: `D-M-YY HH:MM:SS.mmm | component | thread | LEVEL : message`.
//!
//! Copies of the log that lost their pipes (whitespace-separated columns) are
//! accepted too.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use chrono::{DateTime, Datelike, FixedOffset, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::Sha1Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogKind {
    DaemonRun,
    InitOperation,
    ConnectOperation,
    AddedFileVersion,
    WinningVersion,
    RemovingFolder,
    RecentChanges,
    UploadingFile,
    SettingField,
    Other,
}

/// Typed view of a logged `FileVersion [key=value, ...]` block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedFileVersion {
    pub version: u32,
    pub path: String,
    pub kind: String,
    pub status: String,
    pub size: Option<u64>,
    pub last_modified: Option<DateTime<FixedOffset>>,
    pub updated: Option<DateTime<FixedOffset>>,
    pub checksum: Option<Sha1Digest>,
    pub posix_permissions: Option<String>,
    pub dos_attributes: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEvent {
    pub timestamp: DateTime<FixedOffset>,
    pub component: String,
    pub thread: String,
    pub level: String,
    pub kind: LogKind,
    pub message: String,
    pub attrs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_version: Option<LoggedFileVersion>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<String>,
    /// 1-based line number in the source file (0 when parsed standalone).
    pub line: usize,
    pub raw: String,
}

/// Result of [`parse_log_line`]: the function is total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogLine {
    Event(Box<LogEvent>),
    NotALogLine,
}

impl LogLine {
    pub fn event(self) -> Option<LogEvent> {
        match self {
            LogLine::Event(e) => Some(*e),
            LogLine::NotALogLine => None,
        }
    }
}

const STAMP: &str = r"(\d{1,2})-(\d{1,2})-(\d{2}) (\d{1,2}):(\d{2}):(\d{2})\.(\d{3})";

static PIPED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"^{STAMP} +\| *([^|]*?) *\| *([^|]*?) *\| *([A-Za-z]+) *: ?(.*)$"
    ))
    .unwrap()
});
static SPACED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"^{STAMP} +(\S+) +(\S+) +([A-Z]+) +: ?(.*)$")).unwrap()
});

static SETTING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^Setting field ['‘]([^'’]*)['’] with value ['‘]([^'’]*)['’]").unwrap()
});
static OPERATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^Executing (Init|Connect)Operation for folder (.+)$").unwrap());
static UPLOADING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:(\w+): )?Uploading local file (\S+) to (\S+)").unwrap()
});
static REMOVING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"Removing folder ['‘]([^'’]*)['’]").unwrap());
static FILE_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<file>([^<]*)</file>").unwrap());
static ATTR_KEY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^([A-Za-z][A-Za-z0-9]*)=").unwrap());

/// Parses one line, interpreting its timestamp in `zone`.
pub fn parse_log_line(line: &str, zone: FixedOffset) -> LogLine {
    let line = line.trim_end_matches(['\r', '\n']);
    let caps = match PIPED.captures(line).or_else(|| SPACED.captures(line)) {
        Some(c) => c,
        None => return LogLine::NotALogLine,
    };
    let num = |i: usize| caps[i].parse::<u32>().unwrap_or(u32::MAX);
    let date = NaiveDate::from_ymd_opt(2000 + num(3) as i32, num(2), num(1));
    let naive = date.and_then(|d| d.and_hms_milli_opt(num(4), num(5), num(6), num(7)));
    let Some(timestamp) = naive.and_then(|n| zone.from_local_datetime(&n).single()) else {
        return LogLine::NotALogLine;
    };
    let mut event = LogEvent {
        timestamp,
        component: caps[8].to_string(),
        thread: caps[9].to_string(),
        level: caps[10].to_string(),
        kind: LogKind::Other,
        message: caps[11].to_string(),
        attrs: BTreeMap::new(),
        file_version: None,
        files: Vec::new(),
        line: 0,
        raw: line.to_string(),
    };
    classify(&mut event);
    LogLine::Event(Box::new(event))
}

/// Parses a whole log. Lines that do not start a new entry are treated as
/// continuations of the previous entry's message.
pub fn parse_log_text(text: &str, zone: FixedOffset) -> Vec<LogEvent> {
    let mut events: Vec<LogEvent> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        match parse_log_line(line, zone) {
            LogLine::Event(mut e) => {
                e.line = idx + 1;
                events.push(*e);
            }
            LogLine::NotALogLine => {
                if let Some(prev) = events.last_mut() {
                    if !line.trim().is_empty() {
                        prev.message.push('\n');
                        prev.message.push_str(line);
                        prev.raw.push('\n');
                        prev.raw.push_str(line);
                        classify(prev);
                    }
                }
            }
        }
    }
    events
}

fn strip_trailing_ellipsis(text: &str) -> &str {
    text.trim_end().trim_end_matches(['.', '…']).trim_end()
}

fn classify(event: &mut LogEvent) {
    event.kind = LogKind::Other;
    event.attrs.clear();
    event.file_version = None;
    event.files.clear();
    let msg = event.message.trim_start();

    if msg.starts_with("Starting daemon operation with action RUN") {
        event.kind = LogKind::DaemonRun;
        event.attrs.insert("action".into(), "RUN".into());
    } else if let Some(c) = SETTING.captures(msg) {
        event.kind = LogKind::SettingField;
        event.attrs.insert("field".into(), c[1].to_string());
        event.attrs.insert("value".into(), c[2].to_string());
    } else if let Some(c) = OPERATION.captures(msg) {
        event.kind = if &c[1] == "Init" {
            LogKind::InitOperation
        } else {
            LogKind::ConnectOperation
        };
        let first_line = c[2].lines().next().unwrap_or("");
        event.attrs.insert("path".into(), strip_trailing_ellipsis(first_line).to_string());
    } else if let Some(c) = UPLOADING.captures(msg) {
        event.kind = LogKind::UploadingFile;
        if let Some(proto) = c.get(1) {
            event.attrs.insert("protocol".into(), proto.as_str().to_string());
        }
        event.attrs.insert("path".into(), c[2].to_string());
        event.attrs.insert("url".into(), c[3].to_string());
    } else if let Some(c) = REMOVING.captures(msg) {
        event.kind = LogKind::RemovingFolder;
        event.attrs.insert("path".into(), c[1].to_string());
    } else if msg.contains("<recentChanges>") || msg.contains("updateRecentChanges") {
        event.kind = LogKind::RecentChanges;
        event.files = FILE_TAG.captures_iter(msg).map(|c| c[1].to_string()).collect();
    } else {
        let kind = if msg.starts_with("* Added file version:") {
            Some(LogKind::AddedFileVersion)
        } else if msg.starts_with("with winning version") {
            Some(LogKind::WinningVersion)
        } else {
            None
        };
        if let Some(block) = file_version_block(msg) {
            let attrs = split_attrs(block);
            let typed = typed_file_version(&attrs);
            event.attrs = attrs;
            if let (Some(kind), Some(fv)) = (kind, typed.clone()) {
                event.kind = kind;
                event.file_version = Some(fv);
            } else {
                event.file_version = typed;
            }
        }
    }
}

/// Contents of the first `FileVersion [ ... ]`, honouring nested brackets.
/// An unterminated block runs to the end of the message.
fn file_version_block(msg: &str) -> Option<&str> {
    let start = msg.find("FileVersion [")? + "FileVersion [".len();
    let mut depth = 1;
    for (i, ch) in msg[start..].char_indices() {
        match ch {
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&msg[start..start + i]);
                }
            }
            _ => {}
        }
    }
    Some(msg[start..].trim_end())
}

fn split_attrs(block: &str) -> BTreeMap<String, String> {
    let mut pieces: Vec<String> = Vec::new();
    for piece in block.split(", ") {
        if ATTR_KEY.is_match(piece) || pieces.is_empty() {
            pieces.push(piece.to_string());
        } else if let Some(last) = pieces.last_mut() {
            last.push_str(", ");
            last.push_str(piece);
        }
    }
    pieces
        .into_iter()
        .filter_map(|p| {
            let (k, v) = p.split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn non_null(attrs: &BTreeMap<String, String>, key: &str) -> Option<String> {
    attrs.get(key).filter(|v| v.as_str() != "null").cloned()
}

fn typed_file_version(attrs: &BTreeMap<String, String>) -> Option<LoggedFileVersion> {
    let version = attrs.get("version")?.parse().ok()?;
    let path = attrs.get("path")?.clone();
    let kind = attrs.get("type")?.clone();
    let status = attrs.get("status")?.clone();
    let size = match non_null(attrs, "size") {
        Some(s) => Some(s.parse().ok()?),
        None => None,
    };
    let checksum = match non_null(attrs, "checksum") {
        Some(s) => Some(Sha1Digest::from_hex(&s).ok()?),
        None => None,
    };
    Some(LoggedFileVersion {
        version,
        path,
        kind,
        status,
        size,
        last_modified: non_null(attrs, "lastModified").and_then(|s| parse_java_date(&s)),
        updated: non_null(attrs, "updated").and_then(|s| parse_java_date(&s)),
        checksum,
        posix_permissions: non_null(attrs, "posixPermissions"),
        dos_attributes: non_null(attrs, "dosAttributes"),
    })
}

fn zone_offset(abbrev: &str) -> Option<FixedOffset> {
    let hours = match abbrev {
        "UTC" | "GMT" | "Z" | "WET" => 0,
        "BST" | "CET" | "WEST" => 1,
        "CEST" | "EET" => 2,
        "EEST" | "MSK" => 3,
        "IST" => return FixedOffset::east_opt(5 * 3600 + 1800),
        "SGT" | "MYT" | "AWST" => 8,
        "JST" | "KST" => 9,
        "AEST" => 10,
        "AEDT" => 11,
        "NZST" => 12,
        "NZDT" => 13,
        "EDT" => -4,
        "EST" | "CDT" => -5,
        "CST" | "MDT" => -6,
        "MST" | "PDT" => -7,
        "PST" | "AKDT" => -8,
        "AKST" => -9,
        "HST" => -10,
        _ => return None,
    };
    FixedOffset::east_opt(hours * 3600)
}

/// Parses Java's `Date.toString()` form, e.g. `Sat Dec 13 08:35:00 PST 2014`.
pub fn parse_java_date(text: &str) -> Option<DateTime<FixedOffset>> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    let [_, month, day, time, zone, year] = parts.as_slice() else {
        return None;
    };
    let offset = zone_offset(zone)?;
    let naive = NaiveDateTime::parse_from_str(&format!("{day} {month} {year} {time}"), "%d %b %Y %H:%M:%S").ok()?;
    offset.from_local_datetime(&naive).single()
}

/// Formats a UTC instant in Java's `Date.toString()` form.
pub fn format_java_date(t: &DateTime<Utc>) -> String {
    t.format("%a %b %d %H:%M:%S UTC %Y").to_string()
}

/// Formats one log line in the piped grammar.
pub fn format_log_line(t: &DateTime<Utc>, component: &str, thread: &str, level: &str, message: &str) -> String {
    let comp: String = component.chars().take(15).collect();
    let thread: String = thread.chars().take(14).collect();
    format!(
        "{}-{}-{:02} {:02}:{:02}:{:02}.{:03} | {comp} | {thread} | {level} : {message}",
        t.day(),
        t.month(),
        t.year() % 100,
        t.hour(),
        t.minute(),
        t.second(),
        t.timestamp_subsec_millis()
    )
}
