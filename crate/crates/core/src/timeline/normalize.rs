//! Maps parsed records onto [`ForensicEvent`]s.

use std::collections::BTreeMap;

use chrono::{DateTime, FixedOffset, NaiveDateTime, TimeZone, Utc};

use super::bundle::{ArtifactBundle, Sourced};
use super::{Details, EventType, ForensicEvent, Source};
use crate::model::{FileStatus, FileType};
use crate::parsers::{FileVersionRow, InstallAction, LogKind};
use crate::recovery::CarveKind;

fn local_to_utc(t: &NaiveDateTime, zone: FixedOffset) -> Option<DateTime<Utc>> {
    zone.from_local_datetime(t).single().map(|d| d.with_timezone(&Utc))
}

/// Event type for a file version by kind and status.
pub fn version_event(kind: Option<FileType>, status: Option<FileStatus>) -> Option<EventType> {
    use EventType::*;
    match (kind?, status?) {
        (FileType::Folder, FileStatus::New) => Some(FolderAdded),
        (FileType::Folder, FileStatus::Deleted) => Some(FolderRemoved),
        (FileType::Folder, FileStatus::Changed) => None,
        (_, FileStatus::New) => Some(FileAdded),
        (_, FileStatus::Changed) => Some(FileChanged),
        (_, FileStatus::Deleted) => Some(FileDeleted),
    }
}

fn parse_kind(s: &str) -> Option<FileType> {
    match s.to_ascii_uppercase().as_str() {
        "FILE" => Some(FileType::File),
        "FOLDER" => Some(FileType::Folder),
        "SYMLINK" => Some(FileType::Symlink),
        _ => None,
    }
}

fn parse_status(s: &str) -> Option<FileStatus> {
    match s.to_ascii_uppercase().as_str() {
        "NEW" => Some(FileStatus::New),
        "CHANGED" => Some(FileStatus::Changed),
        "DELETED" => Some(FileStatus::Deleted),
        _ => None,
    }
}

fn attrs<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn row_event(row: &FileVersionRow, zone: FixedOffset, source: Source, origin: &str, seq: u64) -> ForensicEvent {
    let mut a = attrs([
        ("version", row.version.to_string()),
        ("status", row.status.clone()),
        ("type", row.kind.clone()),
        ("history_id", row.history_id.clone()),
        ("clock", row.db_clock.serialize_text()),
    ]);
    if let Some(s) = row.size {
        a.insert("size".into(), s.to_string());
    }
    if let Some(c) = &row.content_checksum {
        a.insert("checksum".into(), c.to_hex());
    }
    ForensicEvent {
        time_utc: local_to_utc(&row.db_local_time, zone),
        source,
        event_type: version_event(parse_kind(&row.kind), parse_status(&row.status)),
        path: Some(row.path.clone()),
        actor_machine: Some(row.db_client.as_str().to_string()),
        actor_ip: None,
        details: Details { raw: row.raw.clone(), attrs: a },
        origin: origin.to_string(),
        seq,
    }
}

fn raw_or(raw: &str, fallback: impl FnOnce() -> String) -> String {
    if raw.trim().is_empty() {
        fallback()
    } else {
        raw.to_string()
    }
}

/// Deterministic mapping of every record in `bundle`. Records with no
/// event-type mapping become details-only events.
pub fn normalize(bundle: &ArtifactBundle) -> Vec<ForensicEvent> {
    let zones = &bundle.timezones;
    let mut out = Vec::new();

    for folder in &bundle.sync_folders {
        let machine = folder.machine_name().map(str::to_string);
        if let Some(db) = &folder.db {
            for row in &db.records {
                out.push(row_event(row, zones.zone(Source::LocalDb), Source::LocalDb, &db.origin, row.line as u64));
            }
        }
        for log in &folder.logs {
            for e in &log.records {
                let (event_type, path) = match e.kind {
                    LogKind::DaemonRun => (Some(EventType::DaemonStarted), None),
                    LogKind::InitOperation => (Some(EventType::RepoInitialized), e.attrs.get("path").cloned()),
                    LogKind::ConnectOperation => (Some(EventType::RepoConnected), e.attrs.get("path").cloned()),
                    LogKind::AddedFileVersion => match &e.file_version {
                        Some(fv) => (version_event(parse_kind(&fv.kind), parse_status(&fv.status)), Some(fv.path.clone())),
                        None => (None, None),
                    },
                    LogKind::RemovingFolder => (Some(EventType::FolderRemoved), e.attrs.get("path").cloned()),
                    LogKind::UploadingFile => (Some(EventType::ObjectUploaded), e.attrs.get("url").cloned()),
                    LogKind::WinningVersion => (None, e.file_version.as_ref().map(|f| f.path.clone())),
                    LogKind::RecentChanges | LogKind::SettingField | LogKind::Other => (None, None),
                };
                let mut a = e.attrs.clone();
                a.insert("kind".into(), format!("{:?}", e.kind));
                a.insert("component".into(), e.component.clone());
                if !e.files.is_empty() {
                    a.insert("files".into(), e.files.join("|"));
                }
                out.push(ForensicEvent {
                    time_utc: Some(e.timestamp.with_timezone(&Utc)),
                    source: Source::SyncanyLog,
                    event_type,
                    path,
                    actor_machine: machine.clone(),
                    actor_ip: None,
                    details: Details { raw: raw_or(&e.raw, || e.message.clone()), attrs: a },
                    origin: log.origin.clone(),
                    seq: e.line as u64,
                });
            }
        }
        for (i, entry) in folder.listing.iter().enumerate() {
            let time = entry.created.or(entry.modified);
            let mut a = attrs([("is_dir", entry.is_dir.to_string()), ("size", entry.size.to_string())]);
            if let Some(m) = entry.modified {
                a.insert("modified".into(), m.to_rfc3339());
            }
            if let Some(c) = entry.created {
                a.insert("created".into(), c.to_rfc3339());
            }
            out.push(ForensicEvent {
                time_utc: time,
                source: Source::FsListing,
                event_type: None,
                path: Some(entry.path.clone()),
                actor_machine: machine.clone(),
                actor_ip: None,
                details: Details { raw: entry.path.clone(), attrs: a },
                origin: folder.path.clone(),
                seq: i as u64,
            });
        }
    }

    for log in &bundle.access_logs {
        for (i, e) in log.records.iter().enumerate() {
            let ok = (200..300).contains(&e.status_code);
            let event_type = match e.method.as_str() {
                "PUT" if ok => Some(EventType::ObjectUploaded),
                "GET" if ok => Some(EventType::ObjectDownloaded),
                _ => None,
            };
            out.push(ForensicEvent {
                time_utc: Some(e.received_at.with_timezone(&Utc)),
                source: Source::AccessLog,
                event_type,
                path: Some(e.path.clone()),
                actor_machine: None,
                actor_ip: Some(e.client_ip.clone()),
                details: Details {
                    raw: e.to_line(),
                    attrs: attrs([
                        ("method", e.method.clone()),
                        ("status", e.status_code.to_string()),
                        ("size", e.size_bytes.to_string()),
                        ("user", e.server_name.clone()),
                    ]),
                },
                origin: log.origin.clone(),
                seq: i as u64 + 1,
            });
        }
    }

    for x in &bundle.xbel {
        for (i, b) in x.records.iter().enumerate() {
            let mut a = b.attrs.clone();
            for (k, v) in [("added", b.added), ("modified", b.modified), ("visited", b.visited)] {
                if let Some(t) = v {
                    a.insert(k.into(), t.to_rfc3339());
                }
            }
            if let Some(m) = &b.mime_type {
                a.insert("mime_type".into(), m.clone());
            }
            out.push(ForensicEvent {
                time_utc: b.visited.or(b.modified).or(b.added),
                source: Source::Xbel,
                event_type: Some(EventType::FolderAccessed),
                path: b.local_path().or_else(|| Some(b.href.clone())),
                actor_machine: None,
                actor_ip: None,
                details: Details { raw: b.href.clone(), attrs: a },
                origin: x.origin.clone(),
                seq: i as u64,
            });
        }
    }

    for inst in &bundle.installs {
        for e in &inst.records {
            let mut a = e.attrs.clone();
            if let Some(p) = &e.package {
                a.insert("package".into(), p.clone());
            }
            if let Some(v) = &e.version {
                a.insert("version".into(), v.clone());
            }
            a.insert("action".into(), format!("{:?}", e.action).to_lowercase());
            out.push(ForensicEvent {
                time_utc: local_to_utc(&e.time, zones.zone(Source::DpkgLog)),
                source: Source::DpkgLog,
                event_type: (e.action == InstallAction::Install).then_some(EventType::Installed),
                path: e.package.clone(),
                actor_machine: None,
                actor_ip: None,
                details: Details { raw: e.raw.clone(), attrs: a },
                origin: inst.origin.clone(),
                seq: e.line as u64,
            });
        }
    }

    for carved in &bundle.carve_hits {
        push_carved(&mut out, carved, zones.zone(Source::Carved));
    }

    for net in &bundle.net {
        for (i, tx) in net.records.extraction.transactions.iter().enumerate() {
            let ok = tx.status.is_some_and(|s| (200..300).contains(&s));
            let event_type = match tx.method.as_str() {
                "PUT" if ok => Some(EventType::ObjectUploaded),
                "GET" if ok => Some(EventType::ObjectDownloaded),
                _ => None,
            };
            let status = tx.status.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            out.push(ForensicEvent {
                time_utc: tx.date,
                source: Source::NetCapture,
                event_type,
                path: Some(tx.path.clone()),
                actor_machine: None,
                actor_ip: None,
                details: Details {
                    raw: format!("{} {} -> {}", tx.method, tx.path, status),
                    attrs: attrs([
                        ("request_bytes", tx.request_body.len().to_string()),
                        ("response_bytes", tx.response_body.len().to_string()),
                        ("offset", tx.request_offset.to_string()),
                    ]),
                },
                origin: net.origin.clone(),
                seq: i as u64,
            });
        }
    }
    out
}

fn push_carved(out: &mut Vec<ForensicEvent>, carved: &Sourced<Vec<crate::recovery::CarveHit>>, zone: FixedOffset) {
    for hit in &carved.records {
        let strength = format!("{:?}", hit.strength).to_lowercase();
        match (&hit.kind, &hit.row) {
            (CarveKind::FileversionRow, Some(row)) => {
                let mut e = row_event(row, zone, Source::Carved, &carved.origin, hit.offset as u64);
                e.details.attrs.insert("offset".into(), hit.offset.to_string());
                e.details.attrs.insert("strength".into(), strength);
                out.push(e);
            }
            _ => {
                let raw = String::from_utf8_lossy(&hit.payload).into_owned();
                out.push(ForensicEvent {
                    time_utc: None,
                    source: Source::Carved,
                    event_type: None,
                    path: None,
                    actor_machine: None,
                    actor_ip: None,
                    details: Details {
                        raw: raw_or(&raw, || format!("{} bytes at {}", hit.length, hit.offset)),
                        attrs: attrs([
                            ("kind", format!("{:?}", hit.kind)),
                            ("offset", hit.offset.to_string()),
                            ("length", hit.length.to_string()),
                            ("strength", strength),
                        ]),
                    },
                    origin: carved.origin.clone(),
                    seq: hit.offset as u64,
                });
            }
        }
    }
}
