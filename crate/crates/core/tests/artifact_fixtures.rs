//! Real-world artifact excerpts must parse to exactly these field values.

use std::fs;
use std::path::PathBuf;

use chrono::{DateTime, FixedOffset, NaiveDate, TimeZone, Utc};
use syncforensics::model::MachineName;
use syncforensics::parsers::{parse_access_log, parse_local_db, parse_log_text, parse_xbel, LogKind};
use syncforensics::recovery::extract_propfind;
use syncforensics::timeline::{build_timeline, correlate, extract_bundle, normalize, EventType, Source, ZoneMap};

fn fixture(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    fs::read_to_string(p).unwrap()
}

fn utc(s: &str) -> DateTime<Utc> {
    DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
}

fn pdt() -> FixedOffset {
    FixedOffset::west_opt(7 * 3600).unwrap()
}

#[test]
fn fileversion_rows() {
    let rows = parse_local_db(&fixture("fileversion_full.tsv")).unwrap();
    assert_eq!(rows.len(), 17);

    let first = &rows[0];
    assert_eq!(first.db_status, "MASTER");
    assert_eq!(first.path, ".sygnore");
    assert_eq!(first.version, 1);
    assert_eq!(first.status, "NEW");
    assert_eq!(first.kind, "FILE");
    assert_eq!(first.db_client.as_str(), "UYCrwWXGKvboYKZBGc");
    assert_eq!(first.db_local_time, NaiveDate::from_ymd_opt(2015, 10, 1).unwrap().and_hms_opt(18, 52, 38).unwrap());
    assert_eq!(first.db_clock.to_string(), "(UYCrwWXGKvboYKZBGc1)");
    assert_eq!(first.history_id, "8509cfe7c5b1f82e3050aade57c8f0745de5c6");
    assert_eq!(first.db_id, 0);

    let txt = rows.iter().find(|r| r.path == "Enron3111.txt").unwrap();
    assert_eq!(txt.db_local_time.to_string(), "2015-10-01 19:26:14");
    assert_eq!(txt.history_id, "9bec78b6de240d0f15e7469e72b77c6bf163bd55");

    let peer = rows.iter().find(|r| r.path == "2WindowsToUbuntu").unwrap();
    assert_eq!(peer.kind, "FOLDER");
    assert_eq!(peer.db_client.as_str(), "PqPKcl.WzmjHZVslgNo");
    assert_eq!(peer.db_clock.to_string(), "(PqPKcl.WzmjHZVslgNo1,UYCrwWXGKvboYKZBGc2)");
    let a = MachineName::parse_lenient("PqPKcl.WzmjHZVslgNo").unwrap();
    let b = MachineName::parse_lenient("UYCrwWXGKvboYKZBGc").unwrap();
    assert_eq!((peer.db_clock.get(&a), peer.db_clock.get(&b)), (1, 2));

    let deleted: Vec<_> = rows.iter().filter(|r| r.status == "DELETED").collect();
    assert_eq!(deleted.len(), 3);
    let del_txt = deleted.iter().find(|r| r.path == "3WindowsToUbuntu/Enron3111.txt").unwrap();
    assert_eq!((del_txt.version, del_txt.db_id), (2, 2));
    assert_eq!(del_txt.db_clock.to_string(), "(UYCrwWXGKvboYKZBGc3)");
    assert_eq!(del_txt.db_local_time.to_string(), "2015-10-01 19:48:32");
}

#[test]
fn syncany_log_entries() {
    let events = parse_log_text(&fixture("syncany.log"), pdt());
    let kinds: Vec<LogKind> = events.iter().map(|e| e.kind).collect();
    assert_eq!(
        kinds,
        [
            LogKind::SettingField,
            LogKind::InitOperation,
            LogKind::UploadingFile,
            LogKind::ConnectOperation,
            LogKind::AddedFileVersion,
            LogKind::WinningVersion,
            LogKind::RemovingFolder,
            LogKind::RecentChanges,
        ]
    );
    let attr = |i: usize, k: &str| events[i].attrs.get(k).map(String::as_str);

    assert_eq!(events[0].timestamp, pdt().with_ymd_and_hms(2015, 10, 1, 18, 52, 20).unwrap() + chrono::Duration::milliseconds(274));
    assert_eq!((events[0].component.as_str(), events[0].thread.as_str(), events[0].level.as_str()), ("PluginSettingsP", "main", "INFO"));
    assert_eq!(attr(0, "field"), Some("username"));
    assert_eq!(attr(0, "value"), Some("syncanyserver"));

    assert_eq!(attr(1, "path"), Some("/home/suspectpc/SyncanyUbuntuClient"));
    assert_eq!(events[1].level, "SEVE");

    assert_eq!(attr(2, "protocol"), Some("WebDAV"));
    assert_eq!(attr(2, "path"), Some("/home/suspectpc/SyncanyUbuntuClient/.syncany/master"));
    assert_eq!(attr(2, "url"), Some("http://172.16.38.180/webdav/UbuntuRepo/master"));
    assert_eq!(events[2].timestamp.with_timezone(&Utc), utc("2015-10-02T01:52:34.807Z"));

    assert_eq!(attr(3, "path"), Some("/home/suspectpc/SyncanyWindowsDownloadToUbuntu"));

    let fv = events[4].file_version.as_ref().unwrap();
    assert_eq!((fv.version, fv.path.as_str(), fv.kind.as_str(), fv.status.as_str()), (1, "Enron3111.zip", "FILE", "NEW"));
    assert_eq!(fv.size, Some(30967));
    assert_eq!(fv.checksum.unwrap().to_string(), "75a666ba87fef0f8425a71edcd621d0a4367aa47");
    assert_eq!(fv.last_modified.unwrap().with_timezone(&Utc), utc("2014-12-13T16:35:00Z"));
    assert_eq!(fv.updated.unwrap().with_timezone(&Utc), utc("2015-10-02T02:26:14Z"));
    assert_eq!(fv.posix_permissions.as_deref(), Some("rw-r--r--"));
    assert_eq!(fv.dos_attributes.as_deref(), Some("-a-"));
    assert_eq!(attr(4, "linkTarget"), Some("null"));

    let folder = events[5].file_version.as_ref().unwrap();
    assert_eq!((folder.path.as_str(), folder.kind.as_str(), folder.size), ("WindowsToUbuntu", "FOLDER", Some(4096)));
    assert_eq!(folder.checksum, None);
    assert_eq!(folder.posix_permissions.as_deref(), Some("rwxr-xr-x"));

    assert_eq!(attr(6, "path"), Some("/home/UbuntuPc/SyncanyUbuntuClient"));
    assert_eq!(
        events[7].files,
        [
            "/home/suspectpc/SyncanyUbuntuClient/Enron3111.zip",
            "/home/suspectpc/SyncanyUbuntuClient/Enron3111.txt",
            "/home/suspectpc/SyncanyUbuntuClient/Enron3111.rtf",
        ]
    );
}

#[test]
fn recently_used_bookmarks() {
    let marks = parse_xbel(&fixture("recently-used.xbel")).unwrap();
    assert_eq!(marks.len(), 2);
    assert_eq!(marks[0].href, "file:///home/suspectpc/SyncanyUbuntuClient");
    assert_eq!(marks[0].visited, Some(utc("2015-10-02T01:51:56Z")));
    assert_eq!(marks[0].modified, Some(utc("2015-10-02T03:16:17Z")));
    assert_eq!(marks[0].added, Some(utc("2015-10-02T01:51:56Z")));
    assert_eq!(marks[0].mime_type.as_deref(), Some("inode/directory"));
    assert!(marks[0].applications.is_empty());

    let b = &marks[1];
    assert_eq!(b.href, "file:///home/suspectpc/SyncanyMacDownloadToUbuntu");
    assert_eq!(b.local_path().as_deref(), Some("/home/suspectpc/SyncanyMacDownloadToUbuntu"));
    assert_eq!(b.visited, Some(utc("2015-10-02T02:32:15Z")));
    assert_eq!(b.modified, Some(utc("2015-10-02T02:32:14Z")));
    assert_eq!(b.added, Some(utc("2015-10-02T02:32:14Z")));
    assert_eq!(b.applications.len(), 1);
    assert_eq!(b.applications[0].name, "Syncany");
    assert_eq!(b.applications[0].count, 1);
    assert_eq!(b.applications[0].modified, Some(utc("2015-10-02T02:32:14Z")));
}

#[test]
fn propfind_excerpt() {
    let entries = extract_propfind(&fixture("propfind_actions.xml")).unwrap();
    assert_eq!(entries.len(), 1);
    let e = &entries[0];
    assert_eq!(e.href, "/webdav/MacRepo/actions/");
    assert!(e.is_collection);
    assert_eq!(e.creation, Some(utc("2015-09-29T15:47:30Z")));
    assert_eq!(e.last_modified, Some(utc("2015-09-29T15:47:30Z")));
    assert_eq!(e.etag.as_deref(), Some("\"1000-520e4bb450e3a\""));
    assert!(e.truncated);
}

#[test]
fn apache_access_line() {
    let (entries, errors) = parse_access_log(&fixture("access.log"));
    assert!(errors.is_empty(), "{errors:?}");
    assert_eq!(entries.len(), 2);
    assert_eq!(entries[0], entries[1], "typographic and straight quotes parse alike");
    let e = &entries[0];
    assert_eq!(e.client_ip, "172.16.38.132");
    assert_eq!(e.server_name, "syncanyserver");
    assert_eq!(e.received_at, pdt().with_ymd_and_hms(2015, 10, 1, 18, 52, 34).unwrap());
    assert_eq!((e.method.as_str(), e.path.as_str(), e.protocol.as_str()), ("PUT", "/webdav/UbuntuRepo/master", "HTTP/1.1"));
    assert_eq!((e.status_code, e.size_bytes), (201, 480));
    assert_eq!(e.referer, None);
    assert_eq!(e.user_agent.as_deref(), Some("Sardine/UNAVAILABLE"));
}

/// The fixtures laid out as evidence: the master upload in the client log
/// and the server's PUT agree to the second, which links machine and IP.
#[test]
fn fixtures_as_evidence() {
    let tmp = tempfile::tempdir().unwrap();
    let folder = tmp.path().join("home/suspectpc/SyncanyUbuntuClient");
    let meta = folder.join(".syncany");
    fs::create_dir_all(meta.join("logs")).unwrap();
    fs::create_dir_all(meta.join("db")).unwrap();
    fs::write(meta.join("logs/syncany.log"), fixture("syncany.log")).unwrap();
    fs::write(meta.join("db/local.db"), fixture("fileversion_full.tsv")).unwrap();
    fs::write(
        meta.join("config.xml"),
        "<config><machineName>UYCrwWXGKvboYKZBGc</machineName><displayName>suspectpc</displayName>\
         <connection type=\"webdav\"><url>http://172.16.38.180/webdav/UbuntuRepo</url></connection></config>",
    )
    .unwrap();
    fs::write(tmp.path().join("access.log"), fixture("access.log")).unwrap();

    let mut zones = ZoneMap::default();
    zones.set(Source::SyncanyLog, "-0700").unwrap();
    zones.set(Source::LocalDb, "-0700").unwrap();
    let out = extract_bundle(&[tmp.path().to_path_buf()], zones);
    assert!(out.bundle.errors.is_empty(), "{:?}", out.bundle.errors);

    let map = correlate(&out.bundle, 5);
    assert_eq!(map.machines_for_ip("172.16.38.132"), ["UYCrwWXGKvboYKZBGc"]);
    let link = &map.ip_links[0];
    assert!(link.inferred);
    assert_eq!(link.min_delta_ms, 807);

    let timeline = build_timeline(normalize(&out.bundle));
    let added = timeline
        .iter()
        .find(|e| e.source == Source::LocalDb && e.path.as_deref() == Some("Enron3111.txt"))
        .unwrap();
    assert_eq!(added.event_type, Some(EventType::FileAdded));
    assert_eq!(added.actor_machine.as_deref(), Some("UYCrwWXGKvboYKZBGc"));
    assert_eq!(added.time_utc, Some(utc("2015-10-02T02:26:14Z")));
    let deleted = timeline
        .iter()
        .filter(|e| e.event_type == Some(EventType::FileDeleted))
        .count();
    assert_eq!(deleted, 3);
}

/// One file's life across package log, client log and database, in the
/// order an examiner reads it.
#[test]
fn single_file_story_orders_across_sources() {
    let tmp = tempfile::tempdir().unwrap();
    let meta = tmp.path().join("home/suspectpc/SyncanyUbuntuClient/.syncany");
    fs::create_dir_all(meta.join("logs")).unwrap();
    fs::create_dir_all(meta.join("db")).unwrap();
    fs::write(meta.join("logs/syncany.log"), fixture("timeline_sources.log")).unwrap();
    fs::write(meta.join("db/local.db"), fixture("fileversion_full.tsv")).unwrap();
    fs::create_dir_all(tmp.path().join("var/log")).unwrap();
    fs::write(tmp.path().join("var/log/dpkg.log"), fixture("dpkg.log")).unwrap();

    let mut zones = ZoneMap::default();
    for s in [Source::SyncanyLog, Source::LocalDb, Source::DpkgLog] {
        zones.set(s, "-0700").unwrap();
    }
    let out = extract_bundle(&[tmp.path().to_path_buf()], zones);
    assert!(out.bundle.errors.is_empty(), "{:?}", out.bundle.errors);
    let timeline = build_timeline(normalize(&out.bundle));

    let story: Vec<(EventType, Option<&str>, DateTime<Utc>)> = timeline
        .iter()
        .filter_map(|e| {
            let t = e.event_type?;
            let keep = match t {
                EventType::Installed | EventType::DaemonStarted | EventType::RepoInitialized => true,
                EventType::FileAdded | EventType::FileDeleted => {
                    e.source == Source::LocalDb && e.path.as_deref().is_some_and(|p| p.ends_with("Enron3111.txt"))
                }
                _ => false,
            };
            keep.then(|| (t, e.path.as_deref(), e.time_utc.unwrap()))
        })
        .collect();
    assert_eq!(
        story,
        [
            (EventType::Installed, Some("syncany"), utc("2015-10-02T01:32:39Z")),
            (EventType::DaemonStarted, None, utc("2015-10-02T01:34:12.064Z")),
            (EventType::RepoInitialized, Some("/home/suspectpc/SyncanyUbuntuClient"), utc("2015-10-02T01:52:27.196Z")),
            (EventType::FileAdded, Some("Enron3111.txt"), utc("2015-10-02T02:26:14Z")),
            (EventType::FileAdded, Some("2WindowsToUbuntu/Enron3111.txt"), utc("2015-10-02T02:42:10Z")),
            (EventType::FileDeleted, Some("3WindowsToUbuntu/Enron3111.txt"), utc("2015-10-02T02:48:32Z")),
        ]
    );
}
