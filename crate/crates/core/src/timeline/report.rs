//! Timeline renderings. None of them carry the time of the run.

use std::fmt::Write as _;

use super::correlate::CorrelationMap;
use super::order::Timeline;
use super::ForensicEvent;

pub const CSV_HEADER: [&str; 6] = ["Source", "KeyDateUTC", "EventType", "Path", "Actor", "Comment"];
const COMMENT_LIMIT: usize = 160;

fn key_date(e: &ForensicEvent) -> String {
    e.time_utc.map(|t| t.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string()).unwrap_or_default()
}

fn comment(e: &ForensicEvent) -> String {
    let raw = e.details.raw.replace(['\r', '\n'], " ");
    if raw.chars().count() <= COMMENT_LIMIT {
        raw
    } else {
        raw.chars().take(COMMENT_LIMIT).collect::<String>() + "..."
    }
}

pub fn to_csv(timeline: &Timeline) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for e in timeline.iter() {
        w.write_record([
            e.source.as_str(),
            &key_date(e),
            e.event_type.map(|t| t.as_str()).unwrap_or(""),
            e.path.as_deref().unwrap_or(""),
            e.actor().unwrap_or(""),
            &comment(e),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of UTF-8 fields")
}

pub fn to_jsonl(timeline: &Timeline) -> String {
    timeline.iter().map(|e| serde_json::to_string(e).expect("events serialize") + "\n").collect()
}

pub fn to_text(timeline: &Timeline, correlation: &CorrelationMap) -> String {
    let mut out = String::new();
    let typed = timeline.dated.iter().filter(|e| e.event_type.is_some()).count();
    let _ = writeln!(out, "Timeline: {} dated events ({typed} typed), {} undated", timeline.dated.len(), timeline.undated.len());
    let _ = writeln!(out);
    for e in &timeline.dated {
        let _ = writeln!(
            out,
            "{}  {:<10}  {:<16}  {:<24}  {}",
            key_date(e),
            e.source.as_str(),
            e.event_type.map(|t| t.as_str()).unwrap_or("-"),
            e.actor().unwrap_or("-"),
            e.path.as_deref().unwrap_or("-"),
        );
    }
    if !timeline.undated.is_empty() {
        let _ = writeln!(out, "\nUndated records");
        for e in &timeline.undated {
            let _ = writeln!(out, "{}  {}#{}  {}", e.source.as_str(), e.origin, e.seq, comment(e));
        }
    }
    let _ = writeln!(out, "\nCorrelation");
    for l in &correlation.display_links {
        let _ = writeln!(out, "machine {} is display name {}", l.machine, l.display_name);
    }
    for l in &correlation.repo_links {
        let _ = writeln!(out, "machine {} syncs {} with {}", l.machine, l.folder, l.url);
    }
    for l in &correlation.ip_links {
        let _ = writeln!(out, "machine {} likely at {} (inferred, closest {} ms)", l.machine, l.ip, l.min_delta_ms);
    }
    out
}
