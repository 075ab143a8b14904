//! Package installation traces in dpkg and syslog lines.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstallAction {
    Install,
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstallSource {
    Dpkg,
    Syslog,
}

/// Times are wall-clock values in the host's local zone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstallEvent {
    pub time: NaiveDateTime,
    pub action: InstallAction,
    pub package: Option<String>,
    pub version: Option<String>,
    pub source: InstallSource,
    pub attrs: BTreeMap<String, String>,
    pub line: usize,
    pub raw: String,
}

static DPKG: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2}) (install|remove|purge) (\S+) (\S+) (\S+)\s*$").unwrap()
});

static SYSLOG: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^([A-Z][a-z]{2})\s+(\d{1,2}) (\d{2}:\d{2}:\d{2}) (\S+) AptDaemon(?:\.\w+)?: \w+: (Installing|Removing) local package file: (.+?)\s*$",
    )
    .unwrap()
});

fn month(abbr: &str) -> Option<u32> {
    const MONTHS: [&str; 12] = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];
    MONTHS.iter().position(|m| *m == abbr).map(|i| i as u32 + 1)
}

/// time, action, package, version, source, extra attributes
type Recognized = (NaiveDateTime, InstallAction, Option<String>, Option<String>, InstallSource, BTreeMap<String, String>);

fn recognize(line: &str, year_hint: i32) -> Option<Recognized> {
    if let Some(c) = DPKG.captures(line) {
        let time = NaiveDateTime::parse_from_str(&c[1], "%Y-%m-%d %H:%M:%S").ok()?;
        let action = if &c[2] == "install" { InstallAction::Install } else { InstallAction::Remove };
        let mut attrs = BTreeMap::new();
        let (package, arch) = match c[3].split_once(':') {
            Some((p, a)) => (p.to_string(), Some(a.to_string())),
            None => (c[3].to_string(), None),
        };
        if let Some(arch) = arch {
            attrs.insert("arch".into(), arch);
        }
        attrs.insert("old_version".into(), c[4].to_string());
        let version = match action {
            InstallAction::Install => &c[5],
            InstallAction::Remove => &c[4],
        };
        let version = (version != "<none>").then(|| version.to_string());
        return Some((time, action, Some(package), version, InstallSource::Dpkg, attrs));
    }
    let c = SYSLOG.captures(line)?;
    let date = NaiveDate::from_ymd_opt(year_hint, month(&c[1])?, c[2].parse().ok()?)?;
    let time = date.and_time(NaiveTime::parse_from_str(&c[3], "%H:%M:%S").ok()?);
    let action = if &c[5] == "Installing" { InstallAction::Install } else { InstallAction::Remove };
    let mut attrs = BTreeMap::new();
    attrs.insert("host".into(), c[4].to_string());
    attrs.insert("path".into(), c[6].to_string());
    Some((time, action, None, None, InstallSource::Syslog, attrs))
}

/// Syslog lines carry no year; `year_hint` supplies it.
pub fn recognize_install_lines<'a, I>(lines: I, year_hint: i32) -> Vec<InstallEvent>
where
    I: IntoIterator<Item = &'a str>,
{
    lines
        .into_iter()
        .enumerate()
        .filter_map(|(i, line)| {
            let (time, action, package, version, source, attrs) = recognize(line.trim(), year_hint)?;
            Some(InstallEvent { time, action, package, version, source, attrs, line: i + 1, raw: line.to_string() })
        })
        .collect()
}
