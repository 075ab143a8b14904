//! Apache common/combined access log lines.

use std::sync::LazyLock;

use chrono::{DateTime, FixedOffset};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ParseError;

pub const ACCESS_TIME_FORMAT: &str = "%d/%b/%Y:%H:%M:%S %z";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessLogEntry {
    pub client_ip: String,
    /// The authenticated user column, which names the repository account.
    pub server_name: String,
    pub received_at: DateTime<FixedOffset>,
    pub method: String,
    pub path: String,
    pub protocol: String,
    pub status_code: u16,
    pub size_bytes: u64,
    /// False when the size column was `-`.
    pub size_present: bool,
    pub referer: Option<String>,
    pub user_agent: Option<String>,
}

// Quotes may be straight or typographic, as in copies pasted from documents.
static LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"^(\S+) \S+ (\S+) \[([^\]]+)\] ["“”]([A-Z-]+) (\S+) ([A-Z]+/[0-9.]+)["“”] (\d{3}) (\d+|-)(?: ["“”]([^"“”]*)["“”] ["“”]([^"“”]*)["“”])?\s*$"#,
    )
    .unwrap()
});

fn dash_none(s: Option<&str>) -> Option<String> {
    s.map(str::trim).filter(|v| !v.is_empty() && *v != "-").map(str::to_string)
}

pub fn parse_access_log_line(line: &str) -> Result<AccessLogEntry, ParseError> {
    let bad = || ParseError::MalformedLogLine(line.chars().take(120).collect());
    let c = LINE.captures(line.trim_end()).ok_or_else(bad)?;
    let received_at = DateTime::parse_from_str(&c[3], ACCESS_TIME_FORMAT).map_err(|_| bad())?;
    let status_code: u16 = c[7].parse().map_err(|_| bad())?;
    if !(100..=599).contains(&status_code) {
        return Err(bad());
    }
    let (size_bytes, size_present) = match &c[8] {
        "-" => (0, false),
        n => (n.parse().map_err(|_| bad())?, true),
    };
    Ok(AccessLogEntry {
        client_ip: c[1].to_string(),
        server_name: c[2].to_string(),
        received_at,
        method: c[4].to_string(),
        path: c[5].to_string(),
        protocol: c[6].to_string(),
        status_code,
        size_bytes,
        size_present,
        referer: dash_none(c.get(9).map(|m| m.as_str())),
        user_agent: dash_none(c.get(10).map(|m| m.as_str())),
    })
}

/// Non-empty lines that fail to parse are returned with their line numbers.
pub fn parse_access_log(text: &str) -> (Vec<AccessLogEntry>, Vec<(usize, ParseError)>) {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_access_log_line(line) {
            Ok(e) => ok.push(e),
            Err(e) => bad.push((i + 1, e)),
        }
    }
    (ok, bad)
}

impl AccessLogEntry {
    /// Canonical combined-format line with straight quotes.
    pub fn to_line(&self) -> String {
        let size = if self.size_present { self.size_bytes.to_string() } else { "-".into() };
        format!(
            "{} - {} [{}] \"{} {} {}\" {} {} \"{}\" \"{}\"",
            self.client_ip,
            self.server_name,
            self.received_at.format(ACCESS_TIME_FORMAT),
            self.method,
            self.path,
            self.protocol,
            self.status_code,
            size,
            self.referer.as_deref().unwrap_or("-"),
            self.user_agent.as_deref().unwrap_or("-"),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn propfind_and_dash_size() {
        let e = parse_access_log_line(
            r#"10.0.0.2 - bob [02/Oct/2015:02:30:00 +0000] "PROPFIND /webdav/R/actions/ HTTP/1.1" 207 - "-" "Sardine/UNAVAILABLE""#,
        )
        .unwrap();
        assert_eq!(e.method, "PROPFIND");
        assert_eq!((e.size_bytes, e.size_present), (0, false));
        assert_eq!(e.referer, None);
        assert_eq!(parse_access_log_line(&e.to_line()).unwrap(), e);
    }

    #[test]
    fn common_format_without_agent() {
        let e = parse_access_log_line(r#"1.2.3.4 - - [01/Oct/2015:18:52:34 -0700] "GET / HTTP/1.0" 200 12"#).unwrap();
        assert_eq!(e.user_agent, None);
        assert_eq!(e.server_name, "-");
    }

    #[test]
    fn garbage() {
        assert!(matches!(parse_access_log_line("hello world"), Err(ParseError::MalformedLogLine(_))));
        assert!(parse_access_log_line(r#"1.2.3.4 - - [01/Oct/2015:18:52:34 -0700] "GET / HTTP/1.0" 999 12"#).is_err());
    }
}
