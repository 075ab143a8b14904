//! GNOME `recently-used.xbel` bookmarks.

use std::collections::BTreeMap;

use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::xml::{parse_document, Element};
use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XbelApplication {
    pub name: String,
    pub count: u32,
    pub modified: Option<DateTime<Utc>>,
    pub exec: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XbelBookmark {
    pub href: String,
    pub visited: Option<DateTime<Utc>>,
    pub modified: Option<DateTime<Utc>>,
    pub added: Option<DateTime<Utc>>,
    pub mime_type: Option<String>,
    pub applications: Vec<XbelApplication>,
    /// Observations the parser records without judging, e.g. `anomaly`.
    pub attrs: BTreeMap<String, String>,
}

impl XbelBookmark {
    /// Local filesystem path of a `file://` href, percent-decoded.
    pub fn local_path(&self) -> Option<String> {
        let rest = self.href.strip_prefix("file://")?;
        Some(percent_encoding::percent_decode_str(rest).decode_utf8_lossy().into_owned())
    }
}

fn timestamp(el: &Element, name: &str) -> Result<Option<DateTime<Utc>>, ParseError> {
    el.attr(name)
        .map(|v| {
            DateTime::parse_from_rfc3339(v)
                .map(|t| t.with_timezone(&Utc))
                .map_err(|_| ParseError::InvalidValue { line: 0, column: name.to_string(), value: v.to_string() })
        })
        .transpose()
}

/// Well-formed files are parsed as XML. Otherwise the bookmark and
/// application tags are scanned directly, which recovers copies rendered
/// by XML viewers or cut out of larger blobs; such bookmarks carry
/// `recovered=scan`. The XML error stands if the scan finds nothing.
pub fn parse_xbel(text: &str) -> Result<Vec<XbelBookmark>, ParseError> {
    match parse_document(text) {
        Ok(root) => from_tree(&root),
        Err(err) => match scan_tags(text) {
            Ok(found) if !found.is_empty() => Ok(found),
            _ => Err(err),
        },
    }
}

static TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"<(bookmark|bookmark:application|mime:mime-type)\s([^<>]*)>").unwrap());
static ATTR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"([A-Za-z][\w:-]*)="([^"]*)""#).unwrap());

fn scan_tags(text: &str) -> Result<Vec<XbelBookmark>, ParseError> {
    let mut out: Vec<XbelBookmark> = Vec::new();
    for tag in TAG.captures_iter(text) {
        let el = Element {
            name: tag[1].rsplit(':').next().unwrap_or_default().to_string(),
            attrs: ATTR
                .captures_iter(&tag[2])
                .map(|a| (a[1].to_string(), a[2].to_string()))
                .collect(),
            ..Element::default()
        };
        match &tag[1] {
            "bookmark" => {
                let mut b = bookmark(&el)?;
                b.attrs.insert("recovered".into(), "scan".into());
                out.push(b);
            }
            "bookmark:application" => {
                if let Some(b) = out.last_mut() {
                    b.applications.push(application(&el)?);
                }
            }
            _ => {
                if let Some(b) = out.last_mut() {
                    b.mime_type = el.attr("type").map(str::to_string);
                }
            }
        }
    }
    Ok(out)
}

fn application(a: &Element) -> Result<XbelApplication, ParseError> {
    let count = match a.attr("count") {
        None => 0,
        Some(c) => c.trim().parse().map_err(|_| ParseError::InvalidValue {
            line: 0,
            column: "count".into(),
            value: c.to_string(),
        })?,
    };
    Ok(XbelApplication {
        name: a.attr("name").ok_or_else(|| ParseError::MissingRequiredTag("name".into()))?.to_string(),
        count,
        modified: timestamp(a, "modified")?,
        exec: a.attr("exec").map(str::to_string),
    })
}

/// The bookmark's own attributes; applications and mime type are added by
/// the caller.
fn bookmark(b: &Element) -> Result<XbelBookmark, ParseError> {
    let href = b
        .attr("href")
        .ok_or_else(|| ParseError::MissingRequiredTag("href".into()))?
        .to_string();
    let visited = timestamp(b, "visited")?;
    let added = timestamp(b, "added")?;
    let mut attrs = BTreeMap::new();
    if let (Some(v), Some(a)) = (visited, added) {
        if v < a {
            attrs.insert("anomaly".to_string(), "true".to_string());
        }
    }
    Ok(XbelBookmark {
        href,
        visited,
        modified: timestamp(b, "modified")?,
        added,
        mime_type: None,
        applications: Vec::new(),
        attrs,
    })
}

fn from_tree(root: &Element) -> Result<Vec<XbelBookmark>, ParseError> {
    let mut found = Vec::new();
    root.find_all("bookmark", &mut found);
    found
        .into_iter()
        .map(|b| {
            let mut out = bookmark(b)?;
            let mut mime = Vec::new();
            b.find_all("mime-type", &mut mime);
            out.mime_type = mime.first().and_then(|m| m.attr("type")).map(str::to_string);
            let mut apps = Vec::new();
            b.find_all("application", &mut apps);
            out.applications = apps.into_iter().map(application).collect::<Result<_, _>>()?;
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bookmark_without_applications() {
        let doc = r#"<xbel version="1.0"><bookmark href="file:///tmp/a%20b" added="2015-10-02T01:51:56Z" visited="2015-10-02T01:51:56Z"/></xbel>"#;
        let b = parse_xbel(doc).unwrap();
        assert_eq!(b.len(), 1);
        assert!(b[0].applications.is_empty());
        assert!(b[0].modified.is_none());
        assert_eq!(b[0].local_path().as_deref(), Some("/tmp/a b"));
        assert!(b[0].attrs.is_empty());
    }

    #[test]
    fn visited_before_added_is_flagged() {
        let doc = r#"<xbel><bookmark href="file:///x" added="2015-10-02T02:00:00Z" visited="2015-10-02T01:00:00Z"/></xbel>"#;
        let b = parse_xbel(doc).unwrap();
        assert_eq!(b[0].attrs.get("anomaly").map(String::as_str), Some("true"));
    }

    #[test]
    fn malformed() {
        assert!(matches!(parse_xbel("<xbel><bookmark>"), Err(ParseError::MalformedXml(_))));
    }
}
