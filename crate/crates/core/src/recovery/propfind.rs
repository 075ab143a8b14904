//! WebDAV `multistatus` bodies, as returned by PROPFIND.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::parsers::xml::{parse_document, parse_fragment, Element};
use crate::parsers::ParseError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropfindEntry {
    pub href: String,
    pub is_collection: bool,
    pub creation: Option<DateTime<Utc>>,
    pub last_modified: Option<DateTime<Utc>>,
    pub etag: Option<String>,
    pub content_length: Option<u64>,
    /// Recovered from a body that ended before its closing tags.
    #[serde(default)]
    pub truncated: bool,
}

fn text_of(prop: &Element, name: &str) -> Option<String> {
    prop.child(name).map(|c| c.text.trim().to_string()).filter(|t| !t.is_empty())
}

/// Accepts RFC 3339 as well as the RFC 1123 form servers use for
/// `getlastmodified`.
fn parse_time(text: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(text)
        .or_else(|_| DateTime::parse_from_rfc2822(text))
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

/// Truncated bodies are accepted when at least one response survives.
pub fn extract_propfind(body: &str) -> Result<Vec<PropfindEntry>, ParseError> {
    let body = body.trim_start_matches('\u{feff}');
    match parse_document(body) {
        Ok(root) => entries(&root, false),
        Err(err) => match parse_fragment(body).and_then(|root| entries(&root, true)) {
            Ok(found) if !found.is_empty() => Ok(found),
            _ => Err(err),
        },
    }
}

fn entries(root: &Element, truncated: bool) -> Result<Vec<PropfindEntry>, ParseError> {
    let mut responses = Vec::new();
    root.find_all("response", &mut responses);
    responses
        .into_iter()
        .map(|resp| {
            let href = resp
                .child("href")
                .map(|h| h.text.trim().to_string())
                .filter(|h| !h.is_empty())
                .ok_or_else(|| ParseError::MissingRequiredTag("href".into()))?;
            // Prefer the propstat reporting 200; fall back to the first prop.
            let propstats: Vec<&Element> = resp.children_named("propstat").collect();
            let ok = propstats
                .iter()
                .find(|ps| ps.child("status").is_some_and(|s| s.text.contains(" 200 ")))
                .or(propstats.first())
                .and_then(|ps| ps.child("prop"));
            let mut props = Vec::new();
            resp.find_all("prop", &mut props);
            let prop = ok.or(props.first().copied());
            let Some(prop) = prop else {
                return Ok(PropfindEntry {
                    href,
                    is_collection: false,
                    creation: None,
                    last_modified: None,
                    etag: None,
                    content_length: None,
                    truncated,
                });
            };
            let is_collection = prop.child("resourcetype").is_some_and(|rt| rt.child("collection").is_some());
            Ok(PropfindEntry {
                href,
                is_collection,
                creation: text_of(prop, "creationdate").as_deref().and_then(parse_time),
                last_modified: text_of(prop, "getlastmodified").as_deref().and_then(parse_time),
                etag: text_of(prop, "getetag"),
                content_length: text_of(prop, "getcontentlength").and_then(|v| v.parse().ok()),
                truncated,
            })
        })
        .collect()
}
