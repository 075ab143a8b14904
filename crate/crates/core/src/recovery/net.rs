//! Request/response pairing over reassembled HTTP byte streams, and salt
//! recovery from `master` object transfers.

use std::collections::VecDeque;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::http::{read_message, FramingError, HttpMessage, StartLine};
use crate::engine::MasterFile;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpTransaction {
    pub method: String,
    pub path: String,
    /// Absent when the stream ends before the response.
    pub status: Option<u16>,
    #[serde(with = "super::carve::payload_text")]
    pub request_body: Vec<u8>,
    #[serde(with = "super::carve::payload_text")]
    pub response_body: Vec<u8>,
    pub request_offset: usize,
    /// From the response `Date` header.
    pub date: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StreamError {
    TruncatedStream { offset: usize, reason: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetExtraction {
    pub transactions: Vec<HttpTransaction>,
    pub error: Option<StreamError>,
}

fn truncated(offset: usize, reason: impl Into<String>) -> Option<StreamError> {
    Some(StreamError::TruncatedStream { offset, reason: reason.into() })
}

fn framing_reason(e: FramingError) -> String {
    match e {
        FramingError::Incomplete(what) => format!("stream ends inside {what}"),
        FramingError::NotHttp => "bytes are not an HTTP start line".into(),
        FramingError::Malformed(m) => m,
    }
}

fn open_transaction(msg: HttpMessage) -> HttpTransaction {
    let StartLine::Request { method, target, .. } = msg.start else { unreachable!("requests only") };
    HttpTransaction {
        method,
        path: target,
        status: None,
        request_body: msg.body,
        response_body: Vec::new(),
        request_offset: msg.offset,
        date: None,
    }
}

fn complete(tx: &mut HttpTransaction, msg: HttpMessage) {
    tx.date = msg
        .header("Date")
        .and_then(|d| DateTime::parse_from_rfc2822(&d.replace("GMT", "+0000")).ok())
        .map(|d| d.with_timezone(&Utc));
    if let StartLine::Response { status, .. } = msg.start {
        tx.status = Some(status);
    }
    tx.response_body = msg.body;
}

/// Pairs requests with responses, in order, from a single stream holding
/// both directions interleaved as they were exchanged.
pub fn parse_http_stream(bytes: &[u8]) -> NetExtraction {
    let mut out = NetExtraction::default();
    let mut waiting: VecDeque<usize> = VecDeque::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let head = waiting.front().is_some_and(|&i| out.transactions[i].method == "HEAD");
        let (msg, next) = match read_message(bytes, pos, head) {
            Ok(m) => m,
            Err(e) => {
                out.error = truncated(pos, framing_reason(e));
                break;
            }
        };
        if msg.is_request() {
            waiting.push_back(out.transactions.len());
            out.transactions.push(open_transaction(msg));
        } else if let Some(i) = waiting.pop_front() {
            complete(&mut out.transactions[i], msg);
        } else {
            out.error = truncated(pos, "response without request");
            break;
        }
        pos = next;
    }
    if out.error.is_none() && !waiting.is_empty() {
        let first = out.transactions[waiting[0]].request_offset;
        out.error = truncated(first, format!("{} request(s) without response", waiting.len()));
    }
    out
}

/// Pairs the n-th request of `client_to_server` with the n-th response of
/// `server_to_client`.
pub fn parse_http_streams(client_to_server: &[u8], server_to_client: &[u8]) -> NetExtraction {
    let mut out = NetExtraction::default();
    let mut pos = 0;
    while pos < client_to_server.len() {
        match read_message(client_to_server, pos, false) {
            Ok((msg, next)) if msg.is_request() => {
                out.transactions.push(open_transaction(msg));
                pos = next;
            }
            Ok(_) => {
                out.error = truncated(pos, "response in request direction");
                return out;
            }
            Err(e) => {
                out.error = truncated(pos, framing_reason(e));
                break;
            }
        }
    }
    let mut pos = 0;
    let mut i = 0;
    while pos < server_to_client.len() {
        let head = out.transactions.get(i).is_some_and(|t| t.method == "HEAD");
        match read_message(server_to_client, pos, head) {
            Ok((msg, next)) if !msg.is_request() => {
                let Some(tx) = out.transactions.get_mut(i) else {
                    out.error = truncated(pos, "response without request");
                    return out;
                };
                complete(tx, msg);
                i += 1;
                pos = next;
            }
            Ok(_) => {
                out.error = truncated(pos, "request in response direction");
                return out;
            }
            Err(e) => {
                out.error.get_or_insert(StreamError::TruncatedStream { offset: pos, reason: framing_reason(e) });
                return out;
            }
        }
    }
    if out.error.is_none() && i < out.transactions.len() {
        out.error = truncated(server_to_client.len(), format!("{} request(s) without response", out.transactions.len() - i));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    Put,
    Get,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaltSighting {
    pub repo_name: String,
    /// Absent when the body does not decode as a master file.
    #[serde(with = "opt_hex")]
    pub salt: Option<Vec<u8>>,
    pub iterations: Option<u32>,
    pub direction: Direction,
    /// Index of the transaction within its extraction.
    pub when_seen: usize,
}

mod opt_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_some(&hex::encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|h| hex::decode(h).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Every transfer of a `master` object, with its salt where it decodes.
pub fn extract_master_salt(transactions: &[HttpTransaction]) -> Vec<SaltSighting> {
    transactions
        .iter()
        .enumerate()
        .filter_map(|(i, tx)| {
            let path = tx.path.split(['?', '#']).next().unwrap_or_default().trim_end_matches('/');
            let (parent, last) = path.rsplit_once('/')?;
            if last != "master" {
                return None;
            }
            let (direction, body) = match tx.method.as_str() {
                "PUT" => (Direction::Put, &tx.request_body),
                "GET" if tx.status.is_some_and(|s| (200..300).contains(&s)) => (Direction::Get, &tx.response_body),
                _ => return None,
            };
            let decoded = MasterFile::parse(body).ok();
            let repo = parent.rsplit('/').next().unwrap_or_default();
            Some(SaltSighting {
                repo_name: percent_encoding::percent_decode_str(repo).decode_utf8_lossy().into_owned(),
                iterations: decoded.as_ref().map(|m| m.iterations),
                salt: decoded.map(|m| m.salt),
                direction,
                when_seen: i,
            })
        })
        .collect()
}
