//! HTTP/1.x message framing over reassembled byte streams.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StartLine {
    Request { method: String, target: String, version: String },
    Response { version: String, status: u16, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpMessage {
    pub start: StartLine,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
    /// Byte offset of the start line in the stream.
    pub offset: usize,
}

impl HttpMessage {
    pub fn header(&self, name: &str) -> Option<&str> {
        header(&self.headers, name)
    }

    pub fn is_request(&self) -> bool {
        matches!(self.start, StartLine::Request { .. })
    }
}

pub fn header<'a>(headers: &'a [(String, String)], name: &str) -> Option<&'a str> {
    headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(name))
        .map(|(_, v)| v.as_str())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FramingError {
    /// The stream ends inside a message.
    Incomplete(&'static str),
    /// The bytes at this position are not an HTTP start line.
    NotHttp,
    Malformed(String),
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_uppercase() || b == b'-' || b == b'_')
}

pub fn parse_start_line(line: &str) -> Option<StartLine> {
    let mut parts = line.splitn(3, ' ');
    let first = parts.next()?;
    let second = parts.next()?;
    let third = parts.next().unwrap_or("");
    if first.starts_with("HTTP/") {
        let status: u16 = second.parse().ok()?;
        if !(100..=599).contains(&status) {
            return None;
        }
        return Some(StartLine::Response {
            version: first.to_string(),
            status,
            reason: third.to_string(),
        });
    }
    if is_token(first) && third.starts_with("HTTP/") && !second.is_empty() {
        return Some(StartLine::Request {
            method: first.to_string(),
            target: second.to_string(),
            version: third.to_string(),
        });
    }
    None
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    memchr::memmem::find(buf, b"\r\n\r\n").map(|i| i + 4)
}

fn decode_chunked(buf: &[u8]) -> Result<(Vec<u8>, usize), FramingError> {
    let mut body = Vec::new();
    let mut pos = 0;
    loop {
        let rel = memchr::memmem::find(&buf[pos..], b"\r\n").ok_or(FramingError::Incomplete("chunk size"))?;
        let line = std::str::from_utf8(&buf[pos..pos + rel]).map_err(|_| FramingError::Malformed("chunk size".into()))?;
        let size_text = line.split(';').next().unwrap_or("").trim();
        let size = usize::from_str_radix(size_text, 16).map_err(|_| FramingError::Malformed(format!("chunk size {size_text:?}")))?;
        pos += rel + 2;
        if size == 0 {
            // Optional trailers end with an empty line.
            loop {
                let rel = memchr::memmem::find(&buf[pos..], b"\r\n").ok_or(FramingError::Incomplete("chunk trailer"))?;
                pos += rel + 2;
                if rel == 0 {
                    return Ok((body, pos));
                }
            }
        }
        if buf.len() < pos + size + 2 {
            return Err(FramingError::Incomplete("chunk data"));
        }
        body.extend_from_slice(&buf[pos..pos + size]);
        pos += size + 2;
    }
}

/// Reads one message starting at `pos`. `head_request` marks a response to a
/// HEAD request, which never has a body. Returns the message and the offset
/// just past it.
pub fn read_message(stream: &[u8], pos: usize, head_request: bool) -> Result<(HttpMessage, usize), FramingError> {
    let buf = &stream[pos..];
    let line_end = memchr::memmem::find(buf, b"\r\n");
    let first_line = match line_end {
        Some(e) => &buf[..e],
        None => buf,
    };
    let start = std::str::from_utf8(first_line)
        .ok()
        .and_then(parse_start_line)
        .ok_or(FramingError::NotHttp)?;
    let head_end = find_header_end(buf).ok_or(FramingError::Incomplete("headers"))?;
    let head = std::str::from_utf8(&buf[..head_end]).map_err(|_| FramingError::Malformed("non-UTF-8 headers".into()))?;
    let mut headers = Vec::new();
    for line in head.split("\r\n").skip(1).filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once(':')
            .ok_or_else(|| FramingError::Malformed(format!("header line {line:?}")))?;
        headers.push((k.trim().to_string(), v.trim().to_string()));
    }
    let rest = &buf[head_end..];
    let no_body = match &start {
        StartLine::Response { status, .. } => head_request || *status < 200 || *status == 204 || *status == 304,
        StartLine::Request { .. } => false,
    };
    let chunked = header(&headers, "Transfer-Encoding").is_some_and(|v| v.to_ascii_lowercase().contains("chunked"));
    let (body, used) = if no_body {
        (Vec::new(), 0)
    } else if chunked {
        decode_chunked(rest)?
    } else if let Some(cl) = header(&headers, "Content-Length") {
        let n: usize = cl.parse().map_err(|_| FramingError::Malformed(format!("Content-Length {cl:?}")))?;
        if rest.len() < n {
            return Err(FramingError::Incomplete("body"));
        }
        (rest[..n].to_vec(), n)
    } else if matches!(start, StartLine::Request { .. }) {
        (Vec::new(), 0)
    } else {
        // Response delimited by connection close.
        (rest.to_vec(), rest.len())
    };
    Ok((HttpMessage { start, headers, body, offset: pos }, pos + head_end + used))
}

/// Serializes a message with an explicit Content-Length.
pub fn write_message(start: &StartLine, headers: &[(String, String)], body: &[u8]) -> Vec<u8> {
    let mut out = match start {
        StartLine::Request { method, target, version } => format!("{method} {target} {version}\r\n"),
        StartLine::Response { version, status, reason } => format!("{version} {status} {reason}\r\n"),
    };
    for (k, v) in headers {
        if k.eq_ignore_ascii_case("Content-Length") || k.eq_ignore_ascii_case("Transfer-Encoding") {
            continue;
        }
        out.push_str(&format!("{k}: {v}\r\n"));
    }
    out.push_str(&format!("Content-Length: {}\r\n\r\n", body.len()));
    let mut bytes = out.into_bytes();
    bytes.extend_from_slice(body);
    bytes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_lines() {
        assert!(matches!(
            parse_start_line("PROPFIND /webdav/MacRepo/actions/ HTTP/1.1"),
            Some(StartLine::Request { ref method, .. }) if method == "PROPFIND"
        ));
        assert!(matches!(parse_start_line("HTTP/1.1 207 Multi-Status"), Some(StartLine::Response { status: 207, .. })));
        assert_eq!(parse_start_line("hello world"), None);
        assert_eq!(parse_start_line("get / HTTP/1.1"), None);
    }

    #[test]
    fn chunked_body() {
        let raw = b"HTTP/1.1 200 OK\r\nTransfer-Encoding: chunked\r\n\r\n3\r\nabc\r\n2;x=y\r\nde\r\n0\r\n\r\nGET";
        let (m, end) = read_message(raw, 0, false).unwrap();
        assert_eq!(m.body, b"abcde");
        assert_eq!(&raw[end..], b"GET");
    }

    #[test]
    fn write_then_read() {
        let start = StartLine::Request { method: "PUT".into(), target: "/a".into(), version: "HTTP/1.1".into() };
        let bytes = write_message(&start, &[("Host".into(), "x".into())], b"12345");
        let (m, end) = read_message(&bytes, 0, false).unwrap();
        assert_eq!(end, bytes.len());
        assert_eq!(m.body, b"12345");
        assert_eq!(m.header("host"), Some("x"));
    }

    #[test]
    fn short_body_is_incomplete() {
        let raw = b"PUT /m HTTP/1.1\r\nContent-Length: 10\r\n\r\nabc";
        assert_eq!(read_message(raw, 0, false), Err(FramingError::Incomplete("body")));
    }
}
