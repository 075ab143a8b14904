//! WebDAV storage: a client backend speaking plain HTTP/1.1, the transports
//! it runs over, and an in-process DAV server used for simulation. The server
//! keeps an Apache-style access log and can capture the raw wire bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use base64::Engine as _;
use chrono::{DateTime, FixedOffset, Utc};
use url::Url;

use super::backend::{BackendError, Connector, TransferBackend};
use crate::crypto::{ConnectionSettings, StorageKind};
use super::time::TimeSource;
use crate::parsers::access_log::AccessLogEntry;
use crate::parsers::xml::escape;
use crate::recovery::http::{read_message, write_message, FramingError, HttpMessage, StartLine};
use crate::recovery::propfind::extract_propfind;

pub const USER_AGENT: &str = "syncforensics-dav/0.1";

/// Carries one complete request to a server and returns its complete
/// response.
pub trait HttpTransport: Send + Sync {
    fn exchange(&self, host: &str, port: u16, request: &[u8]) -> Result<Vec<u8>, BackendError>;
}

#[derive(Debug, Clone)]
pub struct TcpTransport {
    pub timeout: Duration,
}

impl Default for TcpTransport {
    fn default() -> Self {
        TcpTransport { timeout: Duration::from_secs(30) }
    }
}

impl HttpTransport for TcpTransport {
    fn exchange(&self, host: &str, port: u16, request: &[u8]) -> Result<Vec<u8>, BackendError> {
        let unreachable = |e: std::io::Error| BackendError::Unreachable(format!("{host}:{port}: {e}"));
        let addr = (host, port)
            .to_socket_addrs()
            .map_err(unreachable)?
            .next()
            .ok_or_else(|| BackendError::Unreachable(format!("{host}:{port}: no address")))?;
        let mut stream = TcpStream::connect_timeout(&addr, self.timeout).map_err(unreachable)?;
        stream.set_read_timeout(Some(self.timeout)).map_err(unreachable)?;
        stream.write_all(request).map_err(unreachable)?;
        let mut response = Vec::new();
        stream.read_to_end(&mut response).map_err(unreachable)?;
        Ok(response)
    }
}

/// Delivers requests straight to a [`DavServer`] as if sent from `client_ip`.
#[derive(Clone)]
pub struct SimTransport {
    pub server: Arc<DavServer>,
    pub client_ip: String,
}

impl HttpTransport for SimTransport {
    fn exchange(&self, _host: &str, _port: u16, request: &[u8]) -> Result<Vec<u8>, BackendError> {
        if self.server.is_offline() {
            return Err(BackendError::Unreachable("simulated server is offline".into()));
        }
        Ok(self.server.handle(&self.client_ip, request))
    }
}

/// Opens WebDAV settings against a [`DavServer`] through [`SimTransport`].
#[derive(Clone)]
pub struct SimConnector(pub SimTransport);

impl Connector for SimConnector {
    fn open(&self, settings: &ConnectionSettings) -> Result<Arc<dyn TransferBackend>, BackendError> {
        if settings.kind != StorageKind::Webdav {
            return Err(BackendError::Unreachable(format!("{} storage is not simulated", settings.kind.as_str())));
        }
        let backend = WebDavBackend::new(
            &settings.url,
            settings.username.clone(),
            settings.password.clone(),
            Arc::new(self.0.clone()),
        )?;
        Ok(Arc::new(backend))
    }
}

pub struct WebDavBackend {
    base_url: Url,
    base_path: String,
    host: String,
    port: u16,
    authorization: Option<String>,
    transport: Arc<dyn HttpTransport>,
}

impl WebDavBackend {
    pub fn new(
        url: &str,
        username: Option<String>,
        password: Option<String>,
        transport: Arc<dyn HttpTransport>,
    ) -> Result<Self, BackendError> {
        let base_url = Url::parse(url).map_err(|e| BackendError::Unreachable(format!("bad URL {url:?}: {e}")))?;
        if base_url.scheme() != "http" {
            return Err(BackendError::Unreachable(format!("unsupported scheme {:?}", base_url.scheme())));
        }
        let host = base_url
            .host_str()
            .ok_or_else(|| BackendError::Unreachable(format!("URL {url:?} has no host")))?
            .to_string();
        let port = base_url.port_or_known_default().unwrap_or(80);
        let base_path = base_url.path().trim_end_matches('/').to_string();
        let authorization = username.map(|u| {
            let creds = format!("{u}:{}", password.unwrap_or_default());
            format!("Basic {}", base64::engine::general_purpose::STANDARD.encode(creds))
        });
        Ok(WebDavBackend { base_url, base_path, host, port, authorization, transport })
    }

    fn path_of(&self, name: &str) -> String {
        format!("{}/{}", self.base_path, name)
    }

    fn request(&self, method: &str, path: &str, extra: &[(&str, &str)], body: &[u8]) -> Result<HttpMessage, BackendError> {
        let host_header = match self.base_url.port() {
            Some(p) => format!("{}:{p}", self.host),
            None => self.host.clone(),
        };
        let mut headers = vec![
            ("Host".to_string(), host_header),
            ("User-Agent".to_string(), USER_AGENT.to_string()),
            ("Connection".to_string(), "close".to_string()),
        ];
        if let Some(auth) = &self.authorization {
            headers.push(("Authorization".to_string(), auth.clone()));
        }
        headers.extend(extra.iter().map(|(k, v)| (k.to_string(), v.to_string())));
        let start = StartLine::Request {
            method: method.to_string(),
            target: path.to_string(),
            version: "HTTP/1.1".to_string(),
        };
        let raw = self.transport.exchange(&self.host, self.port, &write_message(&start, &headers, body))?;
        let (response, _) = read_message(&raw, 0, method == "HEAD")
            .map_err(|e| BackendError::Unreachable(format!("bad response to {method} {path}: {e:?}")))?;
        Ok(response)
    }

    fn status(m: &HttpMessage) -> u16 {
        match m.start {
            StartLine::Response { status, .. } => status,
            StartLine::Request { .. } => 0,
        }
    }

    fn rejected(method: &str, name: &str, status: u16) -> BackendError {
        BackendError::Rejected { method: method.into(), name: name.into(), status }
    }
}

impl TransferBackend for WebDavBackend {
    fn object_url(&self, name: &str) -> String {
        format!("{}/{}", self.base_url.as_str().trim_end_matches('/'), name)
    }

    fn prepare(&self, dirs: &[&str]) -> Result<(), BackendError> {
        let mut paths = vec![format!("{}/", self.base_path)];
        paths.extend(dirs.iter().map(|d| format!("{}/{d}/", self.base_path)));
        for p in paths {
            let r = self.request("MKCOL", &p, &[], b"")?;
            match Self::status(&r) {
                200..=299 | 405 => {}
                s => return Err(Self::rejected("MKCOL", &p, s)),
            }
        }
        Ok(())
    }

    fn list(&self, dir: &str) -> Result<Vec<String>, BackendError> {
        let path = format!("{}/{dir}/", self.base_path);
        let body = br#"<?xml version="1.0" encoding="utf-8"?><D:propfind xmlns:D="DAV:"><D:allprop/></D:propfind>"#;
        let r = self.request("PROPFIND", &path, &[("Depth", "1"), ("Content-Type", "text/xml")], body)?;
        match Self::status(&r) {
            207 => {}
            404 => return Ok(Vec::new()),
            s => return Err(Self::rejected("PROPFIND", dir, s)),
        }
        let text = String::from_utf8_lossy(&r.body);
        let entries = extract_propfind(&text).map_err(|e| BackendError::Io(format!("PROPFIND body: {e}")))?;
        let prefix = format!("{}/", self.base_path);
        let mut names: Vec<String> = entries
            .into_iter()
            .filter(|e| !e.is_collection)
            .filter_map(|e| {
                let href = percent_decode(&e.href);
                let href = match Url::parse(&href) {
                    Ok(u) => u.path().to_string(),
                    Err(_) => href,
                };
                href.strip_prefix(&prefix).map(str::to_string)
            })
            .filter(|n| n.starts_with(&format!("{dir}/")))
            .collect();
        names.sort();
        Ok(names)
    }

    fn upload(&self, name: &str, data: &[u8]) -> Result<(), BackendError> {
        let r = self.request("PUT", &self.path_of(name), &[("Content-Type", "application/octet-stream")], data)?;
        match Self::status(&r) {
            200..=299 => Ok(()),
            s => Err(Self::rejected("PUT", name, s)),
        }
    }

    fn download(&self, name: &str) -> Result<Vec<u8>, BackendError> {
        let r = self.request("GET", &self.path_of(name), &[], b"")?;
        match Self::status(&r) {
            200 => Ok(r.body),
            404 => Err(BackendError::NotFound(name.to_string())),
            s => Err(Self::rejected("GET", name, s)),
        }
    }

    fn delete(&self, name: &str) -> Result<(), BackendError> {
        let r = self.request("DELETE", &self.path_of(name), &[], b"")?;
        match Self::status(&r) {
            200..=299 => Ok(()),
            404 => Err(BackendError::NotFound(name.to_string())),
            s => Err(Self::rejected("DELETE", name, s)),
        }
    }

    fn protocol(&self) -> &'static str {
        "WebDAV"
    }
}

fn percent_decode(s: &str) -> String {
    percent_encoding::percent_decode_str(s).decode_utf8_lossy().into_owned()
}

#[derive(Debug, Clone)]
struct Resource {
    collection: bool,
    data: Vec<u8>,
    created: DateTime<Utc>,
    modified: DateTime<Utc>,
}

impl Resource {
    fn etag(&self) -> String {
        format!("\"{:x}-{:x}\"", self.data.len(), self.modified.timestamp_micros())
    }
}

#[derive(Debug, Default)]
struct DavState {
    resources: BTreeMap<String, Resource>,
    access_log: Vec<String>,
    capture: Option<Captured>,
}

/// Wire bytes seen by the server: one interleaved stream plus one per
/// direction.
#[derive(Debug, Default, Clone)]
pub struct Captured {
    pub interleaved: Vec<u8>,
    pub client_to_server: Vec<u8>,
    pub server_to_client: Vec<u8>,
}

/// Dumb DAV object server. Paths are absolute and collections end in `/`
/// when requested, but are stored without the trailing slash.
pub struct DavServer {
    state: Mutex<DavState>,
    clock: Arc<dyn TimeSource>,
    zone: FixedOffset,
    users: BTreeMap<String, String>,
    offline: AtomicBool,
}

fn normalize(path: &str) -> String {
    let p = path.split('?').next().unwrap_or("");
    let trimmed = p.trim_end_matches('/');
    if trimmed.is_empty() {
        "/".into()
    } else {
        trimmed.to_string()
    }
}

fn parent_of(path: &str) -> String {
    match path.rsplit_once('/') {
        Some(("", _)) | None => "/".into(),
        Some((p, _)) => p.to_string(),
    }
}

impl DavServer {
    /// `zone` is the offset written into access-log timestamps.
    pub fn new(clock: Arc<dyn TimeSource>, zone: FixedOffset) -> Self {
        let now = clock.now();
        let mut state = DavState::default();
        state.resources.insert(
            "/".into(),
            Resource { collection: true, data: Vec::new(), created: now, modified: now },
        );
        DavServer { state: Mutex::new(state), clock, zone, users: BTreeMap::new(), offline: AtomicBool::new(false) }
    }

    /// Requires HTTP Basic credentials from now on.
    pub fn with_user(mut self, user: &str, password: &str) -> Self {
        self.users.insert(user.to_string(), password.to_string());
        self
    }

    /// Creates a collection and any missing ancestors.
    pub fn add_collection(&self, path: &str) {
        let now = self.clock.now();
        let mut state = self.state.lock().unwrap();
        let mut current = String::new();
        for part in normalize(path).split('/').filter(|p| !p.is_empty()) {
            current.push('/');
            current.push_str(part);
            state
                .resources
                .entry(current.clone())
                .or_insert(Resource { collection: true, data: Vec::new(), created: now, modified: now });
        }
    }

    pub fn set_offline(&self, offline: bool) {
        self.offline.store(offline, Ordering::SeqCst);
    }

    pub fn is_offline(&self) -> bool {
        self.offline.load(Ordering::SeqCst)
    }

    pub fn start_capture(&self) {
        self.state.lock().unwrap().capture = Some(Captured::default());
    }

    pub fn capture(&self) -> Option<Captured> {
        self.state.lock().unwrap().capture.clone()
    }

    pub fn access_log(&self) -> Vec<String> {
        self.state.lock().unwrap().access_log.clone()
    }

    /// Names and bytes of every object below `base`, relative to it.
    pub fn objects_under(&self, base: &str) -> BTreeMap<String, Vec<u8>> {
        let prefix = format!("{}/", normalize(base));
        self.state
            .lock()
            .unwrap()
            .resources
            .iter()
            .filter(|(p, r)| !r.collection && p.starts_with(&prefix))
            .map(|(p, r)| (p[prefix.len()..].to_string(), r.data.clone()))
            .collect()
    }

    /// Copies every object below `base` into `dir`, preserving names.
    pub fn export_objects(&self, base: &str, dir: &Path) -> std::io::Result<usize> {
        let objects = self.objects_under(base);
        for (name, data) in &objects {
            let target = dir.join(name);
            if let Some(parent) = target.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(target, data)?;
        }
        Ok(objects.len())
    }

    fn authorized_user(&self, req: &HttpMessage) -> (Option<String>, bool) {
        let user = req
            .header("Authorization")
            .and_then(|v| v.strip_prefix("Basic "))
            .and_then(|b| base64::engine::general_purpose::STANDARD.decode(b.trim()).ok())
            .and_then(|raw| String::from_utf8(raw).ok())
            .and_then(|s| s.split_once(':').map(|(u, p)| (u.to_string(), p.to_string())));
        if self.users.is_empty() {
            return (user.map(|(u, _)| u), true);
        }
        match user {
            Some((u, p)) => {
                let ok = self.users.get(&u) == Some(&p);
                (Some(u), ok)
            }
            None => (None, false),
        }
    }

    /// Handles one raw request and returns the raw response.
    pub fn handle(&self, client_ip: &str, raw: &[u8]) -> Vec<u8> {
        let now = self.clock.now();
        let request = read_message(raw, 0, false);
        let (status, reason, headers, body, method, target, protocol, user, logged_size) = match &request {
            Ok((req, _)) => {
                let StartLine::Request { method, target, version } = &req.start else {
                    unreachable!("read_message returned a response for a request slot")
                };
                let (user, allowed) = self.authorized_user(req);
                let (status, reason, headers, body, size) = if allowed {
                    self.dispatch(method, target, req, now)
                } else {
                    (
                        401,
                        "Unauthorized",
                        vec![("WWW-Authenticate".to_string(), "Basic realm=\"webdav\"".to_string())],
                        Vec::new(),
                        None,
                    )
                };
                (status, reason, headers, body, method.clone(), target.clone(), version.clone(), user, size)
            }
            Err(_) => (400, "Bad Request", Vec::new(), Vec::new(), "-".into(), "-".into(), "HTTP/1.1".into(), None, None),
        };
        let mut all_headers = vec![
            ("Date".to_string(), now.format("%a, %d %b %Y %H:%M:%S GMT").to_string()),
            ("Server".to_string(), "syncforensics-dav".to_string()),
        ];
        all_headers.extend(headers);
        let start = StartLine::Response { version: "HTTP/1.1".into(), status, reason: reason.into() };
        let response = write_message(&start, &all_headers, &body);

        let entry = AccessLogEntry {
            client_ip: client_ip.to_string(),
            server_name: user.unwrap_or_else(|| "-".into()),
            received_at: now.with_timezone(&self.zone),
            method,
            path: target,
            protocol,
            status_code: status,
            size_bytes: logged_size.unwrap_or(0) as u64,
            size_present: logged_size.is_some(),
            referer: None,
            user_agent: request.as_ref().ok().and_then(|(r, _)| r.header("User-Agent")).map(str::to_string),
        };
        let mut state = self.state.lock().unwrap();
        state.access_log.push(entry.to_line());
        if let Some(cap) = state.capture.as_mut() {
            cap.interleaved.extend_from_slice(raw);
            cap.interleaved.extend_from_slice(&response);
            cap.client_to_server.extend_from_slice(raw);
            cap.server_to_client.extend_from_slice(&response);
        }
        response
    }

    /// Returns status, reason, extra headers, body, and the object size to
    /// log (the size of the object transferred, if any).
    #[allow(clippy::type_complexity)]
    fn dispatch(
        &self,
        method: &str,
        target: &str,
        req: &HttpMessage,
        now: DateTime<Utc>,
    ) -> (u16, &'static str, Vec<(String, String)>, Vec<u8>, Option<usize>) {
        let path = normalize(target);
        let mut state = self.state.lock().unwrap();
        let parent_is_collection =
            |state: &DavState, p: &str| state.resources.get(&parent_of(p)).is_some_and(|r| r.collection);
        match method {
            "GET" | "HEAD" => match state.resources.get(&path) {
                Some(r) if !r.collection => {
                    let headers = vec![
                        ("ETag".to_string(), r.etag()),
                        ("Last-Modified".to_string(), r.modified.format("%a, %d %b %Y %H:%M:%S GMT").to_string()),
                        ("Content-Type".to_string(), "application/octet-stream".to_string()),
                    ];
                    let body = if method == "GET" { r.data.clone() } else { Vec::new() };
                    (200, "OK", headers, body, Some(r.data.len()))
                }
                Some(_) => (405, "Method Not Allowed", Vec::new(), Vec::new(), None),
                None => (404, "Not Found", Vec::new(), Vec::new(), None),
            },
            "PUT" => {
                if state.resources.get(&path).is_some_and(|r| r.collection) {
                    return (405, "Method Not Allowed", Vec::new(), Vec::new(), None);
                }
                if !parent_is_collection(&state, &path) {
                    return (409, "Conflict", Vec::new(), Vec::new(), None);
                }
                let size = req.body.len();
                let created = match state.resources.get(&path) {
                    Some(r) => r.created,
                    None => now,
                };
                let existed = state.resources.contains_key(&path);
                state
                    .resources
                    .insert(path, Resource { collection: false, data: req.body.clone(), created, modified: now });
                if existed {
                    (204, "No Content", Vec::new(), Vec::new(), Some(size))
                } else {
                    (201, "Created", Vec::new(), Vec::new(), Some(size))
                }
            }
            "DELETE" => {
                if state.resources.remove(&path).is_none() {
                    return (404, "Not Found", Vec::new(), Vec::new(), None);
                }
                let prefix = format!("{path}/");
                state.resources.retain(|p, _| !p.starts_with(&prefix));
                (204, "No Content", Vec::new(), Vec::new(), None)
            }
            "MKCOL" => {
                if state.resources.contains_key(&path) {
                    return (405, "Method Not Allowed", Vec::new(), Vec::new(), None);
                }
                if !parent_is_collection(&state, &path) {
                    return (409, "Conflict", Vec::new(), Vec::new(), None);
                }
                state
                    .resources
                    .insert(path, Resource { collection: true, data: Vec::new(), created: now, modified: now });
                (201, "Created", Vec::new(), Vec::new(), None)
            }
            "PROPFIND" => {
                let Some(root) = state.resources.get(&path) else {
                    return (404, "Not Found", Vec::new(), Vec::new(), None);
                };
                let depth_one = req.header("Depth").map(str::trim) != Some("0");
                let mut entries = vec![(path.clone(), root.clone())];
                if root.collection && depth_one {
                    let prefix = if path == "/" { "/".to_string() } else { format!("{path}/") };
                    entries.extend(
                        state
                            .resources
                            .iter()
                            .filter(|(p, _)| p.starts_with(&prefix) && p.len() > prefix.len() && !p[prefix.len()..].contains('/'))
                            .map(|(p, r)| (p.clone(), r.clone())),
                    );
                }
                let body = multistatus(&entries).into_bytes();
                let size = body.len();
                let headers = vec![("Content-Type".to_string(), "text/xml; charset=\"utf-8\"".to_string())];
                (207, "Multi-Status", headers, body, Some(size))
            }
            "OPTIONS" => (
                200,
                "OK",
                vec![
                    ("DAV".to_string(), "1,2".to_string()),
                    ("Allow".to_string(), "OPTIONS,GET,HEAD,PUT,DELETE,MKCOL,PROPFIND".to_string()),
                ],
                Vec::new(),
                None,
            ),
            _ => (405, "Method Not Allowed", Vec::new(), Vec::new(), None),
        }
    }

    /// Serves HTTP connections on `listener` from a background thread until
    /// `stop` is set and one more connection arrives.
    pub fn spawn(self: &Arc<Self>, listener: TcpListener, stop: Arc<AtomicBool>) -> JoinHandle<()> {
        let server = Arc::clone(self);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = stream {
                    let server = Arc::clone(&server);
                    std::thread::spawn(move || {
                        let _ = server.serve_connection(stream);
                    });
                }
            }
        })
    }

    fn serve_connection(&self, mut stream: TcpStream) -> std::io::Result<()> {
        stream.set_read_timeout(Some(Duration::from_secs(30)))?;
        let ip = stream.peer_addr().map(|a| a.ip().to_string()).unwrap_or_else(|_| "-".into());
        let mut buf = Vec::new();
        let mut chunk = [0u8; 64 * 1024];
        loop {
            match read_message(&buf, 0, false) {
                Ok((_, end)) => {
                    let response = self.handle(&ip, &buf[..end]);
                    stream.write_all(&response)?;
                    return stream.flush();
                }
                Err(FramingError::Incomplete(_)) => {}
                Err(_) if buf.is_empty() => {}
                Err(_) => {
                    let response = self.handle(&ip, &buf);
                    return stream.write_all(&response);
                }
            }
            let n = stream.read(&mut chunk)?;
            if n == 0 {
                if !buf.is_empty() {
                    let response = self.handle(&ip, &buf);
                    stream.write_all(&response)?;
                }
                return Ok(());
            }
            buf.extend_from_slice(&chunk[..n]);
        }
    }
}

fn multistatus(entries: &[(String, Resource)]) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<D:multistatus xmlns:D=\"DAV:\" xmlns:ns0=\"DAV:\">\n");
    for (path, r) in entries {
        let href = if r.collection && path != "/" { format!("{path}/") } else { path.clone() };
        out.push_str("<D:response xmlns:lp1=\"DAV:\" xmlns:lp2=\"http://apache.org/dav/props/\">\n");
        out.push_str(&format!("<D:href>{}</D:href>\n<D:propstat>\n<D:prop>\n", escape(&href)));
        if r.collection {
            out.push_str("<lp1:resourcetype><D:collection/></lp1:resourcetype>\n");
        } else {
            out.push_str("<lp1:resourcetype/>\n");
        }
        out.push_str(&format!("<lp1:creationdate>{}</lp1:creationdate>\n", r.created.format("%Y-%m-%dT%H:%M:%SZ")));
        out.push_str(&format!(
            "<lp1:getlastmodified>{}</lp1:getlastmodified>\n",
            r.modified.format("%a, %d %b %Y %H:%M:%S GMT")
        ));
        if !r.collection {
            out.push_str(&format!("<lp1:getcontentlength>{}</lp1:getcontentlength>\n", r.data.len()));
        }
        out.push_str(&format!("<lp1:getetag>{}</lp1:getetag>\n", escape(&r.etag())));
        out.push_str("</D:prop>\n<D:status>HTTP/1.1 200 OK</D:status>\n</D:propstat>\n</D:response>\n");
    }
    out.push_str("</D:multistatus>\n");
    out
}
