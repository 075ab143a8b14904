//! A scripted two-client session against a simulated WebDAV server. It
//! leaves an evidence tree behind, together with the list of actions that
//! produced it.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Duration, FixedOffset, TimeZone, Utc};
use rand::{RngCore, SeedableRng};
use serde::Serialize;

use crate::crypto::ConnectionSettings;
use crate::engine::{
    Captured, ConnectTarget, DavServer, Engine, EngineError, SimClock, SimConnector, SimTransport, TimeSource,
};
use crate::timeline::{EventType, Script, ScriptedAction};

pub const CLIENT_A_IP: &str = "172.16.38.132";
pub const CLIENT_B_IP: &str = "172.16.38.133";
pub const REPO_PATH: &str = "/webdav/ScenarioRepo";
const SERVER_USER: &str = "syncuser";
const SERVER_PASSWORD: &str = "dav-secret";

/// File names and leading magic bytes of the sample set.
pub const SAMPLES: [(&str, &[u8]); 6] = [
    ("notes.txt", b"Quarterly notes\n"),
    ("letter.rtf", b"{\\rtf1\\ansi "),
    ("memo.docx", b"PK\x03\x04"),
    ("photo.jpg", b"\xff\xd8\xff\xe0"),
    ("archive.zip", b"PK\x03\x04"),
    ("report.pdf", b"%PDF-1.4\n"),
];
pub const SUBFOLDER: &str = "fromB";
pub const COPIED: [&str; 2] = ["notes.txt", "report.pdf"];
pub const DELETED: &str = "archive.zip";

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub out: PathBuf,
    pub password: String,
    pub kdf_iterations: u32,
    pub start: DateTime<Utc>,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(out: impl Into<PathBuf>, password: impl Into<String>) -> Self {
        ScenarioConfig {
            out: out.into(),
            password: password.into(),
            kdf_iterations: crate::crypto::DEFAULT_KDF_ITERATIONS,
            start: Utc.with_ymd_and_hms(2015, 10, 1, 18, 52, 30).unwrap(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClientLayout {
    pub machine_name: String,
    pub ip: String,
    pub user_dir: PathBuf,
    pub folder: PathBuf,
}

#[derive(Clone)]
pub struct ScenarioOutcome {
    /// Root holding both clients and the server log.
    pub evidence: PathBuf,
    pub script: Script,
    pub capture: Captured,
    pub repo_url: String,
    pub salt: Vec<u8>,
    pub client_a: ClientLayout,
    pub client_b: ClientLayout,
    /// The repository objects as stored by the server.
    pub objects_dir: PathBuf,
    pub server: Arc<DavServer>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> EngineError + '_ {
    move |source| EngineError::Io { path: path.to_path_buf(), source }
}

fn sample_bytes(magic: &[u8], rng: &mut rand::rngs::StdRng, len: usize) -> Vec<u8> {
    let mut data = magic.to_vec();
    let mut rest = vec![0u8; len.saturating_sub(magic.len())];
    rng.fill_bytes(&mut rest);
    data.extend(rest);
    data
}

struct Recorder<'a> {
    clock: &'a SimClock,
    actions: Vec<ScriptedAction>,
}

impl Recorder<'_> {
    fn note(&mut self, actor: &str, action: EventType, path: Option<&str>) {
        self.actions.push(ScriptedAction {
            when: self.clock.peek(),
            actor: Some(actor.to_string()),
            action,
            path: path.map(str::to_string),
        });
    }

    fn pause(&self) {
        self.clock.advance(Duration::seconds(37));
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, EngineError> {
    let evidence = cfg.out.join("evidence");
    if evidence.exists() {
        fs::remove_dir_all(&evidence).map_err(io(&evidence))?;
    }
    let clock = Arc::new(SimClock::new(cfg.start, Duration::milliseconds(3)));
    let zone = FixedOffset::west_opt(7 * 3600).expect("valid offset");
    let server = Arc::new(DavServer::new(clock.clone(), zone).with_user(SERVER_USER, SERVER_PASSWORD));
    server.add_collection("/webdav");
    server.start_capture();
    let repo_url = format!("http://172.16.38.1{REPO_PATH}");
    let layout = |name: &str, ip: &str| ClientLayout {
        machine_name: String::new(),
        ip: ip.to_string(),
        user_dir: evidence.join(name).join("home/.config/syncany"),
        folder: evidence.join(name).join("home/Sync"),
    };
    let mut a = layout("clientA", CLIENT_A_IP);
    let mut b = layout("clientB", CLIENT_B_IP);
    let engine = |l: &ClientLayout, display: &str| {
        Engine::new(&l.user_dir)
            .with_connector(Arc::new(SimConnector(SimTransport { server: server.clone(), client_ip: l.ip.clone() })))
            .with_clock(clock.clone() as Arc<dyn TimeSource>)
            .with_display_name(display)
            .with_kdf_iterations(cfg.kdf_iterations)
    };
    let ea = engine(&a, "client-a");
    let eb = engine(&b, "client-b");
    let mut rec = Recorder { clock: &clock, actions: Vec::new() };
    let mut rng = rand::rngs::StdRng::seed_from_u64(cfg.seed);

    let settings = ConnectionSettings::webdav(&repo_url, Some(SERVER_USER.into()), Some(SERVER_PASSWORD.into()));
    let at = clock.peek();
    let init = ea.init(&a.folder, &settings, &cfg.password)?;
    a.machine_name = init.machine_name.as_str().to_string();
    for (action, when) in [(EventType::RepoInitialized, at), (EventType::DaemonStarted, at)] {
        rec.actions.push(ScriptedAction { when, actor: Some(a.machine_name.clone()), action, path: None });
    }
    rec.pause();

    for (i, (name, magic)) in SAMPLES.iter().enumerate() {
        let path = a.folder.join(name);
        fs::write(&path, sample_bytes(magic, &mut rng, 20_000 + 9_000 * i)).map_err(io(&path))?;
    }
    rec.pause();
    for (name, _) in SAMPLES {
        rec.note(&a.machine_name, EventType::FileAdded, Some(name));
    }
    ea.up(&a.folder)?;
    rec.pause();

    let at = clock.peek();
    let connected = eb.connect(&b.folder, ConnectTarget::Link(init.encrypted_link.clone()), &cfg.password)?;
    b.machine_name = connected.machine_name.as_str().to_string();
    for (action, when) in [(EventType::RepoConnected, at), (EventType::DaemonStarted, at)] {
        rec.actions.push(ScriptedAction { when, actor: Some(b.machine_name.clone()), action, path: None });
    }
    rec.pause();
    eb.down(&b.folder)?;
    rec.pause();

    let sub = b.folder.join(SUBFOLDER);
    fs::create_dir_all(&sub).map_err(io(&sub))?;
    for name in COPIED {
        let from = b.folder.join(name);
        fs::copy(&from, sub.join(name)).map_err(io(&from))?;
    }
    rec.pause();
    rec.note(&b.machine_name, EventType::FolderAdded, Some(SUBFOLDER));
    for name in COPIED {
        rec.note(&b.machine_name, EventType::FileAdded, Some(&format!("{SUBFOLDER}/{name}")));
    }
    eb.up(&b.folder)?;
    rec.pause();

    ea.down(&a.folder)?;
    rec.pause();
    let doomed = a.folder.join(DELETED);
    fs::remove_file(&doomed).map_err(io(&doomed))?;
    rec.pause();
    rec.note(&a.machine_name, EventType::FileDeleted, Some(DELETED));
    ea.up(&a.folder)?;
    rec.pause();
    eb.down(&b.folder)?;

    let server_dir = evidence.join("server");
    fs::create_dir_all(&server_dir).map_err(io(&server_dir))?;
    let access = server_dir.join("access.log");
    let mut log = server.access_log().join("\n");
    log.push('\n');
    fs::write(&access, log).map_err(io(&access))?;

    let capture = server.capture().unwrap_or_default();
    let capture_dir = cfg.out.join("capture");
    fs::create_dir_all(&capture_dir).map_err(io(&capture_dir))?;
    for (name, bytes) in [
        ("interleaved.bin", &capture.interleaved),
        ("client_to_server.bin", &capture.client_to_server),
        ("server_to_client.bin", &capture.server_to_client),
    ] {
        let p = capture_dir.join(name);
        fs::write(&p, bytes).map_err(io(&p))?;
    }
    let objects_dir = cfg.out.join("server-objects");
    if objects_dir.exists() {
        fs::remove_dir_all(&objects_dir).map_err(io(&objects_dir))?;
    }
    server.export_objects(REPO_PATH, &objects_dir).map_err(io(&objects_dir))?;

    let script = Script { format_version: 1, actions: rec.actions };
    let script_path = cfg.out.join("script.json");
    fs::write(&script_path, serde_json::to_string_pretty(&script).expect("script serializes"))
        .map_err(io(&script_path))?;

    Ok(ScenarioOutcome {
        evidence,
        script,
        capture,
        repo_url,
        salt: init.master_salt,
        client_a: a,
        client_b: b,
        objects_dir,
        server,
    })
}
