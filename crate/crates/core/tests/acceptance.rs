//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime};

use chrono::{DateTime, Utc};
use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};

use syncforensics::crypto::{derive_master_key, open, seal, CipherSpec, ConnectionSettings, CryptoError};
use syncforensics::engine::{
    assemble_tree, open_database_object, pack_multichunk, unpack_multichunk, ConnectTarget, Engine, EngineError,
    FixedConnector, LocalBackend, LocalDatabase, MasterFile, MemoryBackend, RepoDescriptor, SimClock, TransferBackend,
    UpOutcome,
};
use syncforensics::model::{chunk_stream, compare_clocks, Chunk, ChunkingPolicy, ClockOrdering, MachineName, MultiChunk, VectorClock};
use syncforensics::parsers::config::{ConnectionRecord, FolderConfigRecord, KeyMaterial};
use syncforensics::parsers::{parse_access_log_line, parse_local_db, parse_log_text, parse_xbel, LogKind};
use syncforensics::recovery::{carve_configs_parallel, extract_master_salt, extract_propfind, parse_http_streams, Direction};
use syncforensics::scenario::{run_scenario, ScenarioConfig};
use syncforensics::timeline::{EventType, Script};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

const BIN: &str = env!("CARGO_BIN_EXE_syncforensics");
const KDF_ITERATIONS: u32 = 1000;

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().expect("tempdir")
}

/// Relative path to file bytes (`None` for folders), excluding metadata.
fn snapshot_tree(root: &Path) -> BTreeMap<String, Option<Vec<u8>>> {
    let mut out = BTreeMap::new();
    for e in walkdir::WalkDir::new(root).min_depth(1).into_iter().filter_entry(|e| e.file_name() != ".syncany") {
        let e = e.unwrap();
        let rel = e.path().strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
        let data = e.file_type().is_file().then(|| fs::read(e.path()).unwrap());
        out.insert(rel, data);
    }
    out
}

fn sf(args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(BIN).args(args).env("SYNCANY_PASSWORD", "scenario-pw").output().map_err(|e| e.to_string())
}

// 1. Scenario round trip through the command line.
fn scenario_round_trip() -> Outcome {
    let started = Instant::now();
    let dir = tmp();
    let out = dir.path();
    let run = run_scenario(&ScenarioConfig::new(out.join("s"), "scenario-pw")).map_err(|e| e.to_string())?;
    let p = |x: PathBuf| x.to_string_lossy().into_owned();
    let bundle = p(out.join("bundle.json"));
    let o = sf(&["--user-dir", &p(out.join("u")), "extract", "--root", &p(run.evidence.clone()), "--out", &bundle])?;
    ensure!(o.status.code() == Some(0), "extract exited {:?}", o.status.code());
    let o = sf(&["timeline", "--bundle", &bundle, "--out", &p(out.join("tl"))])?;
    ensure!(o.status.code() == Some(0), "timeline exited {:?}", o.status.code());
    let script_path = out.join("s/script.json");
    let o = sf(&["verify", "--bundle", &bundle, "--script", &p(script_path.clone())])?;
    let report = String::from_utf8_lossy(&o.stdout).into_owned();
    ensure!(o.status.code() == Some(0), "verify exited {:?}: {report}", o.status.code());
    let recall = report.lines().next().unwrap_or_default().to_string();
    ensure!(recall.starts_with("recall 1.0000"), "{recall}");

    let script: Script = serde_json::from_str(&fs::read_to_string(&script_path).unwrap()).unwrap();
    ensure!(script.actions.iter().all(|a| a.action != EventType::Installed), "installs are out of scope");
    let file_actions: Vec<_> = script
        .actions
        .iter()
        .filter(|a| matches!(a.action, EventType::FileAdded | EventType::FileDeleted))
        .collect();
    ensure!(file_actions.len() == 9, "expected 9 scripted file actions, got {}", file_actions.len());
    ensure!(file_actions.iter().all(|a| a.actor.is_some()), "every file action names its actor");

    // Every event naming the scripted path, in the sync folder's relative
    // form, carries the scripted actor.
    let jsonl = fs::read_to_string(out.join("tl/timeline.jsonl")).unwrap();
    let events: Vec<serde_json::Value> = jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    for a in &file_actions {
        let path = a.path.as_deref().unwrap();
        let actors: Vec<&str> = events
            .iter()
            .filter(|e| e["event_type"].as_str() == Some(a.action.as_str()))
            .filter(|e| e["path"].as_str() == Some(path))
            .filter_map(|e| e["actor_machine"].as_str())
            .collect();
        ensure!(!actors.is_empty(), "no attributed event for {} {path}", a.action.as_str());
        ensure!(
            actors.iter().all(|m| Some(*m) == a.actor.as_deref()),
            "{} {path}: actors {actors:?}, scripted {:?}",
            a.action.as_str(),
            a.actor
        );
    }
    let tree_a = snapshot_tree(&run.client_a.folder);
    ensure!(tree_a == snapshot_tree(&run.client_b.folder), "client folders differ after the final down");
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "took {secs:.1} s");
    Ok(format!("{recall}, {} file actions attributed, {secs:.2} s", file_actions.len()))
}

// 2. Real-world artifact excerpts parse to their exact field values.
fn artifact_fixtures() -> Outcome {
    let rows = parse_local_db(include_str!("fixtures/fileversion_full.tsv")).map_err(|e| e.to_string())?;
    ensure!(rows.len() >= 4, "{} rows", rows.len());
    let first = &rows[0];
    ensure!(
        (first.path.as_str(), first.version, first.status.as_str(), first.db_client.as_str()) == (".sygnore", 1, "NEW", "UYCrwWXGKvboYKZBGc")
            && first.db_local_time.to_string() == "2015-10-01 18:52:38",
        "first row {first:?}"
    );
    let del = rows.iter().find(|r| r.path == "3WindowsToUbuntu/Enron3111.txt").ok_or("deleted row missing")?;
    ensure!((del.version, del.status.as_str()) == (2, "DELETED"), "deleted row {del:?}");

    let log = parse_log_text(include_str!("fixtures/syncany.log"), chrono::FixedOffset::west_opt(7 * 3600).unwrap());
    let kinds: Vec<LogKind> = log.iter().map(|e| e.kind).collect();
    for k in [
        LogKind::SettingField,
        LogKind::InitOperation,
        LogKind::UploadingFile,
        LogKind::ConnectOperation,
        LogKind::AddedFileVersion,
        LogKind::WinningVersion,
        LogKind::RemovingFolder,
        LogKind::RecentChanges,
    ] {
        ensure!(kinds.contains(&k), "log entry class {k:?} not recognised");
    }
    let setting = &log[0].attrs;
    ensure!(setting.get("field").map(String::as_str) == Some("username"), "{setting:?}");
    ensure!(setting.get("value").map(String::as_str) == Some("syncanyserver"), "{setting:?}");
    let fv = log.iter().find_map(|e| (e.kind == LogKind::AddedFileVersion).then_some(e.file_version.as_ref()).flatten()).ok_or("no file version")?;
    ensure!(
        (fv.version, fv.path.as_str(), fv.status.as_str(), fv.size) == (1, "Enron3111.zip", "NEW", Some(30967))
            && fv.checksum.map(|c| c.to_string()).as_deref() == Some("75a666ba87fef0f8425a71edcd621d0a4367aa47"),
        "{fv:?}"
    );
    let removing = log.iter().find(|e| e.kind == LogKind::RemovingFolder).unwrap();
    ensure!(removing.attrs.get("path").map(String::as_str) == Some("/home/UbuntuPc/SyncanyUbuntuClient"), "{removing:?}");

    let marks = parse_xbel(include_str!("fixtures/recently-used.xbel")).map_err(|e| e.to_string())?;
    let b = marks.get(1).ok_or("second bookmark missing")?;
    ensure!(
        b.href == "file:///home/suspectpc/SyncanyMacDownloadToUbuntu"
            && b.visited.map(|t| t.to_rfc3339()).as_deref() == Some("2015-10-02T02:32:15+00:00")
            && b.applications.len() == 1
            && (b.applications[0].name.as_str(), b.applications[0].count) == ("Syncany", 1),
        "{b:?}"
    );

    let props = extract_propfind(include_str!("fixtures/propfind_actions.xml")).map_err(|e| e.to_string())?;
    let e = props.first().ok_or("no propfind response")?;
    ensure!(
        e.href == "/webdav/MacRepo/actions/"
            && e.is_collection
            && e.creation.map(|t| t.to_rfc3339()).as_deref() == Some("2015-09-29T15:47:30+00:00")
            && e.last_modified == e.creation,
        "{e:?}"
    );

    let line = include_str!("fixtures/access.log").lines().next().unwrap();
    let a = parse_access_log_line(line).map_err(|e| e.to_string())?;
    ensure!(
        (a.client_ip.as_str(), a.method.as_str(), a.path.as_str(), a.status_code, a.size_bytes)
            == ("172.16.38.132", "PUT", "/webdav/UbuntuRepo/master", 201, 480)
            && a.user_agent.as_deref() == Some("Sardine/UNAVAILABLE"),
        "{a:?}"
    );
    Ok(format!("{} db rows, {} log entries, xbel, propfind and access line exact", rows.len(), log.len()))
}

fn mem_engine(user: &Path, backend: Arc<MemoryBackend>) -> Engine {
    Engine::new(user).with_connector(Arc::new(FixedConnector(backend))).with_kdf_iterations(KDF_ITERATIONS)
}

fn multichunk_bytes(backend: &MemoryBackend) -> usize {
    backend.snapshot().iter().filter(|(k, _)| k.starts_with("multichunks/")).map(|(_, v)| v.len()).sum()
}

// 3. Deduplication and idle uploads.
fn dedup() -> Outcome {
    let dir = tmp();
    let mut data = vec![0u8; 1 << 20];
    StdRng::seed_from_u64(3).fill_bytes(&mut data);

    let single = Arc::new(MemoryBackend::new());
    let e = mem_engine(&dir.path().join("u1"), single.clone());
    let f1 = dir.path().join("one");
    e.init(&f1, &ConnectionSettings::local("mem"), "pw").map_err(|e| e.to_string())?;
    fs::write(f1.join("f0.bin"), &data).unwrap();
    e.up(&f1).map_err(|e| e.to_string())?;
    let one = multichunk_bytes(&single);

    let many = Arc::new(MemoryBackend::new());
    let e = mem_engine(&dir.path().join("u5"), many.clone());
    let f5 = dir.path().join("five");
    e.init(&f5, &ConnectionSettings::local("mem"), "pw").map_err(|e| e.to_string())?;
    for i in 0..5 {
        fs::write(f5.join(format!("f{i}.bin")), &data).unwrap();
    }
    e.up(&f5).map_err(|e| e.to_string())?;
    let five = multichunk_bytes(&many);
    let ratio = five as f64 / one as f64;
    ensure!(ratio < 1.2, "5 copies stored {five} B vs {one} B for one copy (x{ratio:.3})");

    let writes = many.write_count();
    let idle = e.up(&f5).map_err(|e| e.to_string())?;
    ensure!(matches!(idle, UpOutcome::NoChanges), "idle up uploaded");
    ensure!(many.write_count() == writes, "idle up wrote {} objects", many.write_count() - writes);
    Ok(format!("5 x 1 MiB stored as {five} B, single copy {one} B (x{ratio:.3}); idle up wrote 0 objects"))
}

struct Client {
    engine: Engine,
    folder: PathBuf,
}

const POOL: [&str; 6] = ["a.txt", "b.bin", "c", "d/e.txt", "d/f.bin", "g/h/i.txt"];

fn set_mtime(path: &Path, secs: u64) {
    let f = fs::File::options().write(true).open(path).unwrap();
    f.set_modified(SystemTime::UNIX_EPOCH + Duration::from_secs(secs)).unwrap();
}

fn random_edit(rng: &mut StdRng, c: &Client, mtime: &mut u64) {
    let rel = POOL[rng.gen_range(0..POOL.len())];
    let path = c.folder.join(rel);
    if rng.gen_bool(0.25) {
        if path.is_file() {
            fs::remove_file(&path).unwrap();
        }
        return;
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).unwrap();
    }
    let len = [0usize, 1, 100, 16 * 1024, 40_000][rng.gen_range(0..5)];
    let mut data = vec![0u8; len];
    rng.fill_bytes(&mut data);
    fs::write(&path, &data).unwrap();
    *mtime += 1;
    set_mtime(&path, *mtime);
}

fn quiesce(clients: &[Client]) -> Result<usize, String> {
    for round in 1..=10 {
        let mut busy = false;
        for c in clients {
            let s = c.engine.down(&c.folder).map_err(|e| e.to_string())?;
            busy |= !s.applied.is_empty();
            if !s.failed.is_empty() {
                return Err(format!("down failed: {:?}", s.failed));
            }
            busy |= matches!(c.engine.up(&c.folder).map_err(|e| e.to_string())?, UpOutcome::Uploaded { .. });
        }
        if !busy {
            return Ok(round);
        }
    }
    Err("no quiescence after 10 rounds".into())
}

#[derive(Default)]
struct TrialStats {
    /// Uploads made while the uploader had unseen remote versions.
    concurrent_ups: usize,
    final_paths: usize,
}

fn convergence_trial(seed: u64) -> Result<TrialStats, String> {
    let mut stats = TrialStats::default();
    let dir = tmp();
    let repo = dir.path().join("repo");
    fs::create_dir_all(&repo).unwrap();
    let settings = ConnectionSettings::local(repo.to_string_lossy());
    let start: DateTime<Utc> = "2020-01-01T00:00:00Z".parse().unwrap();
    let clock = Arc::new(SimClock::new(start, chrono::Duration::seconds(1)));
    let clients: Vec<Client> = (0..3)
        .map(|i| Client {
            engine: Engine::new(dir.path().join(format!("user{i}"))).with_clock(clock.clone()).with_kdf_iterations(KDF_ITERATIONS),
            folder: dir.path().join(format!("c{i}")),
        })
        .collect();
    let init = clients[0].engine.init(&clients[0].folder, &settings, "pw").map_err(|e| e.to_string())?;
    for c in &clients[1..] {
        c.engine
            .connect(&c.folder, ConnectTarget::Link(init.encrypted_link.clone()), "pw")
            .map_err(|e| e.to_string())?;
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut mtime = 1_600_000_000u64;
    for _ in 0..rng.gen_range(8..20) {
        let c = &clients[rng.gen_range(0..3)];
        match rng.gen_range(0..4) {
            0 | 1 => random_edit(&mut rng, c, &mut mtime),
            2 => {
                let behind = !c.engine.ls_remote(&c.folder).map_err(|e| e.to_string())?.is_empty();
                if matches!(c.engine.up(&c.folder).map_err(|e| e.to_string())?, UpOutcome::Uploaded { .. }) && behind {
                    stats.concurrent_ups += 1;
                }
            }
            _ => {
                c.engine.down(&c.folder).map_err(|e| e.to_string())?;
            }
        }
    }
    quiesce(&clients)?;
    let trees: Vec<_> = clients.iter().map(|c| snapshot_tree(&c.folder)).collect();
    for (i, t) in trees.iter().enumerate().skip(1) {
        if *t != trees[0] {
            let keys = |t: &BTreeMap<String, Option<Vec<u8>>>| t.keys().cloned().collect::<Vec<_>>();
            return Err(format!("seed {seed}: client {i} differs: {:?} vs {:?}", keys(t), keys(&trees[0])));
        }
    }
    stats.final_paths = trees[0].len();
    Ok(stats)
}

// 4. Convergence under random concurrent activity.
fn convergence() -> Outcome {
    const TRIALS: u64 = 200;
    let started = Instant::now();
    let (mut concurrent, mut nonempty) = (0, 0);
    for seed in 0..TRIALS {
        let s = convergence_trial(seed)?;
        concurrent += s.concurrent_ups;
        nonempty += usize::from(s.final_paths > 0);
    }
    ensure!(concurrent > 0, "no trial produced a concurrent upload");
    Ok(format!(
        "{TRIALS} trials x 3 clients converged ({concurrent} concurrent uploads, {nonempty} non-empty end states) in {:.1} s",
        started.elapsed().as_secs_f64()
    ))
}

fn planted_config(i: usize) -> String {
    FolderConfigRecord {
        machine_name: format!("Planted{i:03}MachineXyz"),
        display_name: Some(format!("host{i}")),
        master_key: Some(KeyMaterial { key: Some(format!("{i:064x}")), salt: Some(format!("{i:032x}")) }),
        connection: ConnectionRecord {
            kind: Some("webdav".into()),
            url: Some(format!("http://10.0.0.{}/webdav/Repo{i}", i % 250)),
            username: Some("user".into()),
            password: Some("00ff".into()),
        },
    }
    .to_xml()
}

// 5. Carving planted configs out of random data.
fn carving() -> Outcome {
    const BLOB: usize = 64 << 20;
    const PLANTED: usize = 100;
    let mut rng = StdRng::seed_from_u64(5);
    let mut blob = vec![0u8; BLOB];
    rng.fill_bytes(&mut blob);
    // One slot per config keeps plants apart; the offset inside a slot is random.
    let slot = BLOB / PLANTED;
    let mut expected = Vec::new();
    for i in 0..PLANTED {
        let doc = planted_config(i);
        let start = doc.find("<config>").ok_or("config without header")?;
        let at = i * slot + rng.gen_range(0..slot - doc.len());
        blob[at..at + doc.len()].copy_from_slice(doc.as_bytes());
        expected.push(at + start);
    }
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let started = Instant::now();
    let result = carve_configs_parallel(&blob, threads);
    let secs = started.elapsed().as_secs_f64();
    let mut found: Vec<usize> = result.strong.iter().map(|h| h.offset).collect();
    found.sort_unstable();
    let false_pos = found.iter().filter(|o| !expected.contains(o)).count();
    ensure!(false_pos == 0, "{false_pos} strong false positives");
    ensure!(found == expected, "{} of {PLANTED} strong hits", found.len());
    ensure!(secs < 5.0, "took {secs:.2} s");
    Ok(format!("{PLANTED}/{PLANTED} strong hits, 0 false positives, {} weak, {secs:.2} s on {threads} threads", result.weak.len()))
}

/// PBKDF2-HMAC-SHA256, 32-byte output, computed with Python's hashlib.
const KDF_VECTORS: [(&str, &str, u32, &str); 10] = [
    ("correct horse battery staple", "000102030405060708090a0b0c0d0e0f", 1000, "a69b179e3add3c1e0aaf227a0eb3aa2aa8645ab86fecf6ca00c17512697c719e"),
    ("pw", "00000000000000000000000000000000", 1000, "05299649fdddee1583e386857260903da7b25c82c062c38e9af35d8f4f4df51b"),
    ("password", "73616c74", 1000, "632c2812e46d4604102ba7618e9d6d7d2f8128f6266b4a03264d2a0460b7dcb3"),
    ("password", "73616c74", 4096, "c5e478d59288c841aa530db6845c4c8d962893a001ce4e11a4963873aa98134a"),
    ("Sync4ny!", "5a815f7bdd85b40aef6e46da113de27a", 10000, "1a85707f6fd57792c7fb7fb6f919f664be61aea3fa3590590cae730dedfc83f4"),
    ("ünïcødé-пароль", "ffeeddccbbaa99887766554433221100", 2000, "03c10f5abc250d726ef56952576e8a8099b086f35b4f5b72d084832fb8a5645d"),
    (
        "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa",
        "deadbeef",
        1000,
        "2c96287b9bb1095d0e58df48cc2b9b2435459b7da750df682799424c62854eb5",
    ),
    ("x", "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f", 1001, "d5ed178ee89d8c47eac14a7185c2d9ef02ccb6626069a1d8ca876cb165f0ba48"),
    ("space in password ", "0123456789abcdef0123456789abcdef", 1500, "cf437ec47968f6dd00e154e726e3e2744a748eb93c02688c297e13f6375a4f87"),
    ("syncuser", "4e61436c2d4e61436c2d4e61436c2d31", 10000, "01b655004b5909505677a95c64e3fce901a772e0a2dd008455dea609688976f4"),
];

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

// 6. Encryption gates.
fn crypto_gates() -> Outcome {
    let mut rng = StdRng::seed_from_u64(6);
    let key = derive_master_key("pw", b"0123456789abcdef", KDF_ITERATIONS).map_err(|e| e.to_string())?;
    let spec = CipherSpec::default();
    let policy = ChunkingPolicy::default();
    for _ in 0..1000 {
        let mut data = vec![0u8; rng.gen_range(1..70_000)];
        if rng.gen_bool(0.5) {
            rng.fill_bytes(&mut data);
        } else {
            data.iter_mut().enumerate().for_each(|(i, b)| *b = (i % 7) as u8);
        }
        let chunks = chunk_stream(&data, &policy);
        let (mc, payload) = MultiChunk::pack(chunks.iter()).map_err(|e| e.to_string())?;
        let sealed = pack_multichunk(&payload, &key, &spec).map_err(|e| e.to_string())?;
        let back = unpack_multichunk(&sealed, &key, &spec).map_err(|e| e.to_string())?;
        let joined: Vec<u8> = mc.unpack(&back).map_err(|e| e.to_string())?.into_iter().flat_map(|c: Chunk| c.data).collect();
        ensure!(joined == data, "multichunk round trip lost data");

        // Independent route: deflate by hand, seal, open, inflate.
        let mut z = DeflateEncoder::new(Vec::new(), Compression::fast());
        z.write_all(&payload).unwrap();
        let opened = open(&seal(&z.finish().unwrap(), &key, &spec).unwrap(), &key, &spec).unwrap();
        let mut plain = Vec::new();
        DeflateDecoder::new(&opened[..]).read_to_end(&mut plain).unwrap();
        ensure!(plain == payload, "sealed deflate round trip lost data");
    }

    let sealed = pack_multichunk(b"bit flips must not go unnoticed", &key, &spec).map_err(|e| e.to_string())?;
    for bit in 0..sealed.len() * 8 {
        let mut t = sealed.clone();
        t[bit / 8] ^= 1 << (bit % 8);
        match unpack_multichunk(&t, &key, &spec) {
            Err(EngineError::AuthenticationFailure) | Err(EngineError::Crypto(CryptoError::AuthenticationFailure)) => {}
            other => return Err(format!("flip of bit {bit}: {other:?}")),
        }
    }

    let dir = tmp();
    let repo = dir.path().join("repo");
    fs::create_dir_all(&repo).unwrap();
    let a = Engine::new(dir.path().join("ua")).with_kdf_iterations(KDF_ITERATIONS);
    let fa = dir.path().join("A");
    let init = a.init(&fa, &ConnectionSettings::local(repo.to_string_lossy()), "right").map_err(|e| e.to_string())?;
    let secret = b"PLAINTEXT-CANARY-0451 must never reach the second machine";
    fs::write(fa.join("secret.txt"), secret).unwrap();
    a.up(&fa).map_err(|e| e.to_string())?;
    ensure!(
        walkdir::WalkDir::new(&repo).into_iter().filter_map(Result::ok).filter(|e| e.file_type().is_file()).all(|e| !contains(&fs::read(e.path()).unwrap(), secret)),
        "plaintext found in the repository"
    );
    let b_user = dir.path().join("ub");
    let fb = dir.path().join("B");
    let b = Engine::new(&b_user).with_kdf_iterations(KDF_ITERATIONS);
    for target in [ConnectTarget::Link(init.encrypted_link.clone()), ConnectTarget::Settings(ConnectionSettings::local(repo.to_string_lossy()))] {
        match b.connect(&fb, target, "wrong") {
            Err(EngineError::AuthenticationFailure) | Err(EngineError::Crypto(CryptoError::AuthenticationFailure)) => {}
            other => return Err(format!("wrong password connect: {other:?}")),
        }
    }
    for root in [&fb, &b_user] {
        for e in walkdir::WalkDir::new(root).into_iter().filter_map(Result::ok).filter(|e| e.file_type().is_file()) {
            ensure!(!contains(&fs::read(e.path()).unwrap(), secret), "plaintext at {}", e.path().display());
        }
    }
    ensure!(!fb.join(".syncany").exists(), "wrong password left repository metadata");

    for (pw, salt, iters, want) in KDF_VECTORS {
        let got = derive_master_key(pw, &hex::decode(salt).unwrap(), iters).map_err(|e| e.to_string())?;
        ensure!(hex::encode(got.key_bytes()) == want, "KDF mismatch for {pw:?}/{salt}/{iters}");
    }
    Ok(format!("1000 multichunk round trips, {} single-bit flips rejected, wrong password leaves no plaintext, 10/10 KDF vectors", sealed.len() * 8))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Brute {
    Equal,
    Before,
    After,
    Concurrent,
}

/// Straight from the definition: a precedes b iff every counter of a is at
/// most b's and some counter is strictly smaller.
fn brute_compare(a: &[u64; 3], b: &[u64; 3]) -> Brute {
    let le = (0..3).all(|i| a[i] <= b[i]);
    let ge = (0..3).all(|i| a[i] >= b[i]);
    match (le, ge) {
        (true, true) => Brute::Equal,
        (true, false) => Brute::Before,
        (false, true) => Brute::After,
        (false, false) => Brute::Concurrent,
    }
}

// 7. Vector clock comparison against exhaustive enumeration.
fn vector_clocks() -> Outcome {
    let names: Vec<MachineName> = ["Amachine", "Bmachine", "Cmachine"].iter().map(|n| MachineName::parse_lenient(n).unwrap()).collect();
    let mut all = Vec::new();
    for x in 0..=2u64 {
        for y in 0..=2u64 {
            for z in 0..=2u64 {
                all.push([x, y, z]);
            }
        }
    }
    let clock = |c: &[u64; 3]| {
        let mut v = VectorClock::new();
        for (n, &k) in names.iter().zip(c) {
            if k > 0 {
                v.set(n.clone(), k);
            }
        }
        v
    };
    let mut pairs = 0;
    for a in &all {
        for b in &all {
            let want = brute_compare(a, b);
            let got = match compare_clocks(&clock(a), &clock(b)) {
                ClockOrdering::Equal => Brute::Equal,
                ClockOrdering::Before => Brute::Before,
                ClockOrdering::After => Brute::After,
                ClockOrdering::Concurrent => Brute::Concurrent,
            };
            ensure!(got == want, "{a:?} vs {b:?}: {got:?}, expected {want:?}");
            pairs += 1;
        }
    }
    Ok(format!("{pairs} ordered pairs over 3 machines with counters 0..=2 agree"))
}

// 8. Salt recovery from traffic and an external rebuild from server objects.
fn network_extraction() -> Outcome {
    let dir = tmp();
    let run = run_scenario(&ScenarioConfig::new(dir.path().join("s"), "scenario-pw")).map_err(|e| e.to_string())?;
    let c2s = fs::read(dir.path().join("s/capture/client_to_server.bin")).unwrap();
    let s2c = fs::read(dir.path().join("s/capture/server_to_client.bin")).unwrap();
    let net = parse_http_streams(&c2s, &s2c);
    ensure!(net.error.is_none(), "stream error {:?}", net.error);
    let salts = extract_master_salt(&net.transactions);
    let put = salts.iter().find(|s| s.direction == Direction::Put).ok_or("no salt in a PUT")?;
    let get = salts.iter().find(|s| s.direction == Direction::Get).ok_or("no salt in a GET")?;
    ensure!(put.salt.as_deref() == Some(&run.salt[..]), "PUT salt differs from the repository's");
    ensure!(get.salt.as_deref() == Some(&run.salt[..]), "GET salt differs from the repository's");

    // Rebuild with nothing but the exported objects, the recovered salt and
    // the password.
    let store = LocalBackend::new(&run.objects_dir);
    let iterations = put.iterations.unwrap_or(MasterFile::parse(&store.download("master").map_err(|e| e.to_string())?).map_err(|e| e.to_string())?.iterations);
    let key = derive_master_key("scenario-pw", put.salt.as_deref().unwrap(), iterations).map_err(|e| e.to_string())?;
    let descriptor: RepoDescriptor =
        serde_json::from_slice(&open(&store.download("syncany").map_err(|e| e.to_string())?, &key, &CipherSpec::default()).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let mut db = LocalDatabase::default();
    let mut objects = store.list("databases").map_err(|e| e.to_string())?;
    objects.sort();
    for name in &objects {
        let v = open_database_object(&store.download(name).map_err(|e| e.to_string())?, &key, &descriptor.cipher).map_err(|e| e.to_string())?;
        db.add(name.clone(), v);
    }
    let rebuilt = dir.path().join("rebuilt");
    let n = assemble_tree(&store, &key, &descriptor.cipher, &db, &rebuilt).map_err(|e| e.to_string())?;
    let want = snapshot_tree(&run.client_a.folder);
    ensure!(snapshot_tree(&rebuilt) == want, "rebuilt tree differs from the clients' folder");

    // The same through an ordinary client pointed at the exported objects.
    let e = Engine::new(dir.path().join("u")).with_kdf_iterations(KDF_ITERATIONS);
    let via = dir.path().join("via-connect");
    e.connect(&via, ConnectTarget::Settings(ConnectionSettings::local(run.objects_dir.to_string_lossy())), "scenario-pw")
        .map_err(|e| e.to_string())?;
    e.down(&via).map_err(|e| e.to_string())?;
    ensure!(snapshot_tree(&via) == want, "connect+down tree differs");
    Ok(format!(
        "salt {} seen in PUT and GET; {} db versions, {n} paths rebuilt from server objects",
        hex::encode(&run.salt),
        objects.len()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("scenario round trip", scenario_round_trip),
        ("artifact fixtures", artifact_fixtures),
        ("deduplication", dedup),
        ("convergence", convergence),
        ("carving", carving),
        ("crypto gates", crypto_gates),
        ("vector clocks", vector_clocks),
        ("network extraction", network_extraction),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}) [{secs:.2}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why}) [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
