//! The `syncforensics` command line. Exit codes: 0 success, 1 partial,
//! 2 fatal.

use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::crypto::ConnectionSettings;
use crate::engine::database::write_atomic;
use crate::engine::{ConnectTarget, DownSummary, Engine, UpOutcome};
use crate::recovery::{
    carve_configs_parallel, carve_configs_reader, extract_master_salt, parse_http_stream, parse_http_streams,
    scan_fileversion_strings, CarveHit,
};
use crate::timeline::bundle::NetArtifacts;
use crate::timeline::report::{to_csv, to_jsonl, to_text};
use crate::timeline::{
    build_timeline, correlate, diff_ground_truth, extract_bundle, normalize, ArtifactBundle, Script, Source, Sourced,
    ZoneMap, DEFAULT_IP_WINDOW_SECS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_FATAL: i32 = 2;
pub const PASSWORD_ENV: &str = "SYNCANY_PASSWORD";
/// Images up to this size are read whole and carved in parallel.
const IN_MEMORY_IMAGE: u64 = 1 << 30;

#[derive(Parser)]
#[command(name = "syncforensics", version, about = "Encrypted folder sync over dumb storage, and forensic analysis of its traces")]
struct Cli {
    /// Per-user application directory.
    #[arg(long, global = true, env = "SYNCANY_USER_DIR")]
    user_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PasswordArg {
    /// Repository password; falls back to $SYNCANY_PASSWORD, then a prompt.
    #[arg(long)]
    password: Option<String>,
}

#[derive(Args)]
struct FolderArg {
    #[arg(long)]
    folder: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Create a repository and make the folder its first client.
    Init {
        #[command(flatten)]
        folder: FolderArg,
        /// Local directory, or an http:// WebDAV collection URL.
        #[arg(long)]
        storage: String,
        #[arg(long)]
        username: Option<String>,
        #[arg(long, env = "SYNCANY_STORAGE_PASSWORD", hide_env_values = true)]
        storage_password: Option<String>,
        #[command(flatten)]
        password: PasswordArg,
    },
    /// Join an existing repository.
    Connect {
        #[command(flatten)]
        folder: FolderArg,
        #[arg(long, conflicts_with = "url", required_unless_present = "url")]
        link: Option<String>,
        #[arg(long)]
        url: Option<String>,
        #[arg(long)]
        username: Option<String>,
        #[arg(long, env = "SYNCANY_STORAGE_PASSWORD", hide_env_values = true)]
        storage_password: Option<String>,
        #[command(flatten)]
        password: PasswordArg,
    },
    /// List local changes not yet uploaded.
    Status(FolderArg),
    /// Upload local changes.
    Up(FolderArg),
    /// List remote database versions not yet applied.
    LsRemote(FolderArg),
    /// Apply remote changes.
    Down(FolderArg),
    /// Parse every artifact under the roots into a bundle.
    Extract {
        #[arg(long = "root", required = true, num_args = 1..)]
        roots: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Zone for a source's naive times, e.g. `LocalDb=-0700`.
        #[arg(long = "tz")]
        zones: Vec<String>,
    },
    /// Carve config documents (and rows naming a machine) out of a blob.
    Carve {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        machine: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pair HTTP requests and responses from a reassembled stream.
    Net {
        /// Both directions interleaved in one file.
        #[arg(long, conflicts_with_all = ["c2s", "s2c"], required_unless_present_all = ["c2s", "s2c"])]
        stream: Option<PathBuf>,
        #[arg(long, requires = "s2c")]
        c2s: Option<PathBuf>,
        #[arg(long, requires = "c2s")]
        s2c: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the ordered timeline and its reports.
    Timeline {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        hits: Vec<PathBuf>,
        #[arg(long)]
        net: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_IP_WINDOW_SECS)]
        window_secs: i64,
    },
    /// Check a bundle's timeline against a scenario script.
    Verify {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        tolerance_secs: f64,
    },
    /// Run the scripted two-client session and keep its evidence.
    Scenario {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        password: PasswordArg,
    },
}

/// A failure that ends the command with exit code 2.
struct Fatal(String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

type CmdResult = Result<i32, Fatal>;

fn password(arg: &PasswordArg) -> Result<String, Fatal> {
    if let Some(p) = &arg.password {
        return Ok(p.clone());
    }
    if let Ok(p) = std::env::var(PASSWORD_ENV) {
        return Ok(p);
    }
    eprint!("Password: ");
    let _ = std::io::stderr().flush();
    let mut line = String::new();
    std::io::stdin().lock().read_line(&mut line)?;
    let p = line.trim_end_matches(['\r', '\n']).to_string();
    if p.is_empty() {
        return Err(Fatal(format!("no password given (use --password, ${PASSWORD_ENV} or the prompt)")));
    }
    Ok(p)
}

fn user_dir(cli: &Option<PathBuf>) -> PathBuf {
    cli.clone().unwrap_or_else(|| {
        let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
        home.join(".config").join("syncany")
    })
}

/// Settings for a local directory or an http(s) WebDAV URL.
pub fn storage_settings(storage: &str, username: Option<String>, password: Option<String>) -> ConnectionSettings {
    if storage.starts_with("http://") || storage.starts_with("https://") {
        ConnectionSettings::webdav(storage, username, password)
    } else {
        let path = fs::canonicalize(storage).map(|p| p.display().to_string()).unwrap_or_else(|_| storage.to_string());
        ConnectionSettings::local(path)
    }
}

fn write_out(path: &Path, data: &[u8]) -> Result<(), Fatal> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_atomic(path, data).map_err(|e| Fatal(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct RunMeta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    started_utc: String,
    inputs: Vec<String>,
}

/// Run metadata lives beside the outputs so the outputs stay reproducible.
fn write_meta(path: &Path, command: &str, inputs: &[&Path]) -> Result<(), Fatal> {
    let meta = RunMeta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        started_utc: chrono::Utc::now().to_rfc3339(),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
    };
    write_out(path, serde_json::to_string_pretty(&meta)?.as_bytes())
}

fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".meta.json");
    out.with_file_name(name)
}

fn print_down(s: &DownSummary) {
    println!(
        "applied {} database version(s): {} written, {} removed, {} skipped (local changes), {} failed",
        s.applied.len(),
        s.written.len(),
        s.removed.len(),
        s.skipped_dirty.len(),
        s.failed.len()
    );
    for (p, e) in &s.failed {
        println!("  failed {p}: {e}");
    }
}

fn run_command(cli: Cli) -> CmdResult {
    let engine = || Engine::new(user_dir(&cli.user_dir));
    match &cli.command {
        Command::Init { folder, storage, username, storage_password, password: pw } => {
            let pw = password(pw)?;
            let settings = storage_settings(storage, username.clone(), storage_password.clone());
            let out = engine().init(&folder.folder, &settings, &pw)?;
            println!("Repository created, folder {} is machine {}.", out.folder.display(), out.machine_name);
            println!("Share link (password protected): {}", out.encrypted_link);
            println!("Share link (plaintext settings): {}", out.plaintext_link);
            Ok(EXIT_OK)
        }
        Command::Connect { folder, link, url, username, storage_password, password: pw } => {
            let pw = password(pw)?;
            let target = match (link, url) {
                (Some(l), _) => ConnectTarget::Link(l.clone()),
                (None, Some(u)) => ConnectTarget::Settings(storage_settings(u, username.clone(), storage_password.clone())),
                (None, None) => return Err(Fatal("either --link or --url is required".into())),
            };
            let out = engine().connect(&folder.folder, target, &pw)?;
            println!("Connected {} as machine {}.", out.folder.display(), out.machine_name);
            Ok(EXIT_OK)
        }
        Command::Status(f) => {
            let cs = engine().status(&f.folder)?;
            if cs.is_empty() {
                println!("no changes");
            }
            for (mark, list) in [("A", &cs.added), ("M", &cs.changed), ("D", &cs.deleted)] {
                for p in list {
                    println!("{mark} {p}");
                }
            }
            Ok(EXIT_OK)
        }
        Command::Up(f) => {
            match engine().up(&f.folder)? {
                UpOutcome::NoChanges => println!("no changes"),
                UpOutcome::Uploaded { object, version, new_multichunks } => println!(
                    "uploaded {object}: {} change(s), {new_multichunks} new multichunk(s)",
                    version.changes.len()
                ),
            }
            Ok(EXIT_OK)
        }
        Command::LsRemote(f) => {
            let pending = engine().ls_remote(&f.folder)?;
            if pending.is_empty() {
                println!("up to date");
            }
            for p in pending {
                println!("{p}");
            }
            Ok(EXIT_OK)
        }
        Command::Down(f) => {
            let s = engine().down(&f.folder)?;
            print_down(&s);
            Ok(if s.failed.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
        }
        Command::Extract { roots, out, zones } => {
            let mut map = ZoneMap::default();
            for z in zones {
                let (src, off) = z.split_once('=').ok_or_else(|| Fatal(format!("--tz {z:?}: expected SOURCE=OFFSET")))?;
                let source = Source::parse(src).ok_or_else(|| Fatal(format!("--tz: unknown source {src:?}")))?;
                map.set(source, off)?;
            }
            let outcome = extract_bundle(roots, map);
            if outcome.roots_readable == 0 && outcome.bundle.artifact_count() == 0 {
                return Err(Fatal("no readable roots and no artifacts".into()));
            }
            for e in &outcome.bundle.errors {
                log::warn!("{} ({}): {}", e.path, e.class, e.message);
            }
            write_out(out, outcome.bundle.to_json().as_bytes())?;
            let inputs: Vec<&Path> = roots.iter().map(PathBuf::as_path).collect();
            write_meta(&sidecar(out), "extract", &inputs)?;
            let b = &outcome.bundle;
            println!(
                "{} sync folder(s), {} user dir(s), {} access log(s), {} xbel file(s), {} install log(s), {} error(s)",
                b.sync_folders.len(),
                b.user_dirs.len(),
                b.access_logs.len(),
                b.xbel.len(),
                b.installs.len(),
                b.errors.len()
            );
            Ok(if outcome.is_partial() { EXIT_PARTIAL } else { EXIT_OK })
        }
        Command::Carve { image, machine, out } => {
            let size = fs::metadata(image)?.len();
            let mut result = if machine.is_some() || size <= IN_MEMORY_IMAGE {
                let blob = fs::read(image)?;
                let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
                let mut r = carve_configs_parallel(&blob, threads);
                if let Some(m) = machine {
                    let name = crate::model::MachineName::parse_lenient(m)?;
                    let rows = scan_fileversion_strings(&blob, &name);
                    r.strong.extend(rows.strong);
                    r.weak.extend(rows.weak);
                }
                r
            } else {
                carve_configs_reader(fs::File::open(image)?)?
            };
            result.strong.sort_by_key(|h| h.offset);
            result.weak.sort_by_key(|h| h.offset);
            let text: String = result.all().map(|h| h.to_json_line() + "\n").collect();
            write_out(out, text.as_bytes())?;
            write_meta(&sidecar(out), "carve", &[image])?;
            println!("{} strong hit(s), {} weak hit(s)", result.strong.len(), result.weak.len());
            Ok(EXIT_OK)
        }
        Command::Net { stream, c2s, s2c, out } => {
            let (extraction, inputs) = match (stream, c2s, s2c) {
                (Some(s), _, _) => (parse_http_stream(&fs::read(s)?), vec![s.as_path()]),
                (None, Some(a), Some(b)) => (parse_http_streams(&fs::read(a)?, &fs::read(b)?), vec![a.as_path(), b.as_path()]),
                _ => return Err(Fatal("give --stream, or both --c2s and --s2c".into())),
            };
            let salts = extract_master_salt(&extraction.transactions);
            let partial = extraction.error.is_some();
            let art = NetArtifacts { extraction, salts };
            write_out(out, serde_json::to_string_pretty(&art)?.as_bytes())?;
            write_meta(&sidecar(out), "net", &inputs)?;
            println!("{} transaction(s), {} master salt sighting(s)", art.extraction.transactions.len(), art.salts.len());
            for s in &art.salts {
                let salt = s.salt.as_ref().map(hex::encode).unwrap_or_else(|| "(opaque)".into());
                println!("  {:?} {} salt {salt}", s.direction, s.repo_name);
            }
            if let Some(e) = &art.extraction.error {
                println!("stream error: {e:?}");
            }
            Ok(if partial { EXIT_PARTIAL } else { EXIT_OK })
        }
        Command::Timeline { bundle, hits, net, out, window_secs } => {
            let mut b = ArtifactBundle::from_json(&fs::read_to_string(bundle)?).map_err(Fatal)?;
            for h in hits {
                let text = fs::read_to_string(h)?;
                let records = text
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(serde_json::from_str::<CarveHit>)
                    .collect::<Result<Vec<_>, _>>()?;
                b.carve_hits.push(Sourced { origin: h.display().to_string(), records });
            }
            for n in net {
                let records: NetArtifacts = serde_json::from_str(&fs::read_to_string(n)?)?;
                b.net.push(Sourced { origin: n.display().to_string(), records });
            }
            let timeline = build_timeline(normalize(&b));
            let correlation = correlate(&b, *window_secs);
            fs::create_dir_all(out)?;
            write_out(&out.join("timeline.csv"), to_csv(&timeline).as_bytes())?;
            write_out(&out.join("timeline.jsonl"), to_jsonl(&timeline).as_bytes())?;
            write_out(&out.join("report.txt"), to_text(&timeline, &correlation).as_bytes())?;
            write_out(&out.join("correlation.json"), serde_json::to_string_pretty(&correlation)?.as_bytes())?;
            let mut inputs = vec![bundle.as_path()];
            inputs.extend(hits.iter().map(PathBuf::as_path));
            inputs.extend(net.iter().map(PathBuf::as_path));
            write_meta(&out.join("run-meta.json"), "timeline", &inputs)?;
            println!("{} dated and {} undated event(s) written to {}", timeline.dated.len(), timeline.undated.len(), out.display());
            Ok(EXIT_OK)
        }
        Command::Verify { bundle, script, tolerance_secs } => {
            let b = ArtifactBundle::from_json(&fs::read_to_string(bundle)?).map_err(Fatal)?;
            let script: Script = serde_json::from_str(&fs::read_to_string(script)?)?;
            let report = diff_ground_truth(&build_timeline(normalize(&b)), &script, *tolerance_secs);
            println!("recall {:.4} ({}/{})", report.recall, report.matched, report.total);
            for m in &report.missing {
                println!(
                    "missing {} {} by {} at {}",
                    m.action.as_str(),
                    m.path.as_deref().unwrap_or("-"),
                    m.actor.as_deref().unwrap_or("-"),
                    m.when.to_rfc3339()
                );
            }
            Ok(if report.is_complete() { EXIT_OK } else { EXIT_PARTIAL })
        }
        Command::Scenario { out, password: pw } => {
            let pw = password(pw)?;
            let r = crate::scenario::run_scenario(&crate::scenario::ScenarioConfig::new(out, pw))?;
            println!("evidence in {}", r.evidence.display());
            println!("script in {}", out.join("script.json").display());
            println!("machines: A {} ({}), B {} ({})", r.client_a.machine_name, r.client_a.ip, r.client_b.machine_name, r.client_b.ip);
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_FATAL } else { EXIT_OK };
        }
    };
    match run_command(cli) {
        Ok(code) => code,
        Err(Fatal(msg)) => {
            eprintln!("error: {}", msg.lines().next().unwrap_or_default());
            EXIT_FATAL
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar(Path::new("/x/bundle.json")), PathBuf::from("/x/bundle.json.meta.json"));
    }

    #[test]
    fn bad_usage_is_fatal() {
        assert_eq!(run(["syncforensics", "bogus"]), EXIT_FATAL);
        assert_eq!(run(["syncforensics", "--help"]), EXIT_OK);
    }
}
