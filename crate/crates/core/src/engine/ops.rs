use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::SystemTime;

use chrono::{DateTime, Utc};
use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use rand::RngCore;
use serde::Serialize;

use super::backend::{BackendError, Connector, DefaultConnector, TransferBackend};
use super::database::{write_atomic, LocalDatabase, ViewEntry};
use super::layout::*;
use super::log::{describe_file_version, LogWriter};
use super::time::{SystemClock, TimeSource};
use super::tree::{apply_perms, change_set, detect_changes, truncate_secs, ChangeKind, ChangeSet};
use super::{EngineError, IoContext};
use crate::crypto::{
    derive_master_key, encode_link, open, parse_link, random_salt, seal, CipherSpec, ConnectionSettings, MasterKey,
    StorageKind, SyncLink, DEFAULT_KDF_ITERATIONS, MASTER_KEY_LEN,
};
use crate::model::{
    checksum, chunk_stream, Chunk, DatabaseVersion, DatabaseVersionHeader, FileChange, FileContent, FileStatus,
    FileType, FileVersion, HistoryId, MachineName, MultiChunk, Sha1Digest,
};
use crate::parsers::config::{
    daemon_to_xml, parse_daemon, parse_folder_config, parse_user_config, ConnectionRecord, DaemonFolder,
    FolderConfigRecord, KeyMaterial, UserConfigRecord,
};

const DOS_ATTRS: &str = "----";

pub enum ConnectTarget {
    Link(String),
    Settings(ConnectionSettings),
}

#[derive(Debug, Clone, Serialize)]
pub struct InitOutcome {
    pub folder: PathBuf,
    pub machine_name: MachineName,
    pub repo_id: String,
    pub encrypted_link: String,
    pub plaintext_link: String,
    #[serde(with = "hex::serde")]
    pub master_salt: Vec<u8>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConnectOutcome {
    pub folder: PathBuf,
    pub machine_name: MachineName,
    pub repo_id: String,
}

#[derive(Debug, Clone)]
pub enum UpOutcome {
    NoChanges,
    Uploaded { object: String, version: Box<DatabaseVersion>, new_multichunks: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DownSummary {
    pub applied: Vec<String>,
    pub written: Vec<String>,
    pub removed: Vec<String>,
    /// Paths with uncommitted local changes; they win on the next `up`.
    pub skipped_dirty: Vec<String>,
    pub failed: Vec<(String, String)>,
}

/// Everything an operation needs about an initialized folder.
struct Folder {
    paths: FolderPaths,
    machine: MachineName,
    key: MasterKey,
    settings: ConnectionSettings,
    descriptor: RepoDescriptor,
    log: LogWriter,
}

struct FolderLock(PathBuf);

impl FolderLock {
    fn acquire(paths: &FolderPaths) -> Result<Self, EngineError> {
        let lock = paths.lock();
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = write!(f, "{}", std::process::id());
                Ok(FolderLock(lock))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(EngineError::Locked(paths.root.clone())),
            Err(e) => Err(e).at(lock),
        }
    }
}

impl Drop for FolderLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub struct Engine {
    user: UserPaths,
    connector: Arc<dyn Connector>,
    clock: Arc<dyn TimeSource>,
    display_name: String,
    kdf_iterations: u32,
}

fn random_hex(n: usize) -> String {
    let mut bytes = vec![0u8; n];
    rand::thread_rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

fn seal_object(data: &[u8], key: &MasterKey, cipher: &CipherSpec) -> Result<Vec<u8>, EngineError> {
    Ok(seal(data, key, cipher)?)
}

fn corrupt(what: &str, detail: impl ToString) -> EngineError {
    EngineError::Corrupt { what: what.to_string(), detail: detail.to_string() }
}

/// Decrypts and validates a remote database object.
pub fn open_database_object(bytes: &[u8], key: &MasterKey, cipher: &CipherSpec) -> Result<DatabaseVersion, EngineError> {
    let plain = open(bytes, key, cipher)?;
    let version: DatabaseVersion = serde_json::from_slice(&plain).map_err(|e| corrupt("database version", e))?;
    version.validate()?;
    Ok(version)
}

/// Deflates then seals a multichunk payload.
pub fn pack_multichunk(payload: &[u8], key: &MasterKey, cipher: &CipherSpec) -> Result<Vec<u8>, EngineError> {
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
    enc.write_all(payload).and_then(|_| enc.finish()).map(|z| seal_object(&z, key, cipher)).map_err(|e| corrupt("multichunk", e))?
}

pub fn unpack_multichunk(bytes: &[u8], key: &MasterKey, cipher: &CipherSpec) -> Result<Vec<u8>, EngineError> {
    let z = open(bytes, key, cipher)?;
    let mut out = Vec::new();
    DeflateDecoder::new(&z[..]).read_to_end(&mut out).map_err(|e| corrupt("multichunk", e))?;
    Ok(out)
}

/// Fetches file contents chunk by chunk, downloading each multichunk once.
struct ChunkFetcher<'a> {
    backend: &'a dyn TransferBackend,
    key: &'a MasterKey,
    cipher: &'a CipherSpec,
    index: HashMap<Sha1Digest, &'a MultiChunk>,
    chunks: HashMap<Sha1Digest, Vec<u8>>,
    fetched: HashSet<Sha1Digest>,
}

impl<'a> ChunkFetcher<'a> {
    fn new(backend: &'a dyn TransferBackend, key: &'a MasterKey, cipher: &'a CipherSpec, db: &'a LocalDatabase) -> Self {
        ChunkFetcher { backend, key, cipher, index: db.chunk_index(), chunks: HashMap::new(), fetched: HashSet::new() }
    }

    fn chunk(&mut self, id: &Sha1Digest) -> Result<&[u8], EngineError> {
        if !self.chunks.contains_key(id) {
            let mc = *self.index.get(id).ok_or_else(|| EngineError::MissingMultiChunk(format!("(holding chunk {id})")))?;
            if !self.fetched.insert(mc.id) {
                return Err(corrupt("multichunk", format!("{} lacks chunk {id}", mc.id)));
            }
            let name = multichunk_object(&mc.id.to_hex());
            let bytes = self.backend.download(&name).map_err(|e| match e {
                BackendError::NotFound(_) => EngineError::MissingMultiChunk(mc.id.to_hex()),
                other => other.into(),
            })?;
            let payload = unpack_multichunk(&bytes, self.key, self.cipher)?;
            for c in mc.unpack(&payload)? {
                self.chunks.insert(c.checksum, c.data);
            }
        }
        self.chunks.get(id).map(Vec::as_slice).ok_or_else(|| corrupt("multichunk", format!("chunk {id} missing")))
    }

    fn content(&mut self, content: &FileContent) -> Result<Vec<u8>, EngineError> {
        let mut data = Vec::with_capacity(content.size as usize);
        for id in &content.chunks {
            data.extend_from_slice(self.chunk(id)?);
        }
        if checksum(&data) != content.checksum {
            return Err(corrupt("file content", format!("{} does not reassemble", content.checksum)));
        }
        Ok(data)
    }
}

fn file_bytes(
    fetcher: &mut ChunkFetcher<'_>,
    contents: &HashMap<Sha1Digest, &FileContent>,
    v: &FileVersion,
) -> Result<Vec<u8>, EngineError> {
    let sum = v.content_checksum.ok_or_else(|| corrupt("file version", format!("{} has no checksum", v.path)))?;
    let content = contents.get(&sum).ok_or_else(|| corrupt("file content", format!("{sum} unknown")))?;
    fetcher.content(content)
}

fn to_system_time(t: DateTime<Utc>) -> SystemTime {
    SystemTime::UNIX_EPOCH + std::time::Duration::from_secs(t.timestamp().max(0) as u64)
}

/// Writes `data` at `target` via a temporary file in `tmp_dir`, then stamps
/// the version's mtime and permissions.
fn write_file(target: &Path, tmp_dir: &Path, data: &[u8], v: &FileVersion) -> std::io::Result<()> {
    if let Some(parent) = target.parent() {
        fs::create_dir_all(parent)?;
    }
    if target.is_dir() {
        fs::remove_dir(target)?;
    }
    fs::create_dir_all(tmp_dir)?;
    let tmp = tmp_dir.join(format!("tmp-{}", random_hex(8)));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(data)?;
        f.set_modified(to_system_time(v.last_modified))?;
    }
    apply_perms(&tmp, &v.posix_perms)?;
    fs::rename(&tmp, target)
}

/// Materializes every present path of `db`'s view below `out`.
pub fn assemble_tree(
    backend: &dyn TransferBackend,
    key: &MasterKey,
    cipher: &CipherSpec,
    db: &LocalDatabase,
    out: &Path,
) -> Result<usize, EngineError> {
    let view = db.view();
    let contents = db.contents();
    let mut fetcher = ChunkFetcher::new(backend, key, cipher, db);
    let tmp = out.join(SYNCANY_DIR).join("cache");
    let mut written = 0;
    for (path, entry) in view.iter().filter(|(_, e)| e.is_present()) {
        let target = out.join(path);
        match entry.version.kind {
            FileType::Folder => fs::create_dir_all(&target).at(&target)?,
            FileType::File => {
                let data = file_bytes(&mut fetcher, &contents, &entry.version)?;
                write_file(&target, &tmp, &data, &entry.version).at(&target)?;
            }
            FileType::Symlink => continue,
        }
        written += 1;
    }
    let _ = fs::remove_dir_all(out.join(SYNCANY_DIR));
    Ok(written)
}

impl Engine {
    pub fn new(user_dir: impl Into<PathBuf>) -> Self {
        Engine {
            user: UserPaths::new(user_dir),
            connector: Arc::new(DefaultConnector),
            clock: Arc::new(SystemClock),
            display_name: std::env::var("HOSTNAME").unwrap_or_else(|_| "localhost".into()),
            kdf_iterations: DEFAULT_KDF_ITERATIONS,
        }
    }

    pub fn with_connector(mut self, connector: Arc<dyn Connector>) -> Self {
        self.connector = connector;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn TimeSource>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_display_name(mut self, name: impl Into<String>) -> Self {
        self.display_name = name.into();
        self
    }

    /// Also used to open encrypted links, which do not carry the count.
    pub fn with_kdf_iterations(mut self, iterations: u32) -> Self {
        self.kdf_iterations = iterations;
        self
    }

    pub fn user_paths(&self) -> &UserPaths {
        &self.user
    }

    fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn user_key(&self, create: bool) -> Result<MasterKey, EngineError> {
        let path = self.user.config();
        match fs::read_to_string(&path) {
            Ok(text) => {
                let record = parse_user_config(&text)?;
                let km = record.config_encryption_key.ok_or_else(|| corrupt("user config", "no configEncryptionKey"))?;
                key_from_material(&km, "configEncryptionKey")
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && create => {
                let secret = random_hex(32);
                let key = derive_master_key(&secret, &random_salt(), self.kdf_iterations)?;
                let record = UserConfigRecord { config_encryption_key: Some(material(&key)) };
                write_atomic(&path, record.to_xml().as_bytes()).at(&path)?;
                Ok(key)
            }
            Err(e) => Err(e).at(path),
        }
    }

    fn register_daemon_folder(&self, root: &Path, log: &LogWriter) -> Result<(), EngineError> {
        let daemon = self.user.daemon();
        let mut folders = match fs::read_to_string(&daemon) {
            Ok(text) => parse_daemon(&text)?,
            Err(_) => Vec::new(),
        };
        let path = root.display().to_string();
        if !folders.iter().any(|f| f.path == path) {
            folders.push(DaemonFolder { path, enabled: Some(true) });
        }
        write_atomic(&daemon, daemon_to_xml(&folders).as_bytes()).at(&daemon)?;
        let pid = self.user.pid();
        write_atomic(&pid, std::process::id().to_string().as_bytes()).at(&pid)?;
        log.line("DaemonOperation", "main", "INFO", "Starting daemon operation with action RUN ...");
        Ok(())
    }

    fn open_folder(&self, folder: &Path) -> Result<Folder, EngineError> {
        let root = fs::canonicalize(folder).at(folder)?;
        let paths = FolderPaths::new(root);
        if !paths.is_initialized() {
            return Err(EngineError::NotInitialized(paths.root));
        }
        let text = fs::read_to_string(paths.config()).at(paths.config())?;
        let config = parse_folder_config(&text)?;
        let machine = MachineName::parse_lenient(&config.machine_name).map_err(|_| corrupt("config", "machineName"))?;
        let km = config.master_key.as_ref().ok_or_else(|| corrupt("config", "no masterKey"))?;
        let key = key_from_material(km, "masterKey")?;
        let conn = &config.connection;
        let kind = conn
            .kind
            .as_deref()
            .and_then(StorageKind::parse)
            .ok_or_else(|| corrupt("config", "connection type"))?;
        let password = match &conn.password {
            Some(sealed) => {
                let user_key = self.user_key(false)?;
                let raw = hex::decode(sealed).map_err(|_| corrupt("config", "password is not hex"))?;
                let plain = open(&raw, &user_key, &CipherSpec::default())?;
                Some(String::from_utf8(plain).map_err(|_| corrupt("config", "password"))?)
            }
            None => None,
        };
        let settings = ConnectionSettings {
            kind,
            url: conn.url.clone().ok_or_else(|| corrupt("config", "connection url"))?,
            username: conn.username.clone(),
            password,
        };
        let sealed = fs::read(paths.descriptor()).at(paths.descriptor())?;
        let descriptor: RepoDescriptor = serde_json::from_slice(&open(&sealed, &key, &CipherSpec::default())?)
            .map_err(|e| corrupt("repository descriptor", e))?;
        let log = LogWriter::new(paths.log(), self.clock.clone());
        Ok(Folder { paths, machine, key, settings, descriptor, log })
    }

    fn load_db(paths: &FolderPaths) -> Result<LocalDatabase, EngineError> {
        Ok(LocalDatabase::load(&paths.local_db()).at(paths.local_db())??)
    }

    fn write_folder_config(
        &self,
        paths: &FolderPaths,
        machine: &MachineName,
        key: &MasterKey,
        settings: &ConnectionSettings,
    ) -> Result<(), EngineError> {
        let password = match &settings.password {
            Some(p) => Some(hex::encode(seal(p.as_bytes(), &self.user_key(true)?, &CipherSpec::default())?)),
            None => None,
        };
        let record = FolderConfigRecord {
            machine_name: machine.as_str().to_string(),
            display_name: Some(self.display_name.clone()),
            master_key: Some(material(key)),
            connection: ConnectionRecord {
                kind: Some(settings.kind.as_str().to_string()),
                url: Some(settings.url.clone()),
                username: settings.username.clone(),
                password,
            },
        };
        write_atomic(&paths.config(), record.to_xml().as_bytes()).at(paths.config())
    }

    fn log_settings(log: &LogWriter, settings: &ConnectionSettings) {
        log.info("PluginSettings", &format!("Setting field 'url' with value '{}'", settings.url));
        if let Some(u) = &settings.username {
            log.info("PluginSettings", &format!("Setting field 'username' with value '{u}'"));
        }
    }

    fn upload_logged(
        log: &LogWriter,
        backend: &dyn TransferBackend,
        local: &Path,
        name: &str,
        data: &[u8],
    ) -> Result<(), EngineError> {
        log.line(
            "TransferManager",
            "main",
            "INFO",
            &format!("{}: Uploading local file {} to {} ...", backend.protocol(), local.display(), backend.object_url(name)),
        );
        Ok(backend.upload(name, data)?)
    }

    /// Creates a new repository on the backend and makes `folder` its first
    /// client.
    pub fn init(&self, folder: &Path, settings: &ConnectionSettings, password: &str) -> Result<InitOutcome, EngineError> {
        if password.is_empty() {
            return Err(crate::crypto::CryptoError::EmptyPassword.into());
        }
        fs::create_dir_all(folder).at(folder)?;
        let root = fs::canonicalize(folder).at(folder)?;
        let paths = FolderPaths::new(&root);
        if paths.meta().exists() {
            return Err(EngineError::AlreadyInitialized(root));
        }
        let backend = self.connector.open(settings)?;
        backend.prepare(&REMOTE_DIRS)?;
        match backend.download(MASTER_OBJECT) {
            Ok(_) => return Err(EngineError::RepoExists(backend.object_url(""))),
            Err(BackendError::NotFound(_)) => {}
            Err(e) => return Err(e.into()),
        }
        let salt = random_salt();
        let key = derive_master_key(password, &salt, self.kdf_iterations)?;
        let descriptor = RepoDescriptor::new(random_hex(16));
        let machine = MachineName::generate(&mut rand::thread_rng());

        fs::create_dir_all(paths.db_dir()).at(paths.db_dir())?;
        let _lock = FolderLock::acquire(&paths)?;
        let result = (|| -> Result<InitOutcome, EngineError> {
            let log = LogWriter::new(paths.log(), self.clock.clone());
            Self::log_settings(&log, settings);
            log.line("InitOperation", "main", "INFO", &format!("Executing InitOperation for folder {} ...", root.display()));
            let master = MasterFile { salt: salt.clone(), iterations: self.kdf_iterations }.to_xml();
            write_atomic(&paths.master(), master.as_bytes()).at(paths.master())?;
            let sealed = seal_object(&serde_json::to_vec(&descriptor).expect("descriptor serializes"), &key, &CipherSpec::default())?;
            write_atomic(&paths.descriptor(), &sealed).at(paths.descriptor())?;
            Self::upload_logged(&log, backend.as_ref(), &paths.master(), MASTER_OBJECT, master.as_bytes())?;
            Self::upload_logged(&log, backend.as_ref(), &paths.descriptor(), DESCRIPTOR_OBJECT, &sealed)?;
            backend.upload(&action_object("init", &machine, self.now()), b"")?;
            self.write_folder_config(&paths, &machine, &key, settings)?;
            LocalDatabase::default().save(&paths.local_db()).at(paths.local_db())?;
            self.register_daemon_folder(&root, &log)?;
            Ok(InitOutcome {
                folder: root.clone(),
                machine_name: machine.clone(),
                repo_id: descriptor.repo_id.clone(),
                encrypted_link: encode_link(settings, Some(&key))?,
                plaintext_link: encode_link(settings, None)?,
                master_salt: salt.clone(),
            })
        })();
        if result.is_err() {
            drop(_lock);
            let _ = fs::remove_dir_all(paths.meta());
        }
        result
    }

    /// Joins an existing repository. Nothing is written locally unless the
    /// password opens the repository descriptor.
    pub fn connect(&self, folder: &Path, target: ConnectTarget, password: &str) -> Result<ConnectOutcome, EngineError> {
        if password.is_empty() {
            return Err(crate::crypto::CryptoError::EmptyPassword.into());
        }
        let settings = match target {
            ConnectTarget::Settings(s) => s,
            ConnectTarget::Link(text) => match parse_link(&text)? {
                SyncLink::Plaintext { config } => config,
                link @ SyncLink::Encrypted { .. } => {
                    let SyncLink::Encrypted { master_salt, .. } = &link else { unreachable!() };
                    let key = derive_master_key(password, master_salt, self.kdf_iterations)?;
                    link.settings(Some(&key))?
                }
            },
        };
        if folder.join(SYNCANY_DIR).exists() {
            return Err(EngineError::AlreadyInitialized(folder.to_path_buf()));
        }
        let backend = self.connector.open(&settings)?;
        let master_bytes = backend.download(MASTER_OBJECT).map_err(|e| match e {
            BackendError::NotFound(_) => EngineError::RepoNotFound(backend.object_url("")),
            other => other.into(),
        })?;
        let master = MasterFile::parse(&master_bytes)?;
        let key = derive_master_key(password, &master.salt, master.iterations)?;
        let sealed = backend.download(DESCRIPTOR_OBJECT).map_err(|e| match e {
            BackendError::NotFound(_) => EngineError::RepoNotFound(backend.object_url("")),
            other => other.into(),
        })?;
        let descriptor: RepoDescriptor = serde_json::from_slice(&open(&sealed, &key, &CipherSpec::default())?)
            .map_err(|e| corrupt("repository descriptor", e))?;

        fs::create_dir_all(folder).at(folder)?;
        let root = fs::canonicalize(folder).at(folder)?;
        let paths = FolderPaths::new(&root);
        fs::create_dir_all(paths.db_dir()).at(paths.db_dir())?;
        let _lock = FolderLock::acquire(&paths)?;
        let machine = MachineName::generate(&mut rand::thread_rng());
        let result = (|| -> Result<(), EngineError> {
            let log = LogWriter::new(paths.log(), self.clock.clone());
            Self::log_settings(&log, &settings);
            log.line("ConnectOperation", "main", "INFO", &format!("Executing ConnectOperation for folder {} .", root.display()));
            log.info(
                "TransferManager",
                &format!("{}: Downloading {} to {} ...", backend.protocol(), backend.object_url(MASTER_OBJECT), paths.master().display()),
            );
            write_atomic(&paths.master(), &master_bytes).at(paths.master())?;
            write_atomic(&paths.descriptor(), &sealed).at(paths.descriptor())?;
            self.write_folder_config(&paths, &machine, &key, &settings)?;
            LocalDatabase::default().save(&paths.local_db()).at(paths.local_db())?;
            self.register_daemon_folder(&root, &log)
        })();
        if let Err(e) = result {
            drop(_lock);
            let _ = fs::remove_dir_all(paths.meta());
            return Err(e);
        }
        Ok(ConnectOutcome { folder: root, machine_name: machine, repo_id: descriptor.repo_id })
    }

    pub fn status(&self, folder: &Path) -> Result<ChangeSet, EngineError> {
        let f = self.open_folder(folder)?;
        let db = Self::load_db(&f.paths)?;
        let detected = detect_changes(&f.paths.root, &db.view()).at(&f.paths.root)?;
        Ok(change_set(&detected))
    }

    /// Indexes local changes and uploads them as one new database version.
    /// Nothing is sent when there are no changes.
    pub fn up(&self, folder: &Path) -> Result<UpOutcome, EngineError> {
        let f = self.open_folder(folder)?;
        let _lock = FolderLock::acquire(&f.paths)?;
        let mut db = Self::load_db(&f.paths)?;
        let view = db.view();
        let mut detected = detect_changes(&f.paths.root, &view).at(&f.paths.root)?;
        if detected.is_empty() {
            f.log.info("UpOperation", "Sync up: no local changes");
            return Ok(UpOutcome::NoChanges);
        }
        detected.sort_by(|a, b| a.path.cmp(&b.path));

        let now = truncate_secs(self.now());
        let clock = db.merged_clock().incremented(&f.machine);
        let seq = clock.get(&f.machine);
        let known_contents = db.contents();
        let index = db.chunk_index();
        let policy = f.descriptor.chunking;

        let mut changes = Vec::new();
        let mut new_contents: Vec<FileContent> = Vec::new();
        let mut new_content_ids = HashSet::new();
        let mut pending: Vec<Chunk> = Vec::new();
        let mut pending_ids = HashSet::new();
        for d in &detected {
            match d.change {
                ChangeKind::Added | ChangeKind::Changed => {
                    let local = d.local.as_ref().expect("added or changed paths exist locally");
                    let base = view.get(&d.path).filter(|e| e.is_present() && e.version.kind == local.kind);
                    let (history, number, status) = match (d.change, base) {
                        (ChangeKind::Changed, Some(b)) => (b.history.clone(), b.version.version + 1, FileStatus::Changed),
                        _ => (HistoryId::generate(), 1, FileStatus::New),
                    };
                    let (size, content_checksum) = match local.kind {
                        FileType::File => {
                            let data = fs::read(&local.abs).at(&local.abs)?;
                            let sum = checksum(&data);
                            if !known_contents.contains_key(&sum) && new_content_ids.insert(sum) {
                                let chunks = chunk_stream(&data, &policy);
                                let ids = chunks.iter().map(|c| c.checksum).collect();
                                for c in chunks {
                                    if !index.contains_key(&c.checksum) && pending_ids.insert(c.checksum) {
                                        pending.push(c);
                                    }
                                }
                                new_contents.push(FileContent { checksum: sum, size: data.len() as u64, chunks: ids });
                            }
                            (data.len() as u64, Some(sum))
                        }
                        _ => (local.size, None),
                    };
                    changes.push(FileChange {
                        history_id: history,
                        version: FileVersion {
                            version: number,
                            path: d.path.clone(),
                            kind: local.kind,
                            status,
                            size,
                            last_modified: local.mtime,
                            updated: now,
                            content_checksum,
                            posix_perms: local.perms.clone(),
                            dos_attrs: DOS_ATTRS.into(),
                        },
                    });
                }
                ChangeKind::Deleted => {
                    let b = &view[&d.path];
                    changes.push(FileChange {
                        history_id: b.history.clone(),
                        version: FileVersion {
                            version: b.version.version + 1,
                            status: FileStatus::Deleted,
                            updated: now,
                            ..b.version.clone()
                        },
                    });
                }
            }
        }

        let mut groups: Vec<Vec<&Chunk>> = Vec::new();
        let mut current_size = 0;
        for c in &pending {
            if groups.is_empty() || current_size + c.len() > f.descriptor.max_multichunk_bytes {
                groups.push(Vec::new());
                current_size = 0;
            }
            current_size += c.len();
            groups.last_mut().expect("just pushed").push(c);
        }
        let mut multichunks = Vec::new();
        let mut sealed_multichunks = Vec::new();
        for g in groups {
            let (mc, payload) = MultiChunk::pack(g)?;
            sealed_multichunks.push((multichunk_object(&mc.id.to_hex()), pack_multichunk(&payload, &f.key, &f.descriptor.cipher)?));
            multichunks.push(mc);
        }
        let version = DatabaseVersion {
            header: DatabaseVersionHeader { client: f.machine.clone(), local_time: now, clock },
            changes,
            contents: new_contents,
            multichunks,
        };
        version.validate()?;
        for c in &version.changes {
            f.log.info("Indexer", &format!("* Added file version: {}", describe_file_version(&c.version)));
        }

        let backend = self.connector.open(&f.settings)?;
        backend.upload(&action_object("up", &f.machine, self.now()), b"")?;
        let cache = f.paths.cache();
        fs::create_dir_all(&cache).at(&cache)?;
        for (name, bytes) in &sealed_multichunks {
            let local = cache.join(name.rsplit('/').next().unwrap_or(name));
            fs::write(&local, bytes).at(&local)?;
            let r = Self::upload_logged(&f.log, backend.as_ref(), &local, name, bytes);
            let _ = fs::remove_file(&local);
            r?;
        }
        let object = database_object(&f.machine, seq);
        let sealed = seal_object(&serde_json::to_vec(&version).expect("database version serializes"), &f.key, &f.descriptor.cipher)?;
        let local = cache.join(object.rsplit('/').next().unwrap_or(&object));
        fs::write(&local, &sealed).at(&local)?;
        let r = Self::upload_logged(&f.log, backend.as_ref(), &local, &object, &sealed);
        let _ = fs::remove_file(&local);
        r?;

        db.add(object.clone(), version.clone());
        db.save(&f.paths.local_db()).at(f.paths.local_db())?;
        let files: String = version
            .changes
            .iter()
            .map(|c| format!("<file>{}</file>", crate::parsers::xml::escape(&f.paths.root.join(&c.version.path).display().to_string())))
            .collect();
        f.log.info(
            "UpOperation",
            &format!("Sending message: <updateRecentChangesGuiInternalEvent><recentChanges>{files}</recentChanges></updateRecentChangesGuiInternalEvent>"),
        );
        Ok(UpOutcome::Uploaded { object, new_multichunks: sealed_multichunks.len(), version: Box::new(version) })
    }

    fn pending(f: &Folder, db: &LocalDatabase, backend: &dyn TransferBackend) -> Result<Vec<String>, EngineError> {
        let mut names: Vec<(MachineName, u64, String)> = backend
            .list(DATABASES_DIR)?
            .into_iter()
            .filter(|n| !db.known.contains(n))
            .filter_map(|n| parse_database_object(&n).map(|(m, s)| (m, s, n)))
            .filter(|(m, _, _)| *m != f.machine)
            .collect();
        names.sort();
        Ok(names.into_iter().map(|(_, _, n)| n).collect())
    }

    /// Remote database versions from other clients not yet applied here.
    pub fn ls_remote(&self, folder: &Path) -> Result<Vec<String>, EngineError> {
        let f = self.open_folder(folder)?;
        let db = Self::load_db(&f.paths)?;
        let backend = self.connector.open(&f.settings)?;
        Self::pending(&f, &db, backend.as_ref())
    }

    /// Applies every pending remote database version to the local tree.
    pub fn down(&self, folder: &Path) -> Result<DownSummary, EngineError> {
        let f = self.open_folder(folder)?;
        let _lock = FolderLock::acquire(&f.paths)?;
        let mut db = Self::load_db(&f.paths)?;
        let backend = self.connector.open(&f.settings)?;
        let pending = Self::pending(&f, &db, backend.as_ref())?;
        let mut summary = DownSummary::default();
        f.log.info("DownOperation", &format!("Sync down: {} new database version(s)", pending.len()));
        if pending.is_empty() {
            return Ok(summary);
        }
        let mut incoming = Vec::new();
        for name in &pending {
            let bytes = backend.download(name)?;
            let version = open_database_object(&bytes, &f.key, &f.descriptor.cipher)?;
            let (machine, seq) = parse_database_object(name).expect("pending names parse");
            if version.header.client != machine || version.header.clock.get(&machine) != seq {
                return Err(corrupt("database version", format!("{name} does not match its header")));
            }
            incoming.push((name.clone(), version));
        }

        let old_view = db.view();
        let dirty: HashSet<String> =
            detect_changes(&f.paths.root, &old_view).at(&f.paths.root)?.into_iter().map(|d| d.path).collect();
        for (name, version) in incoming {
            summary.applied.push(name.clone());
            db.add(name, version);
        }
        let new_view = db.view();

        let mut file_removals = Vec::new();
        let mut folder_removals = Vec::new();
        let mut folders = Vec::new();
        let mut files = Vec::new();
        let paths: BTreeSet<&String> = old_view.keys().chain(new_view.keys()).collect();
        for p in paths {
            let old = old_view.get(p).filter(|e| e.is_present());
            let new = new_view.get(p).filter(|e| e.is_present());
            let same = match (old, new) {
                (None, None) => true,
                (Some(a), Some(b)) => same_incarnation(a, b),
                _ => false,
            };
            if same {
                continue;
            }
            if dirty.contains(p) {
                summary.skipped_dirty.push(p.clone());
                continue;
            }
            match new {
                None => match old.map(|o| o.version.kind) {
                    Some(FileType::Folder) => folder_removals.push((p.clone(), new_view.get(p))),
                    _ => file_removals.push((p.clone(), new_view.get(p))),
                },
                Some(e) if e.version.kind == FileType::Folder => folders.push(e),
                Some(e) => files.push(e),
            }
        }
        folder_removals.sort_by_key(|(p, _)| std::cmp::Reverse(p.matches('/').count()));

        let trash = f.paths.trash().join(format!("{}-{}", self.now().format("%Y%m%dT%H%M%S%.3f"), random_hex(2)));
        let winning = |entry: Option<&ViewEntry>| {
            if let Some(e) = entry {
                f.log.line("FileSystemAction", "main", "INFO", &format!("with winning version : {}", describe_file_version(&e.version)));
            }
        };
        for (p, entry) in file_removals {
            let abs = f.paths.root.join(&p);
            if abs.is_file() {
                let dest = trash.join(&p);
                let moved = dest.parent().map(fs::create_dir_all).unwrap_or(Ok(())).and_then(|_| fs::rename(&abs, &dest));
                match moved {
                    Ok(()) => summary.removed.push(p.clone()),
                    Err(e) => summary.failed.push((p.clone(), e.to_string())),
                }
            }
            winning(entry);
        }
        for (p, entry) in folder_removals {
            let abs = f.paths.root.join(&p);
            if abs.is_dir() && fs::remove_dir(&abs).is_ok() {
                summary.removed.push(p.clone());
            }
            winning(entry);
        }
        for e in folders {
            let abs = f.paths.root.join(&e.version.path);
            if abs.is_file() {
                let dest = trash.join(&e.version.path);
                let _ = dest.parent().map(fs::create_dir_all);
                let _ = fs::rename(&abs, &dest);
            }
            match fs::create_dir_all(&abs) {
                Ok(()) => summary.written.push(e.version.path.clone()),
                Err(err) => summary.failed.push((e.version.path.clone(), err.to_string())),
            }
            winning(Some(e));
        }
        let contents = db.contents();
        let mut fetcher = ChunkFetcher::new(backend.as_ref(), &f.key, &f.descriptor.cipher, &db);
        for e in files {
            let data = file_bytes(&mut fetcher, &contents, &e.version)?;
            let abs = f.paths.root.join(&e.version.path);
            match write_file(&abs, &f.paths.cache(), &data, &e.version) {
                Ok(()) => summary.written.push(e.version.path.clone()),
                Err(err) => summary.failed.push((e.version.path.clone(), err.to_string())),
            }
            winning(Some(e));
        }
        drop(fetcher);
        db.save(&f.paths.local_db()).at(f.paths.local_db())?;
        Ok(summary)
    }
}

fn same_incarnation(a: &ViewEntry, b: &ViewEntry) -> bool {
    a.history == b.history && a.version.version == b.version.version && a.header == b.header
}

fn material(key: &MasterKey) -> KeyMaterial {
    KeyMaterial { key: Some(hex::encode(key.key_bytes())), salt: Some(hex::encode(key.salt())) }
}

fn key_from_material(km: &KeyMaterial, what: &str) -> Result<MasterKey, EngineError> {
    let key = km.key.as_deref().and_then(|k| hex::decode(k).ok()).ok_or_else(|| corrupt(what, "key"))?;
    let salt = km.salt.as_deref().and_then(|s| hex::decode(s).ok()).ok_or_else(|| corrupt(what, "salt"))?;
    let key: [u8; MASTER_KEY_LEN] = key.try_into().map_err(|_| corrupt(what, "key length"))?;
    Ok(MasterKey::from_parts(key, salt)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::backend::{FixedConnector, MemoryBackend};

    fn engine(user: &Path, backend: Arc<MemoryBackend>) -> Engine {
        Engine::new(user).with_connector(Arc::new(FixedConnector(backend))).with_kdf_iterations(1000)
    }

    #[test]
    fn init_up_connect_down() {
        let dir = tempfile::tempdir().unwrap();
        let backend = Arc::new(MemoryBackend::new());
        let a = engine(&dir.path().join("ua"), backend.clone());
        let b = engine(&dir.path().join("ub"), backend.clone());
        let fa = dir.path().join("a");
        let fb = dir.path().join("b");
        let settings = ConnectionSettings::local("unused");
        let out = a.init(&fa, &settings, "pw").unwrap();
        assert!(backend.snapshot().contains_key("master"));
        assert!(matches!(a.init(&fa, &settings, "pw"), Err(EngineError::AlreadyInitialized(_))));

        fs::write(fa.join("x.txt"), b"hello").unwrap();
        fs::create_dir(fa.join("d")).unwrap();
        fs::write(fa.join("d/y.bin"), vec![7u8; 40_000]).unwrap();
        assert_eq!(a.status(&fa).unwrap().added, vec!["d", "d/y.bin", "x.txt"]);
        assert!(matches!(a.up(&fa).unwrap(), UpOutcome::Uploaded { .. }));
        let writes = backend.write_count();
        assert!(matches!(a.up(&fa).unwrap(), UpOutcome::NoChanges));
        assert_eq!(backend.write_count(), writes);

        assert!(matches!(
            b.connect(&fb, ConnectTarget::Link(out.encrypted_link.clone()), "wrong"),
            Err(EngineError::AuthenticationFailure)
        ));
        assert!(!fb.join(SYNCANY_DIR).exists());
        b.connect(&fb, ConnectTarget::Link(out.encrypted_link), "pw").unwrap();
        assert_eq!(b.ls_remote(&fb).unwrap().len(), 1);
        let s = b.down(&fb).unwrap();
        assert_eq!(s.written.len(), 3);
        assert_eq!(fs::read(fb.join("d/y.bin")).unwrap(), vec![7u8; 40_000]);
        assert!(b.status(&fb).unwrap().is_empty());
        assert!(b.ls_remote(&fb).unwrap().is_empty());
        assert!(a.ls_remote(&fa).unwrap().is_empty());

        fs::remove_file(fb.join("x.txt")).unwrap();
        b.up(&fb).unwrap();
        let s = a.down(&fa).unwrap();
        assert_eq!(s.removed, vec!["x.txt"]);
        assert!(!fa.join("x.txt").exists());
        assert!(fs::read_dir(fa.join(".syncany/trash")).unwrap().next().is_some());
    }

    #[test]
    fn offline_up_commits_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let backend = Arc::new(MemoryBackend::new());
        let a = engine(&dir.path().join("ua"), backend.clone());
        let fa = dir.path().join("a");
        a.init(&fa, &ConnectionSettings::local("unused"), "pw").unwrap();
        fs::write(fa.join("x.txt"), b"hello").unwrap();
        let before = fs::read(fa.join(".syncany/db/local.db")).unwrap();
        backend.set_offline(true);
        assert!(matches!(a.up(&fa), Err(EngineError::BackendUnreachable(_))));
        assert_eq!(fs::read(fa.join(".syncany/db/local.db")).unwrap(), before);
        assert!(!fa.join(".syncany/lock").exists());
        backend.set_offline(false);
        assert!(matches!(a.up(&fa).unwrap(), UpOutcome::Uploaded { .. }));
    }
}
