//! The local metadata database: every applied database version, stored as a
//! text table dump, plus the per-path view derived from it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};

use crate::model::{
    winning_version, ChunkRef, DatabaseVersion, DatabaseVersionHeader, FileChange, FileContent, FileStatus,
    FileVersion, HistoryId, MachineName, MultiChunk, Sha1Digest, VectorClock,
};
use crate::parsers::local_db::{
    create_table_line, insert_line, read_sql_dump, FileVersionRow, SqlTable, SqlValue, FILEVERSION_COLUMNS,
    FILEVERSION_TABLE,
};
use crate::parsers::ParseError;

pub const DB_STATUS_MASTER: &str = "MASTER";
const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

const DATABASEVERSION_COLUMNS: [&str; 6] = ["ID", "STATUS", "LOCALTIME", "CLIENT", "VECTORCLOCK_SERIALIZED", "OBJECT_NAME"];
const FILECONTENT_COLUMNS: [&str; 4] = ["DATABASEVERSION_ID", "CHECKSUM", "SIZE", "CHUNKS"];
const MULTICHUNK_COLUMNS: [&str; 3] = ["DATABASEVERSION_ID", "ID", "CHUNKS"];
const KNOWN_COLUMNS: [&str; 1] = ["NAME"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredVersion {
    pub id: u64,
    /// Remote object the version was uploaded as or downloaded from.
    pub object: String,
    pub version: DatabaseVersion,
}

/// The winning incarnation of one path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewEntry {
    pub history: HistoryId,
    pub header: DatabaseVersionHeader,
    pub version: FileVersion,
}

impl ViewEntry {
    pub fn is_present(&self) -> bool {
        self.version.status != FileStatus::Deleted
    }

    /// Identity of the incarnation, independent of which database carried it.
    pub fn identity(&self) -> (&str, u32) {
        (self.history.as_str(), self.version.version)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocalDatabase {
    pub versions: Vec<StoredVersion>,
    /// Remote database objects already applied, own uploads included.
    pub known: BTreeSet<String>,
}

fn fmt_time(t: &DateTime<Utc>) -> String {
    t.format(TIME_FORMAT).to_string()
}

fn corrupt(table: &str, line: usize, column: &str, value: &str) -> ParseError {
    ParseError::InvalidValue { line, column: format!("{table}.{column}"), value: value.to_string() }
}

fn text(values: &[SqlValue], idx: &HashMap<&str, usize>, col: &str, table: &str, line: usize) -> Result<String, ParseError> {
    idx.get(col)
        .and_then(|i| values.get(*i))
        .and_then(SqlValue::as_text)
        .ok_or_else(|| corrupt(table, line, col, "NULL"))
}

fn table<'a>(tables: &'a [SqlTable], name: &str, columns: &[&str]) -> Result<Option<&'a SqlTable>, ParseError> {
    let Some(t) = tables.iter().find(|t| t.name == name) else {
        return Ok(None);
    };
    for c in columns {
        if !t.columns.iter().any(|x| x == c) {
            return Err(ParseError::MissingColumn(format!("{name}.{c}")));
        }
    }
    Ok(Some(t))
}

impl LocalDatabase {
    pub fn add(&mut self, object: String, version: DatabaseVersion) -> u64 {
        let id = self.versions.last().map(|v| v.id + 1).unwrap_or(0);
        self.known.insert(object.clone());
        self.versions.push(StoredVersion { id, object, version });
        id
    }

    /// Componentwise maximum over every known database version.
    pub fn merged_clock(&self) -> VectorClock {
        self.versions
            .iter()
            .fold(VectorClock::new(), |acc, v| acc.merged(&v.version.header.clock))
    }

    /// The winning version of every path ever seen, deleted ones included.
    pub fn view(&self) -> BTreeMap<String, ViewEntry> {
        let mut by_path: BTreeMap<&str, Vec<(&DatabaseVersionHeader, &FileChange)>> = BTreeMap::new();
        for stored in &self.versions {
            for change in &stored.version.changes {
                by_path
                    .entry(change.version.path.as_str())
                    .or_default()
                    .push((&stored.version.header, change));
            }
        }
        by_path
            .into_iter()
            .filter_map(|(path, candidates)| {
                let pairs: Vec<(&DatabaseVersionHeader, &FileVersion)> =
                    candidates.iter().map(|(h, c)| (*h, &c.version)).collect();
                let (h, v) = winning_version(&pairs)?;
                let (_, change) = candidates
                    .iter()
                    .find(|(ch, c)| std::ptr::eq(*ch, h) && std::ptr::eq(&c.version, v))?;
                Some((
                    path.to_string(),
                    ViewEntry { history: change.history_id.clone(), header: h.clone(), version: v.clone() },
                ))
            })
            .collect()
    }

    pub fn contents(&self) -> HashMap<Sha1Digest, &FileContent> {
        self.versions
            .iter()
            .flat_map(|v| v.version.contents.iter())
            .map(|c| (c.checksum, c))
            .collect()
    }

    /// Maps every stored chunk to the multichunk that holds it.
    pub fn chunk_index(&self) -> HashMap<Sha1Digest, &MultiChunk> {
        let mut index = HashMap::new();
        for mc in self.versions.iter().flat_map(|v| v.version.multichunks.iter()) {
            for c in &mc.chunks {
                index.entry(c.checksum).or_insert(mc);
            }
        }
        index
    }

    pub fn fileversion_rows(&self) -> Vec<FileVersionRow> {
        let mut rows = Vec::new();
        for stored in &self.versions {
            let h = &stored.version.header;
            for change in &stored.version.changes {
                let v = &change.version;
                rows.push(FileVersionRow {
                    db_status: DB_STATUS_MASTER.into(),
                    db_local_time: h.local_time.naive_utc(),
                    db_client: h.client.clone(),
                    db_clock: h.clock.clone(),
                    history_id: change.history_id.as_str().to_string(),
                    version: v.version,
                    db_id: stored.id,
                    path: v.path.clone(),
                    kind: v.kind.as_str().into(),
                    status: v.status.as_str().into(),
                    size: Some(v.size),
                    content_checksum: v.content_checksum,
                    last_modified: Some(v.last_modified.naive_utc()),
                    updated: Some(v.updated.naive_utc()),
                    posix_perms: Some(v.posix_perms.clone()),
                    dos_attrs: Some(v.dos_attrs.clone()),
                    line: 0,
                    raw: String::new(),
                });
            }
        }
        rows
    }

    pub fn to_dump(&self) -> String {
        let mut out = Vec::new();
        out.push(create_table_line("DATABASEVERSION", &DATABASEVERSION_COLUMNS));
        for s in &self.versions {
            let h = &s.version.header;
            out.push(insert_line(
                "DATABASEVERSION",
                &[
                    SqlValue::Int(s.id as i64),
                    DB_STATUS_MASTER.into(),
                    fmt_time(&h.local_time).into(),
                    h.client.as_str().into(),
                    h.clock.serialize_text().into(),
                    s.object.as_str().into(),
                ],
            ));
        }
        out.push(create_table_line(FILEVERSION_TABLE, &FILEVERSION_COLUMNS));
        out.extend(self.fileversion_rows().iter().map(FileVersionRow::to_insert_line));
        out.push(create_table_line("FILECONTENT", &FILECONTENT_COLUMNS));
        for s in &self.versions {
            for c in &s.version.contents {
                let chunks: Vec<String> = c.chunks.iter().map(Sha1Digest::to_hex).collect();
                out.push(insert_line(
                    "FILECONTENT",
                    &[SqlValue::Int(s.id as i64), c.checksum.to_hex().into(), SqlValue::Int(c.size as i64), chunks.join(" ").into()],
                ));
            }
        }
        out.push(create_table_line("MULTICHUNK", &MULTICHUNK_COLUMNS));
        for s in &self.versions {
            for mc in &s.version.multichunks {
                let chunks: Vec<String> = mc.chunks.iter().map(|c| format!("{}:{}", c.checksum, c.length)).collect();
                out.push(insert_line(
                    "MULTICHUNK",
                    &[SqlValue::Int(s.id as i64), mc.id.to_hex().into(), chunks.join(" ").into()],
                ));
            }
        }
        out.push(create_table_line("KNOWN_DATABASE", &KNOWN_COLUMNS));
        for k in &self.known {
            out.push(insert_line("KNOWN_DATABASE", &[k.as_str().into()]));
        }
        let mut text = out.join("\n");
        text.push('\n');
        text
    }

    pub fn from_dump(dump: &str) -> Result<Self, ParseError> {
        let tables = read_sql_dump(dump)?;
        let mut db = LocalDatabase::default();
        let mut by_id: BTreeMap<u64, usize> = BTreeMap::new();

        if let Some(t) = table(&tables, "DATABASEVERSION", &DATABASEVERSION_COLUMNS)? {
            let idx = t.column_index();
            for row in &t.rows {
                let get = |c: &str| text(&row.values, &idx, c, "DATABASEVERSION", row.line);
                let id_text = get("ID")?;
                let id: u64 = id_text.parse().map_err(|_| corrupt("DATABASEVERSION", row.line, "ID", &id_text))?;
                let time = get("LOCALTIME")?;
                let local_time = NaiveDateTime::parse_from_str(&time, TIME_FORMAT)
                    .map_err(|_| corrupt("DATABASEVERSION", row.line, "LOCALTIME", &time))?
                    .and_utc();
                let client = get("CLIENT")?;
                let clock = get("VECTORCLOCK_SERIALIZED")?;
                by_id.insert(id, db.versions.len());
                db.versions.push(StoredVersion {
                    id,
                    object: get("OBJECT_NAME")?,
                    version: DatabaseVersion {
                        header: DatabaseVersionHeader {
                            client: MachineName::parse_lenient(&client)
                                .map_err(|_| corrupt("DATABASEVERSION", row.line, "CLIENT", &client))?,
                            local_time,
                            clock: VectorClock::parse_text(&clock)
                                .map_err(|_| corrupt("DATABASEVERSION", row.line, "VECTORCLOCK_SERIALIZED", &clock))?,
                        },
                        changes: Vec::new(),
                        contents: Vec::new(),
                        multichunks: Vec::new(),
                    },
                });
            }
        }

        let rows = if tables.iter().any(|t| t.name == FILEVERSION_TABLE) {
            crate::parsers::local_db::parse_local_db(dump)?
        } else {
            Vec::new()
        };
        for row in rows {
            let slot = *by_id
                .get(&row.db_id)
                .ok_or_else(|| corrupt(FILEVERSION_TABLE, row.line, "DATABASEVERSION_ID", &row.db_id.to_string()))?;
            let missing = |c: &str| corrupt(FILEVERSION_TABLE, row.line, c, "NULL");
            let version = FileVersion {
                version: row.version,
                path: row.path.clone(),
                kind: row.file_type().ok_or_else(|| corrupt(FILEVERSION_TABLE, row.line, "TYPE", &row.kind))?,
                status: row.file_status().ok_or_else(|| corrupt(FILEVERSION_TABLE, row.line, "STATUS", &row.status))?,
                size: row.size.ok_or_else(|| missing("SIZE"))?,
                last_modified: row.last_modified.ok_or_else(|| missing("LASTMODIFIED"))?.and_utc(),
                updated: row.updated.ok_or_else(|| missing("UPDATED"))?.and_utc(),
                content_checksum: row.content_checksum,
                posix_perms: row.posix_perms.clone().unwrap_or_default(),
                dos_attrs: row.dos_attrs.clone().unwrap_or_default(),
            };
            db.versions[slot]
                .version
                .changes
                .push(FileChange { history_id: HistoryId(row.history_id.clone()), version });
        }

        if let Some(t) = table(&tables, "FILECONTENT", &FILECONTENT_COLUMNS)? {
            let idx = t.column_index();
            for row in &t.rows {
                let get = |c: &str| text(&row.values, &idx, c, "FILECONTENT", row.line);
                let slot = Self::slot(&by_id, &get("DATABASEVERSION_ID")?, "FILECONTENT", row.line)?;
                let checksum = get("CHECKSUM")?;
                let size = get("SIZE")?;
                let chunks = row
                    .values
                    .get(idx["CHUNKS"])
                    .and_then(SqlValue::as_text)
                    .unwrap_or_default()
                    .split_whitespace()
                    .map(|h| Sha1Digest::from_hex(h).map_err(|_| corrupt("FILECONTENT", row.line, "CHUNKS", h)))
                    .collect::<Result<Vec<_>, _>>()?;
                db.versions[slot].version.contents.push(FileContent {
                    checksum: Sha1Digest::from_hex(&checksum).map_err(|_| corrupt("FILECONTENT", row.line, "CHECKSUM", &checksum))?,
                    size: size.parse().map_err(|_| corrupt("FILECONTENT", row.line, "SIZE", &size))?,
                    chunks,
                });
            }
        }

        if let Some(t) = table(&tables, "MULTICHUNK", &MULTICHUNK_COLUMNS)? {
            let idx = t.column_index();
            for row in &t.rows {
                let get = |c: &str| text(&row.values, &idx, c, "MULTICHUNK", row.line);
                let slot = Self::slot(&by_id, &get("DATABASEVERSION_ID")?, "MULTICHUNK", row.line)?;
                let id = get("ID")?;
                let chunks = get("CHUNKS")?
                    .split_whitespace()
                    .map(|member| {
                        let bad = || corrupt("MULTICHUNK", row.line, "CHUNKS", member);
                        let (h, len) = member.split_once(':').ok_or_else(bad)?;
                        Ok(ChunkRef {
                            checksum: Sha1Digest::from_hex(h).map_err(|_| bad())?,
                            length: len.parse().map_err(|_| bad())?,
                        })
                    })
                    .collect::<Result<Vec<_>, ParseError>>()?;
                db.versions[slot].version.multichunks.push(MultiChunk {
                    id: Sha1Digest::from_hex(&id).map_err(|_| corrupt("MULTICHUNK", row.line, "ID", &id))?,
                    chunks,
                });
            }
        }

        if let Some(t) = table(&tables, "KNOWN_DATABASE", &KNOWN_COLUMNS)? {
            let idx = t.column_index();
            for row in &t.rows {
                db.known.insert(text(&row.values, &idx, "NAME", "KNOWN_DATABASE", row.line)?);
            }
        }
        Ok(db)
    }

    fn slot(by_id: &BTreeMap<u64, usize>, id: &str, table: &str, line: usize) -> Result<usize, ParseError> {
        id.parse::<u64>()
            .ok()
            .and_then(|i| by_id.get(&i).copied())
            .ok_or_else(|| corrupt(table, line, "DATABASEVERSION_ID", id))
    }

    /// Missing file reads as an empty database.
    pub fn load(path: &Path) -> std::io::Result<Result<Self, ParseError>> {
        match fs::read_to_string(path) {
            Ok(text) => Ok(Self::from_dump(&text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Ok(Self::default())),
            Err(e) => Err(e),
        }
    }

    /// Writes a new file next to the old one, then renames it into place.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        write_atomic(path, self.to_dump().as_bytes())
    }
}

pub fn write_atomic(path: &Path, data: &[u8]) -> std::io::Result<()> {
    let parent = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = parent.join(format!(".{name}.{}.tmp", rand::random::<u32>()));
    fs::write(&tmp, data)?;
    fs::rename(&tmp, path)
}
