//! The local metadata database: a plain-text, SQL-script style table dump
//! (`CREATE TABLE` headers followed by one `INSERT` per row), plus generic
//! delimited exports of the `FILEVERSION_FULL` view.

use std::collections::HashMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::ParseError;
use crate::model::{FileStatus, FileType, MachineName, Sha1Digest, VectorClock};

pub const FILEVERSION_TABLE: &str = "FILEVERSION_FULL";

/// Column order of the `FILEVERSION_FULL` view. The first ten are mandatory.
pub const FILEVERSION_COLUMNS: [&str; 16] = [
    "DATABASEVERSION_STATUS",
    "DATABASEVERSION_LOCALTIME",
    "DATABASEVERSION_CLIENT",
    "DATABASEVERSION_VECTORCLOCK_SERIALIZED",
    "FILEHISTORY_ID",
    "VERSION",
    "DATABASEVERSION_ID",
    "PATH",
    "TYPE",
    "STATUS",
    "SIZE",
    "FILECONTENT_CHECKSUM",
    "LASTMODIFIED",
    "UPDATED",
    "POSIXPERMS",
    "DOSATTRS",
];
const REQUIRED_COLUMNS: usize = 10;
const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SqlValue {
    Null,
    Int(i64),
    Text(String),
}

impl SqlValue {
    pub fn as_text(&self) -> Option<String> {
        match self {
            SqlValue::Null => None,
            SqlValue::Int(i) => Some(i.to_string()),
            SqlValue::Text(t) => Some(t.clone()),
        }
    }

    pub fn render(&self) -> String {
        match self {
            SqlValue::Null => "NULL".into(),
            SqlValue::Int(i) => i.to_string(),
            SqlValue::Text(t) => format!("'{}'", t.replace('\'', "''")),
        }
    }
}

impl From<&str> for SqlValue {
    fn from(s: &str) -> Self {
        SqlValue::Text(s.to_string())
    }
}

impl From<String> for SqlValue {
    fn from(s: String) -> Self {
        SqlValue::Text(s)
    }
}

impl<T: Into<SqlValue>> From<Option<T>> for SqlValue {
    fn from(v: Option<T>) -> Self {
        v.map(Into::into).unwrap_or(SqlValue::Null)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SqlRow {
    pub line: usize,
    pub values: Vec<SqlValue>,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SqlTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<SqlRow>,
}

impl SqlTable {
    pub fn column_index(&self) -> HashMap<&str, usize> {
        self.columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect()
    }
}

pub fn create_table_line(name: &str, columns: &[&str]) -> String {
    format!("CREATE TABLE {name} ({})", columns.join(", "))
}

pub fn insert_line(name: &str, values: &[SqlValue]) -> String {
    let rendered: Vec<String> = values.iter().map(SqlValue::render).collect();
    format!("INSERT INTO {name} VALUES({})", rendered.join(","))
}

/// Parses the `VALUES(...)` list of one INSERT.
pub fn parse_values(text: &str, line: usize) -> Result<Vec<SqlValue>, ParseError> {
    let bad = |why: &str| ParseError::InvalidValue {
        line,
        column: "VALUES".into(),
        value: why.to_string(),
    };
    let mut values = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    loop {
        while i < bytes.len() && bytes[i] == b' ' {
            i += 1;
        }
        if i >= bytes.len() {
            return Err(bad("unterminated value list"));
        }
        if bytes[i] == b'\'' {
            let mut s = String::new();
            i += 1;
            let mut start = i;
            loop {
                match text[i..].find('\'') {
                    None => return Err(bad("unterminated string")),
                    Some(off) => {
                        s.push_str(&text[start..i + off]);
                        i += off + 1;
                        if bytes.get(i) == Some(&b'\'') {
                            s.push('\'');
                            i += 1;
                            start = i;
                        } else {
                            break;
                        }
                    }
                }
            }
            values.push(SqlValue::Text(s));
        } else {
            let end = text[i..]
                .find([',', ')'])
                .map(|o| i + o)
                .ok_or_else(|| bad("unterminated value list"))?;
            let token = text[i..end].trim();
            if token.eq_ignore_ascii_case("NULL") {
                values.push(SqlValue::Null);
            } else {
                values.push(SqlValue::Int(token.parse().map_err(|_| bad(token))?));
            }
            i = end;
        }
        while i < bytes.len() && bytes[i] == b' ' {
            i += 1;
        }
        match bytes.get(i) {
            Some(b',') => i += 1,
            Some(b')') => return Ok(values),
            _ => return Err(bad("expected ',' or ')'")),
        }
    }
}

/// Reads every table of an SQL-script dump.
pub fn read_sql_dump(text: &str) -> Result<Vec<SqlTable>, ParseError> {
    let mut tables: Vec<SqlTable> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with("--") {
            continue;
        }
        if let Some(rest) = line.strip_prefix("CREATE TABLE ") {
            let (name, cols) = rest
                .split_once('(')
                .ok_or_else(|| ParseError::MalformedRow { line: line_no, reason: "CREATE TABLE without columns".into() })?;
            let cols = cols.trim_end().trim_end_matches(')');
            tables.push(SqlTable {
                name: name.trim().to_string(),
                columns: cols.split(',').map(|c| c.trim().to_string()).collect(),
                rows: Vec::new(),
            });
        } else if let Some(rest) = line.strip_prefix("INSERT INTO ") {
            let (name, values) = rest
                .split_once(" VALUES(")
                .ok_or_else(|| ParseError::MalformedRow { line: line_no, reason: "INSERT without VALUES(".into() })?;
            let table = tables
                .iter_mut()
                .rev()
                .find(|t| t.name == name.trim())
                .ok_or_else(|| ParseError::UnknownTable(name.trim().to_string()))?;
            let values = parse_values(values, line_no)?;
            if values.len() != table.columns.len() {
                return Err(ParseError::RowArityMismatch {
                    line: line_no,
                    expected: table.columns.len(),
                    found: values.len(),
                });
            }
            table.rows.push(SqlRow { line: line_no, values, raw: raw_line.to_string() });
        } else {
            return Err(ParseError::MalformedRow { line: line_no, reason: "neither CREATE TABLE nor INSERT".into() });
        }
    }
    Ok(tables)
}

/// One row of the `FILEVERSION_FULL` view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileVersionRow {
    pub db_status: String,
    pub db_local_time: NaiveDateTime,
    pub db_client: MachineName,
    pub db_clock: VectorClock,
    pub history_id: String,
    pub version: u32,
    pub db_id: u64,
    pub path: String,
    /// Raw vocabulary; see [`FileVersionRow::file_type`].
    pub kind: String,
    pub status: String,
    pub size: Option<u64>,
    pub content_checksum: Option<Sha1Digest>,
    pub last_modified: Option<NaiveDateTime>,
    pub updated: Option<NaiveDateTime>,
    pub posix_perms: Option<String>,
    pub dos_attrs: Option<String>,
    pub line: usize,
    pub raw: String,
}

impl FileVersionRow {
    pub fn file_type(&self) -> Option<FileType> {
        self.kind.parse().ok()
    }

    pub fn file_status(&self) -> Option<FileStatus> {
        self.status.parse().ok()
    }

    pub fn sql_values(&self) -> Vec<SqlValue> {
        let time = |t: &NaiveDateTime| t.format(TIME_FORMAT).to_string();
        vec![
            self.db_status.as_str().into(),
            time(&self.db_local_time).into(),
            self.db_client.as_str().into(),
            self.db_clock.serialize_text().into(),
            self.history_id.as_str().into(),
            SqlValue::Int(self.version as i64),
            SqlValue::Int(self.db_id as i64),
            self.path.as_str().into(),
            self.kind.as_str().into(),
            self.status.as_str().into(),
            self.size.map(|s| SqlValue::Int(s as i64)).unwrap_or(SqlValue::Null),
            self.content_checksum.map(|c| c.to_hex()).into(),
            self.last_modified.as_ref().map(time).into(),
            self.updated.as_ref().map(time).into(),
            self.posix_perms.clone().into(),
            self.dos_attrs.clone().into(),
        ]
    }

    pub fn to_insert_line(&self) -> String {
        insert_line(FILEVERSION_TABLE, &self.sql_values())
    }

    /// Builds a row from named cells. `cells` yields (column, value) pairs.
    fn from_cells(cells: &HashMap<String, Option<String>>, line: usize, raw: &str) -> Result<Self, ParseError> {
        let get = |col: &str| cells.get(col).cloned().flatten();
        let need = |col: &str| {
            get(col).ok_or_else(|| ParseError::InvalidValue {
                line,
                column: col.to_string(),
                value: "NULL".into(),
            })
        };
        let invalid = |col: &str, v: &str| ParseError::InvalidValue {
            line,
            column: col.to_string(),
            value: v.to_string(),
        };
        let time = |col: &str, v: &str| {
            NaiveDateTime::parse_from_str(v, TIME_FORMAT)
                .or_else(|_| NaiveDateTime::parse_from_str(v, "%Y-%m-%d %H:%M:%S%.f"))
                .map_err(|_| invalid(col, v))
        };
        let opt_time = |col: &str| get(col).map(|v| time(col, &v)).transpose();

        let local_time = need("DATABASEVERSION_LOCALTIME")?;
        let client = need("DATABASEVERSION_CLIENT")?;
        let clock = need("DATABASEVERSION_VECTORCLOCK_SERIALIZED")?;
        let version = need("VERSION")?;
        let db_id = need("DATABASEVERSION_ID")?;
        Ok(FileVersionRow {
            db_status: need("DATABASEVERSION_STATUS")?,
            db_local_time: time("DATABASEVERSION_LOCALTIME", &local_time)?,
            db_client: MachineName::parse_lenient(&client).map_err(|_| invalid("DATABASEVERSION_CLIENT", &client))?,
            db_clock: VectorClock::parse_text(&clock)
                .map_err(|_| invalid("DATABASEVERSION_VECTORCLOCK_SERIALIZED", &clock))?,
            history_id: need("FILEHISTORY_ID")?,
            version: version.parse().map_err(|_| invalid("VERSION", &version))?,
            db_id: db_id.parse().map_err(|_| invalid("DATABASEVERSION_ID", &db_id))?,
            path: need("PATH")?,
            kind: need("TYPE")?,
            status: need("STATUS")?,
            size: get("SIZE")
                .map(|v| v.parse().map_err(|_| invalid("SIZE", &v)))
                .transpose()?,
            content_checksum: get("FILECONTENT_CHECKSUM")
                .map(|v| Sha1Digest::from_hex(&v).map_err(|_| invalid("FILECONTENT_CHECKSUM", &v)))
                .transpose()?,
            last_modified: opt_time("LASTMODIFIED")?,
            updated: opt_time("UPDATED")?,
            posix_perms: get("POSIXPERMS"),
            dos_attrs: get("DOSATTRS"),
            line,
            raw: raw.to_string(),
        })
    }
}

fn check_columns(columns: &[String]) -> Result<(), ParseError> {
    for c in columns {
        if !FILEVERSION_COLUMNS.contains(&c.as_str()) {
            return Err(ParseError::UnknownColumn(c.clone()));
        }
    }
    for required in &FILEVERSION_COLUMNS[..REQUIRED_COLUMNS] {
        if !columns.iter().any(|c| c == required) {
            return Err(ParseError::MissingColumn(required.to_string()));
        }
    }
    Ok(())
}

/// Parses `FILEVERSION_FULL` rows from either the engine's SQL-style dump or
/// a delimited export (tab or comma) whose first line is a header row.
pub fn parse_local_db(text: &str) -> Result<Vec<FileVersionRow>, ParseError> {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with("--"));
    let Some(first) = first else {
        return Ok(Vec::new());
    };
    if first.starts_with("CREATE TABLE") || first.starts_with("INSERT INTO") {
        let tables = read_sql_dump(text)?;
        let Some(table) = tables.iter().find(|t| t.name == FILEVERSION_TABLE) else {
            return Ok(Vec::new());
        };
        check_columns(&table.columns)?;
        table
            .rows
            .iter()
            .map(|row| {
                let cells = table
                    .columns
                    .iter()
                    .cloned()
                    .zip(row.values.iter().map(SqlValue::as_text))
                    .collect();
                FileVersionRow::from_cells(&cells, row.line, &row.raw)
            })
            .collect()
    } else {
        parse_delimited(text, if first.contains('\t') { b'\t' } else { b',' })
    }
}

/// Decodes one headerless row in the standard column order: either an
/// `INSERT INTO FILEVERSION_FULL VALUES(...)` line or a tab-separated line
/// with at least the ten required columns.
pub fn decode_row_line(line: &str) -> Option<FileVersionRow> {
    let line = line.trim_matches(|c: char| c.is_whitespace() || c == '\0');
    let cells: Vec<Option<String>> = if let Some(i) = line.find(" VALUES(") {
        if !line[..i].trim_end().ends_with(FILEVERSION_TABLE) {
            return None;
        }
        parse_values(&line[i + 8..], 0).ok()?.iter().map(SqlValue::as_text).collect()
    } else {
        line.split('\t')
            .map(|v| {
                let v = v.trim();
                (!v.is_empty() && !v.eq_ignore_ascii_case("NULL")).then(|| v.to_string())
            })
            .collect()
    };
    if cells.len() < REQUIRED_COLUMNS || cells.len() > FILEVERSION_COLUMNS.len() {
        return None;
    }
    let named = FILEVERSION_COLUMNS.iter().map(|c| c.to_string()).zip(cells).collect();
    FileVersionRow::from_cells(&named, 0, line).ok()
}

fn parse_delimited(text: &str, delimiter: u8) -> Result<Vec<FileVersionRow>, ParseError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .has_headers(true)
        .quoting(delimiter == b',')
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| ParseError::MalformedRow { line: 1, reason: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    check_columns(&header)?;
    let lines: Vec<&str> = text.lines().collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| ParseError::MalformedRow { line: 0, reason: e.to_string() })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if record.len() != header.len() {
            return Err(ParseError::RowArityMismatch { line, expected: header.len(), found: record.len() });
        }
        let cells = header
            .iter()
            .cloned()
            .zip(record.iter().map(|v| {
                let v = v.trim();
                (!v.is_empty() && !v.eq_ignore_ascii_case("NULL")).then(|| v.to_string())
            }))
            .collect();
        let raw = lines.get(line.saturating_sub(1)).copied().unwrap_or_default();
        rows.push(FileVersionRow::from_cells(&cells, line, raw)?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_grammar() {
        let v = parse_values("'a''b',1,NULL, 'x,y')", 1).unwrap();
        assert_eq!(
            v,
            vec![
                SqlValue::Text("a'b".into()),
                SqlValue::Int(1),
                SqlValue::Null,
                SqlValue::Text("x,y".into())
            ]
        );
        assert!(parse_values("'abc", 1).is_err());
        assert!(parse_values("1,2", 1).is_err());
        assert!(parse_values("abc)", 1).is_err());
    }

    #[test]
    fn header_only() {
        let header = FILEVERSION_COLUMNS[..10].join("\t");
        assert!(parse_local_db(&header).unwrap().is_empty());
        assert!(parse_local_db("").unwrap().is_empty());
        let sql = create_table_line(FILEVERSION_TABLE, &FILEVERSION_COLUMNS);
        assert!(parse_local_db(&sql).unwrap().is_empty());
    }

    #[test]
    fn unknown_column() {
        let header = format!("{}\tBOGUS", FILEVERSION_COLUMNS[..10].join("\t"));
        assert_eq!(parse_local_db(&header), Err(ParseError::UnknownColumn("BOGUS".into())));
    }

    #[test]
    fn arity_mismatch_reports_line() {
        let text = format!(
            "{}\nMASTER\t2015-10-01 18:52:38\tA\t(A1)\tid\t1\t0\tp\tFILE\tNEW\nMASTER\t2015-10-01 18:52:38\tA\n",
            FILEVERSION_COLUMNS[..10].join("\t")
        );
        assert_eq!(
            parse_local_db(&text),
            Err(ParseError::RowArityMismatch { line: 3, expected: 10, found: 3 })
        );
    }

    #[test]
    fn sql_round_trip() {
        let text = format!(
            "{}\nMASTER\t2015-10-01 18:52:38\tUYCrwWXGKvboYKZBGc\t(UYCrwWXGKvboYKZBGc1)\t8509cfe7c5b1f82e3050aade57c8f0745de5c6\t1\t0\t.sygnore\tFILE\tNEW\n",
            FILEVERSION_COLUMNS[..10].join("\t")
        );
        let rows = parse_local_db(&text).unwrap();
        let mut dump = create_table_line(FILEVERSION_TABLE, &FILEVERSION_COLUMNS);
        dump.push('\n');
        dump.push_str(&rows[0].to_insert_line());
        let back = parse_local_db(&dump).unwrap();
        assert_eq!(back.len(), 1);
        let (mut a, mut b) = (rows[0].clone(), back[0].clone());
        a.line = 0;
        a.raw.clear();
        b.line = 0;
        b.raw.clear();
        assert_eq!(a, b);
    }

    #[test]
    fn headerless_rows() {
        let tsv = "MASTER\t2015-10-01 18:52:38\tA\t(A1)\tid\t1\t0\tp\tFILE\tNEW";
        let row = decode_row_line(tsv).unwrap();
        assert_eq!(row.path, "p");
        let sql = row.to_insert_line();
        assert_eq!(decode_row_line(&sql).unwrap().path, "p");
        assert!(decode_row_line("MASTER\tA\tB").is_none());
        assert!(decode_row_line("INSERT INTO OTHER VALUES(1)").is_none());
    }

    #[test]
    fn insert_into_unknown_table() {
        assert_eq!(
            read_sql_dump("INSERT INTO NOPE VALUES(1)"),
            Err(ParseError::UnknownTable("NOPE".into()))
        );
    }
}
