//! Signature carving over raw blobs: folder `config.xml` documents and
//! `FILEVERSION_FULL` rows near a known machine name.

use std::io::{self, Read};

use memchr::memmem;
use serde::{Deserialize, Serialize};

use crate::model::MachineName;
use crate::parsers::config::parse_folder_config;
use crate::parsers::local_db::decode_row_line;
use crate::parsers::FileVersionRow;

pub const CONFIG_HEADER: &[u8] = b"<config>";
pub const CONFIG_FOOTER: &[u8] = b"</config>";
/// A candidate's footer must end within this many bytes of its header.
pub const CONFIG_WINDOW: usize = 64 * 1024;
/// Bound on how far a row scan looks either side of a machine name.
pub const ROW_REACH: usize = 4096;
const STREAM_BLOCK: usize = 8 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CarveKind {
    ConfigXml,
    FileversionRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    /// The payload decodes as the artifact it claims to be.
    Strong,
    /// Signature seen, payload does not decode.
    Weak,
}

/// Invariant: `blob[offset..offset + length] == payload`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarveHit {
    pub offset: usize,
    pub length: usize,
    #[serde(with = "payload_text")]
    pub payload: Vec<u8>,
    pub kind: CarveKind,
    pub strength: Strength,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<FileVersionRow>,
}

/// Payloads are text in practice; non-UTF-8 payloads fall back to hex.
pub(crate) mod payload_text {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(rename_all = "lowercase")]
    enum Repr {
        Text(String),
        Hex(String),
    }

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        match std::str::from_utf8(bytes) {
            Ok(t) => Repr::Text(t.to_string()),
            Err(_) => Repr::Hex(hex::encode(bytes)),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Text(t) => Ok(t.into_bytes()),
            Repr::Hex(h) => hex::decode(h).map_err(serde::de::Error::custom),
        }
    }
}

impl CarveHit {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("hits serialize")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarveResult {
    pub strong: Vec<CarveHit>,
    pub weak: Vec<CarveHit>,
}

impl CarveResult {
    pub fn all(&self) -> impl Iterator<Item = &CarveHit> {
        self.strong.iter().chain(&self.weak)
    }

    fn sort(&mut self) {
        self.strong.sort_by_key(|h| h.offset);
        self.weak.sort_by_key(|h| h.offset);
    }
}

fn weak(offset: usize, payload: &[u8], kind: CarveKind, note: &str) -> CarveHit {
    CarveHit {
        offset,
        length: payload.len(),
        payload: payload.to_vec(),
        kind,
        strength: Strength::Weak,
        note: Some(note.to_string()),
        row: None,
    }
}

/// Judges the candidate starting at `window[0]`; `window` is the blob from
/// the header up to `CONFIG_WINDOW` bytes.
fn evaluate_config(offset: usize, window: &[u8]) -> CarveHit {
    let Some(end) = memmem::find(window, CONFIG_FOOTER).map(|f| f + CONFIG_FOOTER.len()) else {
        return weak(offset, CONFIG_HEADER, CarveKind::ConfigXml, "no footer within window");
    };
    let payload = &window[..end];
    let parsed = std::str::from_utf8(payload).ok().map(parse_folder_config);
    match parsed {
        Some(Ok(_)) => CarveHit {
            offset,
            length: end,
            payload: payload.to_vec(),
            kind: CarveKind::ConfigXml,
            strength: Strength::Strong,
            note: None,
            row: None,
        },
        Some(Err(e)) => weak(offset, payload, CarveKind::ConfigXml, &e.to_string()),
        None => weak(offset, payload, CarveKind::ConfigXml, "not UTF-8"),
    }
}

/// Greedy non-overlap: a header inside an accepted strong hit is skipped.
#[derive(Default)]
struct Merger {
    cursor: usize,
    result: CarveResult,
}

impl Merger {
    fn push(&mut self, hit: CarveHit) {
        if hit.offset < self.cursor {
            return;
        }
        match hit.strength {
            Strength::Strong => {
                self.cursor = hit.offset + hit.length;
                self.result.strong.push(hit);
            }
            Strength::Weak => self.result.weak.push(hit),
        }
    }
}

fn config_candidates(blob: &[u8], from: usize, to: usize) -> Vec<CarveHit> {
    let scan_end = (to + CONFIG_HEADER.len() - 1).min(blob.len());
    memmem::find_iter(&blob[from..scan_end], CONFIG_HEADER)
        .map(|h| {
            let offset = from + h;
            evaluate_config(offset, &blob[offset..(offset + CONFIG_WINDOW).min(blob.len())])
        })
        .collect()
}

/// Finds every non-overlapping `<config>`..`</config>` region whose footer
/// lies within `CONFIG_WINDOW` of its header.
pub fn carve_configs(blob: &[u8]) -> CarveResult {
    carve_configs_parallel(blob, 1)
}

/// Same result as [`carve_configs`], with candidate evaluation split across
/// `threads` partitions. Partitions read up to one window past their seam.
pub fn carve_configs_parallel(blob: &[u8], threads: usize) -> CarveResult {
    let threads = threads.max(1);
    let part = blob.len().div_ceil(threads).max(1);
    let seams: Vec<(usize, usize)> =
        (0..blob.len()).step_by(part).map(|s| (s, (s + part).min(blob.len()))).collect();
    let candidates: Vec<CarveHit> = if seams.len() <= 1 {
        config_candidates(blob, 0, blob.len())
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = seams
                .iter()
                .map(|&(from, to)| scope.spawn(move || config_candidates(blob, from, to)))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("carve worker panicked")).collect()
        })
    };
    let mut merger = Merger::default();
    for hit in candidates {
        merger.push(hit);
    }
    merger.result
}

/// Streaming form of [`carve_configs`] for inputs larger than memory.
pub fn carve_configs_reader<R: Read>(mut reader: R) -> io::Result<CarveResult> {
    let mut buf: Vec<u8> = Vec::new();
    let mut base = 0usize;
    let mut merger = Merger::default();
    let mut eof = false;
    while !eof {
        let target = buf.len() + STREAM_BLOCK;
        while buf.len() < target {
            let before = buf.len();
            buf.resize(target, 0);
            let n = reader.read(&mut buf[before..])?;
            buf.truncate(before + n);
            if n == 0 {
                eof = true;
                break;
            }
        }
        // Headers before `limit` have their whole window buffered.
        let limit = if eof { buf.len() } else { buf.len().saturating_sub(CONFIG_WINDOW) };
        for mut hit in config_candidates(&buf, 0, limit) {
            hit.offset += base;
            merger.push(hit);
        }
        buf.drain(..limit);
        base += limit;
    }
    Ok(merger.result)
}

fn line_bounds(blob: &[u8], at: usize, len: usize) -> (usize, usize) {
    let is_sep = |b: &u8| *b == b'\n' || *b == 0;
    let lo = at.saturating_sub(ROW_REACH);
    let start = blob[lo..at].iter().rposition(is_sep).map(|p| lo + p + 1).unwrap_or(lo);
    let hi = (at + len + ROW_REACH).min(blob.len());
    let end = blob[at + len..hi].iter().position(is_sep).map(|p| at + len + p).unwrap_or(hi);
    let end = if end > start && blob[end - 1] == b'\r' { end - 1 } else { end };
    (start, end)
}

/// Decodes the line around every occurrence of `machine` as a
/// `FILEVERSION_FULL` row. Lines holding several occurrences yield one hit.
pub fn scan_fileversion_strings(blob: &[u8], machine: &MachineName) -> CarveResult {
    let needle = machine.as_str().as_bytes();
    let mut result = CarveResult::default();
    let mut last_line: Option<(usize, usize)> = None;
    for at in memmem::find_iter(blob, needle) {
        if let Some((s, e)) = last_line {
            if at >= s && at < e {
                continue;
            }
        }
        let (start, end) = line_bounds(blob, at, needle.len());
        let line = &blob[start..end];
        let row = std::str::from_utf8(line).ok().and_then(decode_row_line);
        match row {
            Some(row) => {
                last_line = Some((start, end));
                result.strong.push(CarveHit {
                    offset: start,
                    length: line.len(),
                    payload: line.to_vec(),
                    kind: CarveKind::FileversionRow,
                    strength: Strength::Strong,
                    note: None,
                    row: Some(row),
                });
            }
            None => result.weak.push(weak(at, needle, CarveKind::FileversionRow, "no decodable row around name")),
        }
    }
    result.sort();
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore, SeedableRng};

    const CONFIG: &str = "<config>\n   <machineName>UYCrwWXGKvboYKZBGc</machineName>\n   <displayName>ubuntu</displayName>\n   <connection type=\"webdav\">\n      <url>http://10.0.0.1/webdav/Repo</url>\n   </connection>\n</config>";

    fn random_blob(len: usize, seed: u64) -> Vec<u8> {
        let mut blob = vec![0u8; len];
        rand::rngs::StdRng::seed_from_u64(seed).fill_bytes(&mut blob);
        blob
    }

    #[test]
    fn single_plant() {
        let mut blob = random_blob(1 << 20, 1);
        blob[4096..4096 + CONFIG.len()].copy_from_slice(CONFIG.as_bytes());
        let r = carve_configs(&blob);
        assert_eq!(r.strong.len(), 1);
        assert_eq!(r.strong[0].offset, 4096);
        assert_eq!(r.strong[0].payload, CONFIG.as_bytes());
    }

    #[test]
    fn empty_and_missing_footer() {
        assert_eq!(carve_configs(&[]), CarveResult::default());
        let mut blob = vec![b'x'; CONFIG_WINDOW * 2];
        blob[10..18].copy_from_slice(CONFIG_HEADER);
        blob[10 + CONFIG_WINDOW + 5..10 + CONFIG_WINDOW + 14].copy_from_slice(CONFIG_FOOTER);
        let r = carve_configs(&blob);
        assert!(r.strong.is_empty());
        assert_eq!(r.weak.len(), 1);
    }

    #[test]
    fn unparseable_candidate_is_weak() {
        let r = carve_configs(b"..<config><nothing/></config>..");
        assert!(r.strong.is_empty());
        assert_eq!(r.weak.len(), 1);
        assert_eq!(r.weak[0].payload, b"<config><nothing/></config>");
    }

    #[test]
    fn parallel_and_streaming_agree() {
        let mut blob = random_blob(3 << 20, 2);
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let mut at = 0;
        let mut planted = Vec::new();
        while at + CONFIG.len() * 2 < blob.len() {
            at += rng.gen_range(CONFIG.len()..200_000);
            if at + CONFIG.len() > blob.len() {
                break;
            }
            blob[at..at + CONFIG.len()].copy_from_slice(CONFIG.as_bytes());
            planted.push(at);
            at += CONFIG.len();
        }
        let seq = carve_configs(&blob);
        assert_eq!(seq.strong.iter().map(|h| h.offset).collect::<Vec<_>>(), planted);
        for threads in [2, 3, 7, 64] {
            assert_eq!(carve_configs_parallel(&blob, threads), seq);
        }
        assert_eq!(carve_configs_reader(&blob[..]).unwrap(), seq);
    }

    #[test]
    fn hit_json_round_trip() {
        let r = carve_configs(CONFIG.as_bytes());
        let line = r.strong[0].to_json_line();
        let back: CarveHit = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r.strong[0]);
    }

    #[test]
    fn fileversion_rows() {
        let machine = MachineName::parse_lenient("UYCrwWXGKvboYKZBGc").unwrap();
        let row = "MASTER\t2015-10-01 19:26:14\tUYCrwWXGKvboYKZBGc\t(UYCrwWXGKvboYKZBGc2)\t9bec78b6de240d0f15e7469e72b77c6bf163bd55\t1\t1\tEnron3111.txt\tFILE\tNEW";
        let mut blob = random_blob(10_000, 4);
        blob[100] = 0;
        blob[101..101 + row.len()].copy_from_slice(row.as_bytes());
        blob[101 + row.len()] = b'\n';
        let r = scan_fileversion_strings(&blob, &machine);
        assert_eq!(r.strong.len(), 1);
        assert_eq!(r.strong[0].offset, 101);
        assert_eq!(r.strong[0].row.as_ref().unwrap().path, "Enron3111.txt");
        assert!(scan_fileversion_strings(&random_blob(10_000, 5), &machine).strong.is_empty());
        let text = b"note: UYCrwWXGKvboYKZBGc was here\n";
        let r = scan_fileversion_strings(text, &machine);
        assert!(r.strong.is_empty());
        assert_eq!(r.weak.len(), 1);
    }
}
