use std::fs;
use std::io::Write;
use std::path::Path;

use super::vocab::{KC_AS_QUESTION, QUESTION_AS_KC};
use super::{Dataset, DatasetKind, InteractionRecord, VocabMaps};
use crate::error::{Error, Result};

/// Canonical header of an interaction file.
pub const HEADER: [&str; 5] = ["student_id", "question_id", "kc_ids", "response", "order_key"];

/// One row of the canonical interaction file with raw (string) identifiers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRow {
    pub student_id: String,
    pub question_id: Option<String>,
    pub kc_ids: Vec<String>,
    pub response: u8,
    pub order_key: i64,
    /// 1-based source line, for error messages.
    pub line: usize,
}

pub(crate) fn parse_response(value: &str, line: usize) -> Result<u8> {
    match value.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::InvalidResponse { line, value: other.to_string() }),
    }
}

pub(crate) fn parse_order_key(value: &str, line: usize) -> Result<i64> {
    value.trim().parse().map_err(|_| Error::Parse { line, msg: format!("order_key {value:?} is not an integer") })
}

pub(crate) fn split_ids(field: &str, sep: char) -> Vec<String> {
    field.split(sep).map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

/// Reads a canonical interaction file. An empty file yields no rows.
pub fn read_rows(path: &Path) -> Result<Vec<RawRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rows(&text)
}

pub(crate) fn parse_rows(text: &str) -> Result<Vec<RawRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Ok(Vec::new());
    }
    if header.iter().map(str::trim).ne(HEADER.iter().copied()) {
        return Err(Error::Parse { line: 1, msg: format!("expected header {}", HEADER.join(",")) });
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != HEADER.len() {
            return Err(Error::Parse { line, msg: format!("expected {} columns, got {}", HEADER.len(), rec.len()) });
        }
        let student_id = rec[0].trim().to_string();
        if student_id.is_empty() {
            return Err(Error::Parse { line, msg: "empty student_id".into() });
        }
        let question_id = Some(rec[1].trim()).filter(|s| !s.is_empty()).map(String::from);
        let kc_ids = split_ids(&rec[2], ';');
        if question_id.is_none() && kc_ids.is_empty() {
            return Err(Error::Parse { line, msg: "row has neither question_id nor kc_ids".into() });
        }
        rows.push(RawRow {
            student_id,
            question_id,
            kc_ids,
            response: parse_response(&rec[3], line)?,
            order_key: parse_order_key(&rec[4], line)?,
            line,
        });
    }
    Ok(rows)
}

/// Writes rows in the canonical format.
pub fn write_rows(path: &Path, rows: &[RawRow]) -> Result<()> {
    let mut out = HEADER.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.student_id,
            r.question_id.as_deref().unwrap_or(""),
            r.kc_ids.join(";"),
            r.response,
            r.order_key
        ));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Parses `path` and groups its records per student (see [`ingest_rows`]).
pub fn ingest(path: &Path, vocab: Option<&VocabMaps>) -> Result<Dataset> {
    ingest_rows(read_rows(path)?, vocab)
}

/// Sorts rows stably by `(student_id, order_key)` and maps identifiers to
/// dense indices.
///
/// With `vocab = None` a fresh vocabulary is built in order of first
/// appearance; otherwise the given maps are used and unknown identifiers go
/// to the UNK index.
pub fn ingest_rows(mut rows: Vec<RawRow>, vocab: Option<&VocabMaps>) -> Result<Dataset> {
    rows.sort_by(|a, b| a.student_id.cmp(&b.student_id).then(a.order_key.cmp(&b.order_key)));
    let mut maps = vocab.cloned().unwrap_or_default();
    let frozen = vocab.is_some();
    let lookup = |v: &mut super::Vocab, key: &str| if frozen { v.get_or_unk(key) } else { v.intern(key) };

    let mut kind = DatasetKind::QuestionsAndKcs;
    let mut students: Vec<(String, Vec<InteractionRecord>)> = Vec::new();
    for row in rows {
        if row.question_id.is_none() || row.kc_ids.is_empty() {
            kind = DatasetKind::Partial;
        }
        let question_id = row.question_id.as_deref().map(|q| lookup(&mut maps.questions, q));
        let mut kc_ids: Vec<usize> = if row.kc_ids.is_empty() {
            let q = row.question_id.as_deref().expect("parser guarantees question or kcs");
            vec![lookup(&mut maps.kcs, &format!("{QUESTION_AS_KC}{q}"))]
        } else {
            row.kc_ids.iter().map(|c| lookup(&mut maps.kcs, c)).collect()
        };
        if question_id.is_none() {
            for c in &row.kc_ids {
                lookup(&mut maps.questions, &format!("{KC_AS_QUESTION}{c}"));
            }
        }
        kc_ids.sort_unstable();
        kc_ids.dedup();
        let rec = InteractionRecord {
            student_id: row.student_id,
            question_id,
            kc_ids,
            response: row.response,
            order_key: row.order_key,
        };
        match students.last_mut() {
            Some((sid, recs)) if *sid == rec.student_id => recs.push(rec),
            _ => students.push((rec.student_id.clone(), vec![rec])),
        }
    }
    Ok(Dataset { students, vocab: maps, kind })
}
