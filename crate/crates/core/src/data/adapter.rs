//! Converters from platform dumps to the canonical interaction format.
//!
//! An adapter maps named columns of a delimited source file onto
//! [`RawRow`]s. Rows that share `(student, order_key, question)` are merged
//! into one interaction whose KC set is the union, which is how
//! ASSISTments-style dumps encode multi-skill problems.

use std::fs;
use std::path::Path;

use super::ingest::{parse_order_key, parse_response, split_ids};
use super::RawRow;
use crate::error::{Error, Result};

pub trait Adapter: Sync {
    fn name(&self) -> &'static str;
    fn read(&self, path: &Path) -> Result<Vec<RawRow>>;
}

/// Column-name driven adapter.
#[derive(Debug, Clone)]
pub struct ColumnAdapter {
    pub name: &'static str,
    pub student: &'static str,
    pub question: Option<&'static str>,
    pub kcs: Option<&'static str>,
    pub kc_separator: char,
    pub response: &'static str,
    pub order: &'static str,
}

pub const ADAPTERS: &[ColumnAdapter] = &[
    ColumnAdapter {
        name: "canonical",
        student: "student_id",
        question: Some("question_id"),
        kcs: Some("kc_ids"),
        kc_separator: ';',
        response: "response",
        order: "order_key",
    },
    ColumnAdapter {
        name: "assist2009",
        student: "user_id",
        question: Some("problem_id"),
        kcs: Some("skill_id"),
        kc_separator: '_',
        response: "correct",
        order: "order_id",
    },
    ColumnAdapter {
        name: "assist2015",
        student: "user_id",
        question: None,
        kcs: Some("sequence_id"),
        kc_separator: ';',
        response: "correct",
        order: "log_id",
    },
];

pub fn adapter_by_name(name: &str) -> Result<&'static ColumnAdapter> {
    ADAPTERS.iter().find(|a| a.name == name).ok_or_else(|| {
        let names: Vec<_> = ADAPTERS.iter().map(|a| a.name).collect();
        Error::Config(format!("unknown adapter `{name}`; available adapters: {}", names.join(", ")))
    })
}

impl ColumnAdapter {
    pub fn parse(&self, text: &str) -> Result<Vec<RawRow>> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
        if header.len() <= 1 && header.get(0).is_none_or(str::is_empty) {
            return Ok(Vec::new());
        }
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Parse { line: 1, msg: format!("adapter {}: missing column `{name}`", self.name) })
        };
        let student = col(self.student)?;
        let question = self.question.map(col).transpose()?;
        let kcs = self.kcs.map(col).transpose()?;
        let response = col(self.response)?;
        let order = col(self.order)?;

        let mut rows: Vec<RawRow> = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                msg: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
            let student_id = field(student).to_string();
            if student_id.is_empty() {
                return Err(Error::Parse { line, msg: "empty student id".into() });
            }
            let question_id = question.map(field).filter(|s| !s.is_empty()).map(String::from);
            let kc_ids = kcs.map(|i| split_ids(field(i), self.kc_separator)).unwrap_or_default();
            if question_id.is_none() && kc_ids.is_empty() {
                continue;
            }
            let row = RawRow {
                student_id,
                question_id,
                kc_ids,
                response: parse_response(field(response), line)?,
                order_key: parse_order_key(field(order), line)?,
                line,
            };
            match rows.last_mut() {
                Some(prev)
                    if prev.student_id == row.student_id
                        && prev.order_key == row.order_key
                        && prev.question_id == row.question_id =>
                {
                    for k in row.kc_ids {
                        if !prev.kc_ids.contains(&k) {
                            prev.kc_ids.push(k);
                        }
                    }
                }
                _ => rows.push(row),
            }
        }
        Ok(rows)
    }
}

impl Adapter for ColumnAdapter {
    fn name(&self) -> &'static str {
        self.name
    }

    fn read(&self, path: &Path) -> Result<Vec<RawRow>> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.parse(&text)
    }
}
