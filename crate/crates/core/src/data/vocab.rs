use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Dense index assignment for one identifier namespace. Index `len()` is the
/// reserved UNK slot for identifiers unseen when the map was built.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    index: HashMap<String, usize>,
    raw: Vec<String>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index of `id`, inserting it if absent.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.raw.len();
        self.raw.push(id.to_string());
        self.index.insert(id.to_string(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get_or_unk(&self, id: &str) -> usize {
        self.get(id).unwrap_or(self.unk())
    }

    pub fn unk(&self) -> usize {
        self.raw.len()
    }

    pub fn raw(&self, index: usize) -> Option<&str> {
        self.raw.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Writes `original_id,dense_index` lines under a header.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("original_id,dense_index\n");
        for (i, id) in self.raw.iter().enumerate() {
            out.push_str(&format!("{id},{i}\n"));
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.is_empty() {
                continue;
            }
            let (id, idx) = line.rsplit_once(',').ok_or_else(|| Error::Parse {
                line: n + 1,
                msg: "expected original_id,dense_index".into(),
            })?;
            let idx: usize = idx.trim().parse().map_err(|_| Error::Parse {
                line: n + 1,
                msg: format!("bad dense index {idx:?}"),
            })?;
            entries.push((idx, id.to_string()));
        }
        entries.sort();
        let mut vocab = Vocab::new();
        for (expect, (idx, id)) in entries.into_iter().enumerate() {
            if idx != expect {
                return Err(Error::Parse { line: expect + 2, msg: "dense indices must be 0..n-1".into() });
            }
            vocab.intern(&id);
        }
        Ok(vocab)
    }
}

/// Question and KC vocabularies of a dataset.
///
/// Rows without KCs get a singleton KC keyed `q:<question>`; rows without a
/// question use `c:<kc>` as the question of each of their KC steps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VocabMaps {
    pub questions: Vocab,
    pub kcs: Vocab,
}

pub(crate) const QUESTION_AS_KC: &str = "q:";
pub(crate) const KC_AS_QUESTION: &str = "c:";

impl VocabMaps {
    /// Number of KCs `n` (excluding UNK).
    pub fn n_kcs(&self) -> usize {
        self.kcs.len()
    }

    /// Number of questions `Q` (excluding UNK).
    pub fn n_questions(&self) -> usize {
        self.questions.len()
    }

    /// Question index standing in for KC `kc` when a row has no question.
    pub fn fallback_question(&self, kc: usize) -> usize {
        match self.kcs.raw(kc) {
            Some(raw) => self.questions.get_or_unk(&format!("{KC_AS_QUESTION}{raw}")),
            None => self.questions.unk(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.questions.save(&dir.join("questions.vocab"))?;
        self.kcs.save(&dir.join("kcs.vocab"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self {
            questions: Vocab::load(&dir.join("questions.vocab"))?,
            kcs: Vocab::load(&dir.join("kcs.vocab"))?,
        })
    }
}
