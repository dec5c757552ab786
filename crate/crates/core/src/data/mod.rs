//! Interaction logs: ingestion, KC expansion, chunking, splits and batching.

mod adapter;
mod batch;
mod ingest;
mod preprocess;
mod split;
mod stats;
mod vocab;

pub use adapter::{adapter_by_name, Adapter, ColumnAdapter, ADAPTERS};
pub use batch::{batch, Batch};
pub use ingest::{ingest, ingest_rows, read_rows, write_rows, RawRow};
pub use preprocess::{chunk_and_filter, expand_kc, preprocess, MAX_CHUNK_LEN, MIN_CHUNK_LEN};
pub use split::{split, DatasetSplit, N_FOLDS};
pub use stats::{her, stats, DatasetStats, HerMap};
pub use vocab::{Vocab, VocabMaps};

use serde::{Deserialize, Serialize};

/// One student attempt with dense question / KC indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionRecord {
    pub student_id: String,
    /// Dense question index; `None` when the source row had no question.
    pub question_id: Option<usize>,
    /// Dense KC indices, ascending and deduplicated; empty when the row had
    /// no KC information.
    pub kc_ids: Vec<usize>,
    pub response: u8,
    pub order_key: i64,
}

/// One KC-level step after expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedStep {
    pub kc_id: usize,
    pub question_id: usize,
    pub response: u8,
    /// 0-based index within the owning chunk (or the student's full step
    /// list before chunking).
    pub position: usize,
    /// Index of the originating interaction in the student's chronological
    /// record list.
    pub interaction: usize,
}

/// A window of at most [`MAX_CHUNK_LEN`] consecutive steps of one student.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub student_id: String,
    pub steps: Vec<ExpandedStep>,
}

impl Chunk {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// For every step, the index of the first step in this chunk that
    /// belongs to the same interaction.
    pub fn interaction_starts(&self) -> Vec<usize> {
        let mut starts = Vec::with_capacity(self.steps.len());
        for (p, s) in self.steps.iter().enumerate() {
            let start = match (p, starts.last()) {
                (0, _) => 0,
                (_, Some(&prev)) if self.steps[p - 1].interaction == s.interaction => prev,
                _ => p,
            };
            starts.push(start);
        }
        starts
    }
}

/// All retained chunks of one student, in chronological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudentSequence {
    pub student_id: String,
    pub chunks: Vec<Chunk>,
}

/// Which identifiers a dataset carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetKind {
    /// Every interaction has both a question and at least one KC.
    QuestionsAndKcs,
    /// At least one interaction lacks either its question or its KCs.
    Partial,
}

/// Records grouped per student, sorted by `(student_id, order_key)`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub students: Vec<(String, Vec<InteractionRecord>)>,
    pub vocab: VocabMaps,
    pub kind: DatasetKind,
}

impl Dataset {
    pub fn n_interactions(&self) -> usize {
        self.students.iter().map(|(_, r)| r.len()).sum()
    }
}
