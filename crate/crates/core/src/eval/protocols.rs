use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, auc};
use crate::data::{batch, Chunk, HerMap};
use crate::error::Result;
use crate::model::{HistoryMode, SimpleKt};
use crate::numerics::{sigmoid, SeededRng};

const EVAL_BATCH: usize = 64;

/// Observed-prefix ratios of the multi-step protocol, in tenths (20%..90%).
pub const MULTISTEP_RATIOS: [usize; 8] = [2, 3, 4, 5, 6, 7, 8, 9];

/// Question-level predictions with their provenance, as parallel arrays.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    pub probs: Vec<f64>,
    pub labels: Vec<u8>,
    pub question_ids: Vec<usize>,
    pub student_ids: Vec<String>,
    /// Position (within its chunk) of the first step of the interaction.
    pub positions: Vec<usize>,
    /// Interaction index within the student's record list.
    pub interactions: Vec<usize>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn metrics(&self) -> Result<Metrics> {
        Ok(Metrics {
            auc: auc(&self.probs, &self.labels)?,
            accuracy: accuracy(&self.probs, &self.labels, 0.5)?,
            n_predictions: self.len(),
        })
    }

    /// Averages the KC-step probabilities of every interaction of `chunk`
    /// whose positions satisfy `keep`, appending one entry per interaction.
    fn push_aggregated(&mut self, chunk: &Chunk, logits: &[f64], keep: impl Fn(usize) -> bool) {
        let mut p = 0;
        while p < chunk.len() {
            let interaction = chunk.steps[p].interaction;
            let mut end = p;
            let (mut sum, mut count, mut first) = (0.0, 0usize, None);
            while end < chunk.len() && chunk.steps[end].interaction == interaction {
                if keep(end) {
                    sum += sigmoid(logits[end]);
                    count += 1;
                    first.get_or_insert(end);
                }
                end += 1;
            }
            if let Some(first) = first {
                let step = &chunk.steps[first];
                self.probs.push(sum / count as f64);
                self.labels.push(step.response);
                self.question_ids.push(step.question_id);
                self.student_ids.push(chunk.student_id.clone());
                self.positions.push(first);
                self.interactions.push(interaction);
            }
            p = end;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: f64,
    pub accuracy: f64,
    pub n_predictions: usize,
}

/// Question-level one-step predictions: every KC step is predicted from the
/// history preceding its interaction, and the steps of one interaction are
/// averaged.
pub fn predict_one_step(model: &SimpleKt, chunks: &[Chunk]) -> Result<PredictionSet> {
    let mut set = PredictionSet::default();
    let mut rng = SeededRng::new(0);
    for group in chunks.chunks(EVAL_BATCH) {
        let refs: Vec<&Chunk> = group.iter().collect();
        let out = model.forward_sequence(&batch(&refs, 0), false, HistoryMode::Interaction, &mut rng)?;
        for (b, chunk) in group.iter().enumerate() {
            let valid = &out.valid[b];
            set.push_aggregated(chunk, &out.logits[b], |p| valid[p]);
        }
    }
    Ok(set)
}

pub fn evaluate_one_step(model: &SimpleKt, chunks: &[Chunk]) -> Result<(PredictionSet, Metrics)> {
    let set = predict_one_step(model, chunks)?;
    let metrics = set.metrics()?;
    Ok((set, metrics))
}

/// Metrics of one observed-prefix ratio. `auc`/`accuracy` are `None` when
/// the pooled predictions do not define them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStepRecord {
    pub ratio: f64,
    pub auc: Option<f64>,
    pub accuracy: Option<f64>,
    pub n_predictions: usize,
    pub n_chunks: usize,
    pub skipped_chunks: usize,
}

/// Observed prefix length `max(1, floor(ratio · len))` for a ratio in tenths.
pub fn prefix_len(ratio_tenths: usize, len: usize) -> usize {
    (ratio_tenths * len / 10).max(1)
}

/// Non-accumulative multi-step prediction. For each ratio the first
/// `prefix_len` steps of a chunk are observed and every later step is
/// predicted from that prefix only (and never from its own interaction).
pub fn evaluate_multistep(model: &SimpleKt, chunks: &[Chunk], ratios_tenths: &[usize]) -> Result<Vec<MultiStepRecord>> {
    let mut records = Vec::with_capacity(ratios_tenths.len());
    for &k in ratios_tenths {
        let mut set = PredictionSet::default();
        let (mut used, mut skipped) = (0, 0);
        for chunk in chunks {
            let t = chunk.len();
            let prefix = prefix_len(k, t);
            if prefix >= t {
                skipped += 1;
                continue;
            }
            let (kc, question, response, limits) = multistep_inputs(chunk, prefix);
            let logits = model.logits_with_limits(&kc, &question, &response, &limits)?;
            let before = set.len();
            set.push_aggregated(chunk, &logits, |p| p >= prefix && limits[p] > 0);
            if set.len() > before {
                used += 1;
            } else {
                skipped += 1;
            }
        }
        let (auc, accuracy) = if set.is_empty() {
            (None, None)
        } else {
            (super::auc(&set.probs, &set.labels).ok(), super::accuracy(&set.probs, &set.labels, 0.5).ok())
        };
        records.push(MultiStepRecord {
            ratio: k as f64 / 10.0,
            auc,
            accuracy,
            n_predictions: set.len(),
            n_chunks: used,
            skipped_chunks: skipped,
        });
    }
    Ok(records)
}

fn multistep_inputs(chunk: &Chunk, prefix: usize) -> (Vec<usize>, Vec<usize>, Vec<u8>, Vec<usize>) {
    let starts = chunk.interaction_starts();
    let limits = starts.iter().map(|&s| s.min(prefix)).collect();
    let kc = chunk.steps.iter().map(|s| s.kc_id).collect();
    let question = chunk.steps.iter().map(|s| s.question_id).collect();
    let response = chunk.steps.iter().map(|s| s.response).collect();
    (kc, question, response, limits)
}

/// One predicted KC step of a student trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub position: usize,
    pub interaction: usize,
    pub question_id: usize,
    pub kc_id: usize,
    pub response: u8,
    pub prob: f64,
    pub her: Option<f64>,
    /// True when this is the student's first step on this KC in the chunk.
    pub first_kc_encounter: bool,
}

/// Per-step predictions of one chunk annotated with question HER.
pub fn trace(model: &SimpleKt, chunk: &Chunk, her: &HerMap) -> Result<Vec<TraceRecord>> {
    let out = model.forward_sequence(&batch(&[chunk], 0), false, HistoryMode::Interaction, &mut SeededRng::new(0))?;
    let mut seen = std::collections::HashSet::new();
    let mut records = Vec::new();
    for (p, step) in chunk.steps.iter().enumerate() {
        let first = seen.insert(step.kc_id);
        if !out.valid[0][p] {
            continue;
        }
        records.push(TraceRecord {
            position: p,
            interaction: step.interaction,
            question_id: step.question_id,
            kc_id: step.kc_id,
            response: step.response,
            prob: sigmoid(out.logits[0][p]),
            her: her.get(step.question_id),
            first_kc_encounter: first,
        });
    }
    Ok(records)
}
