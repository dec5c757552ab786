use super::{Chunk, Dataset, ExpandedStep, InteractionRecord, StudentSequence, VocabMaps};

/// Longest chunk the model sees.
pub const MAX_CHUNK_LEN: usize = 200;
/// Chunks shorter than this are discarded.
pub const MIN_CHUNK_LEN: usize = 3;

/// Expands each interaction into one step per KC, KCs in ascending index
/// order. Rows without a question use the per-KC fallback question.
pub fn expand_kc(records: &[InteractionRecord], vocab: &VocabMaps) -> Vec<ExpandedStep> {
    let mut steps = Vec::with_capacity(records.iter().map(|r| r.kc_ids.len()).sum());
    for (interaction, rec) in records.iter().enumerate() {
        for &kc in &rec.kc_ids {
            let question_id = rec.question_id.unwrap_or_else(|| vocab.fallback_question(kc));
            steps.push(ExpandedStep {
                kc_id: kc,
                question_id,
                response: rec.response,
                position: steps.len(),
                interaction,
            });
        }
    }
    steps
}

/// Cuts a chronological step list into consecutive windows of at most
/// [`MAX_CHUNK_LEN`] steps and drops windows shorter than [`MIN_CHUNK_LEN`].
/// Returns `None` when nothing survives.
pub fn chunk_and_filter(student_id: &str, steps: &[ExpandedStep]) -> Option<StudentSequence> {
    let chunks: Vec<Chunk> = steps
        .chunks(MAX_CHUNK_LEN)
        .filter(|w| w.len() >= MIN_CHUNK_LEN)
        .map(|w| Chunk {
            student_id: student_id.to_string(),
            steps: w.iter().enumerate().map(|(p, s)| ExpandedStep { position: p, ..*s }).collect(),
        })
        .collect();
    (!chunks.is_empty()).then(|| StudentSequence { student_id: student_id.to_string(), chunks })
}

/// Expansion followed by chunking for every student of `dataset`.
pub fn preprocess(dataset: &Dataset) -> Vec<StudentSequence> {
    dataset
        .students
        .iter()
        .filter_map(|(sid, recs)| chunk_and_filter(sid, &expand_kc(recs, &dataset.vocab)))
        .collect()
}
