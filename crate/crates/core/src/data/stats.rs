use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use super::vocab::{KC_AS_QUESTION, QUESTION_AS_KC};
use super::{Dataset, InteractionRecord, StudentSequence};

/// Summary of a preprocessed dataset. `questions`/`kcs` are `None` when the
/// data carries no such identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub interactions: usize,
    pub sequences: usize,
    pub questions: Option<usize>,
    pub kcs: Option<usize>,
    pub avg_kcs_per_question: Option<f64>,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<usize>| v.map_or("-".to_string(), |v| v.to_string());
        writeln!(f, "{:<14}{:<12}{:<12}{:<8}avg KCs", "interactions", "sequences", "questions", "KCs")?;
        writeln!(
            f,
            "{:<14}{:<12}{:<12}{:<8}{}",
            self.interactions,
            self.sequences,
            opt(self.questions),
            opt(self.kcs),
            self.avg_kcs_per_question.map_or("-".to_string(), |a| format!("{a:.4}"))
        )
    }
}

/// Counts over the interactions that survive preprocessing.
pub fn stats(dataset: &Dataset, sequences: &[StudentSequence]) -> DatasetStats {
    let records: HashMap<&str, &[InteractionRecord]> =
        dataset.students.iter().map(|(s, r)| (s.as_str(), r.as_slice())).collect();
    let real_kc = |k: usize| dataset.vocab.kcs.raw(k).is_some_and(|r| !r.starts_with(QUESTION_AS_KC));
    let real_q = |q: usize| dataset.vocab.questions.raw(q).is_some_and(|r| !r.starts_with(KC_AS_QUESTION));

    let mut interactions = 0;
    let mut kcs = BTreeSet::new();
    let mut question_kcs: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut sequences_n = 0;
    for seq in sequences {
        sequences_n += seq.chunks.len();
        let recs = records.get(seq.student_id.as_str()).copied().unwrap_or(&[]);
        let retained: HashSet<usize> = seq.chunks.iter().flat_map(|c| c.steps.iter().map(|s| s.interaction)).collect();
        interactions += retained.len();
        for &i in &retained {
            let Some(rec) = recs.get(i) else { continue };
            let rec_kcs: Vec<usize> = rec.kc_ids.iter().copied().filter(|&k| real_kc(k)).collect();
            kcs.extend(rec_kcs.iter().copied());
            if let Some(q) = rec.question_id.filter(|&q| real_q(q)) {
                question_kcs.entry(q).or_default().extend(rec_kcs);
            }
        }
    }
    let avg = (!question_kcs.is_empty() && !kcs.is_empty())
        .then(|| question_kcs.values().map(BTreeSet::len).sum::<usize>() as f64 / question_kcs.len() as f64);
    DatasetStats {
        interactions,
        sequences: sequences_n,
        questions: (!question_kcs.is_empty() || interactions == 0).then_some(question_kcs.len()),
        kcs: (!kcs.is_empty() || interactions == 0).then_some(kcs.len()),
        avg_kcs_per_question: avg,
    }
}

/// Historical error rate per question.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HerMap {
    counts: HashMap<usize, (usize, usize)>,
}

impl HerMap {
    /// `#incorrect / #attempts` for `question`, `None` when never seen.
    pub fn get(&self, question: usize) -> Option<f64> {
        self.counts.get(&question).map(|&(wrong, total)| wrong as f64 / total as f64)
    }

    pub fn attempts(&self, question: usize) -> usize {
        self.counts.get(&question).map_or(0, |c| c.1)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Computes HER over question-level interactions (not KC steps). Records
/// without a question are ignored.
pub fn her<'a>(records: impl IntoIterator<Item = &'a InteractionRecord>) -> HerMap {
    let mut counts: HashMap<usize, (usize, usize)> = HashMap::new();
    for r in records {
        if let Some(q) = r.question_id {
            let c = counts.entry(q).or_default();
            c.0 += usize::from(r.response == 0);
            c.1 += 1;
        }
    }
    HerMap { counts }
}
