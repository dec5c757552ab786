//! Rasch-style synthetic students with known ground truth.
//!
//! Each student has an ability that starts at `Normal(0, theta_std²)` and
//! rises by `drift` per step; each question has a difficulty drawn from
//! `Normal(0, difficulty_std²)` and a fixed KC set. A response is correct
//! with probability `σ(ability − difficulty)`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{write_rows, RawRow, VocabMaps};
use crate::error::{Error, Result};
use crate::eval::{accuracy, auc, Metrics, PredictionSet};
use crate::numerics::{sigmoid, SeededRng};

pub const INTERACTIONS_FILE: &str = "interactions.csv";
pub const ABILITIES_FILE: &str = "truth_abilities.csv";
pub const DIFFICULTIES_FILE: &str = "truth_difficulties.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_students: usize,
    pub n_questions: usize,
    pub n_kcs: usize,
    /// Inclusive range of KCs per question.
    pub kcs_per_question: (usize, usize),
    pub theta_std: f64,
    pub difficulty_std: f64,
    /// Inclusive range of interactions per student.
    pub seq_len: (usize, usize),
    pub drift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_students: 500,
            n_questions: 300,
            n_kcs: 40,
            kcs_per_question: (1, 2),
            theta_std: 1.0,
            difficulty_std: 1.5,
            seq_len: (50, 150),
            drift: 0.01,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let (kmin, kmax) = self.kcs_per_question;
        let (lmin, lmax) = self.seq_len;
        if self.n_students == 0 || self.n_questions == 0 || self.n_kcs == 0 {
            return Err(Error::Config("student, question and KC counts must be positive".into()));
        }
        if kmin == 0 || kmin > kmax || kmax > self.n_kcs {
            return Err(Error::Config(format!("invalid KCs-per-question range {kmin}..={kmax} for {} KCs", self.n_kcs)));
        }
        if lmin == 0 || lmin > lmax {
            return Err(Error::Config(format!("invalid sequence length range {lmin}..={lmax}")));
        }
        if !(self.theta_std >= 0.0 && self.difficulty_std >= 0.0 && self.drift >= 0.0) {
            return Err(Error::Config("theta_std, difficulty_std and drift must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn student_name(i: usize) -> String {
    format!("s{i:05}")
}

pub fn question_name(j: usize) -> String {
    format!("q{j:05}")
}

pub fn kc_name(c: usize) -> String {
    format!("k{c:03}")
}

/// Latent parameters behind a generated dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Truth {
    /// Ability of each student at each step (the step equals the order key).
    pub abilities: HashMap<String, Vec<f64>>,
    pub difficulties: HashMap<String, f64>,
}

impl Truth {
    /// `σ(θ − b)` for `student` at `step` answering `question`.
    pub fn probability(&self, student: &str, step: usize, question: &str) -> Result<f64> {
        let theta = self
            .abilities
            .get(student)
            .and_then(|a| a.get(step))
            .ok_or_else(|| Error::Config(format!("truth has no ability for student {student} at step {step}")))?;
        let b = self
            .difficulties
            .get(question)
            .ok_or_else(|| Error::Config(format!("truth has no difficulty for question {question}")))?;
        Ok(sigmoid(theta - b))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut students: Vec<_> = self.abilities.iter().collect();
        students.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::from("student_id,step,theta\n");
        for (s, thetas) in students {
            for (step, t) in thetas.iter().enumerate() {
                out.push_str(&format!("{s},{step},{t:?}\n"));
            }
        }
        let path = dir.join(ABILITIES_FILE);
        fs::write(&path, out).map_err(|e| Error::io(&path, e))?;

        let mut questions: Vec<_> = self.difficulties.iter().collect();
        questions.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::from("question_id,b\n");
        for (q, b) in questions {
            out.push_str(&format!("{q},{b:?}\n"));
        }
        let path = dir.join(DIFFICULTIES_FILE);
        fs::write(&path, out).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut truth = Truth::default();
        for (line, rec) in read_table(&dir.join(ABILITIES_FILE), 3)?.into_iter().enumerate() {
            let step: usize = parse_field(&rec[1], line)?;
            let theta: f64 = parse_field(&rec[2], line)?;
            let thetas = truth.abilities.entry(rec[0].clone()).or_default();
            if step != thetas.len() {
                return Err(Error::Parse { line: line + 2, msg: format!("expected step {}, got {step}", thetas.len()) });
            }
            thetas.push(theta);
        }
        for (line, rec) in read_table(&dir.join(DIFFICULTIES_FILE), 2)?.into_iter().enumerate() {
            truth.difficulties.insert(rec[0].clone(), parse_field(&rec[1], line)?);
        }
        Ok(truth)
    }
}

fn read_table(path: &Path, width: usize) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse { line: i + 2, msg: e.to_string() })?;
        if rec.len() != width {
            return Err(Error::Parse { line: i + 2, msg: format!("expected {width} fields in {}", path.display()) });
        }
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok(rows)
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse { line: line + 2, msg: format!("cannot parse {s:?}") })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub rows: Vec<RawRow>,
    pub truth: Truth,
}

impl SynthData {
    /// Writes the interaction file and both truth files into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_rows(&dir.join(INTERACTIONS_FILE), &self.rows)?;
        self.truth.save(dir)
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let root = SeededRng::new(config.seed);
    let mut rng = root.split(1);
    let difficulty = Normal::new(0.0, config.difficulty_std).map_err(|e| Error::Config(e.to_string()))?;
    let ability = Normal::new(0.0, config.theta_std).map_err(|e| Error::Config(e.to_string()))?;

    let mut truth = Truth::default();
    let mut question_kcs = Vec::with_capacity(config.n_questions);
    for j in 0..config.n_questions {
        truth.difficulties.insert(question_name(j), difficulty.sample(&mut rng));
        let k = rng.random_range(config.kcs_per_question.0..=config.kcs_per_question.1);
        let mut kcs: Vec<usize> = sample(&mut rng, config.n_kcs, k).into_vec();
        kcs.sort_unstable();
        question_kcs.push(kcs.into_iter().map(kc_name).collect::<Vec<_>>());
    }

    let mut rows = Vec::new();
    for i in 0..config.n_students {
        // One stream per student keeps students independent of each other.
        let mut rng = root.split(1000 + i as u64);
        let student = student_name(i);
        let theta0 = ability.sample(&mut rng);
        let len = rng.random_range(config.seq_len.0..=config.seq_len.1);
        let mut thetas = Vec::with_capacity(len);
        for step in 0..len {
            let theta = theta0 + config.drift * step as f64;
            let q = rng.random_range(0..config.n_questions);
            let p = sigmoid(theta - truth.difficulties[&question_name(q)]);
            let response = u8::from(rng.random::<f64>() < p);
            rows.push(RawRow {
                student_id: student.clone(),
                question_id: Some(question_name(q)),
                kc_ids: question_kcs[q].clone(),
                response,
                order_key: step as i64,
                line: 0,
            });
            thetas.push(theta);
        }
        truth.abilities.insert(student, thetas);
    }
    Ok(SynthData { rows, truth })
}

/// Generative probabilities for exactly the positions in `predictions`.
pub fn oracle_predictions(truth: &Truth, predictions: &PredictionSet, vocab: &VocabMaps) -> Result<PredictionSet> {
    let mut out = predictions.clone();
    for i in 0..predictions.len() {
        let q = predictions.question_ids[i];
        let question = vocab
            .questions
            .raw(q)
            .ok_or_else(|| Error::Config(format!("question index {q} is not in the vocabulary")))?;
        out.probs[i] = truth.probability(&predictions.student_ids[i], predictions.interactions[i], question)?;
    }
    Ok(out)
}

/// Metrics of the predictor `σ(θ − b)` scored on the positions of `predictions`.
pub fn oracle_metrics(truth: &Truth, predictions: &PredictionSet, vocab: &VocabMaps) -> Result<Metrics> {
    let oracle = oracle_predictions(truth, predictions, vocab)?;
    Ok(Metrics {
        auc: auc(&oracle.probs, &oracle.labels)?,
        accuracy: accuracy(&oracle.probs, &oracle.labels, 0.5)?,
        n_predictions: oracle.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{her, ingest_rows, read_rows};

    fn small() -> SynthConfig {
        SynthConfig { n_students: 40, n_questions: 30, n_kcs: 8, seq_len: (10, 30), ..Default::default() }
    }

    #[test]
    fn same_seed_same_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate(&small()).unwrap().save(a.path()).unwrap();
        generate(&small()).unwrap().save(b.path()).unwrap();
        for f in [INTERACTIONS_FILE, ABILITIES_FILE, DIFFICULTIES_FILE] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = generate(&small()).unwrap();
        data.save(dir.path()).unwrap();
        let rows = read_rows(&dir.path().join(INTERACTIONS_FILE)).unwrap();
        assert_eq!(rows.len(), data.rows.len());
        for (r, w) in rows.iter().zip(&data.rows) {
            assert_eq!((&r.student_id, &r.question_id, &r.kc_ids, r.response, r.order_key),
                (&w.student_id, &w.question_id, &w.kc_ids, w.response, w.order_key));
        }
        assert_eq!(Truth::load(dir.path()).unwrap(), data.truth);
        let ds = ingest_rows(rows, None).unwrap();
        assert_eq!(ds.students.len(), 40);
        assert_eq!(ds.n_interactions(), data.rows.len());
    }

    #[test]
    fn kc_ranges_respected() {
        let cfg = SynthConfig { kcs_per_question: (2, 3), ..small() };
        let data = generate(&cfg).unwrap();
        assert!(data.rows.iter().all(|r| (2..=3).contains(&r.kc_ids.len())));
        let lens: HashMap<_, _> = data.truth.abilities.iter().map(|(s, t)| (s.clone(), t.len())).collect();
        assert!(lens.values().all(|l| (10..=30).contains(l)));
    }

    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for k in i..=j {
                r[idx[k]] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn her_tracks_difficulty() {
        let cfg = SynthConfig {
            n_students: 400,
            n_questions: 40,
            n_kcs: 5,
            theta_std: 0.0,
            difficulty_std: 2.0,
            seq_len: (60, 60),
            drift: 0.0,
            ..small()
        };
        let data = generate(&cfg).unwrap();
        let ds = ingest_rows(data.rows, None).unwrap();
        let h = her(ds.students.iter().flat_map(|(_, r)| r));
        let mut hers = Vec::new();
        let mut bs = Vec::new();
        for j in 0..cfg.n_questions {
            let q = ds.vocab.questions.get(&question_name(j)).unwrap();
            assert!(h.attempts(q) >= 50);
            hers.push(h.get(q).unwrap());
            bs.push(data.truth.difficulties[&question_name(j)]);
        }
        let rho = pearson(&ranks(&hers), &ranks(&bs));
        assert!(rho > 0.9, "spearman {rho}");
    }

    #[test]
    fn cell_rates_match_the_link() {
        // Pool responses by (student, question) pair with fixed ability.
        let cfg = SynthConfig {
            n_students: 3,
            n_questions: 2,
            n_kcs: 1,
            kcs_per_question: (1, 1),
            seq_len: (3000, 3000),
            drift: 0.0,
            ..small()
        };
        let data = generate(&cfg).unwrap();
        let mut cells: HashMap<(String, String), (usize, usize)> = HashMap::new();
        for r in &data.rows {
            let c = cells.entry((r.student_id.clone(), r.question_id.clone().unwrap())).or_default();
            c.0 += usize::from(r.response);
            c.1 += 1;
        }
        for ((s, q), (k, n)) in cells {
            assert!(n >= 1000);
            let p = data.truth.probability(&s, 0, &q).unwrap();
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let rate = k as f64 / n as f64;
            assert!((rate - p).abs() <= 3.0 * se, "{s}/{q}: {rate} vs {p}");
        }
    }

    fn oracle_fixture() -> (SynthData, PredictionSet, VocabMaps) {
        let data = generate(&SynthConfig { n_students: 100, ..small() }).unwrap();
        let ds = ingest_rows(data.rows.clone(), None).unwrap();
        let mut set = PredictionSet::default();
        for (sid, recs) in &ds.students {
            for (i, r) in recs.iter().enumerate() {
                set.probs.push(0.5);
                set.labels.push(r.response);
                set.question_ids.push(r.question_id.unwrap());
                set.student_ids.push(sid.clone());
                set.positions.push(i);
                set.interactions.push(i);
            }
        }
        (data, set, ds.vocab)
    }

    #[test]
    fn oracle_beats_random_predictors() {
        let (data, set, vocab) = oracle_fixture();
        let oracle = oracle_metrics(&data.truth, &set, &vocab).unwrap();
        let mut rng = SeededRng::new(5);
        for _ in 0..100 {
            let probs: Vec<f64> = (0..set.len()).map(|_| rng.uniform()).collect();
            assert!(auc(&probs, &set.labels).unwrap() < oracle.auc);
        }
        assert_eq!(auc(&set.probs, &set.labels).unwrap(), 0.5);
        let base = set.labels.iter().map(|&l| f64::from(l)).sum::<f64>() / set.len() as f64;
        assert!(oracle.accuracy >= base.max(1.0 - base));
    }

    #[test]
    fn oracle_rejects_mismatched_truth() {
        let (mut data, set, vocab) = oracle_fixture();
        data.truth.difficulties.clear();
        assert!(oracle_metrics(&data.truth, &set, &vocab).is_err());
    }
}
