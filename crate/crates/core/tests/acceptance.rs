//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the summary is always printed. The
//! process exits non-zero if any criterion fails.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::Rng;
use simplekt::data::{
    adapter_by_name, batch, Adapter, ingest_rows, preprocess, split, stats, Batch, Chunk, ExpandedStep, StudentSequence,
};
use simplekt::eval::{auc, evaluate_multistep, evaluate_one_step, MULTISTEP_RATIOS};
use simplekt::model::{HistoryMode, ModelConfig, SimpleKt, Variant};
use simplekt::numerics::SeededRng;
use simplekt::synth::{generate, oracle_metrics, SynthConfig};
use simplekt::train::{train_fold, EpochRecord, TrainConfig};

// Pinned tolerances and budgets.
const GRAD_STEP: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-4;
// Roundoff in a central difference is about eps·|loss|/h ≈ 1e-11; a 1e-6
// denominator floor keeps that below 1e-5 relative.
const GRAD_REL_FLOOR: f64 = 1e-6;
const GRAD_MAX_KINK_FRACTION: f64 = 0.01;
const GRAD_BUDGET: Duration = Duration::from_secs(10);
const CAUSALITY_SEQUENCES: usize = 100;
const CAUSALITY_BUDGET: Duration = Duration::from_secs(30);
const AUC_INSTANCES: usize = 200;
const AUC_TOL: f64 = 1e-12;
const NESTING_BATCHES: usize = 50;
const MEMORIZE_STEPS: usize = 20;
const MEMORIZE_LOSS: f64 = 0.05;
const MEMORIZE_EPOCHS: usize = 200;
const LEARNABILITY_RATIO: f64 = 0.90;
const LEARNABILITY_BUDGET: Duration = Duration::from_secs(600);
const ABLATION_NODIFF_GAP: f64 = 0.02;
const ABLATION_SCALAR_GAP: f64 = 0.01;
const MULTISTEP_SLACK: f64 = 0.01;
const TABLE_AVG_KC_TOL: f64 = 1e-4;
const TABLE_AUC_TOL: f64 = 0.01;

struct Verdict {
    pass: Option<bool>,
    detail: String,
}

impl Verdict {
    fn check(pass: bool, detail: String) -> Self {
        Self { pass: Some(pass), detail }
    }

    fn skip(detail: String) -> Self {
        Self { pass: None, detail }
    }
}

type Criterion = (&'static str, fn(&mut Shared) -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient correctness", gradient_check),
        ("causality", causality),
        ("AUC oracle equivalence", auc_oracle),
        ("variant nesting", variant_nesting),
        ("memorization capacity", memorization),
        ("synthetic learnability", learnability),
        ("ablation direction", ablation),
        ("multi-step protocol", multistep),
        ("reproducibility", reproducibility),
        ("published-number reproduction", published_numbers),
    ];
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut shared = Shared::default();
    let mut lines = Vec::new();
    let mut failed = false;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let started = Instant::now();
        let v = run(&mut shared);
        let status = match v.pass {
            Some(true) => "PASS",
            Some(false) => {
                failed = true;
                "FAIL"
            }
            None => "SKIP",
        };
        let line = format!("criterion {id:>2} {status} [{name}] {} ({:.1}s)", v.detail, started.elapsed().as_secs_f64());
        println!("{line}");
        lines.push(line);
    }
    println!("\nacceptance summary:");
    for l in &lines {
        println!("  {l}");
    }
    if failed {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- fixtures

fn random_chunk(rng: &mut SeededRng, len: usize, n_kcs: usize, n_questions: usize) -> Chunk {
    let steps = (0..len)
        .map(|p| ExpandedStep {
            kc_id: rng.random_range(0..n_kcs),
            question_id: rng.random_range(0..n_questions),
            response: rng.random_range(0..2),
            position: p,
            interaction: p,
        })
        .collect();
    Chunk { student_id: format!("r{len}"), steps }
}

fn small_config(d: usize, n_blocks: usize, n_heads: usize, variant: Variant, seed: u64) -> ModelConfig {
    ModelConfig { d, n_kcs: 5, n_questions: 7, n_blocks, n_heads, dropout: 0.0, variant, seed }
}

fn strip(log: &[EpochRecord]) -> Vec<(usize, u64, u64, u64)> {
    log.iter().map(|r| (r.epoch, r.train_loss.to_bits(), r.valid_auc.to_bits(), r.valid_acc.to_bits())).collect()
}

/// The criterion-6 dataset and the Full model trained on it, shared with
/// criteria 7 and 8.
struct SyntheticRun {
    vocab: simplekt::data::VocabMaps,
    train: Vec<Chunk>,
    valid: Vec<Chunk>,
    test: Vec<Chunk>,
    oracle_auc: f64,
    full: SimpleKt,
    full_auc: f64,
    full_elapsed: Duration,
}

#[derive(Default)]
struct Shared {
    synthetic: Option<Result<SyntheticRun, String>>,
}

fn synthetic_train_config() -> TrainConfig {
    TrainConfig { lr: 1e-3, batch_size: 64, max_epochs: 200, patience: 10, clip_norm: Some(5.0) }
}

fn synthetic_model_config(vocab: &simplekt::data::VocabMaps, variant: Variant) -> ModelConfig {
    ModelConfig {
        d: 64,
        n_kcs: vocab.n_kcs(),
        n_questions: vocab.n_questions(),
        n_blocks: 1,
        n_heads: 4,
        dropout: 0.1,
        variant,
        seed: 42,
    }
}

fn chunks_for(seqs: &[StudentSequence], students: &[String]) -> Vec<Chunk> {
    let by: HashMap<&str, &StudentSequence> = seqs.iter().map(|s| (s.student_id.as_str(), s)).collect();
    students.iter().filter_map(|s| by.get(s.as_str())).flat_map(|s| s.chunks.iter().cloned()).collect()
}

fn build_synthetic() -> Result<SyntheticRun, String> {
    let cfg = SynthConfig {
        n_students: 500,
        n_questions: 300,
        n_kcs: 40,
        difficulty_std: 1.5,
        seed: 42,
        ..SynthConfig::default()
    };
    let data = generate(&cfg).map_err(|e| e.to_string())?;
    let ds = ingest_rows(data.rows.clone(), None).map_err(|e| e.to_string())?;
    let seqs = preprocess(&ds);
    let ids: Vec<String> = seqs.iter().map(|s| s.student_id.clone()).collect();
    let sp = split(&ids, 42).map_err(|e| e.to_string())?;
    let train = chunks_for(&seqs, &sp.train_students(0));
    let valid = chunks_for(&seqs, &sp.folds[0]);
    let test = chunks_for(&seqs, &sp.test_students);
    let started = Instant::now();
    let outcome = train_fold(&train, &valid, &synthetic_model_config(&ds.vocab, Variant::Full), &synthetic_train_config())
        .map_err(|e| e.to_string())?;
    let full_elapsed = started.elapsed();
    let (set, metrics) = evaluate_one_step(&outcome.best, &test).map_err(|e| e.to_string())?;
    let oracle = oracle_metrics(&data.truth, &set, &ds.vocab).map_err(|e| e.to_string())?;
    Ok(SyntheticRun {
        vocab: ds.vocab,
        train,
        valid,
        test,
        oracle_auc: oracle.auc,
        full: outcome.best,
        full_auc: metrics.auc,
        full_elapsed,
    })
}

impl Shared {
    fn synthetic(&mut self) -> Result<&SyntheticRun, String> {
        self.synthetic.get_or_insert_with(build_synthetic).as_ref().map_err(Clone::clone)
    }
}

// ---------------------------------------------------------------- criteria

fn loss_of(model: &SimpleKt, b: &Batch) -> f64 {
    model.loss_graph(b, false, HistoryMode::Step, &mut SeededRng::new(0)).unwrap().loss_value()
}

/// Central difference of the loss along parameter `(g, j)` with step `h`.
fn central(probe: &mut SimpleKt, b: &Batch, g: usize, j: usize, h: f64) -> f64 {
    let orig = probe.params.tensors_mut()[g].data()[j];
    probe.params.tensors_mut()[g].data_mut()[j] = orig + h;
    let up = loss_of(probe, b);
    probe.params.tensors_mut()[g].data_mut()[j] = orig - h;
    let down = loss_of(probe, b);
    probe.params.tensors_mut()[g].data_mut()[j] = orig;
    (up - down) / (2.0 * h)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_REL_FLOOR)
}

/// Worst relative error over smooth entries, and (kinks, entries). An entry
/// is a kink when the central differences at `h` and `h/2` disagree, i.e. a
/// ReLU switches inside the stencil and the difference quotient is invalid.
fn max_grad_error(model: &SimpleKt, b: &Batch) -> (f64, usize, usize) {
    let analytic = model.loss_graph(b, false, HistoryMode::Step, &mut SeededRng::new(0)).unwrap().gradients().unwrap();
    let mut worst: f64 = 0.0;
    let (mut kinks, mut entries) = (0, 0);
    let mut probe = model.clone();
    for (g, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            entries += 1;
            let numeric = central(&mut probe, b, g, j, GRAD_STEP);
            let err = rel_err(a, numeric);
            if err >= GRAD_REL_TOL && rel_err(numeric, central(&mut probe, b, g, j, GRAD_STEP / 2.0)) > GRAD_REL_TOL {
                kinks += 1;
                continue;
            }
            worst = worst.max(err);
        }
    }
    (worst, kinks, entries)
}

/// Criterion 1: analytic vs central-difference gradients of the mean BCE.
fn gradient_check(_: &mut Shared) -> Verdict {
    let started = Instant::now();
    let mut rng = SeededRng::new(11);
    let chunks = [random_chunk(&mut rng, 10, 5, 7), random_chunk(&mut rng, 10, 5, 7)];
    let b = batch(&[&chunks[0], &chunks[1]], 0);
    let mut worst: f64 = 0.0;
    let (mut kinks, mut entries) = (0, 0);
    let mut cases = Vec::new();
    for (blocks, variant) in [(1, Variant::Full), (1, Variant::ScalarDiff), (1, Variant::NoDiff), (2, Variant::Full)] {
        let model = SimpleKt::new(small_config(8, blocks, 2, variant, 5)).unwrap();
        let (e, k, n) = max_grad_error(&model, &b);
        cases.push(format!("{variant}/{blocks}blk {e:.1e}"));
        worst = worst.max(e);
        kinks += k;
        entries += n;
    }
    let elapsed = started.elapsed();
    let kink_ok = kinks as f64 <= GRAD_MAX_KINK_FRACTION * entries as f64;
    Verdict::check(
        worst < GRAD_REL_TOL && kink_ok && elapsed < GRAD_BUDGET,
        format!(
            "max rel err {worst:.2e} < {GRAD_REL_TOL:.0e} [{}]; {kinks} of {entries} entries at ReLU kinks excluded (limit {:.0}%); {:.2}s < {GRAD_BUDGET:?}",
            cases.join(", "),
            GRAD_MAX_KINK_FRACTION * 100.0,
            elapsed.as_secs_f64()
        ),
    )
}

fn logits(model: &SimpleKt, c: &Chunk) -> Vec<f64> {
    model.forward_sequence(&batch(&[c], 0), false, HistoryMode::Step, &mut SeededRng::new(0)).unwrap().logits.remove(0)
}

/// Criterion 2: inputs at positions after `p` and the response at `p` never
/// reach logit(p).
fn causality(_: &mut Shared) -> Verdict {
    let started = Instant::now();
    let mut rng = SeededRng::new(22);
    let mut violations = 0;
    let mut checked = 0;
    for i in 0..CAUSALITY_SEQUENCES {
        let blocks = 1 + i % 2;
        let variant = Variant::ALL[i % 3];
        let model = SimpleKt::new(small_config(16, blocks, 4, variant, i as u64)).unwrap();
        let len = rng.random_range(3..=60);
        let c = random_chunk(&mut rng, len, 5, 7);
        let p = rng.random_range(1..len);
        let mut perturbed = c.clone();
        perturbed.steps[p].response ^= 1;
        for s in &mut perturbed.steps[p + 1..] {
            s.kc_id = rng.random_range(0..5);
            s.question_id = rng.random_range(0..7);
            s.response = rng.random_range(0..2);
        }
        let (a, b) = (logits(&model, &c), logits(&model, &perturbed));
        for q in 0..=p {
            checked += 1;
            if a[q].to_bits() != b[q].to_bits() {
                violations += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    Verdict::check(
        violations == 0 && elapsed < CAUSALITY_BUDGET,
        format!("{violations} of {checked} logits changed across {CAUSALITY_SEQUENCES} sequences, {:.2}s < {CAUSALITY_BUDGET:?}", elapsed.as_secs_f64()),
    )
}

fn pairwise_auc(preds: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &pi) in preds.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &pj) in preds.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if pi > pj {
                wins += 1.0;
            } else if pi == pj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Criterion 3: rank-sum AUC against the O(n²) pairwise definition.
fn auc_oracle(_: &mut Shared) -> Verdict {
    let mut rng = SeededRng::new(33);
    let mut worst: f64 = 0.0;
    for i in 0..AUC_INSTANCES {
        let n = rng.random_range(2..=1000);
        // Every other instance draws from a coarse grid to force ties.
        let levels = if i % 2 == 0 { 0 } else { rng.random_range(2..20) };
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let preds: Vec<f64> = (0..n)
            .map(|_| if levels == 0 { rng.uniform() } else { rng.random_range(0..levels) as f64 / levels as f64 })
            .collect();
        worst = worst.max((auc(&preds, &labels).unwrap() - pairwise_auc(&preds, &labels)).abs());
    }
    let fixed = auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
    Verdict::check(
        worst <= AUC_TOL && (fixed - 0.75).abs() <= AUC_TOL,
        format!("max |rank-sum − pairwise| = {worst:.1e} ≤ {AUC_TOL:.0e} over {AUC_INSTANCES} instances; fixed example {fixed}"),
    )
}

/// Criterion 4: with difficulty zeroed, Full and NoDiff agree bit for bit.
fn variant_nesting(_: &mut Shared) -> Verdict {
    let mut rng = SeededRng::new(44);
    let mut mismatches = 0;
    let mut compared = 0;
    for i in 0..NESTING_BATCHES {
        let mut full = SimpleKt::new(small_config(16, 1 + i % 2, 4, Variant::Full, i as u64)).unwrap();
        full.params.difficulty.as_mut().unwrap().data_mut().fill(0.0);
        let nodiff = full.with_variant(Variant::NoDiff).unwrap();
        let chunks: Vec<Chunk> = (0..4).map(|_| {
            let len = rng.random_range(3..40);
            random_chunk(&mut rng, len, 5, 7)
        }).collect();
        let refs: Vec<&Chunk> = chunks.iter().collect();
        let b = batch(&refs, 0);
        let mut r = SeededRng::new(0);
        let a = full.forward_sequence(&b, false, HistoryMode::Step, &mut r).unwrap();
        let n = nodiff.forward_sequence(&b, false, HistoryMode::Step, &mut r).unwrap();
        for (ra, rn) in a.logits.iter().zip(&n.logits) {
            for (x, y) in ra.iter().zip(rn) {
                compared += 1;
                if x.to_bits() != y.to_bits() {
                    mismatches += 1;
                }
            }
        }
    }
    Verdict::check(mismatches == 0, format!("{mismatches} of {compared} logits differ over {NESTING_BATCHES} batches"))
}

/// Criterion 5: a single 20-step sequence is memorised.
fn memorization(_: &mut Shared) -> Verdict {
    let mut rng = SeededRng::new(55);
    let fixture = vec![random_chunk(&mut rng, MEMORIZE_STEPS, 5, 7)];
    let model = ModelConfig { d: 32, ..small_config(32, 1, 4, Variant::Full, 42) };
    let cfg = TrainConfig { lr: 1e-2, batch_size: 1, max_epochs: MEMORIZE_EPOCHS, patience: MEMORIZE_EPOCHS, clip_norm: Some(5.0) };
    let a = train_fold(&fixture, &fixture, &model, &cfg).unwrap();
    let b = train_fold(&fixture, &fixture, &model, &cfg).unwrap();
    let best = a.log.iter().map(|r| r.train_loss).fold(f64::INFINITY, f64::min);
    let first = a.log.iter().find(|r| r.train_loss < MEMORIZE_LOSS).map(|r| r.epoch);
    let deterministic = strip(&a.log) == strip(&b.log);
    Verdict::check(
        first.is_some() && deterministic,
        format!(
            "min train loss {best:.4} < {MEMORIZE_LOSS} first at epoch {} of {MEMORIZE_EPOCHS}; repeat run identical: {deterministic}",
            first.map_or("-".into(), |e| e.to_string())
        ),
    )
}

/// Criterion 6: Full reaches 90% of the generative-oracle AUC.
fn learnability(shared: &mut Shared) -> Verdict {
    match shared.synthetic() {
        Err(e) => Verdict::check(false, format!("error: {e}")),
        Ok(run) => {
            let ratio = run.full_auc / run.oracle_auc;
            Verdict::check(
                ratio >= LEARNABILITY_RATIO && run.full_elapsed < LEARNABILITY_BUDGET,
                format!(
                    "test AUC {:.4} / oracle {:.4} = {ratio:.3} ≥ {LEARNABILITY_RATIO}; training {:.0}s < {}s ({} train / {} valid / {} test chunks)",
                    run.full_auc,
                    run.oracle_auc,
                    run.full_elapsed.as_secs_f64(),
                    LEARNABILITY_BUDGET.as_secs(),
                    run.train.len(),
                    run.valid.len(),
                    run.test.len()
                ),
            )
        }
    }
}

/// Criterion 7: difficulty modelling matters, its dimensionality does not.
fn ablation(shared: &mut Shared) -> Verdict {
    let run = match shared.synthetic() {
        Err(e) => return Verdict::check(false, format!("error: {e}")),
        Ok(run) => run,
    };
    let mut aucs = HashMap::new();
    for v in [Variant::ScalarDiff, Variant::NoDiff] {
        let out = train_fold(&run.train, &run.valid, &synthetic_model_config(&run.vocab, v), &synthetic_train_config());
        match out.and_then(|o| evaluate_one_step(&o.best, &run.test)) {
            Ok((_, m)) => {
                aucs.insert(v, m.auc);
            }
            Err(e) => return Verdict::check(false, format!("{v}: {e}")),
        }
    }
    let (full, scalar, nodiff) = (run.full_auc, aucs[&Variant::ScalarDiff], aucs[&Variant::NoDiff]);
    let gap = full - nodiff;
    let diff = (full - scalar).abs();
    Verdict::check(
        gap >= ABLATION_NODIFF_GAP && diff <= ABLATION_SCALAR_GAP,
        format!(
            "Full {full:.4}, ScalarDiff {scalar:.4}, NoDiff {nodiff:.4}; Full−NoDiff {gap:.4} ≥ {ABLATION_NODIFF_GAP}, |Full−ScalarDiff| {diff:.4} ≤ {ABLATION_SCALAR_GAP}"
        ),
    )
}

/// Criterion 8: eight ratio records and more history is not worse.
fn multistep(shared: &mut Shared) -> Verdict {
    let run = match shared.synthetic() {
        Err(e) => return Verdict::check(false, format!("error: {e}")),
        Ok(run) => run,
    };
    match evaluate_multistep(&run.full, &run.test, &MULTISTEP_RATIOS) {
        Err(e) => Verdict::check(false, format!("error: {e}")),
        Ok(records) => {
            let by_ratio = |r: f64| records.iter().find(|x| (x.ratio - r).abs() < 1e-9).and_then(|x| x.auc);
            let (lo, hi) = (by_ratio(0.2), by_ratio(0.9));
            let curve: Vec<String> =
                records.iter().map(|r| format!("{:.1}:{}", r.ratio, r.auc.map_or("-".into(), |a| format!("{a:.4}")))).collect();
            let ok = records.len() == 8 && matches!((lo, hi), (Some(l), Some(h)) if h >= l - MULTISTEP_SLACK);
            Verdict::check(ok, format!("{} records; AUC by ratio [{}]; need AUC(0.9) ≥ AUC(0.2) − {MULTISTEP_SLACK}", records.len(), curve.join(" ")))
        }
    }
}

/// Criterion 9: identical config and seed give bit-identical metrics.
fn reproducibility(_: &mut Shared) -> Verdict {
    let cfg = SynthConfig { n_students: 120, n_questions: 60, n_kcs: 10, seq_len: (20, 60), ..SynthConfig::default() };
    let data = generate(&cfg).unwrap();
    let ds = ingest_rows(data.rows, None).unwrap();
    let seqs = preprocess(&ds);
    let ids: Vec<String> = seqs.iter().map(|s| s.student_id.clone()).collect();
    let mut notes = Vec::new();
    let mut ok = true;
    for seed in [42u64, 3407] {
        let sp = split(&ids, seed).unwrap();
        let (train, valid, test) = (
            chunks_for(&seqs, &sp.train_students(0)),
            chunks_for(&seqs, &sp.folds[0]),
            chunks_for(&seqs, &sp.test_students),
        );
        let model = ModelConfig { seed, dropout: 0.2, ..synthetic_model_config(&ds.vocab, Variant::Full) };
        let model = ModelConfig { d: 32, ..model };
        let tc = TrainConfig { max_epochs: 5, ..synthetic_train_config() };
        let run = || {
            let o = train_fold(&train, &valid, &model, &tc).unwrap();
            let (set, m) = evaluate_one_step(&o.best, &test).unwrap();
            let multi = evaluate_multistep(&o.best, &test, &MULTISTEP_RATIOS).unwrap();
            (strip(&o.log), set.probs.iter().map(|p| p.to_bits()).collect::<Vec<_>>(), m.auc.to_bits(), m.accuracy.to_bits(), format!("{multi:?}"))
        };
        let (a, b) = (run(), run());
        let same = a == b;
        ok &= same;
        notes.push(format!("seed {seed}: test AUC {:.6} identical={same}", f64::from_bits(a.2)));
    }
    Verdict::check(ok, notes.join("; "))
}

/// Criterion 10: optional check against the published dataset statistics.
fn published_numbers(_: &mut Shared) -> Verdict {
    let Some(path) = std::env::var_os("SIMPLEKT_AS2009").map(PathBuf::from) else {
        return Verdict::skip(
            "not a desk-scale criterion; set SIMPLEKT_AS2009=<skill_builder csv> to check AS2009 statistics".into(),
        );
    };
    let run = || -> Result<Verdict, String> {
        let rows = adapter_by_name("assist2009").map_err(|e| e.to_string())?.read(&path).map_err(|e| e.to_string())?;
        let ds = ingest_rows(rows, None).map_err(|e| e.to_string())?;
        let seqs = preprocess(&ds);
        let st = stats(&ds, &seqs);
        let avg = st.avg_kcs_per_question.unwrap_or(f64::NAN);
        let mut ok = st.interactions == 337_415 && st.sequences == 4_661 && (avg - 1.1970).abs() <= TABLE_AVG_KC_TOL;
        let mut detail = format!(
            "interactions {} (337415), sequences {} (4661), avg KCs {avg:.4} (1.1970 ± {TABLE_AVG_KC_TOL})",
            st.interactions, st.sequences
        );
        if let Ok(v) = std::env::var("SIMPLEKT_AS2009_AUC") {
            let got: f64 = v.parse().map_err(|_| format!("SIMPLEKT_AS2009_AUC={v} is not a number"))?;
            ok &= (got - 0.7744).abs() <= TABLE_AUC_TOL;
            detail.push_str(&format!("; supplied AUC {got:.4} vs 0.7744 ± {TABLE_AUC_TOL}"));
        }
        Ok(Verdict::check(ok, detail))
    };
    run().unwrap_or_else(|e| Verdict::check(false, format!("error: {e}")))
}
