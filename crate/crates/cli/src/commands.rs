use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use simplekt::data::{
    adapter_by_name, her, ingest_rows, Adapter, preprocess, split, stats, write_rows, Chunk, Dataset, DatasetKind, DatasetSplit,
    StudentSequence, VocabMaps,
};
use simplekt::eval::{evaluate_multistep, evaluate_one_step, trace, MULTISTEP_RATIOS};
use simplekt::model::Variant;
use simplekt::synth::{generate, SynthConfig};
use simplekt::train::{cross_validate, CvOptions, CvReport, EvalReport};

use crate::args::{config_error, DataArgs, PrepArgs, RunArgs, SynthArgs, TraceArgs, TrainArgs};
use crate::run::{interactions_path, load_dataset, write_json, write_jsonl, MetricRecord, RunConfig, RunDir, INTERACTIONS_FILE};

pub fn prep(args: &PrepArgs) -> Result<()> {
    let adapter = adapter_by_name(&args.adapter)?;
    let rows = adapter.read(&args.data)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_rows(&args.out.join(INTERACTIONS_FILE), &rows)?;
    let ds = ingest_rows(rows, None)?;
    ds.vocab.save(&args.out)?;
    let report = stats(&ds, &preprocess(&ds)).to_string();
    fs::write(args.out.join("stats.txt"), &report)?;
    print!("{report}");
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let config = SynthConfig {
        n_students: args.students,
        n_questions: args.questions,
        n_kcs: args.kcs,
        kcs_per_question: (args.min_kcs, args.max_kcs),
        theta_std: args.theta_std,
        difficulty_std: args.difficulty_std,
        seq_len: (args.min_len, args.max_len),
        drift: args.drift,
        seed: args.seed,
    };
    let data = generate(&config)?;
    data.save(&args.out)?;
    println!("wrote {} interactions for {} students to {}", data.rows.len(), args.students, args.out.display());
    Ok(())
}

pub fn stats_cmd(args: &DataArgs) -> Result<()> {
    let ds = load_dataset(&args.data, None)?;
    print!("{}", stats(&ds, &preprocess(&ds)));
    Ok(())
}

struct Prepared {
    dataset: Dataset,
    sequences: Vec<StudentSequence>,
    split: DatasetSplit,
}

fn prepare(data: &Path, vocab: Option<&VocabMaps>, seed: u64) -> Result<Prepared> {
    let dataset = load_dataset(data, vocab)?;
    let sequences = preprocess(&dataset);
    let ids: Vec<String> = sequences.iter().map(|s| s.student_id.clone()).collect();
    let split = split(&ids, seed)?;
    Ok(Prepared { dataset, sequences, split })
}

fn chunks_of(p: &Prepared, students: &[String]) -> Vec<Chunk> {
    let wanted: HashSet<&str> = students.iter().map(String::as_str).collect();
    p.sequences.iter().filter(|s| wanted.contains(s.student_id.as_str())).flat_map(|s| s.chunks.iter().cloned()).collect()
}

fn train_run(config: RunConfig, parent: &Path, jobs: usize) -> Result<(RunDir, CvReport)> {
    let run = RunDir::create(parent, config)?;
    let cfg = &run.config;
    let p = prepare(&cfg.data, None, cfg.seed)?;
    p.dataset.vocab.save(&{
        let dir = run.vocab_dir();
        fs::create_dir_all(&dir)?;
        dir
    })?;
    log::info!(
        "{}: {} sequences, {} grid points x {} folds",
        run.path.display(),
        p.sequences.len(),
        cfg.grid.points().len(),
        cfg.folds
    );
    let report = cross_validate(
        &p.split,
        &p.sequences,
        p.dataset.vocab.n_kcs(),
        p.dataset.vocab.n_questions(),
        cfg.variant,
        &cfg.grid.points(),
        &cfg.train,
        CvOptions { folds: cfg.folds, jobs },
        &run,
    )?;
    write_json(&run.path.join("report.json"), &report)?;
    let mut records: Vec<MetricRecord> = report.configs[report.selected]
        .folds
        .iter()
        .map(|f| MetricRecord {
            dataset: run.dataset_name(),
            variant: cfg.variant,
            fold: Some(f.fold),
            protocol: "one_step".into(),
            ratio: None,
            auc: Some(f.test.auc),
            accuracy: Some(f.test.accuracy),
            n_predictions: f.test.n_predictions,
        })
        .collect();
    records.push(summary_record(&run, &report.test));
    write_jsonl(&run.path.join("metrics.jsonl"), &records)?;
    Ok((run, report))
}

fn summary_record(run: &RunDir, report: &EvalReport) -> MetricRecord {
    MetricRecord {
        dataset: run.dataset_name(),
        variant: run.config.variant,
        fold: None,
        protocol: "one_step_mean".into(),
        ratio: None,
        auc: Some(report.auc.mean),
        accuracy: Some(report.accuracy.mean),
        n_predictions: report.folds.iter().map(|m| m.n_predictions).sum(),
    }
}

fn out_dir(args: &TrainArgs) -> PathBuf {
    args.out.clone().unwrap_or_else(|| PathBuf::from("runs"))
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let args = args.merged()?;
    let config = RunConfig::from_args(&args)?;
    let (run, report) = train_run(config, &out_dir(&args), args.jobs.unwrap_or(1))?;
    let sel = &report.configs[report.selected];
    println!("run directory: {}", run.path.display());
    println!("selected: {:?} (mean valid AUC {:.4})", sel.hyper, sel.mean_valid_auc);
    println!("test AUC {}  ACC {}", report.test.auc, report.test.accuracy);
    Ok(())
}

pub fn ablate(args: &TrainArgs) -> Result<()> {
    let args = args.merged()?;
    let base = RunConfig::from_args(&args)?;
    let ds = load_dataset(&base.data, None)?;
    if ds.kind != DatasetKind::QuestionsAndKcs {
        log::warn!("dataset lacks question or KC ids on some rows; difficulty variants are mathematically unidentifiable");
        return Err(config_error(format!(
            "refusing to ablate {}: the Full, ScalarDiff and NoDiff variants are mathematically unidentifiable \
             without both question and KC ids on every row",
            base.data.display()
        )));
    }
    let mut table = format!("{:<12}{:<16}{:<16}\n", "variant", "AUC", "ACC");
    let mut records = Vec::new();
    for variant in Variant::ALL {
        let (run, report) = train_run(RunConfig { variant, ..base.clone() }, &out_dir(&args), args.jobs.unwrap_or(1))?;
        writeln!(table, "{:<12}{:<16}{:<16}", variant.to_string(), report.test.auc.to_string(), report.test.accuracy.to_string())?;
        records.push(summary_record(&run, &report.test));
    }
    let out = out_dir(&args);
    fs::write(out.join("ablation.txt"), &table)?;
    write_jsonl(&out.join("ablation.jsonl"), &records)?;
    print!("{table}");
    Ok(())
}

/// Reloads the run's data with its stored vocabulary, refusing data that
/// changed since training.
fn reload(run: &RunDir) -> Result<Prepared> {
    let file = interactions_path(&run.config.data);
    let bytes = fs::read(&file).map_err(|e| simplekt::Error::io(&file, e))?;
    if hex::encode(Sha256::digest(&bytes)) != run.config.data_sha256 {
        return Err(config_error(format!("{} changed since this run was trained", file.display())));
    }
    let vocab = VocabMaps::load(&run.vocab_dir())?;
    prepare(&run.config.data, Some(&vocab), run.config.seed)
}

fn folds(run: &RunDir, only: Option<usize>) -> Result<Vec<usize>> {
    match only {
        Some(f) if f >= run.config.folds => {
            Err(config_error(format!("fold {f} was not trained (run has {} folds)", run.config.folds)))
        }
        Some(f) => Ok(vec![f]),
        None => Ok((0..run.config.folds).collect()),
    }
}

pub fn eval(args: &RunArgs) -> Result<()> {
    let run = RunDir::open(&args.run)?;
    let p = reload(&run)?;
    let test = chunks_of(&p, &p.split.test_students);
    let mut records = Vec::new();
    let mut metrics = Vec::new();
    for f in folds(&run, args.fold)? {
        let (_, m) = evaluate_one_step(&run.checkpoint(f)?, &test)?;
        println!("fold {f}: AUC {:.4} ACC {:.4} ({} predictions)", m.auc, m.accuracy, m.n_predictions);
        records.push(MetricRecord {
            dataset: run.dataset_name(),
            variant: run.config.variant,
            fold: Some(f),
            protocol: "one_step".into(),
            ratio: None,
            auc: Some(m.auc),
            accuracy: Some(m.accuracy),
            n_predictions: m.n_predictions,
        });
        metrics.push(m);
    }
    let report = EvalReport::from_folds(metrics);
    println!("test AUC {}  ACC {}", report.auc, report.accuracy);
    records.push(summary_record(&run, &report));
    write_jsonl(&run.path.join("eval.jsonl"), &records)?;
    Ok(())
}

pub fn multistep(args: &RunArgs) -> Result<()> {
    let run = RunDir::open(&args.run)?;
    let p = reload(&run)?;
    let test = chunks_of(&p, &p.split.test_students);
    let mut records = Vec::new();
    let mut csv = String::from("fold,ratio,auc,accuracy,n_predictions,n_chunks,skipped_chunks\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
    for f in folds(&run, args.fold)? {
        for r in evaluate_multistep(&run.checkpoint(f)?, &test, &MULTISTEP_RATIOS)? {
            writeln!(csv, "{f},{:.1},{},{},{},{},{}", r.ratio, opt(r.auc), opt(r.accuracy), r.n_predictions, r.n_chunks, r.skipped_chunks)?;
            records.push(MetricRecord {
                dataset: run.dataset_name(),
                variant: run.config.variant,
                fold: Some(f),
                protocol: "multistep".into(),
                ratio: Some(r.ratio),
                auc: r.auc,
                accuracy: r.accuracy,
                n_predictions: r.n_predictions,
            });
        }
    }
    fs::write(run.path.join("multistep.csv"), &csv)?;
    write_jsonl(&run.path.join("multistep.jsonl"), &records)?;
    print!("{csv}");
    Ok(())
}

pub fn trace_cmd(args: &TraceArgs) -> Result<()> {
    let run = RunDir::open(&args.run)?;
    folds(&run, Some(args.fold))?;
    let p = reload(&run)?;
    let seq = p
        .sequences
        .iter()
        .find(|s| s.student_id == args.student)
        .ok_or_else(|| config_error(format!("student {} has no retained sequence", args.student)))?;
    let chunk = seq.chunks.get(args.chunk).ok_or_else(|| {
        config_error(format!("student {} has {} chunks; --chunk {} is out of range", args.student, seq.chunks.len(), args.chunk))
    })?;
    if !p.split.test_students.contains(&args.student) {
        log::warn!("student {} is not a held-out test student", args.student);
    }
    let train: HashSet<String> = p.split.train_students(args.fold).into_iter().collect();
    let her_map = her(p.dataset.students.iter().filter(|(s, _)| train.contains(s)).flat_map(|(_, r)| r));
    let vocab = &p.dataset.vocab;
    let mut csv = String::from("position,interaction,question_id,kc_id,response,prob,her,first_kc_encounter\n");
    for r in trace(&run.checkpoint(args.fold)?, chunk, &her_map)? {
        writeln!(
            csv,
            "{},{},{},{},{},{:.6},{},{}",
            r.position,
            r.interaction,
            vocab.questions.raw(r.question_id).unwrap_or("UNK"),
            vocab.kcs.raw(r.kc_id).unwrap_or("UNK"),
            r.response,
            r.prob,
            r.her.map_or(String::new(), |h| format!("{h:.6}")),
            r.first_kc_encounter
        )?;
    }
    let out = args.out.clone().unwrap_or_else(|| run.path.join(format!("trace-{}.csv", args.student)));
    fs::write(&out, csv).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(())
}
