use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train_fold_resumable, EpochRecord, FoldOutcome, HyperParams, TrainConfig, TrainState};
use crate::data::{Chunk, DatasetSplit, StudentSequence, N_FOLDS};
use crate::error::{Error, Result};
use crate::eval::{evaluate_one_step, mean_std, Metrics};
use crate::model::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}±{:.4}", self.mean, self.std)
    }
}

/// Test-set metrics of the selected configuration across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: MeanStd,
    pub accuracy: MeanStd,
    pub folds: Vec<Metrics>,
}

impl EvalReport {
    pub fn from_folds(folds: Vec<Metrics>) -> Self {
        let aucs: Vec<f64> = folds.iter().map(|m| m.auc).collect();
        let accs: Vec<f64> = folds.iter().map(|m| m.accuracy).collect();
        Self { auc: MeanStd::of(&aucs), accuracy: MeanStd::of(&accs), folds }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub best_epoch: usize,
    pub valid_auc: f64,
    pub test: Metrics,
    pub log: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResult {
    pub hyper: HyperParams,
    pub mean_valid_auc: f64,
    pub folds: Vec<FoldResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub configs: Vec<ConfigResult>,
    /// Index into `configs` of the configuration with the best mean validation AUC.
    pub selected: usize,
    pub test: EvalReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    /// Number of folds to run, taken from the front of the split.
    pub folds: usize,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self { folds: N_FOLDS, jobs: 1 }
    }
}

/// Artifact and resume callbacks, invoked from worker threads.
pub trait FoldHooks: Sync {
    fn resume(&self, _config: usize, _fold: usize) -> Result<Option<TrainState>> {
        Ok(None)
    }

    fn on_epoch(&self, _config: usize, _fold: usize, _state: &TrainState) -> Result<()> {
        Ok(())
    }

    fn on_fold_done(&self, _config: usize, _fold: usize, _outcome: &FoldOutcome, _test: &Metrics) -> Result<()> {
        Ok(())
    }
}

pub struct NoHooks;

impl FoldHooks for NoHooks {}

fn chunks_of(students: &[String], by_student: &HashMap<&str, &StudentSequence>) -> Vec<Chunk> {
    students
        .iter()
        .filter_map(|s| by_student.get(s.as_str()))
        .flat_map(|seq| seq.chunks.iter().cloned())
        .collect()
}

/// Trains every configuration on every requested fold, selects the
/// configuration with the best mean validation AUC, and reports its
/// per-fold checkpoints on the held-out test students.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    split: &DatasetSplit,
    sequences: &[StudentSequence],
    n_kcs: usize,
    n_questions: usize,
    variant: Variant,
    configs: &[HyperParams],
    train_config: &TrainConfig,
    options: CvOptions,
    hooks: &dyn FoldHooks,
) -> Result<CvReport> {
    if configs.is_empty() {
        return Err(Error::Config("no hyperparameter configurations to evaluate".into()));
    }
    if options.folds == 0 || options.folds > split.folds.len() {
        return Err(Error::Config(format!("folds must be between 1 and {}, got {}", split.folds.len(), options.folds)));
    }
    for hp in configs {
        hp.model_config(n_kcs, n_questions, variant).validate()?;
        TrainConfig { lr: hp.lr, ..train_config.clone() }.validate()?;
    }
    let by_student: HashMap<&str, &StudentSequence> = sequences.iter().map(|s| (s.student_id.as_str(), s)).collect();
    let test_chunks = chunks_of(&split.test_students, &by_student);
    let fold_data: Vec<(Vec<Chunk>, Vec<Chunk>)> = (0..options.folds)
        .map(|f| (chunks_of(&split.train_students(f), &by_student), chunks_of(&split.folds[f], &by_student)))
        .collect();

    let tasks: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..options.folds).map(move |f| (c, f))).collect();
    let run = |&(c, f): &(usize, usize)| -> Result<FoldResult> {
        let hp = &configs[c];
        let model_config = hp.model_config(n_kcs, n_questions, variant);
        let config = TrainConfig { lr: hp.lr, ..train_config.clone() };
        let (train, valid) = &fold_data[f];
        let wrap = |e: Error| Error::Fold { fold: f, source: Box::new(e) };
        let resume = hooks.resume(c, f).map_err(wrap)?;
        let outcome = train_fold_resumable(train, valid, &model_config, &config, resume, &mut |s| hooks.on_epoch(c, f, s))
            .map_err(wrap)?;
        let (_, test) = evaluate_one_step(&outcome.best, &test_chunks).map_err(wrap)?;
        hooks.on_fold_done(c, f, &outcome, &test).map_err(wrap)?;
        Ok(FoldResult { fold: f, best_epoch: outcome.best_epoch, valid_auc: outcome.best_valid_auc, test, log: outcome.log })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<FoldResult>> = pool.install(|| tasks.par_iter().map(run).collect());

    let mut per_config: Vec<Vec<FoldResult>> = vec![Vec::new(); configs.len()];
    for ((c, _), r) in tasks.iter().zip(results) {
        per_config[*c].push(r?);
    }
    let config_results: Vec<ConfigResult> = configs
        .iter()
        .zip(per_config)
        .map(|(hp, folds)| ConfigResult {
            hyper: hp.clone(),
            mean_valid_auc: folds.iter().map(|f| f.valid_auc).sum::<f64>() / folds.len() as f64,
            folds,
        })
        .collect();
    let selected = config_results
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| if r.mean_valid_auc > config_results[best].mean_valid_auc { i } else { best });
    let test = EvalReport::from_folds(config_results[selected].folds.iter().map(|f| f.test).collect());
    Ok(CvReport { configs: config_results, selected, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_format() {
        let m = MeanStd { mean: 0.774_41, std: 0.001_83 };
        assert_eq!(m.to_string(), "0.7744±0.0018");
    }

    #[test]
    fn identical_fold_scores_have_zero_std() {
        let fold = Metrics { auc: 0.8123, accuracy: 0.7, n_predictions: 10 };
        let r = EvalReport::from_folds(vec![fold; 5]);
        assert_eq!(r.auc.std, 0.0);
        assert_eq!(r.auc.mean, 0.8123);
    }
}
