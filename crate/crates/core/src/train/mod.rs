//! Mini-batch Adam training with early stopping on validation AUC, plus
//! grid search and 5-fold cross-validation.

mod adam;
mod cv;
mod grid;

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, clip_global_norm, OptimizerState};
pub use cv::{cross_validate, ConfigResult, CvOptions, CvReport, EvalReport, FoldHooks, FoldResult, MeanStd, NoHooks};
pub use grid::{Grid, HyperParams};

use crate::data::{batch, Chunk};
use crate::error::{Error, Result};
use crate::eval::evaluate_one_step;
use crate::model::{Checkpoint, HistoryMode, ModelConfig, SimpleKt};
use crate::numerics::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-3, batch_size: 64, max_epochs: 200, patience: 10, clip_norm: Some(5.0) }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("batch_size, max_epochs and patience must be at least 1".into()));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Config(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Strict-improvement early stopping on a score that should increase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub best_epoch: usize,
    pub bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, best_epoch: 0, bad_epochs: 0 }
    }

    /// Records `score` for `epoch`; returns true when it is the new best.
    pub fn observe(&mut self, epoch: usize, score: f64) -> bool {
        if self.best.is_none_or(|b| score > b) {
            self.best = Some(score);
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            true
        } else {
            self.bad_epochs += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.bad_epochs >= self.patience
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_auc: f64,
    pub valid_acc: f64,
    /// Wall-clock seconds spent in this epoch; the only nondeterministic field.
    pub elapsed: f64,
}

/// Everything needed to continue an interrupted fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainState {
    pub epochs_done: usize,
    pub current: Checkpoint,
    pub best: Checkpoint,
    pub optimizer: OptimizerState,
    pub stopper: EarlyStopping,
    pub log: Vec<EpochRecord>,
    pub finished: bool,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub best: SimpleKt,
    pub best_epoch: usize,
    pub best_valid_auc: f64,
    pub log: Vec<EpochRecord>,
}

pub fn train_fold(train: &[Chunk], valid: &[Chunk], model: &ModelConfig, config: &TrainConfig) -> Result<FoldOutcome> {
    train_fold_resumable(train, valid, model, config, None, &mut |_| Ok(()))
}

/// Trains from scratch or from `resume`, calling `on_epoch` after every
/// epoch with the state to persist.
pub fn train_fold_resumable(
    train: &[Chunk],
    valid: &[Chunk],
    model_config: &ModelConfig,
    config: &TrainConfig,
    resume: Option<TrainState>,
    on_epoch: &mut dyn FnMut(&TrainState) -> Result<()>,
) -> Result<FoldOutcome> {
    model_config.validate()?;
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Config("no training sequences".into()));
    }
    let mut state = match resume {
        Some(s) => s,
        None => {
            let model = SimpleKt::new(model_config.clone())?;
            let ckpt = Checkpoint::from_model(&model);
            TrainState {
                epochs_done: 0,
                current: ckpt.clone(),
                best: ckpt,
                optimizer: OptimizerState::new(&model.params),
                stopper: EarlyStopping::new(config.patience),
                log: Vec::new(),
                finished: false,
            }
        }
    };
    let mut model = state.current.clone().into_model()?;
    if model.config != *model_config {
        return Err(Error::Checkpoint("resume state was produced with a different model configuration".into()));
    }
    let root = SeededRng::new(model_config.seed);
    while !state.finished && state.epochs_done < config.max_epochs {
        let epoch = state.epochs_done + 1;
        let started = Instant::now();
        let train_loss = run_epoch(&mut model, train, config, &mut state.optimizer, &root.split(epoch as u64))?;
        let (_, metrics) = evaluate_one_step(&model, valid).map_err(|e| match e {
            Error::UndefinedMetric(m) => Error::UndefinedMetric(format!(
                "validation AUC is undefined ({m}); use a larger validation split so both response classes occur"
            )),
            e => e,
        })?;
        log::debug!("epoch {epoch}: loss {train_loss:.5}, valid auc {:.5}", metrics.auc);
        if state.stopper.observe(epoch, metrics.auc) {
            state.best = Checkpoint::from_model(&model);
        }
        state.log.push(EpochRecord {
            epoch,
            train_loss,
            valid_auc: metrics.auc,
            valid_acc: metrics.accuracy,
            elapsed: started.elapsed().as_secs_f64(),
        });
        state.epochs_done = epoch;
        state.current = Checkpoint::from_model(&model);
        state.finished = state.stopper.should_stop() || epoch >= config.max_epochs;
        on_epoch(&state)?;
    }
    Ok(FoldOutcome {
        best: state.best.clone().into_model()?,
        best_epoch: state.stopper.best_epoch,
        best_valid_auc: state.stopper.best.unwrap_or(f64::NAN),
        log: state.log,
    })
}

/// One pass over shuffled training chunks; returns the prediction-weighted
/// mean training loss.
fn run_epoch(
    model: &mut SimpleKt,
    train: &[Chunk],
    config: &TrainConfig,
    optimizer: &mut OptimizerState,
    rng: &SeededRng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng.split(0));
    let mut dropout_rng = rng.split(1);
    let (mut loss_sum, mut n_total) = (0.0, 0usize);
    for idx in order.chunks(config.batch_size) {
        let refs: Vec<&Chunk> = idx.iter().map(|&i| &train[i]).collect();
        let b = batch(&refs, 0);
        let (loss, n, mut grads) = {
            let graph = model.loss_graph(&b, true, HistoryMode::Step, &mut dropout_rng)?;
            if graph.n_predictions == 0 {
                continue;
            }
            (graph.loss_value(), graph.n_predictions, graph.gradients()?)
        };
        if let Some(c) = config.clip_norm {
            clip_global_norm(&mut grads, c);
        }
        adam_step(&mut model.params, &grads, optimizer, config.lr)?;
        loss_sum += loss * n as f64;
        n_total += n;
    }
    Ok(if n_total == 0 { 0.0 } else { loss_sum / n_total as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ExpandedStep;
    use crate::model::Variant;

    #[test]
    fn early_stopping_rule_trace() {
        let mut s = EarlyStopping::new(1);
        assert!(s.observe(1, 0.7));
        assert!(!s.should_stop());
        assert!(!s.observe(2, 0.6));
        assert!(s.should_stop());
        assert_eq!(s.best_epoch, 1);
    }

    #[test]
    fn early_stopping_ties_are_not_improvements() {
        let mut s = EarlyStopping::new(2);
        s.observe(1, 0.5);
        assert!(!s.observe(2, 0.5));
        assert!(s.observe(3, 0.51));
        assert_eq!(s.bad_epochs, 0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { patience: 0, ..Default::default() }.validate().is_err());
    }

    fn chunk(student: &str, resp: &[u8]) -> Chunk {
        let steps = resp
            .iter()
            .enumerate()
            .map(|(i, &r)| ExpandedStep { kc_id: i % 3, question_id: i % 5, response: r, position: i, interaction: i })
            .collect();
        Chunk { student_id: student.into(), steps }
    }

    fn config() -> ModelConfig {
        ModelConfig { d: 8, n_kcs: 3, n_questions: 5, n_blocks: 1, n_heads: 2, dropout: 0.1, variant: Variant::Full, seed: 3 }
    }

    #[test]
    fn single_class_validation_is_an_error() {
        let train = vec![chunk("a", &[0, 1, 1, 0, 1])];
        let valid = vec![chunk("b", &[1, 1, 1, 1])];
        let cfg = TrainConfig { max_epochs: 2, ..Default::default() };
        match train_fold(&train, &valid, &config(), &cfg) {
            Err(Error::UndefinedMetric(m)) => assert!(m.contains("larger validation split")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let train = vec![chunk("a", &[0, 1, 1, 0, 1, 0]), chunk("b", &[1, 0, 0, 1, 1])];
        let valid = vec![chunk("c", &[0, 1, 0, 1, 1])];
        let cfg = TrainConfig { max_epochs: 4, patience: 10, batch_size: 1, ..Default::default() };
        let full = train_fold(&train, &valid, &config(), &cfg).unwrap();
        let mut saved = None;
        let short = TrainConfig { max_epochs: 2, ..cfg.clone() };
        train_fold_resumable(&train, &valid, &config(), &short, None, &mut |s| {
            saved = Some(s.clone());
            Ok(())
        })
        .unwrap();
        let mut state = saved.unwrap();
        state.finished = false;
        let resumed = train_fold_resumable(&train, &valid, &config(), &cfg, Some(state), &mut |_| Ok(())).unwrap();
        let strip = |log: &[EpochRecord]| log.iter().map(|r| (r.epoch, r.train_loss, r.valid_auc)).collect::<Vec<_>>();
        assert_eq!(strip(&full.log), strip(&resumed.log));
        assert_eq!(full.best, resumed.best);
    }
}
