//! Run directories: resolved configuration, vocabulary, per-fold training
//! state, checkpoints and metric records.
//!
//! ```text
//! run-<hash>-seed<seed>/
//!   config.json          resolved RunConfig
//!   vocab/               questions.vocab, kcs.vocab
//!   cfg<c>/fold<f>/      state.json, epochs.jsonl, best.json, result.json
//!   report.json          cross-validation report
//!   metrics.jsonl        one record per fold and protocol
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use simplekt::data::{ingest, Dataset, VocabMaps};
use simplekt::eval::Metrics;
use simplekt::model::{load_checkpoint, save_checkpoint, SimpleKt, Variant};
use simplekt::train::{FoldHooks, FoldOutcome, Grid, HyperParams, TrainConfig, TrainState};

use crate::args::{config_error, TrainArgs};

pub const INTERACTIONS_FILE: &str = "interactions.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub data_sha256: String,
    pub variant: Variant,
    pub grid: Grid,
    /// Seed of the student split; also the model seed for single-point grids.
    pub seed: u64,
    pub folds: usize,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_args(args: &TrainArgs) -> Result<Self> {
        let data = args.data.clone().ok_or_else(|| config_error("--data is required".into()))?;
        let seed = args.seed.unwrap_or(42);
        let grid = match args.grid.as_deref().unwrap_or("single") {
            "single" => Grid::single(&HyperParams {
                d: args.d.unwrap_or(64),
                lr: args.lr.unwrap_or(1e-3),
                dropout: args.dropout.unwrap_or(0.1),
                n_blocks: args.blocks.unwrap_or(1),
                n_heads: args.heads.unwrap_or(4),
                seed,
            }),
            "search" => Grid::search(),
            other => return Err(config_error(format!("unknown grid `{other}` (expected single or search)"))),
        };
        grid.validate()?;
        let train = TrainConfig {
            lr: args.lr.unwrap_or(1e-3),
            batch_size: args.batch_size.unwrap_or(64),
            max_epochs: args.max_epochs.unwrap_or(200),
            patience: args.patience.unwrap_or(10),
            clip_norm: match args.clip {
                Some(0.0) => None,
                Some(c) => Some(c),
                None => Some(5.0),
            },
        };
        train.validate()?;
        let folds = args.folds.unwrap_or(simplekt::data::N_FOLDS);
        if folds == 0 || folds > simplekt::data::N_FOLDS {
            return Err(config_error(format!("--folds must be between 1 and {}, got {folds}", simplekt::data::N_FOLDS)));
        }
        let file = interactions_path(&data);
        let bytes = fs::read(&file).map_err(|e| simplekt::Error::io(&file, e))?;
        Ok(Self {
            data,
            data_sha256: hex::encode(Sha256::digest(&bytes)),
            variant: args.variant.unwrap_or(Variant::Full),
            grid,
            seed,
            folds,
            train,
        })
    }

    /// Digest of everything that determines the results, excluding the seed
    /// (which is part of the directory name) and the data location.
    pub fn hash(&self) -> String {
        let view = RunConfig { data: PathBuf::new(), seed: 0, ..self.clone() };
        let json = serde_json::to_string(&view).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn dir_name(&self) -> String {
        format!("run-{}-seed{}", &self.hash()[..12], self.seed)
    }
}

/// Canonical interaction file inside a prepared directory, or `data` itself.
pub fn interactions_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join(INTERACTIONS_FILE)
    } else {
        data.to_path_buf()
    }
}

/// Loads a prepared directory or canonical file. An explicit vocabulary
/// wins; otherwise one stored next to the data is used, else a fresh one is
/// built.
pub fn load_dataset(data: &Path, vocab: Option<&VocabMaps>) -> Result<Dataset> {
    let stored = if vocab.is_none() && data.is_dir() && data.join("kcs.vocab").exists() {
        Some(VocabMaps::load(data)?)
    } else {
        None
    };
    Ok(ingest(&interactions_path(data), vocab.or(stored.as_ref()))?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> simplekt::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| simplekt::Error::Checkpoint(e.to_string()))?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| simplekt::Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| simplekt::Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> simplekt::Result<T> {
    let text = fs::read_to_string(path).map_err(|e| simplekt::Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| simplekt::Error::Checkpoint(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub best_epoch: usize,
    pub valid_auc: f64,
    pub test: Metrics,
}

/// One structured metric record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub dataset: String,
    pub variant: Variant,
    pub fold: Option<usize>,
    pub protocol: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ratio: Option<f64>,
    pub auc: Option<f64>,
    pub accuracy: Option<f64>,
    pub n_predictions: usize,
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub struct RunDir {
    pub path: PathBuf,
    pub config: RunConfig,
}

impl RunDir {
    pub fn create(parent: &Path, config: RunConfig) -> Result<Self> {
        let path = parent.join(config.dir_name());
        fs::create_dir_all(&path).with_context(|| format!("creating run directory {}", path.display()))?;
        let cfg_path = path.join("config.json");
        if cfg_path.exists() {
            let existing: RunConfig = read_json(&cfg_path)?;
            if existing.hash() != config.hash() || existing.seed != config.seed {
                return Err(config_error(format!("{} holds a different configuration", path.display())));
            }
        }
        write_json(&cfg_path, &config)?;
        Ok(Self { path, config })
    }

    pub fn open(path: &Path) -> Result<Self> {
        let config: RunConfig = read_json(&path.join("config.json"))
            .with_context(|| format!("{} is not a run directory (run `simplekt train` first)", path.display()))?;
        Ok(Self { path: path.to_path_buf(), config })
    }

    pub fn vocab_dir(&self) -> PathBuf {
        self.path.join("vocab")
    }

    pub fn fold_dir(&self, config: usize, fold: usize) -> PathBuf {
        self.path.join(format!("cfg{config}")).join(format!("fold{fold}"))
    }

    pub fn selected(&self) -> Result<usize> {
        let report: simplekt::train::CvReport = read_json(&self.path.join("report.json"))
            .with_context(|| format!("{} has no finished training report", self.path.display()))?;
        Ok(report.selected)
    }

    /// Best checkpoint of `fold` for the selected configuration.
    pub fn checkpoint(&self, fold: usize) -> Result<SimpleKt> {
        let path = self.fold_dir(self.selected()?, fold).join("best.json");
        load_checkpoint(&path).with_context(|| format!("loading checkpoint {}", path.display()))
    }

    pub fn dataset_name(&self) -> String {
        let p = &self.config.data;
        let p = if p.file_name().is_some_and(|n| n == INTERACTIONS_FILE) { p.parent().unwrap_or(p) } else { p };
        p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
    }
}

impl FoldHooks for RunDir {
    fn resume(&self, config: usize, fold: usize) -> simplekt::Result<Option<TrainState>> {
        let path = self.fold_dir(config, fold).join("state.json");
        if !path.exists() {
            return Ok(None);
        }
        let state: TrainState = read_json(&path)?;
        log::info!("resuming cfg{config}/fold{fold} after epoch {}", state.epochs_done);
        Ok(Some(state))
    }

    fn on_epoch(&self, config: usize, fold: usize, state: &TrainState) -> simplekt::Result<()> {
        let dir = self.fold_dir(config, fold);
        fs::create_dir_all(&dir).map_err(|e| simplekt::Error::io(&dir, e))?;
        if let Some(r) = state.log.last() {
            log::info!(
                "cfg{config}/fold{fold} epoch {}: loss {:.4}, valid auc {:.4}, acc {:.4} ({:.1}s)",
                r.epoch,
                r.train_loss,
                r.valid_auc,
                r.valid_acc,
                r.elapsed
            );
        }
        let mut lines = String::new();
        for r in &state.log {
            lines.push_str(&serde_json::to_string(r).map_err(|e| simplekt::Error::Checkpoint(e.to_string()))?);
            lines.push('\n');
        }
        let log_path = dir.join("epochs.jsonl");
        fs::write(&log_path, lines).map_err(|e| simplekt::Error::io(&log_path, e))?;
        write_json(&dir.join("state.json"), state)
    }

    fn on_fold_done(&self, config: usize, fold: usize, outcome: &FoldOutcome, test: &Metrics) -> simplekt::Result<()> {
        let dir = self.fold_dir(config, fold);
        fs::create_dir_all(&dir).map_err(|e| simplekt::Error::io(&dir, e))?;
        save_checkpoint(&outcome.best, &dir.join("best.json"))?;
        write_json(
            &dir.join("result.json"),
            &FoldSummary { best_epoch: outcome.best_epoch, valid_auc: outcome.best_valid_auc, test: *test },
        )
    }
}
