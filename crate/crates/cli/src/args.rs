use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use simplekt::model::Variant;

#[derive(Debug, Parser)]
#[command(name = "simplekt", version, about = "Attention-based knowledge tracing: data prep, training and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a raw log into the canonical format and report statistics.
    Prep(PrepArgs),
    /// Generate a synthetic dataset with ground truth.
    Synth(SynthArgs),
    /// Cross-validated training; writes a run directory.
    Train(TrainArgs),
    /// One-step test metrics of a trained run.
    Eval(RunArgs),
    /// Non-accumulative multi-step test metrics of a trained run.
    Multistep(RunArgs),
    /// Train Full, ScalarDiff and NoDiff under identical settings.
    Ablate(TrainArgs),
    /// Per-step predictions of one student.
    Trace(TraceArgs),
    /// Dataset statistics.
    Stats(DataArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Prepared directory or canonical interaction file.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Source format: canonical, assist2009 or assist2015.
    #[arg(long, default_value = "canonical")]
    pub adapter: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub students: usize,
    #[arg(long, default_value_t = 300)]
    pub questions: usize,
    #[arg(long, default_value_t = 40)]
    pub kcs: usize,
    #[arg(long, default_value_t = 1)]
    pub min_kcs: usize,
    #[arg(long, default_value_t = 2)]
    pub max_kcs: usize,
    #[arg(long, default_value_t = 1.0)]
    pub theta_std: f64,
    #[arg(long, default_value_t = 1.5)]
    pub difficulty_std: f64,
    #[arg(long, default_value_t = 50)]
    pub min_len: usize,
    #[arg(long, default_value_t = 150)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.01)]
    pub drift: f64,
}

/// Training flags. Every field is optional so that a config file can fill
/// the gaps; flags given on the command line win.
#[derive(Debug, Args, Default, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Parent directory of run directories.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value file with the same keys as the long flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of cross-validation folds to run (1-5).
    #[arg(long)]
    pub folds: Option<usize>,
    /// `single` (the flags above) or `search` (the full hyperparameter search).
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Gradient-norm bound; 0 disables clipping.
    #[arg(long)]
    pub clip: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    /// Restrict to one fold.
    #[arg(long)]
    pub fold: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub student: String,
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    #[arg(long, default_value_t = 0)]
    pub chunk: usize,
    /// Output CSV; defaults to `trace-<student>.csv` in the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn config_error(msg: String) -> anyhow::Error {
    simplekt::Error::Config(msg).into()
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(config_error(format!("config line {}: expected key=value, got {raw:?}", i + 1)));
        };
        out.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(out)
}

fn take<T: std::str::FromStr>(file: &mut BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match file.remove(key) {
        None => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|e| config_error(format!("config key {key}: {e}"))),
    }
}

impl TrainArgs {
    /// Fills unset flags from the config file, if any.
    pub fn merged(&self) -> Result<TrainArgs> {
        let Some(path) = &self.config else { return Ok(self.clone()) };
        let text = fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
        self.merge_with(parse_config_file(&text)?, path.parent().unwrap_or(Path::new(".")))
    }

    fn merge_with(&self, mut file: BTreeMap<String, String>, base: &Path) -> Result<TrainArgs> {
        let rel = |p: Option<PathBuf>| p.map(|p| if p.is_relative() { base.join(p) } else { p });
        let merged = TrainArgs {
            data: self.data.clone().or(rel(take(&mut file, "data")?)),
            out: self.out.clone().or(rel(take(&mut file, "out")?)),
            config: self.config.clone(),
            variant: self.variant.or(take(&mut file, "variant")?),
            d: self.d.or(take(&mut file, "d")?),
            lr: self.lr.or(take(&mut file, "lr")?),
            dropout: self.dropout.or(take(&mut file, "dropout")?),
            blocks: self.blocks.or(take(&mut file, "blocks")?),
            heads: self.heads.or(take(&mut file, "heads")?),
            seed: self.seed.or(take(&mut file, "seed")?),
            folds: self.folds.or(take(&mut file, "folds")?),
            grid: self.grid.clone().or(take(&mut file, "grid")?),
            jobs: self.jobs.or(take(&mut file, "jobs")?),
            patience: self.patience.or(take(&mut file, "patience")?),
            max_epochs: self.max_epochs.or(take(&mut file, "max-epochs")?),
            batch_size: self.batch_size.or(take(&mut file, "batch-size")?),
            clip: self.clip.or(take(&mut file, "clip")?),
        };
        if let Some(k) = file.keys().next() {
            return Err(config_error(format!("unknown config key `{k}`")));
        }
        Ok(merged)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parsing() {
        let m = parse_config_file("# comment\nd = 32\nmax_epochs=5 # trailing\n\n").unwrap();
        assert_eq!(m["d"], "32");
        assert_eq!(m["max-epochs"], "5");
        assert!(parse_config_file("novalue\n").is_err());
    }

    #[test]
    fn flags_override_file() {
        let args = TrainArgs { d: Some(16), ..Default::default() };
        let file = parse_config_file("d=32\nlr=0.01\nvariant=nodiff\ndata=x.csv").unwrap();
        let m = args.merge_with(file, Path::new("/base")).unwrap();
        assert_eq!(m.d, Some(16));
        assert_eq!(m.lr, Some(0.01));
        assert_eq!(m.variant, Some(Variant::NoDiff));
        assert_eq!(m.data, Some(PathBuf::from("/base/x.csv")));
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        let args = TrainArgs::default();
        assert!(args.merge_with(parse_config_file("colour=red").unwrap(), Path::new(".")).is_err());
        assert!(args.merge_with(parse_config_file("d=big").unwrap(), Path::new(".")).is_err());
    }
}
