use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Variant};

/// One point of the hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub d: usize,
    pub lr: f64,
    pub dropout: f64,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub seed: u64,
}

impl HyperParams {
    pub fn model_config(&self, n_kcs: usize, n_questions: usize, variant: Variant) -> ModelConfig {
        ModelConfig {
            d: self.d,
            n_kcs,
            n_questions,
            n_blocks: self.n_blocks,
            n_heads: self.n_heads,
            dropout: self.dropout,
            variant,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: Vec<usize>,
    pub lr: Vec<f64>,
    pub dropout: Vec<f64>,
    pub n_blocks: Vec<usize>,
    pub n_heads: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Grid {
    /// Full search: 2 widths, 3 learning rates, 4 dropout rates, 3 depths, 2 head counts.
    pub fn search() -> Self {
        Self {
            d: vec![64, 128],
            lr: vec![1e-3, 1e-4, 1e-5],
            dropout: vec![0.05, 0.1, 0.3, 0.5],
            n_blocks: vec![1, 2, 4],
            n_heads: vec![4, 8],
            seeds: vec![42, 3407],
        }
    }

    pub fn single(hp: &HyperParams) -> Self {
        Self {
            d: vec![hp.d],
            lr: vec![hp.lr],
            dropout: vec![hp.dropout],
            n_blocks: vec![hp.n_blocks],
            n_heads: vec![hp.n_heads],
            seeds: vec![hp.seed],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d.is_empty()
            || self.lr.is_empty()
            || self.dropout.is_empty()
            || self.n_blocks.is_empty()
            || self.n_heads.is_empty()
            || self.seeds.is_empty()
        {
            return Err(Error::Config("every grid axis needs at least one value".into()));
        }
        Ok(())
    }

    /// Cartesian product in a fixed order (seed varies fastest).
    pub fn points(&self) -> Vec<HyperParams> {
        let mut out = Vec::new();
        for &d in &self.d {
            for &lr in &self.lr {
                for &dropout in &self.dropout {
                    for &n_blocks in &self.n_blocks {
                        for &n_heads in &self.n_heads {
                            for &seed in &self.seeds {
                                out.push(HyperParams { d, lr, dropout, n_blocks, n_heads, seed });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
