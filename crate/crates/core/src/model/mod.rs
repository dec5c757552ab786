//! The knowledge-tracing network.
//!
//! Every KC-level step is embedded twice: a query/key representation `x`
//! built from the KC embedding plus a question-specific difficulty term, and a
//! value representation `y` built from the KC embedding plus a response
//! embedding. A stack of causally masked multi-head dot-product attention
//! blocks turns the history into a knowledge state `h`, and a two-layer head
//! maps `[h; x]` to a logit.
//!
//! The difficulty term depends on [`Variant`]:
//!
//! | variant      | `x`                         |
//! |--------------|-----------------------------|
//! | `Full`       | `z[kc] + m[q] ⊙ v[kc]`      |
//! | `ScalarDiff` | `z[kc] + μ[q] · v[kc]`      |
//! | `NoDiff`     | `z[kc]`                     |

mod checkpoint;
mod forward;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use forward::{HistoryMode, LossGraph, SequenceOutput};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{SeededRng, Tensor};

/// Difficulty-modelling ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Full,
    ScalarDiff,
    NoDiff,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::ScalarDiff, Variant::NoDiff];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "Full",
            Variant::ScalarDiff => "ScalarDiff",
            Variant::NoDiff => "NoDiff",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Variant::Full),
            "scalardiff" | "scalar" => Ok(Variant::ScalarDiff),
            "nodiff" | "none" => Ok(Variant::NoDiff),
            _ => Err(Error::Config(format!("unknown variant `{s}` (expected full, scalardiff or nodiff)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding / hidden dimension.
    pub d: usize,
    /// Number of KCs (an extra UNK row is allocated).
    pub n_kcs: usize,
    /// Number of questions (an extra UNK row is allocated).
    pub n_questions: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub variant: Variant,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_heads == 0 || !self.d.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!("d = {} must be a positive multiple of n_heads = {}", self.d, self.n_heads)));
        }
        if self.n_blocks == 0 {
            return Err(Error::Config("n_blocks must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.n_heads
    }
}

/// Projections of one attention block. Blocks after the first also carry a
/// layer-norm gain and bias applied after their residual connection.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    pub w_query: Tensor,
    pub w_key: Tensor,
    pub w_value: Tensor,
    pub w_out: Tensor,
    pub norm: Option<(Tensor, Tensor)>,
}

/// All learnable arrays. Matrices apply as `W · x` on column vectors, so a
/// `[d_out × d_in]` weight multiplies row-major activations via `x · Wᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `z`: `[(n+1) × d]`.
    pub kc_embed: Tensor,
    /// `v`: `[(n+1) × d]`, absent under `NoDiff`.
    pub kc_variation: Option<Tensor>,
    /// `m`: `[(Q+1) × d]` (`[(Q+1) × 1]` under `ScalarDiff`), absent under `NoDiff`.
    pub difficulty: Option<Tensor>,
    /// `r`: `[2 × d]`, indexed by correctness.
    pub response_embed: Tensor,
    pub blocks: Vec<AttentionBlock>,
    /// `W₁`: `[d × 2d]`.
    pub w1: Tensor,
    pub b1: Tensor,
    /// `W₂`: `[d × d]`.
    pub w2: Tensor,
    pub b2: Tensor,
    /// `w`: `[d]`.
    pub w_out: Tensor,
    /// `b`: `[1]`.
    pub b_out: Tensor,
}

fn uniform(shape: &[usize], bound: f64, rng: &mut SeededRng) -> Result<Tensor> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| (2.0 * rng.uniform() - 1.0) * bound).collect();
    Ok(Tensor::new(shape, data)?.requiring_grad())
}

fn zeros(shape: &[usize]) -> Result<Tensor> {
    Ok(Tensor::zeros(shape)?.requiring_grad())
}

impl ModelParams {
    /// Uniform `[-1/√d, 1/√d]` matrices, zero biases, unit norm gains.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = SeededRng::new(config.seed).split(0x1417);
        let rng = &mut rng;
        let (n, q) = (config.n_kcs + 1, config.n_questions + 1);
        let kc_embed = uniform(&[n, d], bound, rng)?;
        let (kc_variation, difficulty) = match config.variant {
            Variant::Full => (Some(uniform(&[n, d], bound, rng)?), Some(uniform(&[q, d], bound, rng)?)),
            Variant::ScalarDiff => (Some(uniform(&[n, d], bound, rng)?), Some(uniform(&[q, 1], bound, rng)?)),
            Variant::NoDiff => (None, None),
        };
        let response_embed = uniform(&[2, d], bound, rng)?;
        let mut blocks = Vec::with_capacity(config.n_blocks);
        for b in 0..config.n_blocks {
            blocks.push(AttentionBlock {
                w_query: uniform(&[d, d], bound, rng)?,
                w_key: uniform(&[d, d], bound, rng)?,
                w_value: uniform(&[d, d], bound, rng)?,
                w_out: uniform(&[d, d], bound, rng)?,
                norm: if b == 0 {
                    None
                } else {
                    Some((Tensor::new(&[d], vec![1.0; d])?.requiring_grad(), zeros(&[d])?))
                },
            });
        }
        Ok(Self {
            kc_embed,
            kc_variation,
            difficulty,
            response_embed,
            blocks,
            w1: uniform(&[d, 2 * d], bound, rng)?,
            b1: zeros(&[d])?,
            w2: uniform(&[d, d], bound, rng)?,
            b2: zeros(&[d])?,
            w_out: uniform(&[d], bound, rng)?,
            b_out: zeros(&[1])?,
        })
    }

    /// Parameter groups in a fixed order, with stable names.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("kc_embed".to_string(), &self.kc_embed)];
        if let Some(v) = &self.kc_variation {
            out.push(("kc_variation".into(), v));
        }
        if let Some(m) = &self.difficulty {
            out.push(("difficulty".into(), m));
        }
        out.push(("response_embed".into(), &self.response_embed));
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.w_query"), &b.w_query));
            out.push((format!("block{i}.w_key"), &b.w_key));
            out.push((format!("block{i}.w_value"), &b.w_value));
            out.push((format!("block{i}.w_out"), &b.w_out));
            if let Some((g, bias)) = &b.norm {
                out.push((format!("block{i}.norm_gain"), g));
                out.push((format!("block{i}.norm_bias"), bias));
            }
        }
        out.extend([
            ("head.w1".to_string(), &self.w1),
            ("head.b1".to_string(), &self.b1),
            ("head.w2".to_string(), &self.w2),
            ("head.b2".to_string(), &self.b2),
            ("head.w".to_string(), &self.w_out),
            ("head.b".to_string(), &self.b_out),
        ]);
        out
    }

    /// Mutable counterpart of [`ModelParams::named`], same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.kc_embed];
        if let Some(v) = &mut self.kc_variation {
            out.push(v);
        }
        if let Some(m) = &mut self.difficulty {
            out.push(m);
        }
        out.push(&mut self.response_embed);
        for b in &mut self.blocks {
            out.extend([&mut b.w_query, &mut b.w_key, &mut b.w_value, &mut b.w_out]);
            if let Some((g, bias)) = &mut b.norm {
                out.push(g);
                out.push(bias);
            }
        }
        out.extend([&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.w_out, &mut self.b_out]);
        out
    }

    pub fn n_scalars(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }
}

/// A configured model with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleKt {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl SimpleKt {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let params = ModelParams::init(&config)?;
        Ok(Self { config, params })
    }

    /// Copy of this model under another variant, sharing every parameter the
    /// two variants have in common. Missing difficulty arrays are taken from
    /// a fresh initialisation of `variant`.
    pub fn with_variant(&self, variant: Variant) -> Result<Self> {
        let config = ModelConfig { variant, ..self.config.clone() };
        let fresh = ModelParams::init(&config)?;
        let mut params = self.params.clone();
        match variant {
            Variant::NoDiff => {
                params.kc_variation = None;
                params.difficulty = None;
            }
            _ => {
                if params.kc_variation.is_none() {
                    params.kc_variation = fresh.kc_variation;
                }
                let width = if variant == Variant::Full { config.d } else { 1 };
                if params.difficulty.as_ref().is_none_or(|m| m.cols() != width) {
                    params.difficulty = fresh.difficulty;
                }
            }
        }
        Ok(Self { config, params })
    }
}
