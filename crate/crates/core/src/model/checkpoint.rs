//! Versioned JSON checkpoints: the model configuration followed by every
//! parameter array with its name and shape.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams, SimpleKt};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_FORMAT: &str = "simplekt-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub params: Vec<StoredArray>,
}

impl Checkpoint {
    pub fn from_model(model: &SimpleKt) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            params: model
                .params
                .named()
                .into_iter()
                .map(|(name, t)| StoredArray { name, shape: t.shape().to_vec(), data: t.data().to_vec() })
                .collect(),
        }
    }

    /// Rebuilds the model, refusing any array whose name or shape disagrees
    /// with what the stored configuration implies.
    pub fn into_model(self) -> Result<SimpleKt> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let mut params = ModelParams::init(&self.config)?;
        let expected: Vec<(String, Vec<usize>)> =
            params.named().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        if expected.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                expected.len(),
                self.params.len()
            )));
        }
        for ((name, shape), (slot, stored)) in expected.iter().zip(params.tensors_mut().into_iter().zip(self.params)) {
            if *name != stored.name || *shape != stored.shape {
                return Err(Error::Checkpoint(format!(
                    "array `{}` {:?} does not match expected `{name}` {shape:?}",
                    stored.name, stored.shape
                )));
            }
            *slot = Tensor::new(&stored.shape, stored.data)
                .map_err(|e| Error::Checkpoint(format!("array `{name}`: {e}")))?
                .requiring_grad();
        }
        Ok(SimpleKt { config: self.config, params })
    }
}

pub fn save_checkpoint(model: &SimpleKt, path: &Path) -> Result<()> {
    let json = serde_json::to_string(&Checkpoint::from_model(model)).map_err(|e| Error::Checkpoint(e.to_string()))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<SimpleKt> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    ckpt.into_model()
}
