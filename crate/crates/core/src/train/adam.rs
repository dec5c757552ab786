use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Moment estimates of Adam, one array per parameter group in
/// [`ModelParams::named`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.named().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, first: zeros.clone(), second: zeros }
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let factor = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= factor);
    }
    norm
}

/// One bias-corrected Adam update. Nothing is modified when any gradient is
/// non-finite; the error names the offending group.
pub fn adam_step(params: &mut ModelParams, grads: &[Vec<f64>], state: &mut OptimizerState, lr: f64) -> Result<()> {
    let named = params.named();
    if grads.len() != named.len() || state.first.len() != named.len() {
        return Err(Error::Shape {
            op: "adam_step",
            detail: format!("{} parameter groups, {} gradients, {} moments", named.len(), grads.len(), state.first.len()),
        });
    }
    for ((name, t), g) in named.iter().zip(grads) {
        if g.len() != t.len() {
            return Err(Error::Shape { op: "adam_step", detail: format!("{name}: {} gradients for {} values", g.len(), t.len()) });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NanGradient { group: name.clone() });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((tensor, g), m), v) in params.tensors_mut().into_iter().zip(grads).zip(&mut state.first).zip(&mut state.second) {
        for (((w, &g), m), v) in tensor.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
    Ok(())
}
