//! Dense tensors, a reverse-mode computation tape and a seedable RNG.

mod rng;
mod tape;
mod tensor;

pub use rng::{derive_seed, SeededRng};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Row/column view of a shape. Rank-1 tensors are a single row; rank-3
/// tensors fold their leading axes into rows.
pub(crate) fn dims2(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (1, *n),
        [r, c] => (*r, *c),
        [a, b, c] => (a * b, *c),
        _ => (0, 0),
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
