//! Knowledge tracing with Rasch-style question difficulty embeddings and
//! causally masked dot-product attention.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense `f64` tensors and a reverse-mode tape.
//! - [`data`]: interaction log ingestion, KC expansion, chunking, splits, batching.
//! - [`model`]: embeddings, attention stack and prediction head, with the
//!   `Full`, `ScalarDiff` and `NoDiff` variants.
//! - [`train`]: ADAM, early stopping and cross-validation.
//! - [`eval`]: AUC / accuracy and the one-step, multi-step and trace protocols.
//! - [`synth`]: a 1PL synthetic-student generator with ground truth.

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod synth;
pub mod train;

pub use error::{Category, Error, Result};
