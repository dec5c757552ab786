//! Metrics and evaluation protocols.

mod metrics;
mod protocols;

pub use metrics::{accuracy, auc, mean_std};
pub use protocols::{
    evaluate_multistep, evaluate_one_step, predict_one_step, trace, Metrics, MultiStepRecord, PredictionSet,
    TraceRecord, MULTISTEP_RATIOS,
};
