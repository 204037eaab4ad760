//! Windowed minibatch training with the loss restricted to samples that have
//! a full receptive field of history, a contiguous train/test split, and
//! k-fold cross-validation over contiguous test spans.

mod adam;
mod eval;
mod loss;
mod probe;
mod split;
mod trainer;

pub use adam::Adam;
pub use eval::{evaluate_span, predict_span, SpanEvaluation, PREDICT_CHUNK};
pub use loss::{mse_loss, mse_loss_grad, squared_error_sum_grad};
pub use probe::NetworkLossProbe;
pub use split::{fold_spans, split_point, split_series};
pub use trainer::{
    cross_validate, train, windows_from_spans, CrossValidation, EpochRecord, TrainConfig,
    TrainOutcome, TrainingSet, Window,
};
