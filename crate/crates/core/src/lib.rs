//! WaveNILM: a causal, gated, dilated-convolution network for non-intrusive
//! load monitoring.
//!
//! The crate is organized bottom-up:
//!
//! - [`numcore`]: tensors, causal convolution / dense kernels with hand-written
//!   backward passes, activations, dropout, and a finite-difference gradient
//!   checker.
//! - [`network`]: the gated block stack with skip connections and the tanh
//!   output mask, plus the binary checkpoint format.
//! - [`streaming`]: constant-memory, sample-by-sample causal inference.
//! - [`data`]: meter series, CSV ingestion, scenarios, normalization,
//!   windowing and the synthetic household generator.
//! - [`training`]: loss, Adam, train/test split, cross-validation.
//! - [`metrics`]: Estimated Accuracy.
//! - [`experiment`]: glue that turns a series + scenario into a trained,
//!   evaluated model.

pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod network;
pub mod numcore;
pub mod streaming;
pub mod training;

pub use error::{Error, Result};
