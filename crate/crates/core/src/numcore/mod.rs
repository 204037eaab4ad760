//! Minimal numerical kernel: a dense tensor type and the layer primitives the
//! network needs, each with an explicit backward pass.

mod activation;
mod conv;
mod dropout;
mod gradcheck;
mod tensor;

pub use activation::Activation;
pub use conv::{ConvGrads, Dense, DilatedCausalConv};
pub use dropout::Dropout;
pub use gradcheck::{gradient_check, relative_error, GradCheckable, GradientCheckReport};
pub use tensor::Tensor;
