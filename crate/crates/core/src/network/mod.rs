//! The gated dilated-convolution stack: a time-distributed input layer, a
//! stack of gated blocks whose outputs are all routed to a skip
//! concatenation, and a tanh mask head that scales one chosen input channel
//! per load.

mod checkpoint;
mod config;
mod model;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::NetworkConfig;
pub use model::{ForwardCache, GatedBlock, Gradients, Network, ParamView};
