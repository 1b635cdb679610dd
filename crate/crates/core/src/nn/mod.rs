//! Feedforward / 1-D convolutional network engine with manual backpropagation.
//!
//! Everything here is single-threaded and deterministic: the same seed, data
//! and configuration produce bitwise-identical parameters.

pub mod activation;
pub mod graph;
pub mod init;
pub mod layer;
pub mod loss;
pub mod network;
pub mod optim;

pub use activation::Activation;
pub use graph::{BlockSpan, GraphBuilder, Gradients, NetworkGraph};
pub use init::{init_params, mix_seed, InitScheme};
pub use layer::{conv_out_len, Layer, LayerKind, LayerSpec};
pub use loss::{loss_eval, LossKind, LossValue, PROB_EPS};
pub use network::{Network, NetworkActivations, Segment};
pub use optim::{AdamConfig, AdamState, PlateauConfig, PlateauScheduler};
