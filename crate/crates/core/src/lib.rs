pub mod archive;
pub mod block;
pub mod checksum;
pub mod data;
pub mod error;
pub mod models;
pub mod eval;
pub mod experiment;
pub mod nn;
pub mod scalar;
pub mod staged;
pub mod tensor;
pub mod train;

pub use block::BlockSymbol;
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type NetworkGraph32 = nn::NetworkGraph<f32>;
pub type NetworkGraph64 = nn::NetworkGraph<f64>;
pub type Network32 = nn::Network<f32>;
pub type Network64 = nn::Network<f64>;
pub type ModelBundle32 = models::ModelBundle<f32>;
pub type ModelBundle64 = models::ModelBundle<f64>;
