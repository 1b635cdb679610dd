use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::block::BlockSymbol;
use crate::error::{Error, Result};
use crate::models::HEAD_RECONSTRUCTION;
use crate::nn::{Activation, GraphBuilder, LossKind, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::{train_network, TrainConfig, TrainData, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeConfig {
    pub input_width: usize,
    pub encoder_widths: Vec<usize>,
    pub activation: Activation,
}

impl SaeConfig {
    /// Hidden decoder widths mirror the encoder without its first and last
    /// layer; the output layer restores the input width.
    pub fn decoder_widths(&self) -> Vec<usize> {
        let n = self.encoder_widths.len();
        let mut w: Vec<usize> = if n > 2 {
            self.encoder_widths[1..n - 1].iter().rev().copied().collect()
        } else {
            Vec::new()
        };
        w.push(self.input_width);
        w
    }

    pub fn bottleneck(&self) -> usize {
        *self.encoder_widths.last().expect("validated non-empty")
    }
}

/// Encoder block `ENC` followed by decoder block `DEC` with a linear output.
pub fn build_sae<T: Scalar>(cfg: &SaeConfig, seed: u64) -> Result<Network<T>> {
    if cfg.input_width == 0 || cfg.encoder_widths.is_empty() || cfg.encoder_widths.contains(&0) {
        return Err(Error::Plan(format!("invalid autoencoder widths {cfg:?}")));
    }
    let mut b = GraphBuilder::new(cfg.input_width).block(BlockSymbol::Encoder);
    for &w in &cfg.encoder_widths {
        b = b.dense(w, cfg.activation);
    }
    b = b.block(BlockSymbol::Decoder);
    let dec = cfg.decoder_widths();
    for (i, &w) in dec.iter().enumerate() {
        let act = if i + 1 == dec.len() { Activation::Linear } else { cfg.activation };
        b = b.dense(w, act);
    }
    let mut net = Network::chain(b.build(seed)?);
    net.rename_head(0, HEAD_RECONSTRUCTION);
    Ok(net)
}

#[derive(Debug, Clone)]
pub struct SaePretraining<T> {
    pub encoder: Vec<Tensor<T>>,
    pub outcome: TrainOutcome,
    pub initial_mse: f64,
    pub final_mse: f64,
}

/// Reconstruction training with MSE; returns the encoder parameters only.
pub fn pretrain_sae<T: Scalar>(
    sae: &mut Network<T>,
    features: &Tensor<T>,
    cfg: &TrainConfig,
) -> Result<SaePretraining<T>> {
    let data = TrainData::single(features.clone(), HEAD_RECONSTRUCTION, LossKind::Mse, features.clone());
    let initial_mse = crate::train::evaluate_loss(sae, &data)?;
    let trainable: BTreeSet<BlockSymbol> = [BlockSymbol::Encoder, BlockSymbol::Decoder].into_iter().collect();
    let outcome = train_network(sae, &trainable, &data, None, cfg)?;
    let final_mse = crate::train::evaluate_loss(sae, &data)?;
    Ok(SaePretraining {
        encoder: sae.block_params(BlockSymbol::Encoder).expect("autoencoder has an encoder"),
        outcome,
        initial_mse,
        final_mse,
    })
}
