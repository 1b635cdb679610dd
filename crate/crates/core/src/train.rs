//! Mini-batch Adam training of a (possibly multi-head) network.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::block::BlockSymbol;
use crate::error::{Error, Result};
use crate::nn::{loss_eval, AdamConfig, AdamState, LossKind, Network, PlateauConfig, PlateauScheduler};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Rows per forward pass when scoring a whole split.
const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a strictly lower monitored loss.
    #[serde(default)]
    pub early_stopping_patience: Option<usize>,
    #[serde(default)]
    pub scheduler: Option<PlateauConfig>,
    /// Hard cap on optimizer steps across all epochs.
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    pub seed: u64,
}

fn default_beta1() -> f64 {
    AdamConfig::with_lr(1.0).beta1
}
fn default_beta2() -> f64 {
    AdamConfig::with_lr(1.0).beta2
}
fn default_eps() -> f64 {
    AdamConfig::with_lr(1.0).epsilon
}

impl TrainConfig {
    pub fn new(learning_rate: f64, batch_size: usize, max_epochs: usize, seed: u64) -> Self {
        Self {
            learning_rate,
            batch_size,
            max_epochs,
            early_stopping_patience: None,
            scheduler: None,
            max_steps: None,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_eps(),
            seed,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 {
            problems.push("batch size must be >= 1".to_string());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            problems.push(format!("Adam betas ({}, {}) must lie in [0, 1)", self.beta1, self.beta2));
        }
        if !(self.epsilon > 0.0) {
            problems.push(format!("Adam epsilon {} must be positive", self.epsilon));
        }
        if let Some(s) = self.scheduler {
            if !(s.factor > 0.0 && s.factor < 1.0) {
                problems.push(format!("scheduler factor {} must lie in (0, 1)", s.factor));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Plan(problems.join("; ")))
        }
    }
}

/// Targets and loss for one network head.
#[derive(Debug, Clone)]
pub struct HeadTarget<T> {
    pub head: String,
    pub loss: LossKind,
    pub weight: f64,
    pub targets: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct TrainData<T> {
    pub inputs: Tensor<T>,
    pub heads: Vec<HeadTarget<T>>,
}

impl<T: Scalar> TrainData<T> {
    pub fn single(inputs: Tensor<T>, head: &str, loss: LossKind, targets: Tensor<T>) -> Self {
        Self {
            inputs,
            heads: vec![HeadTarget {
                head: head.to_string(),
                loss,
                weight: 1.0,
                targets,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self, net: &Network<T>) -> Result<Vec<usize>> {
        if self.inputs.shape().len() != 2 || self.inputs.cols() != net.input_width() {
            return Err(Error::Shape(format!(
                "inputs {:?} do not match network input width {}",
                self.inputs.shape(),
                net.input_width()
            )));
        }
        self.heads
            .iter()
            .map(|h| {
                let idx = net.head_index(&h.head).ok_or_else(|| Error::Plan(format!("network has no head `{}`", h.head)))?;
                if h.targets.rows() != self.len() || h.targets.cols() != net.head_width(idx) {
                    return Err(Error::Shape(format!(
                        "targets for head `{}` are {:?}, expected [{}, {}]",
                        h.head,
                        h.targets.shape(),
                        self.len(),
                        net.head_width(idx)
                    )));
                }
                if !(h.weight >= 0.0 && h.weight.is_finite()) {
                    return Err(Error::Plan(format!("head `{}` has invalid loss weight {}", h.head, h.weight)));
                }
                Ok(idx)
            })
            .collect()
    }
}

pub fn gather_rows<T: Scalar>(t: &Tensor<T>, rows: &[usize]) -> Tensor<T> {
    let cols = t.cols();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for &r in rows {
        data.extend_from_slice(t.row(r));
    }
    Tensor::new(vec![rows.len(), cols], data).expect("gathered rows are non-empty")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub trace: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub best_loss: Option<f64>,
    pub steps: usize,
    pub duration: Duration,
    pub stopped_early: bool,
}

/// Weighted sum of head losses over a whole split, without gradients.
pub fn evaluate_loss<T: Scalar>(net: &Network<T>, data: &TrainData<T>) -> Result<f64> {
    let heads = data.validate(net)?;
    let n = data.len();
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let outs = net.predict(&gather_rows(&data.inputs, &idx))?;
        for (h, &hi) in data.heads.iter().zip(&heads) {
            if h.weight == 0.0 {
                continue;
            }
            let lv = loss_eval(h.loss, &outs[hi], &gather_rows(&h.targets, &idx))?;
            // CE averages over rows and the others over elements; both are
            // per-row means at fixed width, so chunk means weight by rows.
            total += h.weight * lv.value.as_f64() * (end - start) as f64;
        }
        start = end;
    }
    Ok(total / n as f64)
}

/// Trains `trainable` blocks of `net` in place and leaves the parameters of
/// the best monitored epoch (validation loss if given, else training loss).
pub fn train_network<T: Scalar>(
    net: &mut Network<T>,
    trainable: &BTreeSet<BlockSymbol>,
    train: &TrainData<T>,
    val: Option<&TrainData<T>>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let heads = train.validate(net)?;
    if let Some(v) = val {
        v.validate(net)?;
    }
    for s in trainable {
        if net.block_shapes(*s).is_none() {
            return Err(Error::MissingBlock {
                block: s.to_string(),
                context: "network being trained".into(),
            });
        }
    }
    let started = Instant::now();
    let mask: Vec<bool> = net.params_mut().iter().map(|(s, _)| trainable.contains(s)).collect();
    let mut adam = AdamState::<T>::new(cfg.adam(), &net.param_shapes());
    let mut scheduler = cfg.scheduler.map(|s| PlateauScheduler::new(s, cfg.learning_rate)).transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut trace = Vec::new();
    let mut best: Option<(usize, f64, Vec<Tensor<T>>)> = None;
    let mut since_best = 0usize;
    let mut steps = 0usize;
    let mut stopped_early = false;
    let step_cap = cfg.max_steps.unwrap_or(usize::MAX);

    'epochs: for epoch in 0..cfg.max_epochs {
        if steps >= step_cap {
            break;
        }
        let lr = scheduler.as_ref().map_or(cfg.learning_rate, |s| s.current_lr);
        adam.learning_rate = lr;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for (batch, rows) in order.chunks(cfg.batch_size).enumerate() {
            if steps >= step_cap {
                break;
            }
            let x = gather_rows(&train.inputs, rows);
            let acts = net.forward(&x)?;
            let mut grads = vec![None; net.heads().len()];
            let mut batch_loss = 0.0;
            for (h, &hi) in train.heads.iter().zip(&heads) {
                if h.weight == 0.0 {
                    continue;
                }
                let out = acts.segment_output(net.heads()[hi].1);
                if !out.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch, lr });
                }
                let mut lv = loss_eval(h.loss, out, &gather_rows(&h.targets, rows))?;
                let w = T::lit(h.weight);
                lv.grad.data_mut().iter_mut().for_each(|g| *g *= w);
                batch_loss += h.weight * lv.value.as_f64();
                grads[hi] = Some(lv.grad);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch, lr });
            }
            let flat = Network::flatten_grads(net.backward(&acts, &grads)?);
            let mut params: Vec<&mut Tensor<T>> = net.params_mut().into_iter().map(|(_, p)| p).collect();
            adam.step(&mut params, &flat, &mask)?;
            steps += 1;
            epoch_loss += batch_loss * rows.len() as f64;
            seen += rows.len();
        }
        if seen == 0 {
            break;
        }
        let train_loss = epoch_loss / seen as f64;
        let val_loss = val.map(|v| evaluate_loss(net, v)).transpose()?;
        let monitored = val_loss.unwrap_or(train_loss);
        if !monitored.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0, lr });
        }
        trace.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            learning_rate: lr,
        });
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:?} lr {lr:e}");
        if best.as_ref().map_or(true, |(_, b, _)| monitored < *b) {
            best = Some((epoch, monitored, snapshot(net, &mask)));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if let Some(s) = scheduler.as_mut() {
            if s.step(monitored) {
                log::info!("epoch {epoch}: learning rate reduced to {:e}", s.current_lr);
            }
        }
        if let Some(p) = cfg.early_stopping_patience {
            if since_best >= p {
                stopped_early = true;
                break 'epochs;
            }
        }
    }

    let (best_epoch, best_loss) = match best {
        Some((e, l, params)) => {
            restore(net, &mask, params);
            (Some(e), Some(l))
        }
        None => (None, None),
    };
    Ok(TrainOutcome {
        trace,
        best_epoch,
        best_loss,
        steps,
        duration: started.elapsed(),
        stopped_early,
    })
}

fn snapshot<T: Scalar>(net: &mut Network<T>, mask: &[bool]) -> Vec<Tensor<T>> {
    net.params_mut()
        .into_iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((_, p), _)| p.clone())
        .collect()
}

fn restore<T: Scalar>(net: &mut Network<T>, mask: &[bool], saved: Vec<Tensor<T>>) {
    let mut it = saved.into_iter();
    for ((_, p), &m) in net.params_mut().into_iter().zip(mask) {
        if m {
            *p = it.next().expect("snapshot covers every trainable tensor");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, GraphBuilder};

    fn net() -> Network<f64> {
        Network::chain(
            GraphBuilder::new(3)
                .block(BlockSymbol::Encoder)
                .dense(8, Activation::Tanh)
                .block(BlockSymbol::R)
                .dense(1, Activation::Linear)
                .build(3)
                .unwrap(),
        )
    }

    fn data() -> TrainData<f64> {
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..10).map(|i| x[3 * i] - 0.5 * x[3 * i + 2]).collect();
        TrainData::single(Tensor::matrix(10, 3, x).unwrap(), "out", LossKind::Mse, Tensor::matrix(10, 1, y).unwrap())
    }

    fn all() -> BTreeSet<BlockSymbol> {
        [BlockSymbol::Encoder, BlockSymbol::R].into_iter().collect()
    }

    #[test]
    fn zero_epochs_leaves_weights() {
        let mut n = net();
        let before = n.clone();
        let out = train_network(&mut n, &all(), &data(), None, &TrainConfig::new(1e-2, 4, 0, 1)).unwrap();
        assert!(out.trace.is_empty());
        assert_eq!(n, before);
    }

    #[test]
    fn frozen_blocks_do_not_move() {
        let mut n = net();
        let enc = n.block_params(BlockSymbol::Encoder).unwrap();
        let only_r = [BlockSymbol::R].into_iter().collect();
        train_network(&mut n, &only_r, &data(), None, &TrainConfig::new(1e-2, 4, 5, 1)).unwrap();
        let after = n.block_params(BlockSymbol::Encoder).unwrap();
        assert!(enc.iter().zip(&after).all(|(a, b)| a.bitwise_eq(b)));
    }

    #[test]
    fn loss_decreases_and_run_is_deterministic() {
        let cfg = TrainConfig::new(1e-2, 5, 200, 9);
        let mut a = net();
        let mut b = net();
        let ta = train_network(&mut a, &all(), &data(), None, &cfg).unwrap();
        train_network(&mut b, &all(), &data(), None, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(ta.trace.last().unwrap().train_loss < ta.trace[0].train_loss);
        assert_eq!(ta.steps, 400);
    }

    #[test]
    fn step_cap_and_early_stopping() {
        let mut cfg = TrainConfig::new(1e-2, 5, 1000, 9);
        cfg.max_steps = Some(7);
        let out = train_network(&mut net(), &all(), &data(), None, &cfg).unwrap();
        assert_eq!(out.steps, 7);
        let mut cfg = TrainConfig::new(1e-9, 5, 1000, 9);
        cfg.early_stopping_patience = Some(0);
        let d = data();
        let out = train_network(&mut net(), &all(), &d, Some(&d), &cfg).unwrap();
        assert!(out.trace.len() < 1000);
    }

    #[test]
    fn diverging_run_aborts_with_diagnostic() {
        let mut d = data();
        d.heads[0].targets.data_mut().iter_mut().for_each(|v| *v *= 1e300);
        let err = train_network(&mut net(), &all(), &d, None, &TrainConfig::new(1.0, 5, 50, 1)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 0, batch: 0, .. }), "{err}");
    }

    #[test]
    fn wrong_head_or_block_is_rejected() {
        let mut d = data();
        d.heads[0].head = "nope".into();
        assert!(train_network(&mut net(), &all(), &d, None, &TrainConfig::new(1e-2, 5, 1, 1)).is_err());
        let bad = [BlockSymbol::C].into_iter().collect();
        assert!(train_network(&mut net(), &bad, &data(), None, &TrainConfig::new(1e-2, 5, 1, 1)).is_err());
    }
}
