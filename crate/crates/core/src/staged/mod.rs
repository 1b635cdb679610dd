//! Hierarchical stage-wise training: per-block initialization (random,
//! pretrained or copied from a linked block of the previous stage), stage
//! training, then save-and-freeze.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::archive::WeightsArchive;
use crate::block::BlockSymbol;
use crate::checksum::sha256_hex;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::{train_network, TrainConfig, TrainData, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRef {
    pub symbol: BlockSymbol,
    pub stage: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum InitRule {
    Random { seed: u64 },
    /// Loads `block` from a weights archive verbatim.
    Pretrained { archive: PathBuf, block: BlockSymbol },
    /// Deep copy of a block trained in the previous stage.
    LinkedCopy { source: BlockRef },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPlan {
    pub symbol: BlockSymbol,
    pub init: InitRule,
    /// Blocks with `false` keep their initial values during the stage.
    pub trainable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputDomain {
    OneHotConcat { buildings: usize, floors: usize },
    OneHot { classes: usize },
    Coords2D,
}

impl OutputDomain {
    pub fn width(&self) -> usize {
        match *self {
            OutputDomain::OneHotConcat { buildings, floors } => buildings + floors,
            OutputDomain::OneHot { classes } => classes,
            OutputDomain::Coords2D => 2,
        }
    }

    /// Every one-hot group of every row holds exactly one 1 and zeros elsewhere.
    pub fn check_targets<T: Scalar>(&self, targets: &Tensor<T>) -> Result<()> {
        if targets.cols() != self.width() {
            return Err(Error::Plan(format!(
                "targets have width {}, output domain {:?} needs {}",
                targets.cols(),
                self,
                self.width()
            )));
        }
        let groups: Vec<std::ops::Range<usize>> = match *self {
            OutputDomain::OneHotConcat { buildings, floors } => vec![0..buildings, buildings..buildings + floors],
            OutputDomain::OneHot { classes } => vec![0..classes],
            OutputDomain::Coords2D => return Ok(()),
        };
        for r in 0..targets.rows() {
            let row = targets.row(r);
            for g in &groups {
                let ones = row[g.clone()].iter().filter(|v| **v == T::one()).count();
                let zeros = row[g.clone()].iter().filter(|v| **v == T::zero()).count();
                if ones != 1 || ones + zeros != g.len() {
                    return Err(Error::Label(format!("target row {r} is not one-hot in columns {g:?}")));
                }
            }
        }
        Ok(())
    }
}

/// One stage: the network to train, how each of its blocks starts, and the
/// data and optimizer settings.
#[derive(Debug, Clone)]
pub struct StagePlan<T> {
    /// 1-based.
    pub stage: usize,
    /// Architecture of the stage network; every block is overwritten by its init rule.
    pub network: Network<T>,
    pub blocks: Vec<BlockPlan>,
    pub output: OutputDomain,
    pub train: TrainData<T>,
    pub validation: Option<TrainData<T>>,
    pub config: TrainConfig,
}

impl<T: Scalar> StagePlan<T> {
    pub fn trainable(&self) -> BTreeSet<BlockSymbol> {
        self.blocks.iter().filter(|b| b.trainable).map(|b| b.symbol).collect()
    }

    /// Checks that do not depend on earlier stages.
    pub fn validate(&self) -> Result<()> {
        let mut declared: Vec<BlockSymbol> = self.blocks.iter().map(|b| b.symbol).collect();
        let mut present = self.network.block_symbols();
        declared.sort();
        present.sort();
        if declared != present {
            return Err(Error::Plan(format!(
                "stage {} declares blocks {declared:?} but its network has {present:?}",
                self.stage
            )));
        }
        if self.network.heads().len() != 1 || self.train.heads.len() != 1 {
            return Err(Error::Plan(format!("stage {} must have exactly one output head", self.stage)));
        }
        if self.network.head_width(0) != self.output.width() {
            return Err(Error::Plan(format!(
                "stage {} head width {} does not match output domain {:?}",
                self.stage,
                self.network.head_width(0),
                self.output
            )));
        }
        if self.train.is_empty() {
            return Err(Error::Data(format!("stage {} has no training records", self.stage)));
        }
        self.output.check_targets(&self.train.heads[0].targets)?;
        if let Some(v) = &self.validation {
            self.output.check_targets(&v.heads[0].targets)?;
        }
        self.config.validate()?;
        for b in &self.blocks {
            if let InitRule::LinkedCopy { source } = &b.init {
                if self.stage == 1 || source.stage + 1 != self.stage {
                    return Err(Error::Plan(format!(
                        "stage {} block {} links to stage {}; links must come from the previous stage",
                        self.stage, b.symbol, source.stage
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StageResult<T> {
    pub stage: usize,
    /// Trained stage network; never mutated after the stage completes.
    pub network: Network<T>,
    pub outcome: TrainOutcome,
    pub frozen: bool,
    /// Digest of the serialized parameters at freeze time.
    pub checksum: String,
}

impl<T: Scalar> StageResult<T> {
    pub fn params(&self, symbol: BlockSymbol) -> Option<Vec<Tensor<T>>> {
        self.network.block_params(symbol)
    }

    pub fn duration(&self) -> Duration {
        self.outcome.duration
    }

    pub fn archive(&self, model: &str) -> WeightsArchive {
        WeightsArchive::from_blocks(model, self.stage, &network_blocks(&self.network))
    }
}

pub fn network_blocks<T: Scalar>(net: &Network<T>) -> Vec<(BlockSymbol, Vec<Tensor<T>>)> {
    net.block_symbols()
        .into_iter()
        .map(|s| (s, net.block_params(s).expect("listed block")))
        .collect()
}

/// SHA-256 over block symbols, shapes and little-endian parameter bytes.
pub fn network_checksum<T: Scalar>(net: &Network<T>) -> String {
    let mut bytes = Vec::new();
    for (s, tensors) in network_blocks(net) {
        bytes.extend_from_slice(s.as_str().as_bytes());
        for t in tensors {
            for &d in t.shape() {
                bytes.extend_from_slice(&(d as u64).to_le_bytes());
            }
            t.data().iter().for_each(|v| v.write_le(&mut bytes));
        }
    }
    sha256_hex(&bytes)
}

fn linked_source<'a, T: Scalar>(
    target: BlockSymbol,
    target_net: &Network<T>,
    source: BlockRef,
    source_net: Option<&'a Network<T>>,
) -> Result<&'a Network<T>> {
    let net = source_net.ok_or_else(|| Error::MissingBlock {
        block: source.symbol.to_string(),
        context: format!("stage {} results", source.stage),
    })?;
    let src_shapes = net.block_shapes(source.symbol).ok_or_else(|| Error::MissingBlock {
        block: source.symbol.to_string(),
        context: format!("stage {} network", source.stage),
    })?;
    let dst_shapes = target_net.block_shapes(target).unwrap_or_default();
    if src_shapes != dst_shapes {
        return Err(Error::LinkedShape {
            target: target.to_string(),
            source_block: format!("{}@stage{}", source.symbol, source.stage),
            target_shapes: dst_shapes,
            source_shapes: src_shapes,
        });
    }
    Ok(net)
}

/// Validates a whole pipeline before any training: contiguous stage indices,
/// per-stage checks, and shape identity of every linked pair.
pub fn validate_plans<T: Scalar>(plans: &[StagePlan<T>]) -> Result<()> {
    let mut problems = Vec::new();
    for (i, p) in plans.iter().enumerate() {
        if p.stage != i + 1 {
            problems.push(format!("plan {i} has stage index {}, expected {}", p.stage, i + 1));
            continue;
        }
        if let Err(e) = p.validate() {
            problems.push(e.to_string());
            continue;
        }
        for b in &p.blocks {
            if let InitRule::LinkedCopy { source } = &b.init {
                let src = plans.get(source.stage.wrapping_sub(1)).map(|s| &s.network);
                if let Err(e) = linked_source(b.symbol, &p.network, *source, src) {
                    problems.push(e.to_string());
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Plan(problems.join("; ")))
    }
}

/// Initial parameters of a stage network. Linked copies are deep copies, so
/// the source results stay untouched by later training.
pub fn resolve_init<T: Scalar>(plan: &StagePlan<T>, prior: &[StageResult<T>]) -> Result<Network<T>> {
    let mut net = plan.network.clone();
    for b in &plan.blocks {
        match &b.init {
            InitRule::Random { seed } => net.reinit_block(b.symbol, *seed)?,
            InitRule::Pretrained { archive, block } => {
                let a = WeightsArchive::load(archive)?;
                let params = a.block::<T>(*block)?;
                let want = net.block_shapes(b.symbol).unwrap_or_default();
                let have: Vec<Vec<usize>> = params.iter().map(|p| p.shape().to_vec()).collect();
                if want != have {
                    return Err(Error::LinkedShape {
                        target: b.symbol.to_string(),
                        source_block: format!("{block}@{}", archive.display()),
                        target_shapes: want,
                        source_shapes: have,
                    });
                }
                net.set_block_params(b.symbol, &params)?;
            }
            InitRule::LinkedCopy { source } => {
                if plan.stage == 1 {
                    return Err(Error::Plan("stage 1 cannot link to an earlier stage".into()));
                }
                let src = prior.iter().find(|r| r.stage == source.stage).map(|r| &r.network);
                let src = linked_source(b.symbol, &net, *source, src)?;
                let params = src.block_params(source.symbol).expect("checked by linked_source");
                net.set_block_params(b.symbol, &params)?;
            }
        }
    }
    Ok(net)
}

/// Trains the stage's trainable blocks from `init` and freezes the result.
pub fn train_stage<T: Scalar>(plan: &StagePlan<T>, init: Network<T>) -> Result<StageResult<T>> {
    let mut net = init;
    let outcome = train_network(&mut net, &plan.trainable(), &plan.train, plan.validation.as_ref(), &plan.config)?;
    let checksum = network_checksum(&net);
    Ok(StageResult {
        stage: plan.stage,
        network: net,
        outcome,
        frozen: true,
        checksum,
    })
}

/// Runs every stage in order and asserts that no earlier stage's parameters
/// changed while later stages trained.
pub fn run_hst<T: Scalar>(plans: &[StagePlan<T>]) -> Result<Vec<StageResult<T>>> {
    validate_plans(plans)?;
    let mut results: Vec<StageResult<T>> = Vec::with_capacity(plans.len());
    for plan in plans {
        let init = resolve_init(plan, &results)?;
        let result = train_stage(plan, init)?;
        log::info!(
            "stage {} done: {} epochs, best {:?}, {:.1}s",
            plan.stage,
            result.outcome.trace.len(),
            result.outcome.best_loss,
            result.outcome.duration.as_secs_f64()
        );
        for earlier in &results {
            if network_checksum(&earlier.network) != earlier.checksum {
                return Err(Error::FrozenMutated {
                    stage: earlier.stage,
                    during: plan.stage,
                });
            }
        }
        results.push(result);
    }
    Ok(results)
}

/// Single-phase joint training of a multi-head network on the weighted sum of
/// its head losses.
pub fn train_reference<T: Scalar>(
    network: Network<T>,
    train: &TrainData<T>,
    validation: Option<&TrainData<T>>,
    config: &TrainConfig,
) -> Result<StageResult<T>> {
    if network.heads().len() < 2 {
        return Err(Error::Plan("reference training needs a network with several output heads".into()));
    }
    let mut net = network;
    let trainable: BTreeSet<BlockSymbol> = net.block_symbols().into_iter().collect();
    let outcome = train_network(&mut net, &trainable, train, validation, config)?;
    let checksum = network_checksum(&net);
    Ok(StageResult {
        stage: 1,
        network: net,
        outcome,
        frozen: true,
        checksum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, GraphBuilder, LossKind};

    fn net(enc: BlockSymbol, head: BlockSymbol, out: usize, act: Activation, seed: u64) -> Network<f64> {
        Network::chain(
            GraphBuilder::new(4)
                .block(enc)
                .dense(5, Activation::Elu)
                .block(head)
                .dense(out, act)
                .build(seed)
                .unwrap(),
        )
    }

    fn x() -> Tensor<f64> {
        Tensor::matrix(6, 4, (0..24).map(|i| ((i * 5 % 7) as f64) / 7.0).collect()).unwrap()
    }

    fn plans() -> Vec<StagePlan<f64>> {
        let onehot = Tensor::matrix(6, 2, (0..6).flat_map(|i| if i % 2 == 0 { [1.0, 0.0] } else { [0.0, 1.0] }).collect()).unwrap();
        let coords = Tensor::matrix(6, 2, (0..12).map(|i| i as f64 / 12.0).collect()).unwrap();
        vec![
            StagePlan {
                stage: 1,
                network: net(BlockSymbol::EBf, BlockSymbol::C, 2, Activation::Sigmoid, 0),
                blocks: vec![
                    BlockPlan { symbol: BlockSymbol::EBf, init: InitRule::Random { seed: 1 }, trainable: true },
                    BlockPlan { symbol: BlockSymbol::C, init: InitRule::Random { seed: 2 }, trainable: true },
                ],
                output: OutputDomain::OneHot { classes: 2 },
                train: TrainData::single(x(), "out", LossKind::Bce, onehot),
                validation: None,
                config: TrainConfig::new(1e-2, 3, 5, 7),
            },
            StagePlan {
                stage: 2,
                network: net(BlockSymbol::El, BlockSymbol::R, 2, Activation::Linear, 0),
                blocks: vec![
                    BlockPlan {
                        symbol: BlockSymbol::El,
                        init: InitRule::LinkedCopy { source: BlockRef { symbol: BlockSymbol::EBf, stage: 1 } },
                        trainable: true,
                    },
                    BlockPlan { symbol: BlockSymbol::R, init: InitRule::Random { seed: 3 }, trainable: true },
                ],
                output: OutputDomain::Coords2D,
                train: TrainData::single(x(), "out", LossKind::Mse, coords),
                validation: None,
                config: TrainConfig::new(1e-2, 3, 5, 8),
            },
        ]
    }

    #[test]
    fn linked_copy_is_bitwise_and_independent() {
        let p = plans();
        let r = run_hst(&p).unwrap();
        let init2 = resolve_init(&p[1], &r[..1]).unwrap();
        let src = r[0].params(BlockSymbol::EBf).unwrap();
        let copy = init2.block_params(BlockSymbol::El).unwrap();
        assert!(src.iter().zip(&copy).all(|(a, b)| a.bitwise_eq(b)));
        let trained = r[1].params(BlockSymbol::El).unwrap();
        assert!(src.iter().zip(&trained).any(|(a, b)| !a.bitwise_eq(b)));
        assert_eq!(network_checksum(&r[0].network), r[0].checksum);
    }

    #[test]
    fn stage_one_cannot_link() {
        let mut p = plans();
        p[0].blocks[0].init = InitRule::LinkedCopy { source: BlockRef { symbol: BlockSymbol::C, stage: 0 } };
        assert!(matches!(run_hst(&p), Err(Error::Plan(_))));
    }

    #[test]
    fn shape_mismatch_caught_before_training() {
        let mut p = plans();
        p[1].network = Network::chain(
            GraphBuilder::new(4)
                .block(BlockSymbol::El)
                .dense(6, Activation::Elu)
                .block(BlockSymbol::R)
                .dense(2, Activation::Linear)
                .build(0)
                .unwrap(),
        );
        let err = run_hst(&p).unwrap_err().to_string();
        assert!(err.contains("E_L") && err.contains("E_BF"), "{err}");
    }

    #[test]
    fn non_one_hot_targets_rejected() {
        let mut p = plans();
        p[0].train.heads[0].targets.data_mut()[0] = 0.5;
        assert!(validate_plans(&p).is_err());
    }

    #[test]
    fn zero_epochs_keeps_init() {
        let mut p = plans();
        p[0].config.max_epochs = 0;
        let init = resolve_init(&p[0], &[]).unwrap();
        let r = train_stage(&p[0], init.clone()).unwrap();
        assert_eq!(r.network, init);
        assert!(r.outcome.trace.is_empty());
    }

    #[test]
    fn pretrained_rule_loads_archive_block() {
        let dir = tempfile::tempdir().unwrap();
        let donor = net(BlockSymbol::Encoder, BlockSymbol::Decoder, 4, Activation::Linear, 42);
        let path = dir.path().join("sae.weights.json");
        WeightsArchive::from_blocks("sae", 0, &network_blocks(&donor)).save(&path).unwrap();
        let mut p = plans();
        p[0].blocks[0].init = InitRule::Pretrained { archive: path, block: BlockSymbol::Encoder };
        let init = resolve_init(&p[0], &[]).unwrap();
        let want = donor.block_params(BlockSymbol::Encoder).unwrap();
        let got = init.block_params(BlockSymbol::EBf).unwrap();
        assert!(want.iter().zip(&got).all(|(a, b)| a.bitwise_eq(b)));
    }
}
