//! End-to-end training of one model kind on a prepared dataset: validation
//! split, autoencoder pretraining, then HST stages or joint reference training.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::archive::WeightsArchive;
use crate::block::BlockSymbol;
use crate::data::{split_train_val, Dataset};
use crate::error::{Error, Result};
use crate::models::{
    build_network, build_sae, features_tensor, pretrain_sae, ArchConfig, ModelBundle, ModelKind, HEAD_BUILDING,
    HEAD_BUILDING_FLOOR, HEAD_COORDS, HEAD_FLOOR,
};
use crate::nn::{mix_seed, LossKind, PlateauConfig};
use crate::scalar::Scalar;
use crate::staged::{run_hst, train_reference, BlockPlan, BlockRef, InitRule, OutputDomain, StagePlan, StageResult};
use crate::tensor::Tensor;
use crate::train::{HeadTarget, TrainConfig, TrainData, TrainOutcome};

pub const SAE_ARCHIVE: &str = "sae.weights.json";

pub const DEFAULT_MAX_EPOCHS: usize = 300;
pub const DEFAULT_PATIENCE: usize = 20;
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ModelKind,
    #[serde(default)]
    pub arch: ArchConfig,
    /// Autoencoder pretraining of the first encoder; `None` leaves it random.
    #[serde(default)]
    pub sae: Option<TrainConfig>,
    /// One entry per HST stage, or a single entry for reference models.
    /// Shuffle seeds are derived from `seed`, not read from these entries.
    pub stages: Vec<TrainConfig>,
    /// Reference-model head weights in head order; empty means all 1.
    #[serde(default)]
    pub loss_weights: Vec<f64>,
    /// Stratified validation share for early stopping; 0 disables the split.
    #[serde(default = "default_fraction")]
    pub validation_fraction: f64,
    pub seed: u64,
}

fn default_fraction() -> f64 {
    DEFAULT_VALIDATION_FRACTION
}

fn stage_cfg(lr: f64, batch: usize, scheduler: Option<PlateauConfig>) -> TrainConfig {
    let mut c = TrainConfig::new(lr, batch, DEFAULT_MAX_EPOCHS, 0);
    c.early_stopping_patience = Some(DEFAULT_PATIENCE);
    c.scheduler = scheduler;
    c
}

impl ExperimentConfig {
    /// Published hyperparameters for each model kind.
    pub fn defaults(kind: ModelKind, seed: u64) -> Self {
        let floor_sched = Some(PlateauConfig { factor: 0.1, patience: 5 });
        let loc_sched = Some(PlateauConfig { factor: 0.5, patience: 5 });
        let (batch, stages) = match kind {
            ModelKind::LinkedDnn => (24, vec![stage_cfg(1e-4, 24, None), stage_cfg(1e-3, 24, None)]),
            ModelKind::ReferenceDnn => (24, vec![stage_cfg(1e-4, 24, None)]),
            ModelKind::LinkedCnnloc => (
                26,
                vec![stage_cfg(1e-4, 26, None), stage_cfg(1e-4, 26, floor_sched), stage_cfg(1e-4, 26, loc_sched)],
            ),
            ModelKind::ReferenceCnnloc => (26, vec![stage_cfg(1e-4, 26, loc_sched)]),
        };
        let mut sae = TrainConfig::new(1e-4, batch, 100, 0);
        sae.early_stopping_patience = Some(10);
        Self {
            kind,
            arch: ArchConfig::default(),
            sae: Some(sae),
            stages,
            loss_weights: Vec::new(),
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            seed,
        }
    }

    /// Caps the epoch budget of every phase.
    pub fn with_max_epochs(mut self, epochs: usize) -> Self {
        for c in self.stages.iter_mut().chain(self.sae.as_mut()) {
            c.max_epochs = c.max_epochs.min(epochs);
        }
        self
    }

    /// Every problem found, joined into one error.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.stages.len() != self.kind.stage_count() {
            problems.push(format!(
                "{} needs {} stage entries, config has {}",
                self.kind,
                self.kind.stage_count(),
                self.stages.len()
            ));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if let Err(e) = s.validate() {
                problems.push(format!("stage {}: {e}", i + 1));
            }
        }
        if let Some(Err(e)) = self.sae.as_ref().map(TrainConfig::validate) {
            problems.push(format!("sae: {e}"));
        }
        if let Err(e) = self.arch.validate() {
            problems.push(e.to_string());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            problems.push(format!("validation fraction {} must lie in [0, 1)", self.validation_fraction));
        }
        let heads = match self.kind {
            ModelKind::ReferenceDnn => 2,
            ModelKind::ReferenceCnnloc => 3,
            _ => 0,
        };
        if !self.loss_weights.is_empty() {
            if self.loss_weights.len() != heads {
                problems.push(format!("{} takes {heads} loss weights, got {}", self.kind, self.loss_weights.len()));
            }
            if self.loss_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                problems.push("loss weights must be finite and >= 0".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Plan(problems.join("; ")))
        }
    }

    fn stage_config(&self, stage: usize) -> TrainConfig {
        let mut c = self.stages[stage - 1].clone();
        c.seed = mix_seed(self.seed, 10 + stage as u64);
        c
    }

    fn weights(&self, heads: usize) -> Vec<f64> {
        if self.loss_weights.is_empty() {
            vec![1.0; heads]
        } else {
            self.loss_weights.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeSummary {
    pub outcome: TrainOutcome,
    pub initial_mse: f64,
    pub final_mse: f64,
}

/// Wall-clock seconds spent inside training loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub sae_seconds: f64,
    pub stage_seconds: Vec<f64>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun<T> {
    pub bundle: ModelBundle<T>,
    pub stages: Vec<StageResult<T>>,
    pub sae: Option<SaeSummary>,
    pub validation_records: usize,
    pub timing: Timing,
}

fn tensor<T: Scalar>(rows: usize, cols: usize, data: &[f64]) -> Result<Tensor<T>> {
    Tensor::new(vec![rows, cols], data.iter().map(|&v| T::lit(v)).collect())
}

/// Inputs plus the single head a stage trains.
pub fn stage_data<T: Scalar>(kind: ModelKind, stage: usize, ds: &Dataset) -> Result<(TrainData<T>, OutputDomain)> {
    let n = ds.len();
    let site = &ds.site;
    let x = features_tensor(ds)?;
    let (head, loss, targets, domain) = match (kind, stage) {
        (ModelKind::LinkedDnn, 1) => (
            HEAD_BUILDING_FLOOR,
            LossKind::Bce,
            tensor(n, site.class_width(), &ds.building_floor_targets())?,
            OutputDomain::OneHotConcat { buildings: site.buildings(), floors: site.floors() },
        ),
        (ModelKind::LinkedCnnloc, 1) => (
            HEAD_BUILDING,
            LossKind::Ce,
            tensor(n, site.buildings(), &ds.building_targets())?,
            OutputDomain::OneHot { classes: site.buildings() },
        ),
        (ModelKind::LinkedCnnloc, 2) => (
            HEAD_FLOOR,
            LossKind::Ce,
            tensor(n, site.floors(), &ds.floor_targets())?,
            OutputDomain::OneHot { classes: site.floors() },
        ),
        (ModelKind::LinkedDnn, 2) | (ModelKind::LinkedCnnloc, 3) => {
            (HEAD_COORDS, LossKind::Mse, tensor(n, 2, &ds.coord_targets())?, OutputDomain::Coords2D)
        }
        _ => return Err(Error::Plan(format!("{kind} has no stage {stage}"))),
    };
    Ok((TrainData::single(x, head, loss, targets), domain))
}

/// All heads of a reference network with their loss weights.
pub fn reference_data<T: Scalar>(kind: ModelKind, ds: &Dataset, weights: &[f64]) -> Result<TrainData<T>> {
    let n = ds.len();
    let site = &ds.site;
    let heads: Vec<(&str, LossKind, Tensor<T>)> = match kind {
        ModelKind::ReferenceDnn => vec![
            (HEAD_BUILDING_FLOOR, LossKind::Bce, tensor(n, site.class_width(), &ds.building_floor_targets())?),
            (HEAD_COORDS, LossKind::Mse, tensor(n, 2, &ds.coord_targets())?),
        ],
        ModelKind::ReferenceCnnloc => vec![
            (HEAD_BUILDING, LossKind::Ce, tensor(n, site.buildings(), &ds.building_targets())?),
            (HEAD_FLOOR, LossKind::Ce, tensor(n, site.floors(), &ds.floor_targets())?),
            (HEAD_COORDS, LossKind::Mse, tensor(n, 2, &ds.coord_targets())?),
        ],
        _ => return Err(Error::Plan(format!("{kind} is not a reference model"))),
    };
    if weights.len() != heads.len() {
        return Err(Error::Plan(format!("{} heads but {} loss weights", heads.len(), weights.len())));
    }
    Ok(TrainData {
        inputs: features_tensor(ds)?,
        heads: heads
            .into_iter()
            .zip(weights)
            .map(|((head, loss, targets), &weight)| HeadTarget { head: head.into(), loss, weight, targets })
            .collect(),
    })
}

/// Block tables of the linked models: (symbol, init rule) per stage.
fn block_table(kind: ModelKind, stage: usize) -> Vec<(BlockSymbol, Option<BlockRef>)> {
    use BlockSymbol::*;
    let link = |symbol, stage| Some(BlockRef { symbol, stage });
    match (kind, stage) {
        (ModelKind::LinkedDnn, 1) => vec![(EBf, None), (HBf, None), (C, None)],
        (ModelKind::LinkedDnn, 2) => vec![(El, link(EBf, 1)), (Hl, link(HBf, 1)), (R, None)],
        (ModelKind::LinkedCnnloc, 1) => vec![(Eb, None), (B, None)],
        (ModelKind::LinkedCnnloc, 2) => vec![(Ef, link(Eb, 1)), (Cf, None), (Hf, None)],
        (ModelKind::LinkedCnnloc, 3) => vec![(El, link(Ef, 2)), (Cl, link(Cf, 2)), (Hl, None)],
        _ => Vec::new(),
    }
}

/// Stage plans of a linked model. The first stage's encoder is loaded from
/// `pretrained` when given; other unlinked blocks start random.
pub fn build_plans<T: Scalar>(
    cfg: &ExperimentConfig,
    train: &Dataset,
    validation: Option<&Dataset>,
    pretrained: Option<&Path>,
) -> Result<Vec<StagePlan<T>>> {
    if !cfg.kind.is_linked() {
        return Err(Error::Plan(format!("{} is not trained stage-wise", cfg.kind)));
    }
    (1..=cfg.kind.stage_count())
        .map(|s| {
            let network = build_network::<T>(cfg.kind, &cfg.arch, &train.site, s, mix_seed(cfg.seed, 20 + s as u64))?;
            let blocks = block_table(cfg.kind, s)
                .into_iter()
                .enumerate()
                .map(|(j, (symbol, link))| {
                    let init = match (link, pretrained) {
                        (Some(source), _) => InitRule::LinkedCopy { source },
                        (None, Some(path)) if s == 1 && j == 0 => InitRule::Pretrained {
                            archive: PathBuf::from(path),
                            block: BlockSymbol::Encoder,
                        },
                        _ => InitRule::Random { seed: mix_seed(cfg.seed, (100 * s + j) as u64) },
                    };
                    BlockPlan { symbol, init, trainable: true }
                })
                .collect();
            let (data, output) = stage_data::<T>(cfg.kind, s, train)?;
            let val = validation.map(|v| stage_data::<T>(cfg.kind, s, v).map(|d| d.0)).transpose()?;
            Ok(StagePlan {
                stage: s,
                network,
                blocks,
                output,
                train: data,
                validation: val,
                config: cfg.stage_config(s),
            })
        })
        .collect()
}

/// Trains `cfg.kind` on `train`, writing the autoencoder archive and the model
/// bundle under `work_dir`.
pub fn run_experiment<T: Scalar>(cfg: &ExperimentConfig, train: &Dataset, work_dir: &Path) -> Result<ExperimentRun<T>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    std::fs::create_dir_all(work_dir).map_err(|e| Error::io(work_dir, e))?;
    let (fit, val) = if cfg.validation_fraction > 0.0 {
        let split = split_train_val(train, cfg.validation_fraction, mix_seed(cfg.seed, 1))?;
        (split.train, Some(split.validation))
    } else {
        (train.clone(), None)
    };

    let mut sae_summary = None;
    let mut sae_path = None;
    let mut sae_encoder = None;
    if let Some(sae_cfg) = &cfg.sae {
        let mut sae = build_sae::<T>(&cfg.arch.sae(train.width), mix_seed(cfg.seed, 2))?;
        let mut c = sae_cfg.clone();
        c.seed = mix_seed(cfg.seed, 3);
        let run = pretrain_sae(&mut sae, &features_tensor(&fit)?, &c)?;
        let path = work_dir.join(SAE_ARCHIVE);
        WeightsArchive::from_blocks("sae", 0, &[(BlockSymbol::Encoder, run.encoder.clone())]).save(&path)?;
        sae_summary = Some(SaeSummary {
            outcome: run.outcome,
            initial_mse: run.initial_mse,
            final_mse: run.final_mse,
        });
        sae_encoder = Some(run.encoder);
        sae_path = Some(path);
    }

    let stages = if cfg.kind.is_linked() {
        let plans = build_plans::<T>(cfg, &fit, val.as_ref(), sae_path.as_deref())?;
        run_hst(&plans)?
    } else {
        let mut net = build_network::<T>(cfg.kind, &cfg.arch, &train.site, 1, mix_seed(cfg.seed, 21))?;
        if let Some(enc) = &sae_encoder {
            net.set_block_params(BlockSymbol::Encoder, enc)?;
        }
        let heads = net.heads().len();
        let data = reference_data::<T>(cfg.kind, &fit, &cfg.weights(heads))?;
        let vdata = val.as_ref().map(|v| reference_data::<T>(cfg.kind, v, &cfg.weights(heads))).transpose()?;
        vec![train_reference(net, &data, vdata.as_ref(), &cfg.stage_config(1))?]
    };

    let bundle = ModelBundle::new(
        cfg.kind,
        cfg.arch.clone(),
        train.site.clone(),
        train.scaler.clone(),
        stages.iter().map(|r| r.network.clone()).collect(),
    )?;
    bundle.save(work_dir)?;
    let sae_seconds = sae_summary.as_ref().map_or(0.0, |s| s.outcome.duration.as_secs_f64());
    let stage_seconds: Vec<f64> = stages.iter().map(|r| r.duration().as_secs_f64()).collect();
    let timing = Timing {
        sae_seconds,
        total_seconds: sae_seconds + stage_seconds.iter().sum::<f64>(),
        stage_seconds,
    };
    Ok(ExperimentRun {
        bundle,
        stages,
        sae: sae_summary,
        validation_records: val.as_ref().map_or(0, Dataset::len),
        timing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_published_settings() {
        let d = ExperimentConfig::defaults(ModelKind::LinkedDnn, 0);
        assert_eq!(d.stages.iter().map(|s| s.batch_size).collect::<Vec<_>>(), vec![24, 24]);
        assert_eq!(d.stages[1].learning_rate, 1e-3);
        let c = ExperimentConfig::defaults(ModelKind::LinkedCnnloc, 0);
        assert_eq!(c.stages.len(), 3);
        assert_eq!(c.stages[1].scheduler.unwrap().factor, 0.1);
        assert_eq!(c.stages[2].scheduler.unwrap().factor, 0.5);
        assert!(ModelKind::ALL.iter().all(|k| ExperimentConfig::defaults(*k, 1).validate().is_ok()));
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut c = ExperimentConfig::defaults(ModelKind::ReferenceDnn, 0);
        c.stages.push(c.stages[0].clone());
        c.loss_weights = vec![1.0];
        c.validation_fraction = 1.5;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("stage entries") && msg.contains("loss weights") && msg.contains("fraction"), "{msg}");
    }
}
