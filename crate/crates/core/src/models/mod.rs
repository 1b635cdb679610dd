//! Builders for the autoencoder, the linked models and their conventionally
//! trained references, plus inference over trained weights.

mod bundle;
mod cnnloc;
mod dnn;
mod sae;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::nn::Activation;

pub use bundle::{
    argmax, build_network, decode_building_floor, features_tensor, BundleManifest, ModelBundle, StageEntry, BUNDLE_FILE,
};
pub use cnnloc::build_linked_cnnloc;
pub use dnn::build_linked_dnn;
pub use sae::{build_sae, pretrain_sae, SaeConfig, SaePretraining};

pub const HEAD_BUILDING_FLOOR: &str = "building_floor";
pub const HEAD_BUILDING: &str = "building";
pub const HEAD_FLOOR: &str = "floor";
pub const HEAD_COORDS: &str = "coords";
pub const HEAD_RECONSTRUCTION: &str = "reconstruction";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LinkedDnn,
    LinkedCnnloc,
    ReferenceDnn,
    ReferenceCnnloc,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::LinkedDnn,
        ModelKind::LinkedCnnloc,
        ModelKind::ReferenceDnn,
        ModelKind::ReferenceCnnloc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LinkedDnn => "linked-dnn",
            ModelKind::LinkedCnnloc => "linked-cnnloc",
            ModelKind::ReferenceDnn => "reference-dnn",
            ModelKind::ReferenceCnnloc => "reference-cnnloc",
        }
    }

    /// Number of trained networks: the HST stage count, or 1 for references.
    pub fn stage_count(self) -> usize {
        match self {
            ModelKind::LinkedDnn => 2,
            ModelKind::LinkedCnnloc => 3,
            ModelKind::ReferenceDnn | ModelKind::ReferenceCnnloc => 1,
        }
    }

    pub fn is_linked(self) -> bool {
        matches!(self, ModelKind::LinkedDnn | ModelKind::LinkedCnnloc)
    }

    pub fn role(self, stage: usize) -> Role {
        if self.is_linked() {
            Role::Stage(stage)
        } else {
            Role::Reference
        }
    }

    /// Display label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::LinkedDnn => "Proposed DNN",
            ModelKind::LinkedCnnloc => "Proposed CNN",
            ModelKind::ReferenceDnn => "Reference DNN",
            ModelKind::ReferenceCnnloc => "Reference CNN",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Plan(format!("unknown model kind `{s}`")))
    }
}

/// Which network of a model to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Joint multi-head network trained in one phase.
    Reference,
    /// 1-based HST stage network.
    Stage(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
}

/// Layer widths shared by every builder. Defaults are the published sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub encoder_widths: Vec<usize>,
    pub encoder_activation: Activation,
    /// linked-DNN common hidden layers.
    pub common_widths: Vec<usize>,
    /// linked-DNN location hidden layers (tanh) before the 2-wide output.
    pub regression_hidden: Vec<usize>,
    /// linked-CNNLoc building hidden layers (ELU) before the softmax output.
    pub building_hidden: Vec<usize>,
    pub conv: Vec<ConvSpec>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            encoder_widths: vec![520, 260, 130],
            encoder_activation: Activation::Elu,
            common_widths: vec![520, 520],
            regression_hidden: vec![520],
            building_hidden: vec![130, 130],
            conv: vec![
                ConvSpec { channels: 99, kernel: 22 },
                ConvSpec { channels: 66, kernel: 22 },
                ConvSpec { channels: 33, kernel: 22 },
            ],
        }
    }
}

impl ArchConfig {
    pub fn sae(&self, input_width: usize) -> SaeConfig {
        SaeConfig {
            input_width,
            encoder_widths: self.encoder_widths.clone(),
            activation: self.encoder_activation,
        }
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        let widths = self
            .encoder_widths
            .iter()
            .chain(&self.common_widths)
            .chain(&self.regression_hidden)
            .chain(&self.building_hidden);
        if self.encoder_widths.is_empty() {
            return Err(Error::Plan("encoder needs at least one layer".into()));
        }
        if widths.copied().any(|w| w == 0) || self.conv.iter().any(|c| c.channels == 0 || c.kernel == 0) {
            return Err(Error::Plan("layer widths, channels and kernels must be >= 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn encoder(
    b: crate::nn::GraphBuilder,
    symbol: crate::block::BlockSymbol,
    arch: &ArchConfig,
) -> crate::nn::GraphBuilder {
    arch.encoder_widths
        .iter()
        .fold(b.block(symbol), |b, &w| b.dense(w, arch.encoder_activation))
}
