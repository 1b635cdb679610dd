use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Named group of layers that is initialized, transferred and frozen as a unit.
///
/// The first twelve variants are the linked-model blocks; the rest tag the
/// shared parts of the autoencoder and of the conventionally trained models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BlockSymbol {
    /// Building/floor encoder (linked-DNN, stage 1).
    #[serde(rename = "E_BF")]
    EBf,
    /// Building/floor common hidden layers (linked-DNN, stage 1).
    #[serde(rename = "H_BF")]
    HBf,
    /// Building/floor classification layers (linked-DNN, stage 1).
    #[serde(rename = "C")]
    C,
    /// Location encoder (linked-DNN stage 2, linked-CNNLoc stage 3).
    #[serde(rename = "E_L")]
    El,
    /// Location hidden layers (common layers in linked-DNN, output layers in linked-CNNLoc).
    #[serde(rename = "H_L")]
    Hl,
    /// Location regression layers (linked-DNN, stage 2).
    #[serde(rename = "R")]
    R,
    /// Building encoder (linked-CNNLoc, stage 1).
    #[serde(rename = "E_B")]
    Eb,
    /// Building classifier (linked-CNNLoc, stage 1).
    #[serde(rename = "B")]
    B,
    /// Floor encoder (linked-CNNLoc, stage 2).
    #[serde(rename = "E_F")]
    Ef,
    /// Floor convolution stack (linked-CNNLoc, stage 2).
    #[serde(rename = "C_F")]
    Cf,
    /// Floor hidden/output layers (linked-CNNLoc, stage 2).
    #[serde(rename = "H_F")]
    Hf,
    /// Location convolution stack (linked-CNNLoc, stage 3).
    #[serde(rename = "C_L")]
    Cl,
    /// Autoencoder encoder, also the shared encoder of reference models.
    #[serde(rename = "ENC")]
    Encoder,
    #[serde(rename = "DEC")]
    Decoder,
    /// Shared hidden layers of the reference SIMO DNN.
    #[serde(rename = "COMMON")]
    Common,
    /// Shared convolution stack of the reference CNNLoc.
    #[serde(rename = "CONV")]
    Conv,
}

impl BlockSymbol {
    pub const ALL: [BlockSymbol; 16] = [
        BlockSymbol::EBf,
        BlockSymbol::HBf,
        BlockSymbol::C,
        BlockSymbol::El,
        BlockSymbol::Hl,
        BlockSymbol::R,
        BlockSymbol::Eb,
        BlockSymbol::B,
        BlockSymbol::Ef,
        BlockSymbol::Cf,
        BlockSymbol::Hf,
        BlockSymbol::Cl,
        BlockSymbol::Encoder,
        BlockSymbol::Decoder,
        BlockSymbol::Common,
        BlockSymbol::Conv,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BlockSymbol::EBf => "E_BF",
            BlockSymbol::HBf => "H_BF",
            BlockSymbol::C => "C",
            BlockSymbol::El => "E_L",
            BlockSymbol::Hl => "H_L",
            BlockSymbol::R => "R",
            BlockSymbol::Eb => "E_B",
            BlockSymbol::B => "B",
            BlockSymbol::Ef => "E_F",
            BlockSymbol::Cf => "C_F",
            BlockSymbol::Hf => "H_F",
            BlockSymbol::Cl => "C_L",
            BlockSymbol::Encoder => "ENC",
            BlockSymbol::Decoder => "DEC",
            BlockSymbol::Common => "COMMON",
            BlockSymbol::Conv => "CONV",
        }
    }
}

impl fmt::Display for BlockSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlockSymbol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BlockSymbol::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::Plan(format!("unknown block symbol `{s}`")))
    }
}
