//! Weights archives: a JSON manifest with base64 little-endian tensor payloads
//! and a SHA-256 content checksum.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::block::BlockSymbol;
use crate::checksum::sha256_hex;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const ARCHIVE_FORMAT_VERSION: u32 = 1;

pub fn stage_archive_name(stage: usize) -> String {
    format!("stage{stage}.weights.json")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchivedTensor {
    pub shape: Vec<usize>,
    /// Base64 of the little-endian element bytes.
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchivedBlock {
    pub symbol: BlockSymbol,
    pub tensors: Vec<ArchivedTensor>,
}

#[derive(Serialize)]
struct Body<'a> {
    format_version: u32,
    model: &'a str,
    stage: usize,
    dtype: &'a str,
    blocks: &'a [ArchivedBlock],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightsArchive {
    pub format_version: u32,
    /// Model kind the weights belong to, e.g. `linked-dnn`.
    pub model: String,
    /// 1-based stage index; 0 for whole-model archives.
    pub stage: usize,
    pub dtype: String,
    pub blocks: Vec<ArchivedBlock>,
    /// SHA-256 over the canonical JSON of every other field.
    pub checksum: String,
}

impl WeightsArchive {
    pub fn from_blocks<T: Scalar>(model: &str, stage: usize, blocks: &[(BlockSymbol, Vec<Tensor<T>>)]) -> Self {
        let blocks: Vec<ArchivedBlock> = blocks
            .iter()
            .map(|(symbol, tensors)| ArchivedBlock {
                symbol: *symbol,
                tensors: tensors.iter().map(encode).collect(),
            })
            .collect();
        let mut archive = WeightsArchive {
            format_version: ARCHIVE_FORMAT_VERSION,
            model: model.to_string(),
            stage,
            dtype: T::DTYPE.to_string(),
            blocks,
            checksum: String::new(),
        };
        archive.checksum = archive.compute_checksum();
        archive
    }

    pub fn compute_checksum(&self) -> String {
        let body = Body {
            format_version: self.format_version,
            model: &self.model,
            stage: self.stage,
            dtype: &self.dtype,
            blocks: &self.blocks,
        };
        sha256_hex(&serde_json::to_vec(&body).expect("archive body serializes"))
    }

    pub fn verify(&self) -> Result<()> {
        if self.format_version != ARCHIVE_FORMAT_VERSION {
            return Err(Error::Archive(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        let computed = self.compute_checksum();
        if computed != self.checksum {
            return Err(Error::Checksum {
                expected: self.checksum.clone(),
                computed,
            });
        }
        Ok(())
    }

    pub fn symbols(&self) -> Vec<BlockSymbol> {
        self.blocks.iter().map(|b| b.symbol).collect()
    }

    pub fn shapes(&self, symbol: BlockSymbol) -> Option<Vec<Vec<usize>>> {
        self.find(symbol)
            .map(|b| b.tensors.iter().map(|t| t.shape.clone()).collect())
    }

    fn find(&self, symbol: BlockSymbol) -> Option<&ArchivedBlock> {
        self.blocks.iter().find(|b| b.symbol == symbol)
    }

    /// Decodes one block. Tensors stored at another precision are cast.
    pub fn block<T: Scalar>(&self, symbol: BlockSymbol) -> Result<Vec<Tensor<T>>> {
        let b = self.find(symbol).ok_or_else(|| Error::MissingBlock {
            block: symbol.to_string(),
            context: format!("{} stage {} archive", self.model, self.stage),
        })?;
        b.tensors.iter().map(|t| decode(t, &self.dtype)).collect()
    }

    pub fn to_blocks<T: Scalar>(&self) -> Result<Vec<(BlockSymbol, Vec<Tensor<T>>)>> {
        self.blocks
            .iter()
            .map(|b| Ok((b.symbol, self.block(b.symbol)?)))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("archive serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let archive: WeightsArchive = serde_json::from_str(text)?;
        archive.verify()?;
        Ok(archive)
    }

    /// Writes through a temporary sibling file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Archive(format!("{}: {j}", path.display())),
            other => other,
        })
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn encode<T: Scalar>(t: &Tensor<T>) -> ArchivedTensor {
    let mut bytes = Vec::with_capacity(t.len() * T::BYTES);
    t.data().iter().for_each(|v| v.write_le(&mut bytes));
    ArchivedTensor {
        shape: t.shape().to_vec(),
        data: B64.encode(bytes),
    }
}

fn decode<T: Scalar>(t: &ArchivedTensor, dtype: &str) -> Result<Tensor<T>> {
    let bytes = B64
        .decode(&t.data)
        .map_err(|e| Error::Archive(format!("bad base64 payload: {e}")))?;
    let data: Vec<T> = match dtype {
        d if d == T::DTYPE => read_all::<T>(&bytes)?,
        d if d == f32::DTYPE => read_all::<f32>(&bytes)?.into_iter().map(|v| T::lit(v as f64)).collect(),
        d if d == f64::DTYPE => read_all::<f64>(&bytes)?.into_iter().map(T::lit).collect(),
        other => return Err(Error::Archive(format!("unknown dtype `{other}`"))),
    };
    Tensor::new(t.shape.clone(), data).map_err(|e| Error::Archive(e.to_string()))
}

fn read_all<T: Scalar>(bytes: &[u8]) -> Result<Vec<T>> {
    if bytes.len() % T::BYTES != 0 {
        return Err(Error::Archive(format!(
            "payload of {} bytes is not a multiple of {}",
            bytes.len(),
            T::BYTES
        )));
    }
    Ok(bytes.chunks_exact(T::BYTES).map(T::read_le).collect())
}
