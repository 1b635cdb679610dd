use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archive::{stage_archive_name, write_atomic, WeightsArchive};
use crate::data::{Dataset, ScalerParams, SitePlan};
use crate::error::{Error, Result};
use crate::eval::Estimate;
use crate::models::{
    build_linked_cnnloc, build_linked_dnn, ArchConfig, ModelKind, HEAD_BUILDING, HEAD_BUILDING_FLOOR,
    HEAD_COORDS, HEAD_FLOOR,
};
use crate::nn::Network;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BUNDLE_FILE: &str = "bundle.json";
const BUNDLE_FORMAT_VERSION: u32 = 1;
const PREDICT_CHUNK: usize = 256;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Splits a concatenated `N_B + N_F` score row into (building, floor).
pub fn decode_building_floor<T: Scalar>(row: &[T], site: &SitePlan) -> (usize, usize) {
    let nb = site.buildings();
    (argmax(&row[..nb]), argmax(&row[nb..nb + site.floors()]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: usize,
    pub file: String,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format_version: u32,
    pub kind: ModelKind,
    pub arch: ArchConfig,
    pub site: SitePlan,
    pub scaler: ScalerParams,
    pub dtype: String,
    pub stages: Vec<StageEntry>,
}

/// Trained networks of one model plus what inference needs to decode them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle<T> {
    pub kind: ModelKind,
    pub arch: ArchConfig,
    pub site: SitePlan,
    pub scaler: ScalerParams,
    /// One network per stage (linked models) or the single joint network.
    pub networks: Vec<Network<T>>,
}

pub fn build_network<T: Scalar>(kind: ModelKind, arch: &ArchConfig, site: &SitePlan, stage: usize, seed: u64) -> Result<Network<T>> {
    let role = kind.role(stage);
    match kind {
        ModelKind::LinkedDnn | ModelKind::ReferenceDnn => build_linked_dnn(arch, site, role, seed),
        ModelKind::LinkedCnnloc | ModelKind::ReferenceCnnloc => build_linked_cnnloc(arch, site, role, seed),
    }
}

impl<T: Scalar> ModelBundle<T> {
    pub fn new(kind: ModelKind, arch: ArchConfig, site: SitePlan, scaler: ScalerParams, networks: Vec<Network<T>>) -> Result<Self> {
        if networks.len() != kind.stage_count() {
            return Err(Error::Plan(format!(
                "{kind} needs {} networks, got {}",
                kind.stage_count(),
                networks.len()
            )));
        }
        Ok(Self { kind, arch, site, scaler, networks })
    }

    fn head(&self, stage: usize, name: &str) -> Result<usize> {
        self.networks[stage]
            .head_index(name)
            .ok_or_else(|| Error::Plan(format!("{} network {} has no `{name}` head", self.kind, stage + 1)))
    }

    /// Building, floor and coordinates (meters) for scaled RSSI rows.
    pub fn predict(&self, features: &Tensor<T>) -> Result<Vec<Estimate>> {
        let n = features.rows();
        let mut out = Vec::with_capacity(n);
        let mut start = 0;
        while start < n {
            let end = (start + PREDICT_CHUNK).min(n);
            let rows: Vec<usize> = (start..end).collect();
            out.extend(self.predict_chunk(&crate::train::gather_rows(features, &rows))?);
            start = end;
        }
        Ok(out)
    }

    fn predict_chunk(&self, x: &Tensor<T>) -> Result<Vec<Estimate>> {
        let last = self.networks.len() - 1;
        let (labels, coords): (Vec<(usize, usize)>, Tensor<T>) = match self.kind {
            ModelKind::LinkedDnn | ModelKind::ReferenceDnn => {
                let cls = self.head(0, HEAD_BUILDING_FLOOR)?;
                let reg = self.head(last, HEAD_COORDS)?;
                let first = self.networks[0].predict(x)?;
                let coords = if last == 0 { first[reg].clone() } else { self.networks[last].predict(x)?.swap_remove(reg) };
                let s = &first[cls];
                ((0..s.rows()).map(|r| decode_building_floor(s.row(r), &self.site)).collect(), coords)
            }
            ModelKind::LinkedCnnloc => {
                let b = self.networks[0].predict(x)?.swap_remove(self.head(0, HEAD_BUILDING)?);
                let f = self.networks[1].predict(x)?.swap_remove(self.head(1, HEAD_FLOOR)?);
                let c = self.networks[2].predict(x)?.swap_remove(self.head(2, HEAD_COORDS)?);
                ((0..b.rows()).map(|r| (argmax(b.row(r)), argmax(f.row(r)))).collect(), c)
            }
            ModelKind::ReferenceCnnloc => {
                let mut outs = self.networks[0].predict(x)?;
                let (bh, fh, ch) = (self.head(0, HEAD_BUILDING)?, self.head(0, HEAD_FLOOR)?, self.head(0, HEAD_COORDS)?);
                let c = std::mem::replace(&mut outs[ch], Tensor::zeros(&[1]));
                ((0..c.rows()).map(|r| (argmax(outs[bh].row(r)), argmax(outs[fh].row(r)))).collect(), c)
            }
        };
        Ok(labels
            .into_iter()
            .enumerate()
            .map(|(r, (building, floor))| {
                let xy = coords.row(r);
                Estimate {
                    building,
                    floor,
                    coords: self.scaler.unscale_coords([xy[0].as_f64(), xy[1].as_f64()]),
                }
            })
            .collect())
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<Estimate>> {
        if data.width != self.site.aps {
            return Err(Error::Shape(format!(
                "dataset has {} features, model expects {}",
                data.width, self.site.aps
            )));
        }
        self.predict(&features_tensor(data)?)
    }

    pub fn archives(&self) -> Vec<WeightsArchive> {
        self.networks
            .iter()
            .enumerate()
            .map(|(i, net)| {
                let blocks: Vec<_> = net
                    .block_symbols()
                    .into_iter()
                    .map(|s| (s, net.block_params(s).expect("listed block")))
                    .collect();
                WeightsArchive::from_blocks(self.kind.as_str(), i + 1, &blocks)
            })
            .collect()
    }

    /// Writes `stage{s}.weights.json` per network and the bundle manifest.
    pub fn save(&self, dir: &Path) -> Result<BundleManifest> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut stages = Vec::new();
        for a in self.archives() {
            let file = stage_archive_name(a.stage);
            a.save(&dir.join(&file))?;
            stages.push(StageEntry { stage: a.stage, file, checksum: a.checksum.clone() });
        }
        let manifest = BundleManifest {
            format_version: BUNDLE_FORMAT_VERSION,
            kind: self.kind,
            arch: self.arch.clone(),
            site: self.site.clone(),
            scaler: self.scaler.clone(),
            dtype: T::DTYPE.to_string(),
            stages,
        };
        let path = dir.join(BUNDLE_FILE);
        write_atomic(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(BUNDLE_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: BundleManifest = serde_json::from_str(&text)?;
        if manifest.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::Archive(format!("unsupported bundle version {}", manifest.format_version)));
        }
        manifest.scaler.validate()?;
        let archives = manifest
            .stages
            .iter()
            .map(|e| {
                let a = WeightsArchive::load(&dir.join(&e.file))?;
                if a.checksum != e.checksum {
                    return Err(Error::Checksum { expected: e.checksum.clone(), computed: a.checksum });
                }
                Ok(a)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_archives(manifest.kind, manifest.arch, manifest.site, manifest.scaler, &archives)
    }

    /// Rebuilds every network and fills it from the archives, which must
    /// carry exactly the blocks of the expected model.
    pub fn from_archives(
        kind: ModelKind,
        arch: ArchConfig,
        site: SitePlan,
        scaler: ScalerParams,
        archives: &[WeightsArchive],
    ) -> Result<Self> {
        if archives.len() != kind.stage_count() {
            return Err(Error::Archive(format!(
                "{kind} needs {} stage archives, found {}",
                kind.stage_count(),
                archives.len()
            )));
        }
        let mut networks = Vec::new();
        for (i, a) in archives.iter().enumerate() {
            if a.model != kind.as_str() || a.stage != i + 1 {
                return Err(Error::Archive(format!(
                    "archive holds {} stage {}, expected {kind} stage {}",
                    a.model,
                    a.stage,
                    i + 1
                )));
            }
            let mut net = build_network::<T>(kind, &arch, &site, i + 1, 0)?;
            let mut want = net.block_symbols();
            let mut have = a.symbols();
            want.sort();
            have.sort();
            if want != have {
                return Err(Error::Archive(format!("archive blocks {have:?} do not match {kind} stage {}: {want:?}", i + 1)));
            }
            for s in net.block_symbols() {
                net.set_block_params(s, &a.block(s)?)?;
            }
            networks.push(net);
        }
        Self::new(kind, arch, site, scaler, networks)
    }
}

pub fn features_tensor<T: Scalar>(data: &Dataset) -> Result<Tensor<T>> {
    Tensor::new(vec![data.len(), data.width], data.features.iter().map(|&v| T::lit(v)).collect())
}
