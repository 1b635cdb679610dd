use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::record::{FingerprintRecord, SitePlan};
use crate::data::scaler::ScalerParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Train,
    Validation,
    Test,
}

/// Scaled features plus raw labels for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `len × width` row-major scaled RSSI, each in `[0, 1]`.
    pub features: Vec<f64>,
    pub width: usize,
    pub buildings: Vec<usize>,
    pub floors: Vec<usize>,
    /// Unscaled coordinates in meters.
    pub coords: Vec<[f64; 2]>,
    pub provenance: Provenance,
    pub site: SitePlan,
    pub scaler: ScalerParams,
}

/// Concatenated building/floor one-hot vector of width `N_B + N_F`.
pub fn encode_building_floor(building: usize, floor: usize, site: &SitePlan) -> Result<Vec<f64>> {
    site.check_labels(building, floor)?;
    let mut v = vec![0.0; site.class_width()];
    v[building] = 1.0;
    v[site.buildings() + floor] = 1.0;
    Ok(v)
}

impl Dataset {
    pub fn from_records(
        records: &[FingerprintRecord],
        site: &SitePlan,
        scaler: &ScalerParams,
        provenance: Provenance,
    ) -> Result<Self> {
        let width = site.aps;
        let mut features = Vec::with_capacity(records.len() * width);
        let mut buildings = Vec::with_capacity(records.len());
        let mut floors = Vec::with_capacity(records.len());
        let mut coords = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.rssi.len() != width {
                return Err(Error::Data(format!(
                    "record {i} has {} RSSI values, site has {width} APs",
                    r.rssi.len()
                )));
            }
            site.check_labels(r.building, r.floor)
                .map_err(|e| Error::Label(format!("record {i}: {e}")))?;
            features.extend(r.rssi.iter().map(|&v| scaler.scale_rssi(v)));
            buildings.push(r.building);
            floors.push(r.floor);
            coords.push(r.coords());
        }
        Ok(Self {
            features,
            width,
            buildings,
            floors,
            coords,
            provenance,
            site: site.clone(),
            scaler: *scaler,
        })
    }

    pub fn len(&self) -> usize {
        self.buildings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buildings.is_empty()
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    /// `len × (N_B + N_F)` concatenated one-hot targets.
    pub fn building_floor_targets(&self) -> Vec<f64> {
        let w = self.site.class_width();
        let mut out = vec![0.0; self.len() * w];
        for i in 0..self.len() {
            out[i * w + self.buildings[i]] = 1.0;
            out[i * w + self.site.buildings() + self.floors[i]] = 1.0;
        }
        out
    }

    pub fn building_targets(&self) -> Vec<f64> {
        one_hot(&self.buildings, self.site.buildings())
    }

    pub fn floor_targets(&self) -> Vec<f64> {
        one_hot(&self.floors, self.site.floors())
    }

    /// `len × 2` coordinates scaled with this dataset's scaler.
    pub fn coord_targets(&self) -> Vec<f64> {
        self.coords
            .iter()
            .flat_map(|&c| self.scaler.scale_coords(c))
            .collect()
    }

    /// Stratum id for the (building, floor) pair of row `i`.
    pub fn stratum(&self, i: usize) -> usize {
        self.buildings[i] * self.site.floors() + self.floors[i]
    }

    pub fn subset(&self, indices: &[usize], provenance: Provenance) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.width);
        for &i in indices {
            features.extend_from_slice(self.feature_row(i));
        }
        Self {
            features,
            width: self.width,
            buildings: indices.iter().map(|&i| self.buildings[i]).collect(),
            floors: indices.iter().map(|&i| self.floors[i]).collect(),
            coords: indices.iter().map(|&i| self.coords[i]).collect(),
            provenance,
            site: self.site.clone(),
            scaler: self.scaler,
        }
    }
}

fn one_hot(labels: &[usize], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; labels.len() * width];
    for (i, &l) in labels.iter().enumerate() {
        out[i * width + l] = 1.0;
    }
    out
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub validation: Dataset,
    /// Indices into the source dataset, ascending.
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    /// False when some stratum was too small and the split fell back to a plain shuffle.
    pub stratified: bool,
}

/// Seeded split stratified by (building, floor); row order within each side follows the source.
pub fn split_train_val(dataset: &Dataset, fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Data(format!("validation fraction {fraction} outside (0, 1)")));
    }
    if dataset.len() < 2 {
        return Err(Error::Data("need at least two records to split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..dataset.len() {
        strata.entry(dataset.stratum(i)).or_default().push(i);
    }
    let stratified = strata
        .values()
        .all(|members| (fraction * members.len() as f64).round() >= 1.0);
    let mut val = Vec::new();
    if stratified {
        for members in strata.values_mut() {
            members.shuffle(&mut rng);
            let take = (fraction * members.len() as f64).round() as usize;
            val.extend_from_slice(&members[..take.min(members.len() - 1).max(1)]);
        }
    } else {
        log::warn!(
            "a (building, floor) stratum is too small for a {fraction} validation share; splitting without stratification"
        );
        let mut all: Vec<usize> = (0..dataset.len()).collect();
        all.shuffle(&mut rng);
        let take = ((fraction * all.len() as f64).round() as usize).clamp(1, all.len() - 1);
        val.extend_from_slice(&all[..take]);
    }
    val.sort_unstable();
    let mut in_val = vec![false; dataset.len()];
    val.iter().for_each(|&i| in_val[i] = true);
    let train: Vec<usize> = (0..dataset.len()).filter(|&i| !in_val[i]).collect();
    if train.is_empty() {
        return Err(Error::Data("validation split consumed every record".into()));
    }
    Ok(Split {
        train: dataset.subset(&train, dataset.provenance),
        validation: dataset.subset(&val, Provenance::Validation),
        train_indices: train,
        validation_indices: val,
        stratified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::{RecordMeta, NOT_DETECTED};

    fn site() -> SitePlan {
        SitePlan::new(vec![4, 4, 5], 3).unwrap()
    }

    fn records(n: usize) -> Vec<FingerprintRecord> {
        (0..n)
            .map(|i| FingerprintRecord {
                rssi: vec![-40.0 - (i % 50) as f32, NOT_DETECTED, -104.0],
                building: i % 3,
                floor: (i / 3) % 4,
                longitude: i as f64,
                latitude: (i * 7 % 13) as f64,
                meta: RecordMeta::default(),
            })
            .collect()
    }

    fn dataset(n: usize) -> Dataset {
        let recs = records(n);
        let scaler = ScalerParams::fit(&recs).unwrap();
        Dataset::from_records(&recs, &site(), &scaler, Provenance::Train).unwrap()
    }

    #[test]
    fn one_hot_examples() {
        let s = SitePlan::new(vec![5, 5, 5], 1).unwrap();
        assert_eq!(
            encode_building_floor(1, 3, &s).unwrap(),
            vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]
        );
        assert_eq!(
            encode_building_floor(0, 0, &s).unwrap(),
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert!(encode_building_floor(0, 5, &s).is_err());
        assert!(encode_building_floor(3, 0, &s).is_err());
    }

    #[test]
    fn rows_satisfy_group_sums_and_unit_range() {
        let d = dataset(60);
        let t = d.building_floor_targets();
        let w = d.site.class_width();
        for row in t.chunks(w) {
            assert_eq!(row[..3].iter().sum::<f64>(), 1.0);
            assert_eq!(row[3..].iter().sum::<f64>(), 1.0);
        }
        assert!(d.features.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(d.feature_row(0)[1], 0.0);
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let mut recs = records(3);
        recs[1].floor = 7;
        let scaler = ScalerParams::fit(&recs).unwrap();
        assert!(Dataset::from_records(&recs, &site(), &scaler, Provenance::Train).is_err());
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_seeded() {
        let d = dataset(600);
        let a = split_train_val(&d, 0.1, 3).unwrap();
        let b = split_train_val(&d, 0.1, 3).unwrap();
        assert!(a.stratified);
        assert_eq!(a.validation_indices, b.validation_indices);
        let mut all: Vec<usize> = a.train_indices.iter().chain(&a.validation_indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..600).collect::<Vec<_>>());
        assert_eq!(a.validation.len() + a.train.len(), 600);
        let c = split_train_val(&d, 0.1, 4).unwrap();
        assert_ne!(a.validation_indices, c.validation_indices);
    }

    #[test]
    fn tiny_strata_fall_back_to_plain_split() {
        let d = dataset(12);
        let s = split_train_val(&d, 0.1, 0).unwrap();
        assert!(!s.stratified);
        assert_eq!(s.validation.len(), 1);
        assert!(split_train_val(&d, 1.0, 0).is_err());
    }
}
