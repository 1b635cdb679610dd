//! Log-distance path-loss site simulator for desk-scale experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, Provenance};
use crate::data::record::{FingerprintRecord, RecordMeta, SitePlan, NOT_DETECTED};
use crate::data::scaler::{ScalerParams, DEFAULT_RSSI_MIN};
use crate::error::{Error, Result};
use crate::nn::init::mix_seed;

/// Height of access points above their floor, in meters.
pub const AP_HEIGHT_M: f64 = 2.5;
/// Height of the receiver above its floor, in meters.
pub const RECEIVER_HEIGHT_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub floors_per_building: Vec<usize>,
    pub aps: usize,
    pub ap_seed: u64,
    pub path_loss_exponent: f64,
    /// RSSI at 1 m, dBm.
    pub reference_power_dbm: f64,
    pub noise_sigma_db: f64,
    /// Readings below this become not-detected.
    pub detection_threshold_dbm: f64,
    /// Extra loss per floor between AP and receiver.
    #[serde(default)]
    pub floor_attenuation_db: f64,
    pub train_records: usize,
    pub test_records: usize,
    pub floor_height_m: f64,
    /// Footprint (x, y extent) of every building.
    pub building_size_m: [f64; 2],
    /// South-west corner of each building.
    pub building_origins_m: Vec<[f64; 2]>,
}

impl Default for SyntheticConfig {
    /// Two three-storey buildings, 50 APs, 4 dB shadowing, 2000/200 records.
    fn default() -> Self {
        Self {
            floors_per_building: vec![3, 3],
            aps: 50,
            ap_seed: 7,
            path_loss_exponent: 3.0,
            reference_power_dbm: -30.0,
            noise_sigma_db: 4.0,
            detection_threshold_dbm: -100.0,
            floor_attenuation_db: 15.0,
            train_records: 2000,
            test_records: 200,
            floor_height_m: 4.0,
            building_size_m: [40.0, 30.0],
            building_origins_m: vec![[0.0, 0.0], [70.0, 15.0]],
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Data(format!("synthetic config: {m}")));
        if self.building_origins_m.len() != self.floors_per_building.len() {
            return err(format!(
                "{} building origins for {} buildings",
                self.building_origins_m.len(),
                self.floors_per_building.len()
            ));
        }
        if !(self.noise_sigma_db >= 0.0) {
            return err("noise sigma must be >= 0".into());
        }
        if !(self.detection_threshold_dbm > DEFAULT_RSSI_MIN) {
            return err(format!("detection threshold must exceed {DEFAULT_RSSI_MIN} dBm"));
        }
        if self.train_records < 2 || self.test_records == 0 {
            return err("need >= 2 training and >= 1 test records".into());
        }
        if !(self.path_loss_exponent > 0.0 && self.floor_height_m > 0.0) {
            return err("path-loss exponent and floor height must be positive".into());
        }
        if !(self.building_size_m[0] > 0.0 && self.building_size_m[1] > 0.0) {
            return err("building footprint must be positive".into());
        }
        if self.floor_attenuation_db < 0.0 {
            return err("floor attenuation must be >= 0".into());
        }
        SitePlan::new(self.floors_per_building.clone(), self.aps)?;
        Ok(())
    }

    pub fn site(&self) -> Result<SitePlan> {
        SitePlan::new(self.floors_per_building.clone(), self.aps)
    }

    fn floor_slots(&self) -> Vec<(usize, usize)> {
        self.floors_per_building
            .iter()
            .enumerate()
            .flat_map(|(b, &n)| (0..n).map(move |f| (b, f)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccessPoint {
    pub building: usize,
    pub floor: usize,
    pub position: [f64; 3],
}

/// Noise-free log-distance path loss; `distance_m` is clamped below at 1 mm.
pub fn path_loss_rssi(
    reference_power_dbm: f64,
    exponent: f64,
    distance_m: f64,
    floors_between: usize,
    floor_attenuation_db: f64,
) -> f64 {
    reference_power_dbm
        - 10.0 * exponent * distance_m.max(1e-3).log10()
        - floors_between as f64 * floor_attenuation_db
}

/// APs spread round-robin over every (building, floor), uniform in the footprint.
pub fn place_access_points(cfg: &SyntheticConfig) -> Vec<AccessPoint> {
    let slots = cfg.floor_slots();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.ap_seed);
    (0..cfg.aps)
        .map(|j| {
            let (b, f) = slots[j % slots.len()];
            let o = cfg.building_origins_m[b];
            AccessPoint {
                building: b,
                floor: f,
                position: [
                    o[0] + rng.gen::<f64>() * cfg.building_size_m[0],
                    o[1] + rng.gen::<f64>() * cfg.building_size_m[1],
                    f as f64 * cfg.floor_height_m + AP_HEIGHT_M,
                ],
            }
        })
        .collect()
}

fn measure(cfg: &SyntheticConfig, aps: &[AccessPoint], floor: usize, pos: [f64; 3], noise: &mut impl FnMut() -> f64) -> Vec<f32> {
    aps.iter()
        .map(|ap| {
            let d = ((ap.position[0] - pos[0]).powi(2)
                + (ap.position[1] - pos[1]).powi(2)
                + (ap.position[2] - pos[2]).powi(2))
            .sqrt();
            let clean = path_loss_rssi(
                cfg.reference_power_dbm,
                cfg.path_loss_exponent,
                d,
                ap.floor.abs_diff(floor),
                cfg.floor_attenuation_db,
            );
            let v = clean + noise();
            if v < cfg.detection_threshold_dbm {
                NOT_DETECTED
            } else {
                v.min(0.0) as f32
            }
        })
        .collect()
}

/// Raw records for the training and test splits.
pub fn generate_synthetic_records(
    cfg: &SyntheticConfig,
    seed: u64,
) -> Result<(Vec<FingerprintRecord>, Vec<FingerprintRecord>)> {
    cfg.validate()?;
    if cfg.detection_threshold_dbm > cfg.reference_power_dbm {
        log::warn!(
            "detection threshold {} dBm exceeds the 1 m power {} dBm; almost every reading will be not-detected",
            cfg.detection_threshold_dbm,
            cfg.reference_power_dbm
        );
    }
    let aps = place_access_points(cfg);
    let slots = cfg.floor_slots();
    let normal = Normal::new(0.0, cfg.noise_sigma_db).map_err(|e| Error::Data(e.to_string()))?;
    let gen = |count: usize, stream: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, stream));
        let mut noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, stream + 100));
        let mut noise = || {
            if cfg.noise_sigma_db == 0.0 {
                0.0
            } else {
                normal.sample(&mut noise_rng)
            }
        };
        (0..count)
            .map(|i| {
                let (b, f) = slots[i % slots.len()];
                let o = cfg.building_origins_m[b];
                let x = o[0] + rng.gen::<f64>() * cfg.building_size_m[0];
                let y = o[1] + rng.gen::<f64>() * cfg.building_size_m[1];
                let z = f as f64 * cfg.floor_height_m + RECEIVER_HEIGHT_M;
                FingerprintRecord {
                    rssi: measure(cfg, &aps, f, [x, y, z], &mut noise),
                    building: b,
                    floor: f,
                    longitude: x,
                    latitude: y,
                    meta: RecordMeta {
                        space_id: (b * 100 + f) as i64,
                        timestamp: i as i64,
                        ..RecordMeta::default()
                    },
                }
            })
            .collect::<Vec<_>>()
    };
    let train = gen(cfg.train_records, 1);
    let test = gen(cfg.test_records, 2);
    Ok((train, test))
}

#[derive(Debug, Clone)]
pub struct SyntheticSite {
    pub train: Dataset,
    pub test: Dataset,
    pub site: SitePlan,
    pub train_records: Vec<FingerprintRecord>,
    pub test_records: Vec<FingerprintRecord>,
}

/// Records plus datasets scaled with a scaler fitted on the training split.
pub fn generate_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<SyntheticSite> {
    let (train_records, test_records) = generate_synthetic_records(cfg, seed)?;
    let site = cfg.site()?;
    let scaler = ScalerParams::fit(&train_records)?;
    Ok(SyntheticSite {
        train: Dataset::from_records(&train_records, &site, &scaler, Provenance::Train)?,
        test: Dataset::from_records(&test_records, &site, &scaler, Provenance::Test)?,
        site,
        train_records,
        test_records,
    })
}
