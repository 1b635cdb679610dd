//! On-disk cache of prepared records.
//!
//! A cache directory holds `train.csv`, `test.csv` and `manifest.json`. The
//! CSV files carry unscaled records, one per row:
//!
//! ```text
//! building,floor,longitude,latitude,space_id,relative_position,user_id,phone_id,timestamp,ap001,...,apNNN
//! ```
//!
//! RSSI cells are dBm with `100` for a not-detected AP. The manifest stores the
//! site plan, the scaler fitted on the training split, record counts and the
//! SHA-256 of each CSV file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checksum::sha256_hex;
use crate::data::dataset::{Dataset, Provenance};
use crate::data::record::{FingerprintRecord, RecordMeta, SitePlan};
use crate::data::scaler::ScalerParams;
use crate::error::{Error, Result};

pub const CACHE_FORMAT_VERSION: u32 = 1;
pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

const META_COLUMNS: [&str; 9] = [
    "building",
    "floor",
    "longitude",
    "latitude",
    "space_id",
    "relative_position",
    "user_id",
    "phone_id",
    "timestamp",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub format_version: u32,
    /// Free-form description of where the records came from.
    pub source: String,
    pub site: SitePlan,
    pub scaler: ScalerParams,
    pub train_records: usize,
    pub test_records: usize,
    /// File name → SHA-256 hex digest.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub manifest: CacheManifest,
    pub train: Vec<FingerprintRecord>,
    pub test: Vec<FingerprintRecord>,
}

impl PreparedData {
    pub fn train_dataset(&self) -> Result<Dataset> {
        Dataset::from_records(&self.train, &self.manifest.site, &self.manifest.scaler, Provenance::Train)
    }

    pub fn test_dataset(&self) -> Result<Dataset> {
        Dataset::from_records(&self.test, &self.manifest.site, &self.manifest.scaler, Provenance::Test)
    }
}

pub fn records_to_csv(records: &[FingerprintRecord], aps: usize) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = META_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((1..=aps).map(|i| format!("ap{i:03}")));
    w.write_record(&header)?;
    for r in records {
        if r.rssi.len() != aps {
            return Err(Error::Data(format!("record has {} APs, expected {aps}", r.rssi.len())));
        }
        let mut row = vec![
            r.building.to_string(),
            r.floor.to_string(),
            r.longitude.to_string(),
            r.latitude.to_string(),
            r.meta.space_id.to_string(),
            r.meta.relative_position.to_string(),
            r.meta.user_id.to_string(),
            r.meta.phone_id.to_string(),
            r.meta.timestamp.to_string(),
        ];
        row.extend(r.rssi.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Data(format!("csv buffer: {e}")))
}

pub fn records_from_csv(bytes: &[u8], path: &Path) -> Result<Vec<FingerprintRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(bytes);
    let cols = rdr.headers()?.len();
    if cols <= META_COLUMNS.len() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("cache file has only {cols} columns"),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let bad = |i: usize| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("cannot parse column {i}: `{}`", row.get(i).unwrap_or("")),
        };
        if row.len() != cols {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {cols} fields, found {}", row.len()),
            });
        }
        let int = |i: usize| row.get(i).and_then(|v| v.parse::<i64>().ok()).ok_or_else(|| bad(i));
        let idx = |i: usize| row.get(i).and_then(|v| v.parse::<usize>().ok()).ok_or_else(|| bad(i));
        let flt = |i: usize| row.get(i).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| bad(i));
        let rssi = (META_COLUMNS.len()..row.len())
            .map(|i| row.get(i).and_then(|v| v.parse::<f32>().ok()).ok_or_else(|| bad(i)))
            .collect::<Result<Vec<f32>>>()?;
        out.push(FingerprintRecord {
            rssi,
            building: idx(0)?,
            floor: idx(1)?,
            longitude: flt(2)?,
            latitude: flt(3)?,
            meta: RecordMeta {
                space_id: int(4)?,
                relative_position: int(5)?,
                user_id: int(6)?,
                phone_id: int(7)?,
                timestamp: int(8)?,
            },
        });
    }
    Ok(out)
}

/// Site plan inferred from both splits and scaler fitted on the training split.
pub fn fit_preparation(train: &[FingerprintRecord], test: &[FingerprintRecord]) -> Result<(SitePlan, ScalerParams)> {
    let all: Vec<FingerprintRecord> = train.iter().chain(test).cloned().collect();
    Ok((SitePlan::infer(&all)?, ScalerParams::fit(train)?))
}

/// Writes the cache files into `dir` (created if missing) and returns the manifest.
pub fn write_cache(
    dir: &Path,
    source: &str,
    site: &SitePlan,
    scaler: &ScalerParams,
    train: &[FingerprintRecord],
    test: &[FingerprintRecord],
) -> Result<CacheManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = BTreeMap::new();
    for (name, recs) in [(TRAIN_FILE, train), (TEST_FILE, test)] {
        let bytes = records_to_csv(recs, site.aps)?;
        files.insert(name.to_string(), sha256_hex(&bytes));
        let path = dir.join(name);
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
    }
    let manifest = CacheManifest {
        format_version: CACHE_FORMAT_VERSION,
        source: source.to_string(),
        site: site.clone(),
        scaler: *scaler,
        train_records: train.len(),
        test_records: test.len(),
        files,
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads a cache directory, verifying file digests and record counts.
pub fn read_cache(dir: &Path) -> Result<PreparedData> {
    let mpath = dir.join(MANIFEST_FILE);
    let manifest: CacheManifest =
        serde_json::from_slice(&std::fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?)?;
    if manifest.format_version != CACHE_FORMAT_VERSION {
        return Err(Error::Data(format!(
            "cache format {} is not supported (expected {CACHE_FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    manifest.scaler.validate()?;
    let load = |name: &str, expected: usize| -> Result<Vec<FingerprintRecord>> {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let digest = sha256_hex(&bytes);
        match manifest.files.get(name) {
            Some(want) if *want == digest => {}
            Some(want) => {
                return Err(Error::Checksum {
                    expected: want.clone(),
                    computed: digest,
                })
            }
            None => return Err(Error::Data(format!("manifest does not list {name}"))),
        }
        let recs = records_from_csv(&bytes, &path)?;
        if recs.len() != expected {
            return Err(Error::Data(format!("{name}: {} records, manifest says {expected}", recs.len())));
        }
        Ok(recs)
    };
    let train = load(TRAIN_FILE, manifest.train_records)?;
    let test = load(TEST_FILE, manifest.test_records)?;
    Ok(PreparedData { manifest, train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::NOT_DETECTED;

    fn recs() -> Vec<FingerprintRecord> {
        vec![
            FingerprintRecord {
                rssi: vec![-67.25, NOT_DETECTED, -0.1],
                building: 1,
                floor: 2,
                longitude: -7541.264_3,
                latitude: 4_864_921.904_2,
                meta: RecordMeta {
                    space_id: 106,
                    relative_position: 2,
                    user_id: 2,
                    phone_id: 23,
                    timestamp: 1_371_713_733,
                },
            },
            FingerprintRecord {
                rssi: vec![-104.0, -3.0, NOT_DETECTED],
                building: 0,
                floor: 0,
                longitude: -7600.0,
                latitude: 4_864_900.0,
                meta: RecordMeta::default(),
            },
        ]
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let r = recs();
        let bytes = records_to_csv(&r, 3).unwrap();
        let back = records_from_csv(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn cache_round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let r = recs();
        let site = SitePlan::new(vec![1, 3], 3).unwrap();
        let scaler = ScalerParams::fit(&r).unwrap();
        let m = write_cache(dir.path(), "unit", &site, &scaler, &r, &r[..1]).unwrap();
        let loaded = read_cache(dir.path()).unwrap();
        assert_eq!(loaded.manifest, m);
        assert_eq!(loaded.train, r);
        assert_eq!(loaded.test.len(), 1);
        let ds = loaded.train_dataset().unwrap();
        assert_eq!(ds.len(), 2);

        let path = dir.path().join(TRAIN_FILE);
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 2;
        bytes[last] ^= 1;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_cache(dir.path()), Err(Error::Checksum { .. })));
    }
}
