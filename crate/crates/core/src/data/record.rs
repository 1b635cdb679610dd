use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RSSI value the dataset uses for an access point that was not heard.
pub const NOT_DETECTED: f32 = 100.0;

/// Detected RSSI range of the UJIIndoorLoc database, in dBm.
pub const UJI_RSSI_RANGE: (f32, f32) = (-104.0, 0.0);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RecordMeta {
    pub space_id: i64,
    pub relative_position: i64,
    pub user_id: i64,
    pub phone_id: i64,
    pub timestamp: i64,
}

/// One scan: per-AP RSSI plus labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintRecord {
    /// dBm per access point; [`NOT_DETECTED`] marks an absent AP.
    pub rssi: Vec<f32>,
    pub building: usize,
    pub floor: usize,
    /// Projected easting in meters.
    pub longitude: f64,
    /// Projected northing in meters.
    pub latitude: f64,
    pub meta: RecordMeta,
}

impl FingerprintRecord {
    pub fn coords(&self) -> [f64; 2] {
        [self.longitude, self.latitude]
    }

    pub fn detected_count(&self) -> usize {
        self.rssi.iter().filter(|&&r| is_detected(r)).count()
    }
}

pub fn is_detected(rssi: f32) -> bool {
    rssi != NOT_DETECTED
}

/// Building/floor/AP counts of a site.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SitePlan {
    /// Floors of each building; its length is the building count.
    pub floors_per_building: Vec<usize>,
    /// Number of access points (feature width).
    pub aps: usize,
}

impl SitePlan {
    pub fn new(floors_per_building: Vec<usize>, aps: usize) -> Result<Self> {
        if floors_per_building.is_empty() || floors_per_building.contains(&0) || aps == 0 {
            return Err(Error::Data(format!(
                "site plan needs >= 1 building, floor and AP (floors {floors_per_building:?}, aps {aps})"
            )));
        }
        Ok(Self {
            floors_per_building,
            aps,
        })
    }

    /// Infers counts from the largest building and floor ids present.
    pub fn infer(records: &[FingerprintRecord]) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::Data("cannot infer a site plan from zero records".into()))?;
        let aps = first.rssi.len();
        let buildings = records.iter().map(|r| r.building).max().unwrap_or(0) + 1;
        let mut floors = vec![1; buildings];
        for r in records {
            if r.rssi.len() != aps {
                return Err(Error::Data(format!(
                    "records disagree on AP count ({} vs {aps})",
                    r.rssi.len()
                )));
            }
            floors[r.building] = floors[r.building].max(r.floor + 1);
        }
        Self::new(floors, aps)
    }

    pub fn buildings(&self) -> usize {
        self.floors_per_building.len()
    }

    /// Width of the floor one-hot group: the maximum floor count over buildings.
    pub fn floors(&self) -> usize {
        self.floors_per_building.iter().copied().max().unwrap_or(0)
    }

    pub fn class_width(&self) -> usize {
        self.buildings() + self.floors()
    }

    pub fn check_labels(&self, building: usize, floor: usize) -> Result<()> {
        if building >= self.buildings() {
            return Err(Error::Label(format!(
                "building {building} with {} buildings",
                self.buildings()
            )));
        }
        if floor >= self.floors() {
            return Err(Error::Label(format!("floor {floor} with {} floors", self.floors())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(b: usize, f: usize) -> FingerprintRecord {
        FingerprintRecord {
            rssi: vec![-50.0, NOT_DETECTED],
            building: b,
            floor: f,
            longitude: 0.0,
            latitude: 0.0,
            meta: RecordMeta::default(),
        }
    }

    #[test]
    fn floors_is_max_over_buildings() {
        let site = SitePlan::new(vec![4, 4, 5], 520).unwrap();
        assert_eq!(site.buildings(), 3);
        assert_eq!(site.floors(), 5);
        assert_eq!(site.class_width(), 8);
    }

    #[test]
    fn infer_from_records() {
        let site = SitePlan::infer(&[rec(0, 2), rec(1, 0), rec(2, 4)]).unwrap();
        assert_eq!(site.floors_per_building, vec![3, 1, 5]);
        assert_eq!(site.aps, 2);
        assert_eq!(rec(0, 0).detected_count(), 1);
    }

    #[test]
    fn degenerate_plans_rejected() {
        assert!(SitePlan::new(vec![], 3).is_err());
        assert!(SitePlan::new(vec![2, 0], 3).is_err());
        assert!(SitePlan::new(vec![2], 0).is_err());
        assert!(SitePlan::infer(&[]).is_err());
    }
}
