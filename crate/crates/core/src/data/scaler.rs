use serde::{Deserialize, Serialize};

use crate::data::record::{is_detected, FingerprintRecord};
use crate::error::{Error, Result};

/// Default RSSI floor: 6 dB below the weakest value the dataset reports.
pub const DEFAULT_RSSI_MIN: f64 = -110.0;
pub const DEFAULT_RSSI_MAX: f64 = 0.0;

/// Affine RSSI map to `[0, 1]` and per-axis min-max coordinate scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub rssi_min: f64,
    pub rssi_max: f64,
    pub coord_min: [f64; 2],
    pub coord_max: [f64; 2],
}

impl ScalerParams {
    /// Fits coordinate ranges on `records` (the training split).
    pub fn fit(records: &[FingerprintRecord]) -> Result<Self> {
        Self::fit_with_rssi(records, DEFAULT_RSSI_MIN, DEFAULT_RSSI_MAX)
    }

    pub fn fit_with_rssi(records: &[FingerprintRecord], rssi_min: f64, rssi_max: f64) -> Result<Self> {
        if !(rssi_min < rssi_max) {
            return Err(Error::Data(format!("rssi range [{rssi_min}, {rssi_max}] is empty")));
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for r in records {
            for (axis, v) in r.coords().into_iter().enumerate() {
                lo[axis] = lo[axis].min(v);
                hi[axis] = hi[axis].max(v);
            }
        }
        let params = Self {
            rssi_min,
            rssi_max,
            coord_min: lo,
            coord_max: hi,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rssi_min < self.rssi_max) {
            return Err(Error::Data("rssi_min must be below rssi_max".into()));
        }
        for axis in 0..2 {
            let span = self.coord_max[axis] - self.coord_min[axis];
            if !(span.is_finite() && span > 0.0) {
                return Err(Error::Data(format!(
                    "degenerate coordinate range on axis {axis}: [{}, {}]",
                    self.coord_min[axis], self.coord_max[axis]
                )));
            }
        }
        Ok(())
    }

    /// Detected `r` maps to `(r - min) / (max - min)` clamped to `[0, 1]`; absent APs map to 0.
    pub fn scale_rssi(&self, rssi: f32) -> f64 {
        if !is_detected(rssi) {
            return 0.0;
        }
        ((rssi as f64 - self.rssi_min) / (self.rssi_max - self.rssi_min)).clamp(0.0, 1.0)
    }

    /// Unclamped per-axis min-max scaling.
    pub fn scale_coords(&self, xy: [f64; 2]) -> [f64; 2] {
        [0, 1].map(|a| (xy[a] - self.coord_min[a]) / (self.coord_max[a] - self.coord_min[a]))
    }

    pub fn unscale_coords(&self, xy: [f64; 2]) -> [f64; 2] {
        [0, 1].map(|a| xy[a] * (self.coord_max[a] - self.coord_min[a]) + self.coord_min[a])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::{RecordMeta, NOT_DETECTED};
    use proptest::prelude::*;

    fn params() -> ScalerParams {
        ScalerParams {
            rssi_min: -110.0,
            rssi_max: 0.0,
            coord_min: [-7691.3, 4864745.7],
            coord_max: [-7300.8, 4865017.4],
        }
    }

    #[test]
    fn rssi_endpoints_and_midpoint() {
        let p = params();
        assert_eq!(p.scale_rssi(-110.0), 0.0);
        assert_eq!(p.scale_rssi(0.0), 1.0);
        assert_eq!(p.scale_rssi(-55.0), 0.5);
        assert_eq!(p.scale_rssi(NOT_DETECTED), 0.0);
        assert_eq!(p.scale_rssi(-130.0), 0.0);
    }

    #[test]
    fn fit_maps_training_extremes_to_unit_interval() {
        let rec = |x, y| FingerprintRecord {
            rssi: vec![],
            building: 0,
            floor: 0,
            longitude: x,
            latitude: y,
            meta: RecordMeta::default(),
        };
        let recs = [rec(1.0, 10.0), rec(3.0, 30.0), rec(2.0, 20.0)];
        let p = ScalerParams::fit(&recs).unwrap();
        assert_eq!(p.scale_coords([1.0, 10.0]), [0.0, 0.0]);
        assert_eq!(p.scale_coords([3.0, 30.0]), [1.0, 1.0]);
        // No clamping outside the fitted range.
        let out = p.scale_coords([5.0, 0.0]);
        assert_eq!(out, [2.0, -0.5]);
        assert_eq!(p.unscale_coords(out), [5.0, 0.0]);
        assert!(ScalerParams::fit(&recs[..1]).is_err());
    }

    #[test]
    fn scaler_round_trip_over_many_values() {
        let p = params();
        let mut worst = 0.0f64;
        for i in 0..10_000 {
            let t = i as f64 / 9_999.0;
            let v = [-7800.0 + 600.0 * t, 4864600.0 + 500.0 * (1.0 - t)];
            let back = p.unscale_coords(p.scale_coords(v));
            worst = worst.max((back[0] - v[0]).abs()).max((back[1] - v[1]).abs());
        }
        assert!(worst < 1e-9, "worst round-trip error {worst}");
    }

    proptest! {
        #[test]
        fn coords_round_trip(x in -8000.0f64..-7000.0, y in 4864000.0f64..4866000.0) {
            let p = params();
            let back = p.unscale_coords(p.scale_coords([x, y]));
            prop_assert!((back[0] - x).abs() < 1e-9);
            prop_assert!((back[1] - y).abs() < 1e-9);
        }

        #[test]
        fn scaled_rssi_in_unit_interval(r in -200.0f32..50.0) {
            let s = params().scale_rssi(r);
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}
