//! Hit rates and 3-D positioning error statistics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Building, floor and planar coordinates (meters) of one record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub building: usize,
    pub floor: usize,
    pub coords: [f64; 2],
}

pub const DEFAULT_BUILDING_PENALTY_M: f64 = 50.0;
pub const DEFAULT_FLOOR_PENALTY_M: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorModel {
    /// `|Δxy| + p_b·[b ≠ b̂] + p_f·|f − f̂|`
    Penalized { building_penalty: f64, floor_penalty: f64 },
    /// `sqrt(|Δxy|² + (h·|f − f̂|)²) + p_b·[b ≠ b̂]`
    Euclidean3d { building_penalty: f64, floor_height: f64 },
}

impl Default for ErrorModel {
    fn default() -> Self {
        ErrorModel::Penalized {
            building_penalty: DEFAULT_BUILDING_PENALTY_M,
            floor_penalty: DEFAULT_FLOOR_PENALTY_M,
        }
    }
}

impl ErrorModel {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = match *self {
            ErrorModel::Penalized { building_penalty, floor_penalty } => (building_penalty, floor_penalty),
            ErrorModel::Euclidean3d { building_penalty, floor_height } => (building_penalty, floor_height),
        };
        if a >= 0.0 && b >= 0.0 {
            Ok(())
        } else {
            Err(Error::Eval(format!("error-model constants must be >= 0: {self:?}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ErrorModel::Penalized { .. } => "penalized",
            ErrorModel::Euclidean3d { .. } => "euclidean3d",
        }
    }
}

pub fn positioning_error(pred: &Estimate, truth: &Estimate, model: &ErrorModel) -> f64 {
    let dx = pred.coords[0] - truth.coords[0];
    let dy = pred.coords[1] - truth.coords[1];
    let floors = pred.floor.abs_diff(truth.floor) as f64;
    let wrong_building = if pred.building != truth.building { 1.0 } else { 0.0 };
    match *model {
        ErrorModel::Penalized { building_penalty, floor_penalty } => {
            dx.hypot(dy) + building_penalty * wrong_building + floor_penalty * floors
        }
        ErrorModel::Euclidean3d { building_penalty, floor_height } => {
            let dz = floor_height * floors;
            (dx * dx + dy * dy + dz * dz).sqrt() + building_penalty * wrong_building
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    /// Lower middle value for even counts.
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    /// Identifies the evaluated split, e.g. a cache manifest digest.
    pub dataset_id: String,
    pub error_model: ErrorModel,
    pub count: usize,
    pub building_hit_rate: f64,
    pub floor_hit_rate: f64,
    pub error: ErrorStats,
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn error_stats(errors: &[f64]) -> Result<ErrorStats> {
    if errors.is_empty() {
        return Err(Error::Eval("no errors to summarize".into()));
    }
    let n = errors.len() as f64;
    let mean = compensated_sum(errors.iter().copied()) / n;
    let var = compensated_sum(errors.iter().map(|e| (e - mean) * (e - mean))) / n;
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(ErrorStats {
        mean,
        std: var.max(0.0).sqrt(),
        min: sorted[0],
        median: sorted[(sorted.len() - 1) / 2],
        max: sorted[sorted.len() - 1],
    })
}

/// Floor hits are counted independently of building correctness.
pub fn evaluate(predictions: &[Estimate], truths: &[Estimate], model: &ErrorModel) -> Result<EvalReport> {
    if predictions.len() != truths.len() {
        return Err(Error::Eval(format!(
            "{} predictions for {} ground-truth records",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Eval("cannot evaluate zero records".into()));
    }
    model.validate()?;
    let n = predictions.len() as f64;
    let building_hits = predictions.iter().zip(truths).filter(|(p, t)| p.building == t.building).count();
    let floor_hits = predictions.iter().zip(truths).filter(|(p, t)| p.floor == t.floor).count();
    let errors: Vec<f64> = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| positioning_error(p, t, model))
        .collect();
    Ok(EvalReport {
        label: String::new(),
        dataset_id: String::new(),
        error_model: *model,
        count: predictions.len(),
        building_hit_rate: building_hits as f64 / n,
        floor_hit_rate: floor_hits as f64 / n,
        error: error_stats(&errors)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDelta {
    pub from: String,
    pub to: String,
    pub building_hit_rate: f64,
    pub floor_hit_rate: f64,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    /// True when `to` has a lower mean error than `from`.
    pub improved: bool,
    pub warnings: Vec<String>,
}

/// Field-wise `b − a`.
pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<ReportDelta> {
    if a.count == 0 || b.count == 0 {
        return Err(Error::Eval("cannot compare an empty report".into()));
    }
    let mut warnings = Vec::new();
    if a.dataset_id != b.dataset_id {
        let w = format!("dataset identity differs: `{}` vs `{}`", a.dataset_id, b.dataset_id);
        log::warn!("{w}");
        warnings.push(w);
    }
    if a.error_model != b.error_model {
        warnings.push(format!("error models differ: {:?} vs {:?}", a.error_model, b.error_model));
    }
    Ok(ReportDelta {
        from: a.label.clone(),
        to: b.label.clone(),
        building_hit_rate: b.building_hit_rate - a.building_hit_rate,
        floor_hit_rate: b.floor_hit_rate - a.floor_hit_rate,
        mean: b.error.mean - a.error.mean,
        std: b.error.std - a.error.std,
        min: b.error.min - a.error.min,
        median: b.error.median - a.error.median,
        max: b.error.max - a.error.max,
        improved: b.error.mean < a.error.mean,
        warnings,
    })
}

/// Aligned plain-text table with one row per report.
pub fn format_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}",
        "Model", "Building", "Floor", "Average", "Std.", "Min.", "Median", "Max."
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.2}%  {:>7.2}%  {:>6.2} m  {:>6.2} m  {:>6.2} m  {:>6.2} m  {:>6.2} m",
            r.label,
            100.0 * r.building_hit_rate,
            100.0 * r.floor_hit_rate,
            r.error.mean,
            r.error.std,
            r.error.min,
            r.error.median,
            r.error.max
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn est(b: usize, f: usize, x: f64, y: f64) -> Estimate {
        Estimate { building: b, floor: f, coords: [x, y] }
    }

    #[test]
    fn closed_form_cases() {
        let m = ErrorModel::default();
        assert_eq!(positioning_error(&est(0, 1, 3.0, 4.0), &est(0, 1, 0.0, 0.0), &m), 5.0);
        assert_eq!(positioning_error(&est(2, 3, 7.5, -1.0), &est(2, 3, 7.5, -1.0), &m), 0.0);
        assert_eq!(positioning_error(&est(1, 0, 1.0, 1.0), &est(1, 2, 1.0, 1.0), &m), 8.0);
    }

    #[test]
    fn euclidean_variant() {
        let m = ErrorModel::Euclidean3d { building_penalty: 50.0, floor_height: 4.0 };
        assert_eq!(positioning_error(&est(0, 1, 3.0, 0.0), &est(0, 0, 0.0, 0.0), &m), 5.0);
    }

    #[test]
    fn exact_predictions() {
        let t = vec![est(0, 0, 1.0, 2.0), est(1, 2, 3.0, 4.0)];
        let r = evaluate(&t, &t, &ErrorModel::default()).unwrap();
        assert_eq!(r.building_hit_rate, 1.0);
        assert_eq!(r.floor_hit_rate, 1.0);
        assert_eq!(r.error, ErrorStats { mean: 0.0, std: 0.0, min: 0.0, median: 0.0, max: 0.0 });
    }

    #[test]
    fn single_wrong_building() {
        let r = evaluate(&[est(1, 0, 0.0, 0.0)], &[est(0, 0, 0.0, 0.0)], &ErrorModel::default()).unwrap();
        assert_eq!(r.building_hit_rate, 0.0);
        for v in [r.error.mean, r.error.min, r.error.median, r.error.max] {
            assert_eq!(v, 50.0);
        }
    }

    #[test]
    fn median_takes_lower_middle() {
        let s = error_stats(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.median, 2.0);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_and_empty() {
        let t = [est(0, 0, 0.0, 0.0)];
        assert!(evaluate(&t, &[], &ErrorModel::default()).is_err());
        assert!(evaluate(&[], &[], &ErrorModel::default()).is_err());
    }

    #[test]
    fn compare_deltas() {
        let mk = |label: &str, mean: f64| EvalReport {
            label: label.into(),
            dataset_id: "uji-test".into(),
            error_model: ErrorModel::default(),
            count: 1111,
            building_hit_rate: 1.0,
            floor_hit_rate: 0.9334,
            error: ErrorStats { mean, std: 1.0, min: 0.1, median: 5.0, max: 80.0 },
        };
        let a = mk("Reference DNN", 8.45);
        let b = mk("Proposed DNN", 8.19);
        let d = compare_reports(&a, &b).unwrap();
        assert!((d.mean - -0.26).abs() < 1e-12);
        assert!(d.improved);
        assert!(d.warnings.is_empty());
        let same = compare_reports(&a, &a).unwrap();
        assert_eq!(
            [same.building_hit_rate, same.floor_hit_rate, same.mean, same.std, same.min, same.median, same.max],
            [0.0; 7]
        );
        let mut empty = a.clone();
        empty.count = 0;
        assert!(compare_reports(&empty, &b).is_err());
        let mut other = b.clone();
        other.dataset_id = "synthetic".into();
        assert_eq!(compare_reports(&a, &other).unwrap().warnings.len(), 1);
    }

    #[test]
    fn table_has_header_and_rows() {
        let t = [est(0, 0, 0.0, 0.0)];
        let mut r = evaluate(&t, &t, &ErrorModel::default()).unwrap();
        r.label = "Proposed DNN".into();
        let s = format_table(&[r]);
        assert!(s.lines().next().unwrap().contains("Median"));
        assert!(s.contains("100.00%"));
    }

    fn arb_est() -> impl Strategy<Value = Estimate> {
        (0usize..3, 0usize..5, -100.0f64..100.0, -100.0f64..100.0).prop_map(|(b, f, x, y)| est(b, f, x, y))
    }

    proptest! {
        #[test]
        fn report_invariants(pairs in prop::collection::vec((arb_est(), arb_est()), 1..60)) {
            let (p, t): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let r = evaluate(&p, &t, &ErrorModel::default()).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.building_hit_rate));
            prop_assert!((0.0..=1.0).contains(&r.floor_hit_rate));
            prop_assert!(r.error.min <= r.error.median && r.error.median <= r.error.max);
            prop_assert!(r.error.std >= 0.0);
            prop_assert!(r.error.min <= r.error.mean + 1e-9 && r.error.mean <= r.error.max + 1e-9);
        }

        #[test]
        fn sign_flip_and_translation_invariance(a in arb_est(), b in arb_est(), sx in -1e3f64..1e3, sy in -1e3f64..1e3) {
            let m = ErrorModel::default();
            let e = positioning_error(&a, &b, &m);
            let flip = |v: &Estimate| est(v.building, v.floor, -v.coords[0], -v.coords[1]);
            let shift = |v: &Estimate| est(v.building, v.floor, v.coords[0] + sx, v.coords[1] + sy);
            prop_assert!((positioning_error(&flip(&a), &flip(&b), &m) - e).abs() < 1e-9);
            prop_assert!((positioning_error(&shift(&a), &shift(&b), &m) - e).abs() < 1e-6);
        }

        #[test]
        fn monotone_in_floor_and_distance(a in arb_est(), extra in 0usize..3, scale in 1.0f64..3.0) {
            let m = ErrorModel::default();
            let truth = est(a.building, 0, 0.0, 0.0);
            let near = est(a.building, a.floor, a.coords[0], a.coords[1]);
            let more_floors = est(a.building, a.floor + extra, a.coords[0], a.coords[1]);
            let farther = est(a.building, a.floor, a.coords[0] * scale, a.coords[1] * scale);
            prop_assert!(positioning_error(&more_floors, &truth, &m) >= positioning_error(&near, &truth, &m));
            prop_assert!(positioning_error(&farther, &truth, &m) >= positioning_error(&near, &truth, &m));
        }

        #[test]
        fn concatenated_average_is_count_weighted(
            a in prop::collection::vec((arb_est(), arb_est()), 1..30),
            b in prop::collection::vec((arb_est(), arb_est()), 1..30),
        ) {
            let m = ErrorModel::default();
            let ra = evaluate(&a.iter().map(|x| x.0).collect::<Vec<_>>(), &a.iter().map(|x| x.1).collect::<Vec<_>>(), &m).unwrap();
            let rb = evaluate(&b.iter().map(|x| x.0).collect::<Vec<_>>(), &b.iter().map(|x| x.1).collect::<Vec<_>>(), &m).unwrap();
            let all: Vec<_> = a.iter().chain(&b).copied().collect();
            let r = evaluate(&all.iter().map(|x| x.0).collect::<Vec<_>>(), &all.iter().map(|x| x.1).collect::<Vec<_>>(), &m).unwrap();
            let want = (ra.error.mean * ra.count as f64 + rb.error.mean * rb.count as f64) / (ra.count + rb.count) as f64;
            prop_assert!((r.error.mean - want).abs() < 1e-9);
        }
    }
}
