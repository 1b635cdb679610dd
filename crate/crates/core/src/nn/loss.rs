use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Predictions are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside BCE and CE.
pub const PROB_EPS: f64 = 1e-7;

const ROW_SUM_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Mean squared error over all elements.
    Mse,
    /// Binary cross entropy averaged over all elements.
    Bce,
    /// Categorical cross entropy averaged over rows.
    Ce,
}

#[derive(Debug, Clone)]
pub struct LossValue<T> {
    pub value: T,
    /// Gradient w.r.t. the prediction; same shape as the prediction.
    pub grad: Tensor<T>,
}

pub fn loss_eval<T: Scalar>(kind: LossKind, prediction: &Tensor<T>, target: &Tensor<T>) -> Result<LossValue<T>> {
    if prediction.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            prediction.shape(),
            target.shape()
        )));
    }
    if !prediction.is_finite() {
        return Err(Error::LossDomain("non-finite prediction".into()));
    }
    match kind {
        LossKind::Mse => Ok(mse(prediction, target)),
        LossKind::Bce => {
            check_unit_interval(prediction, "BCE prediction")?;
            check_unit_interval(target, "BCE target")?;
            Ok(bce(prediction, target))
        }
        LossKind::Ce => {
            check_unit_interval(prediction, "CE prediction")?;
            check_rows_sum_to_one(prediction, "CE prediction")?;
            check_unit_interval(target, "CE target")?;
            check_rows_sum_to_one(target, "CE target")?;
            Ok(ce(prediction, target))
        }
    }
}

fn check_unit_interval<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<()> {
    match t.data().iter().position(|&v| !(v >= T::zero() && v <= T::one())) {
        Some(i) => Err(Error::LossDomain(format!("{what} element {i} = {} outside [0, 1]", t.data()[i]))),
        None => Ok(()),
    }
}

fn check_rows_sum_to_one<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<()> {
    for r in 0..t.rows() {
        let s: f64 = t.row(r).iter().map(|v| v.as_f64()).sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::LossDomain(format!("{what} row {r} sums to {s}")));
        }
    }
    Ok(())
}

fn clamp<T: Scalar>(p: T) -> T {
    let lo = T::lit(PROB_EPS);
    let hi = T::one() - lo;
    p.max(lo).min(hi)
}

fn mse<T: Scalar>(p: &Tensor<T>, y: &Tensor<T>) -> LossValue<T> {
    let n = T::lit(p.len() as f64);
    let two = T::lit(2.0);
    let mut grad = Tensor::zeros(p.shape());
    let mut sum = T::zero();
    for ((g, &a), &b) in grad.data_mut().iter_mut().zip(p.data()).zip(y.data()) {
        let d = a - b;
        sum += d * d;
        *g = two * d / n;
    }
    LossValue { value: sum / n, grad }
}

fn bce<T: Scalar>(p: &Tensor<T>, y: &Tensor<T>) -> LossValue<T> {
    let n = T::lit(p.len() as f64);
    let one = T::one();
    let mut grad = Tensor::zeros(p.shape());
    let mut sum = T::zero();
    for ((g, &a), &b) in grad.data_mut().iter_mut().zip(p.data()).zip(y.data()) {
        let q = clamp(a);
        sum -= b * q.ln() + (one - b) * (one - q).ln();
        *g = (q - b) / (q * (one - q)) / n;
    }
    LossValue { value: sum / n, grad }
}

fn ce<T: Scalar>(p: &Tensor<T>, y: &Tensor<T>) -> LossValue<T> {
    let rows = T::lit(p.rows() as f64);
    let mut grad = Tensor::zeros(p.shape());
    let mut sum = T::zero();
    for ((g, &a), &b) in grad.data_mut().iter_mut().zip(p.data()).zip(y.data()) {
        let q = clamp(a);
        sum -= b * q.ln();
        *g = -b / q / rows;
    }
    LossValue { value: sum / rows, grad }
}
