use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Exponential linear unit with alpha = 1.
    Elu,
    Tanh,
    Sigmoid,
    /// Row-wise softmax over the feature axis.
    Softmax,
    Linear,
}

impl Activation {
    /// Applies the activation to a `(rows, cols)` buffer.
    pub fn apply<T: Scalar>(self, x: &[T], cols: usize, y: &mut [T]) {
        match self {
            Activation::Elu => x.iter().zip(y.iter_mut()).for_each(|(&a, o)| {
                *o = if a > T::zero() { a } else { a.exp_m1() };
            }),
            Activation::Tanh => x.iter().zip(y.iter_mut()).for_each(|(&a, o)| *o = a.tanh()),
            Activation::Sigmoid => x
                .iter()
                .zip(y.iter_mut())
                .for_each(|(&a, o)| *o = sigmoid(a)),
            Activation::Linear => y.copy_from_slice(x),
            Activation::Softmax => {
                for (xr, yr) in x.chunks_exact(cols).zip(y.chunks_exact_mut(cols)) {
                    let max = xr.iter().copied().fold(T::neg_infinity(), T::max);
                    let mut sum = T::zero();
                    for (o, &a) in yr.iter_mut().zip(xr) {
                        *o = (a - max).exp();
                        sum += *o;
                    }
                    yr.iter_mut().for_each(|o| *o /= sum);
                }
            }
        }
    }

    /// Vector-Jacobian product. `x` is the pre-activation, `y` the output.
    pub fn backward<T: Scalar>(self, x: &[T], y: &[T], dy: &[T], cols: usize, dx: &mut [T]) {
        let one = T::one();
        match self {
            Activation::Elu => {
                for i in 0..dx.len() {
                    dx[i] = if x[i] > T::zero() { dy[i] } else { dy[i] * (y[i] + one) };
                }
            }
            Activation::Tanh => {
                for i in 0..dx.len() {
                    dx[i] = dy[i] * (one - y[i] * y[i]);
                }
            }
            Activation::Sigmoid => {
                for i in 0..dx.len() {
                    dx[i] = dy[i] * y[i] * (one - y[i]);
                }
            }
            Activation::Linear => dx.copy_from_slice(dy),
            Activation::Softmax => {
                for ((yr, dyr), dxr) in y
                    .chunks_exact(cols)
                    .zip(dy.chunks_exact(cols))
                    .zip(dx.chunks_exact_mut(cols))
                {
                    let dot: T = yr.iter().zip(dyr).map(|(&a, &b)| a * b).sum();
                    for j in 0..cols {
                        dxr[j] = yr[j] * (dyr[j] - dot);
                    }
                }
            }
        }
    }
}

fn sigmoid<T: Scalar>(a: T) -> T {
    let one = T::one();
    if a >= T::zero() {
        one / (one + (-a).exp())
    } else {
        let e = a.exp();
        e / (one + e)
    }
}
