use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layer::LayerKind;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Weights ~ U(-l, l) with l = sqrt(6 / (fan_in + fan_out)); biases zero.
    #[default]
    GlorotUniform,
    Zeros,
}

/// SplitMix64 finalizer; spreads related seeds (base, base + 1, ...) apart.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed
        .wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Parameter tensors for one layer, in `[weight, bias]` order.
///
/// Dense weights are `(in, out)`; Conv1D weights are `(out_channels, in_channels, kernel_len)`.
pub fn init_params<T: Scalar>(kind: &LayerKind, scheme: InitScheme, seed: u64) -> Result<Vec<Tensor<T>>> {
    let (w_shape, b_len, fan_in, fan_out) = match *kind {
        LayerKind::Dense { inputs, outputs } => {
            if inputs == 0 || outputs == 0 {
                return Err(Error::InvalidLayer(format!("dense {inputs}->{outputs} has a zero extent")));
            }
            (vec![inputs, outputs], outputs, inputs, outputs)
        }
        LayerKind::Conv1d {
            in_channels,
            out_channels,
            kernel_len,
        } => {
            if in_channels == 0 || out_channels == 0 || kernel_len == 0 {
                return Err(Error::InvalidLayer(format!(
                    "conv1d {in_channels}->{out_channels} k{kernel_len} has a zero extent"
                )));
            }
            (
                vec![out_channels, in_channels, kernel_len],
                out_channels,
                in_channels * kernel_len,
                out_channels * kernel_len,
            )
        }
        LayerKind::Activation(_) | LayerKind::Flatten => return Ok(Vec::new()),
    };
    let n: usize = w_shape.iter().product();
    let weight = match scheme {
        InitScheme::Zeros => vec![T::zero(); n],
        InitScheme::GlorotUniform => {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| T::lit(rng.gen_range(-limit..limit))).collect()
        }
    };
    Ok(vec![
        Tensor::new(w_shape, weight)?,
        Tensor::zeros(&[b_len]),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_tensors() {
        let kind = LayerKind::Dense { inputs: 7, outputs: 5 };
        let a = init_params::<f32>(&kind, InitScheme::GlorotUniform, 42).unwrap();
        let b = init_params::<f32>(&kind, InitScheme::GlorotUniform, 42).unwrap();
        let c = init_params::<f32>(&kind, InitScheme::GlorotUniform, 43).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.bitwise_eq(y)));
        assert!(!a[0].bitwise_eq(&c[0]));
    }

    #[test]
    fn dense_shapes() {
        let kind = LayerKind::Dense { inputs: 520, outputs: 520 };
        let p = init_params::<f32>(&kind, InitScheme::GlorotUniform, 0).unwrap();
        assert_eq!(p[0].shape(), &[520, 520]);
        assert_eq!(p[1].shape(), &[520]);
        let limit = (6.0f32 / 1040.0).sqrt();
        assert!(p[0].data().iter().all(|v| v.abs() <= limit));
        assert!(p[1].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_shapes() {
        let kind = LayerKind::Conv1d {
            in_channels: 1,
            out_channels: 99,
            kernel_len: 22,
        };
        let p = init_params::<f64>(&kind, InitScheme::GlorotUniform, 0).unwrap();
        assert_eq!(p[0].shape(), &[99, 1, 22]);
        assert_eq!(p[1].shape(), &[99]);
    }

    #[test]
    fn zero_extent_is_an_error() {
        let kind = LayerKind::Dense { inputs: 0, outputs: 3 };
        assert!(init_params::<f32>(&kind, InitScheme::GlorotUniform, 0).is_err());
        let kind = LayerKind::Conv1d {
            in_channels: 1,
            out_channels: 0,
            kernel_len: 3,
        };
        assert!(init_params::<f32>(&kind, InitScheme::GlorotUniform, 0).is_err());
    }

    #[test]
    fn mixed_seeds_differ() {
        assert_ne!(mix_seed(1, 0), mix_seed(1, 1));
        assert_ne!(mix_seed(1, 0), mix_seed(2, 0));
        assert_eq!(mix_seed(9, 3), mix_seed(9, 3));
    }
}
