use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::activation::Activation;
use crate::nn::init::{init_params, InitScheme};
use crate::scalar::{Layout, Scalar};
use crate::tensor::Tensor;

/// Layer variants. Activations are always rank 2 `(batch, width)`; a Conv1D
/// layer reads its input as `in_channels` contiguous sequences and writes
/// `out_channels` contiguous sequences (channel-major), so Flatten is a
/// shape-preserving no-op kept for topology bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Stride 1, no padding.
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel_len: usize,
    },
    Activation(Activation),
    Flatten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default)]
    pub init: InitScheme,
}

impl LayerSpec {
    pub fn new(kind: LayerKind) -> Self {
        Self {
            kind,
            init: InitScheme::default(),
        }
    }

    pub fn dense(inputs: usize, outputs: usize) -> Self {
        Self::new(LayerKind::Dense { inputs, outputs })
    }

    pub fn conv1d(in_channels: usize, out_channels: usize, kernel_len: usize) -> Self {
        Self::new(LayerKind::Conv1d {
            in_channels,
            out_channels,
            kernel_len,
        })
    }

    pub fn activation(a: Activation) -> Self {
        Self::new(LayerKind::Activation(a))
    }

    pub fn flatten() -> Self {
        Self::new(LayerKind::Flatten)
    }

    pub fn is_parameterized(&self) -> bool {
        matches!(self.kind, LayerKind::Dense { .. } | LayerKind::Conv1d { .. })
    }

    /// Output width for a given input width.
    pub fn output_width(&self, input_width: usize) -> Result<usize> {
        match self.kind {
            LayerKind::Dense { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return Err(Error::InvalidLayer(format!("dense {inputs}->{outputs}")));
                }
                if inputs != input_width {
                    return Err(Error::InvalidLayer(format!(
                        "dense expects {inputs} inputs, receives {input_width}"
                    )));
                }
                Ok(outputs)
            }
            LayerKind::Conv1d {
                in_channels,
                out_channels,
                kernel_len,
            } => {
                if in_channels == 0 || out_channels == 0 || kernel_len == 0 {
                    return Err(Error::InvalidLayer(format!(
                        "conv1d {in_channels}->{out_channels} k{kernel_len}"
                    )));
                }
                if input_width % in_channels != 0 {
                    return Err(Error::InvalidLayer(format!(
                        "width {input_width} is not a multiple of {in_channels} channels"
                    )));
                }
                let in_len = input_width / in_channels;
                if kernel_len > in_len {
                    return Err(Error::InvalidLayer(format!(
                        "kernel length {kernel_len} exceeds sequence length {in_len}"
                    )));
                }
                Ok(out_channels * conv_out_len(in_len, kernel_len))
            }
            LayerKind::Activation(_) | LayerKind::Flatten => Ok(input_width),
        }
    }
}

/// Output length of a stride-1, unpadded convolution.
pub fn conv_out_len(in_len: usize, kernel_len: usize) -> usize {
    in_len + 1 - kernel_len
}

/// A layer with materialized parameters (`[weight, bias]` or none).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    pub input_width: usize,
    pub output_width: usize,
    pub params: Vec<Tensor<T>>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(spec: LayerSpec, input_width: usize, seed: u64) -> Result<Self> {
        let output_width = spec.output_width(input_width)?;
        let params = init_params(&spec.kind, spec.init, seed)?;
        Ok(Self {
            spec,
            input_width,
            output_width,
            params,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let batch = x.rows();
        let mut y = Tensor::zeros(&[batch, self.output_width]);
        match self.spec.kind {
            LayerKind::Dense { inputs, outputs } => {
                let (w, b) = (&self.params[0], &self.params[1]);
                for row in y.data_mut().chunks_exact_mut(outputs) {
                    row.copy_from_slice(b.data());
                }
                T::gemm(
                    batch,
                    inputs,
                    outputs,
                    x.data(),
                    Layout::Normal,
                    w.data(),
                    Layout::Normal,
                    y.data_mut(),
                    true,
                );
            }
            LayerKind::Conv1d {
                in_channels,
                out_channels,
                kernel_len,
            } => {
                let in_len = self.input_width / in_channels;
                let out_len = conv_out_len(in_len, kernel_len);
                let (w, b) = (&self.params[0], &self.params[1]);
                let patch = in_channels * kernel_len;
                let mut cols = vec![T::zero(); patch * out_len];
                for (xr, yr) in x
                    .data()
                    .chunks_exact(self.input_width)
                    .zip(y.data_mut().chunks_exact_mut(self.output_width))
                {
                    im2col(xr, in_channels, in_len, kernel_len, out_len, &mut cols);
                    for (o, seq) in yr.chunks_exact_mut(out_len).enumerate() {
                        seq.fill(b.data()[o]);
                    }
                    T::gemm(
                        out_channels,
                        patch,
                        out_len,
                        w.data(),
                        Layout::Normal,
                        &cols,
                        Layout::Normal,
                        yr,
                        true,
                    );
                }
            }
            LayerKind::Activation(a) => a.apply(x.data(), self.output_width, y.data_mut()),
            LayerKind::Flatten => y.data_mut().copy_from_slice(x.data()),
        }
        y
    }

    /// Returns the gradient w.r.t. the input (when requested) and the
    /// parameter gradients in `params` order.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        y: &Tensor<T>,
        dy: &Tensor<T>,
        need_input_grad: bool,
    ) -> (Option<Tensor<T>>, Vec<Tensor<T>>) {
        let batch = x.rows();
        match self.spec.kind {
            LayerKind::Dense { inputs, outputs } => {
                let w = &self.params[0];
                let mut dw = Tensor::zeros(w.shape());
                T::gemm(
                    inputs,
                    batch,
                    outputs,
                    x.data(),
                    Layout::Transposed,
                    dy.data(),
                    Layout::Normal,
                    dw.data_mut(),
                    false,
                );
                let mut db = Tensor::zeros(&[outputs]);
                for row in dy.data().chunks_exact(outputs) {
                    for (acc, &g) in db.data_mut().iter_mut().zip(row) {
                        *acc += g;
                    }
                }
                let dx = need_input_grad.then(|| {
                    let mut dx = Tensor::zeros(&[batch, inputs]);
                    T::gemm(
                        batch,
                        outputs,
                        inputs,
                        dy.data(),
                        Layout::Normal,
                        w.data(),
                        Layout::Transposed,
                        dx.data_mut(),
                        false,
                    );
                    dx
                });
                (dx, vec![dw, db])
            }
            LayerKind::Conv1d {
                in_channels,
                out_channels,
                kernel_len,
            } => {
                let in_len = self.input_width / in_channels;
                let out_len = conv_out_len(in_len, kernel_len);
                let patch = in_channels * kernel_len;
                let w = &self.params[0];
                let mut dw = Tensor::zeros(w.shape());
                let mut db = Tensor::zeros(&[out_channels]);
                let mut dx = need_input_grad.then(|| Tensor::zeros(&[batch, self.input_width]));
                let mut cols = vec![T::zero(); patch * out_len];
                let mut dcols = vec![T::zero(); patch * out_len];
                for (i, (xr, dyr)) in x
                    .data()
                    .chunks_exact(self.input_width)
                    .zip(dy.data().chunks_exact(self.output_width))
                    .enumerate()
                {
                    im2col(xr, in_channels, in_len, kernel_len, out_len, &mut cols);
                    T::gemm(
                        out_channels,
                        out_len,
                        patch,
                        dyr,
                        Layout::Normal,
                        &cols,
                        Layout::Transposed,
                        dw.data_mut(),
                        true,
                    );
                    for (o, seq) in dyr.chunks_exact(out_len).enumerate() {
                        db.data_mut()[o] += seq.iter().copied().sum::<T>();
                    }
                    if let Some(dx) = dx.as_mut() {
                        T::gemm(
                            patch,
                            out_channels,
                            out_len,
                            w.data(),
                            Layout::Transposed,
                            dyr,
                            Layout::Normal,
                            &mut dcols,
                            false,
                        );
                        let dxr = &mut dx.data_mut()[i * self.input_width..(i + 1) * self.input_width];
                        col2im(&dcols, in_channels, in_len, kernel_len, out_len, dxr);
                    }
                }
                (dx, vec![dw, db])
            }
            LayerKind::Activation(a) => {
                let dx = need_input_grad.then(|| {
                    let mut dx = Tensor::zeros(x.shape());
                    a.backward(x.data(), y.data(), dy.data(), self.output_width, dx.data_mut());
                    dx
                });
                (dx, Vec::new())
            }
            LayerKind::Flatten => (need_input_grad.then(|| dy.clone()), Vec::new()),
        }
    }
}

/// `cols[(c * k + j) * out_len + t] = x[c * in_len + t + j]`
fn im2col<T: Scalar>(x: &[T], channels: usize, in_len: usize, k: usize, out_len: usize, cols: &mut [T]) {
    for c in 0..channels {
        let seq = &x[c * in_len..(c + 1) * in_len];
        for j in 0..k {
            let row = &mut cols[(c * k + j) * out_len..(c * k + j + 1) * out_len];
            row.copy_from_slice(&seq[j..j + out_len]);
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], channels: usize, in_len: usize, k: usize, out_len: usize, dx: &mut [T]) {
    for c in 0..channels {
        let seq = &mut dx[c * in_len..(c + 1) * in_len];
        for j in 0..k {
            let row = &cols[(c * k + j) * out_len..(c * k + j + 1) * out_len];
            for (d, &g) in seq[j..j + out_len].iter_mut().zip(row) {
                *d += g;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_output_length() {
        let spec = LayerSpec::conv1d(1, 99, 22);
        assert_eq!(spec.output_width(130).unwrap(), 99 * 109);
        assert_eq!(conv_out_len(130, 22), 109);
        assert_eq!(conv_out_len(109, 22), 88);
        assert_eq!(conv_out_len(88, 22), 67);
    }

    #[test]
    fn conv_kernel_longer_than_sequence_is_rejected() {
        assert!(LayerSpec::conv1d(1, 4, 10).output_width(9).is_err());
        assert!(LayerSpec::conv1d(2, 4, 3).output_width(9).is_err());
    }

    #[test]
    fn conv_matches_direct_sum() {
        let layer = Layer::<f64>::new(LayerSpec::conv1d(2, 3, 2), 10, 5).unwrap();
        let x = Tensor::<f64>::new(vec![1, 10], (0..10).map(|v| v as f64 * 0.3 - 1.0).collect()).unwrap();
        let y = layer.forward(&x);
        let w = layer.params[0].data();
        let b = layer.params[1].data();
        let out_len = 4;
        for o in 0..3 {
            for t in 0..out_len {
                let mut s = b[o];
                for c in 0..2 {
                    for j in 0..2 {
                        s += w[(o * 2 + c) * 2 + j] * x.data()[c * 5 + t + j];
                    }
                }
                assert!((y.data()[o * out_len + t] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_dense_hand_gradient() {
        // y = w x, w = 2, x = 1, target 0: L = y^2, dL/dw = 2 w x x = 4.
        let mut layer = Layer::<f64>::new(LayerSpec::dense(1, 1), 1, 0).unwrap();
        layer.params[0].data_mut()[0] = 2.0;
        let x = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let y = layer.forward(&x);
        let dy = Tensor::new(vec![1, 1], vec![2.0 * y.data()[0]]).unwrap();
        let (_, grads) = layer.backward(&x, &y, &dy, false);
        assert_eq!(grads[0].data()[0], 4.0);
        assert_eq!(grads[1].data()[0], 4.0);
    }
}
