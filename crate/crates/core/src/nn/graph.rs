use std::ops::Range;

use crate::block::BlockSymbol;
use crate::error::{Error, Result};
use crate::nn::activation::Activation;
use crate::nn::init::{init_params, mix_seed};
use crate::nn::layer::{Layer, LayerSpec};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSpan {
    pub symbol: BlockSymbol,
    pub layers: Range<usize>,
}

/// Parameter gradients, one entry per layer in `params` order.
pub type Gradients<T> = Vec<Vec<Tensor<T>>>;

/// Sequential stack of layers partitioned into contiguous blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph<T> {
    input_width: usize,
    layers: Vec<Layer<T>>,
    blocks: Vec<BlockSpan>,
}

impl<T: Scalar> NetworkGraph<T> {
    /// Materializes `specs`, seeding layer `i` with `mix_seed(seed, i)`.
    pub fn from_specs(
        input_width: usize,
        specs: &[LayerSpec],
        blocks: Vec<BlockSpan>,
        seed: u64,
    ) -> Result<Self> {
        if input_width == 0 {
            return Err(Error::InvalidLayer("network input width is zero".into()));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut width = input_width;
        for (i, spec) in specs.iter().enumerate() {
            let layer = Layer::new(*spec, width, mix_seed(seed, i as u64))
                .map_err(|e| Error::InvalidLayer(format!("layer {i}: {e}")))?;
            width = layer.output_width;
            layers.push(layer);
        }
        let graph = Self {
            input_width,
            layers,
            blocks,
        };
        graph.validate_blocks()?;
        Ok(graph)
    }

    fn validate_blocks(&self) -> Result<()> {
        let mut cursor = 0;
        let mut seen = Vec::new();
        for span in &self.blocks {
            if span.layers.start < cursor || span.layers.end > self.layers.len() || span.layers.is_empty() {
                return Err(Error::Plan(format!(
                    "block {} spans {:?}, which is empty, overlapping or out of range",
                    span.symbol, span.layers
                )));
            }
            if seen.contains(&span.symbol) {
                return Err(Error::Plan(format!("block {} declared twice", span.symbol)));
            }
            seen.push(span.symbol);
            cursor = span.layers.end;
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.spec.is_parameterized() && self.block_of_layer(i).is_none() {
                return Err(Error::Plan(format!("parameterized layer {i} belongs to no block")));
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(self.input_width, |l| l.output_width)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn blocks(&self) -> &[BlockSpan] {
        &self.blocks
    }

    pub fn block_of_layer(&self, layer: usize) -> Option<BlockSymbol> {
        self.blocks
            .iter()
            .find(|s| s.layers.contains(&layer))
            .map(|s| s.symbol)
    }

    pub fn has_block(&self, symbol: BlockSymbol) -> bool {
        self.blocks.iter().any(|s| s.symbol == symbol)
    }

    fn span(&self, symbol: BlockSymbol) -> Option<&BlockSpan> {
        self.blocks.iter().find(|s| s.symbol == symbol)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn block_param_count(&self, symbol: BlockSymbol) -> usize {
        self.span(symbol)
            .map_or(0, |s| self.layers[s.layers.clone()].iter().map(Layer::param_count).sum())
    }

    /// Ordered parameter shapes of a block.
    pub fn block_shapes(&self, symbol: BlockSymbol) -> Option<Vec<Vec<usize>>> {
        self.span(symbol).map(|s| {
            self.layers[s.layers.clone()]
                .iter()
                .flat_map(|l| l.params.iter().map(|p| p.shape().to_vec()))
                .collect()
        })
    }

    /// Deep copy of a block's parameters in layer order.
    pub fn block_params(&self, symbol: BlockSymbol) -> Option<Vec<Tensor<T>>> {
        self.span(symbol).map(|s| {
            self.layers[s.layers.clone()]
                .iter()
                .flat_map(|l| l.params.iter().cloned())
                .collect()
        })
    }

    /// Re-draws a block's parameters, seeding its `j`-th layer with `mix_seed(seed, j)`.
    pub fn reinit_block(&mut self, symbol: BlockSymbol, seed: u64) -> Result<()> {
        let span = self
            .span(symbol)
            .ok_or_else(|| Error::MissingBlock {
                block: symbol.to_string(),
                context: "network".into(),
            })?
            .clone();
        for (j, layer) in self.layers[span.layers].iter_mut().enumerate() {
            layer.params = init_params(&layer.spec.kind, layer.spec.init, mix_seed(seed, j as u64))?;
        }
        Ok(())
    }

    pub fn set_block_params(&mut self, symbol: BlockSymbol, params: &[Tensor<T>]) -> Result<()> {
        let span = self
            .span(symbol)
            .ok_or_else(|| Error::MissingBlock {
                block: symbol.to_string(),
                context: "network".into(),
            })?
            .clone();
        let expected = self.block_shapes(symbol).unwrap_or_default();
        let actual: Vec<Vec<usize>> = params.iter().map(|p| p.shape().to_vec()).collect();
        if expected != actual {
            return Err(Error::LinkedShape {
                target: symbol.to_string(),
                source_block: "supplied parameters".into(),
                target_shapes: expected,
                source_shapes: actual,
            });
        }
        let mut it = params.iter();
        for layer in &mut self.layers[span.layers] {
            for p in &mut layer.params {
                *p = it.next().expect("counted above").clone();
            }
        }
        Ok(())
    }

    /// Returns `[input, out_0, out_1, ...]`; the last entry is the network output.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        if input.shape().len() != 2 || input.cols() != self.input_width {
            return Err(Error::LayerShape {
                layer: 0,
                expected: vec![input.rows(), self.input_width],
                actual: input.shape().to_vec(),
            });
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.clone());
        for layer in &self.layers {
            let y = layer.forward(acts.last().expect("non-empty"));
            acts.push(y);
        }
        Ok(acts)
    }

    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(input)?.pop().expect("input is always present"))
    }

    /// Back-propagates `grad_output` through activations from [`Self::forward`].
    pub fn backward(
        &self,
        acts: &[Tensor<T>],
        grad_output: &Tensor<T>,
        need_input_grad: bool,
    ) -> Result<(Option<Tensor<T>>, Gradients<T>)> {
        if acts.len() != self.layers.len() + 1 {
            return Err(Error::Shape(format!(
                "{} activations for {} layers",
                acts.len(),
                self.layers.len()
            )));
        }
        let out = acts.last().expect("non-empty");
        if grad_output.shape() != out.shape() {
            return Err(Error::LayerShape {
                layer: self.layers.len().saturating_sub(1),
                expected: out.shape().to_vec(),
                actual: grad_output.shape().to_vec(),
            });
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if acts[i].cols() != layer.input_width {
                return Err(Error::LayerShape {
                    layer: i,
                    expected: vec![acts[i].rows(), layer.input_width],
                    actual: acts[i].shape().to_vec(),
                });
            }
        }
        let mut grads: Gradients<T> = vec![Vec::new(); self.layers.len()];
        let mut upstream = grad_output.clone();
        for i in (0..self.layers.len()).rev() {
            let want_dx = i > 0 || need_input_grad;
            let (dx, g) = self.layers[i].backward(&acts[i], &acts[i + 1], &upstream, want_dx);
            grads[i] = g;
            match dx {
                Some(dx) => upstream = dx,
                None => {
                    return Ok((None, grads));
                }
            }
        }
        Ok((Some(upstream), grads))
    }
}

/// Fluent construction of a block-tagged [`NetworkGraph`].
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    input_width: usize,
    width: usize,
    specs: Vec<LayerSpec>,
    blocks: Vec<BlockSpan>,
}

impl GraphBuilder {
    pub fn new(input_width: usize) -> Self {
        Self {
            input_width,
            width: input_width,
            specs: Vec::new(),
            blocks: Vec::new(),
        }
    }

    /// Starts a new block; subsequent layers belong to it.
    pub fn block(mut self, symbol: BlockSymbol) -> Self {
        self.close();
        self.blocks.push(BlockSpan {
            symbol,
            layers: self.specs.len()..self.specs.len(),
        });
        self
    }

    fn close(&mut self) {
        if let Some(last) = self.blocks.last_mut() {
            last.layers.end = self.specs.len();
        }
    }

    pub fn layer(mut self, spec: LayerSpec) -> Self {
        if let Ok(w) = spec.output_width(self.width) {
            self.width = w;
        }
        self.specs.push(spec);
        self
    }

    pub fn dense(self, outputs: usize, activation: Activation) -> Self {
        let inputs = self.width;
        self.layer(LayerSpec::dense(inputs, outputs))
            .layer(LayerSpec::activation(activation))
    }

    /// Conv1D over `width / in_channels`-long sequences, followed by an activation.
    pub fn conv1d(self, in_channels: usize, out_channels: usize, kernel_len: usize, activation: Activation) -> Self {
        self.layer(LayerSpec::conv1d(in_channels, out_channels, kernel_len))
            .layer(LayerSpec::activation(activation))
    }

    pub fn flatten(self) -> Self {
        self.layer(LayerSpec::flatten())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn build<T: Scalar>(mut self, seed: u64) -> Result<NetworkGraph<T>> {
        self.close();
        NetworkGraph::from_specs(self.input_width, &self.specs, self.blocks, seed)
    }
}
