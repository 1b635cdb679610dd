//! Tree of sequential segments. A segment reads either the network input or
//! the output of an earlier segment; named heads expose segment outputs.
//! Single-chain stage networks are one segment with one head.

use crate::block::BlockSymbol;
use crate::error::{Error, Result};
use crate::nn::graph::{Gradients, NetworkGraph};
#[cfg(test)]
use crate::nn::graph::GraphBuilder;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Segment<T> {
    pub name: String,
    /// `None` reads the network input; `Some(i)` reads segment `i`'s output.
    pub source: Option<usize>,
    pub graph: NetworkGraph<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    segments: Vec<Segment<T>>,
    heads: Vec<(String, usize)>,
}

/// Per-segment activation lists from [`Network::forward`].
#[derive(Debug, Clone)]
pub struct NetworkActivations<T> {
    pub segments: Vec<Vec<Tensor<T>>>,
}

impl<T: Scalar> NetworkActivations<T> {
    pub fn segment_output(&self, segment: usize) -> &Tensor<T> {
        self.segments[segment].last().expect("non-empty")
    }
}

impl<T: Scalar> Network<T> {
    pub fn new(segments: Vec<Segment<T>>, heads: Vec<(String, usize)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Plan("network has no segments".into()));
        }
        for (i, seg) in segments.iter().enumerate() {
            let width = match seg.source {
                None => segments[0].graph.input_width(),
                Some(s) if s < i => segments[s].graph.output_width(),
                Some(s) => {
                    return Err(Error::Plan(format!(
                        "segment {} reads segment {s}, which is not earlier",
                        seg.name
                    )))
                }
            };
            if seg.graph.input_width() != width {
                return Err(Error::Plan(format!(
                    "segment {} expects width {}, source provides {width}",
                    seg.name,
                    seg.graph.input_width()
                )));
            }
        }
        let mut symbols = Vec::new();
        for seg in &segments {
            for span in seg.graph.blocks() {
                if symbols.contains(&span.symbol) {
                    return Err(Error::Plan(format!("block {} appears in two segments", span.symbol)));
                }
                symbols.push(span.symbol);
            }
        }
        if heads.is_empty() || heads.iter().any(|(_, s)| *s >= segments.len()) {
            return Err(Error::Plan("heads must name existing segments".into()));
        }
        Ok(Self { segments, heads })
    }

    /// Single-segment network with one head named `out`.
    pub fn chain(graph: NetworkGraph<T>) -> Self {
        Self {
            segments: vec![Segment {
                name: "main".into(),
                source: None,
                graph,
            }],
            heads: vec![("out".into(), 0)],
        }
    }

    pub fn rename_head(&mut self, head: usize, name: &str) {
        self.heads[head].0 = name.to_string();
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    pub fn heads(&self) -> &[(String, usize)] {
        &self.heads
    }

    pub fn head_index(&self, name: &str) -> Option<usize> {
        self.heads.iter().position(|(n, _)| n == name)
    }

    pub fn input_width(&self) -> usize {
        self.segments[0].graph.input_width()
    }

    pub fn head_width(&self, head: usize) -> usize {
        self.segments[self.heads[head].1].graph.output_width()
    }

    pub fn param_count(&self) -> usize {
        self.segments.iter().map(|s| s.graph.param_count()).sum()
    }

    pub fn block_symbols(&self) -> Vec<BlockSymbol> {
        self.segments
            .iter()
            .flat_map(|s| s.graph.blocks().iter().map(|b| b.symbol))
            .collect()
    }

    fn segment_with(&self, symbol: BlockSymbol) -> Option<usize> {
        self.segments.iter().position(|s| s.graph.has_block(symbol))
    }

    pub fn block_shapes(&self, symbol: BlockSymbol) -> Option<Vec<Vec<usize>>> {
        self.segment_with(symbol)
            .and_then(|i| self.segments[i].graph.block_shapes(symbol))
    }

    pub fn block_params(&self, symbol: BlockSymbol) -> Option<Vec<Tensor<T>>> {
        self.segment_with(symbol)
            .and_then(|i| self.segments[i].graph.block_params(symbol))
    }

    pub fn block_param_count(&self, symbol: BlockSymbol) -> usize {
        self.segment_with(symbol)
            .map_or(0, |i| self.segments[i].graph.block_param_count(symbol))
    }

    pub fn set_block_params(&mut self, symbol: BlockSymbol, params: &[Tensor<T>]) -> Result<()> {
        let i = self.segment_with(symbol).ok_or_else(|| Error::MissingBlock {
            block: symbol.to_string(),
            context: "network".into(),
        })?;
        self.segments[i].graph.set_block_params(symbol, params)
    }

    pub fn reinit_block(&mut self, symbol: BlockSymbol, seed: u64) -> Result<()> {
        let i = self.segment_with(symbol).ok_or_else(|| Error::MissingBlock {
            block: symbol.to_string(),
            context: "network".into(),
        })?;
        self.segments[i].graph.reinit_block(symbol, seed)
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<NetworkActivations<T>> {
        let mut out: Vec<Vec<Tensor<T>>> = Vec::with_capacity(self.segments.len());
        for seg in &self.segments {
            let acts = match seg.source {
                None => seg.graph.forward(input)?,
                Some(s) => seg.graph.forward(out[s].last().expect("non-empty"))?,
            };
            out.push(acts);
        }
        Ok(NetworkActivations { segments: out })
    }

    /// Output of every head, in head order.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let acts = self.forward(input)?;
        Ok(self
            .heads
            .iter()
            .map(|(_, s)| acts.segment_output(*s).clone())
            .collect())
    }

    /// `head_grads[h]` is the loss gradient w.r.t. head `h`'s output, or `None`
    /// when the head does not contribute.
    pub fn backward(
        &self,
        acts: &NetworkActivations<T>,
        head_grads: &[Option<Tensor<T>>],
    ) -> Result<Vec<Gradients<T>>> {
        if head_grads.len() != self.heads.len() {
            return Err(Error::Shape(format!(
                "{} head gradients for {} heads",
                head_grads.len(),
                self.heads.len()
            )));
        }
        let mut pending: Vec<Option<Tensor<T>>> = vec![None; self.segments.len()];
        for ((_, seg), g) in self.heads.iter().zip(head_grads) {
            if let Some(g) = g {
                accumulate(&mut pending[*seg], g);
            }
        }
        let mut grads: Vec<Gradients<T>> = vec![Vec::new(); self.segments.len()];
        for i in (0..self.segments.len()).rev() {
            let seg = &self.segments[i];
            let upstream = match pending[i].take() {
                Some(g) => g,
                None => Tensor::zeros(acts.segment_output(i).shape()),
            };
            let (dx, g) = seg
                .graph
                .backward(&acts.segments[i], &upstream, seg.source.is_some())?;
            grads[i] = g;
            if let (Some(src), Some(dx)) = (seg.source, dx) {
                accumulate(&mut pending[src], &dx);
            }
        }
        Ok(grads)
    }

    /// Every parameter tensor with its owning block, in a fixed traversal order.
    pub fn params_mut(&mut self) -> Vec<(BlockSymbol, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for seg in &mut self.segments {
            let owners: Vec<Option<BlockSymbol>> = (0..seg.graph.layers().len())
                .map(|i| seg.graph.block_of_layer(i))
                .collect();
            for (layer, owner) in seg.graph.layers_mut().iter_mut().zip(owners) {
                for p in &mut layer.params {
                    out.push((owner.expect("validated: parameterized layers have blocks"), p));
                }
            }
        }
        out
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.segments
            .iter()
            .flat_map(|s| s.graph.layers().iter())
            .flat_map(|l| l.params.iter().map(|p| p.shape().to_vec()))
            .collect()
    }

    /// Flattens per-segment gradients into [`Self::params_mut`] order.
    pub fn flatten_grads(grads: Vec<Gradients<T>>) -> Vec<Tensor<T>> {
        grads.into_iter().flatten().flatten().collect()
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: &Tensor<T>) {
    match slot {
        Some(acc) => acc
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .for_each(|(a, &b)| *a += b),
        None => *slot = Some(g.clone()),
    }
}
