//! Fully connected networks with hand-derived backpropagation.
//!
//! Parameters of a network live in one flat buffer, layer by layer
//! (weights `out × in` row-major, then bias `out`). Gradients use the same
//! layout, which lets the optimizer treat any model as a single slice.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gemm, MatRef, Scalar};
use crate::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerShape {
    pub fn weight_len(&self) -> usize {
        self.inputs * self.outputs
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.outputs
    }
}

/// Layer shapes of a network plus the offsets of each layer in the flat buffer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseLayout {
    layers: Vec<LayerShape>,
    offsets: Vec<usize>,
    len: usize,
}

impl DenseLayout {
    pub fn new(layers: Vec<LayerShape>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].inputs != pair[0].outputs {
                return Err(Error::dim("DenseLayout::new", pair[0].outputs, pair[1].inputs));
            }
        }
        if layers.iter().any(|l| l.inputs == 0 || l.outputs == 0) {
            return Err(Error::InvalidArgument("layer dimensions must be positive".into()));
        }
        let mut offsets = Vec::with_capacity(layers.len());
        let mut len = 0;
        for l in &layers {
            offsets.push(len);
            len += l.param_len();
        }
        Ok(DenseLayout { layers, offsets, len })
    }

    /// ReLU hidden layers followed by an identity output layer.
    pub fn mlp(input: usize, hidden: &[usize], output: usize) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            layers.push(LayerShape {
                inputs: prev,
                outputs: h,
                activation: Activation::Relu,
            });
            prev = h;
        }
        layers.push(LayerShape {
            inputs: prev,
            outputs: output,
            activation: Activation::Identity,
        });
        Self::new(layers)
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn num_params(&self) -> usize {
        self.len
    }

    fn weights<'p, T>(&self, params: &'p [T], layer: usize) -> &'p [T] {
        let start = self.offsets[layer];
        &params[start..start + self.layers[layer].weight_len()]
    }

    fn bias<'p, T>(&self, params: &'p [T], layer: usize) -> &'p [T] {
        let start = self.offsets[layer] + self.layers[layer].weight_len();
        &params[start..start + self.layers[layer].outputs]
    }
}

/// Per-batch activation storage reused across steps.
#[derive(Debug, Default)]
pub struct Workspace<T> {
    /// Output of every layer after activation; `acts[l]` has `rows × outputs(l)`.
    acts: Vec<Vec<T>>,
    delta: Vec<T>,
    delta_prev: Vec<T>,
    rows: usize,
}

impl<T: Scalar> Workspace<T> {
    pub fn new() -> Self {
        Workspace {
            acts: Vec::new(),
            delta: Vec::new(),
            delta_prev: Vec::new(),
            rows: 0,
        }
    }

    /// Network output of the last forward pass (`rows × output_dim`).
    pub fn output(&self) -> &[T] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// A layout paired with a borrowed parameter buffer.
#[derive(Clone, Copy, Debug)]
pub struct DenseRef<'a, T> {
    pub layout: &'a DenseLayout,
    pub params: &'a [T],
}

impl<'a, T: Scalar> DenseRef<'a, T> {
    pub fn new(layout: &'a DenseLayout, params: &'a [T]) -> Result<Self> {
        if params.len() != layout.num_params() {
            return Err(Error::dim("DenseRef::new", layout.num_params(), params.len()));
        }
        Ok(DenseRef { layout, params })
    }

    /// Forward pass over `rows` inputs stored row-major in `x`.
    pub fn forward_batch(&self, x: &[T], rows: usize, ws: &mut Workspace<T>) -> Result<()> {
        let input = self.layout.input_dim();
        if x.len() != rows * input {
            return Err(Error::dim("forward", rows * input, x.len()));
        }
        let layers = self.layout.layers();
        ws.acts.resize_with(layers.len(), Vec::new);
        ws.rows = rows;
        for (l, shape) in layers.iter().enumerate() {
            let (before, rest) = ws.acts.split_at_mut(l);
            let out = &mut rest[0];
            let prev: &[T] = if l == 0 { x } else { &before[l - 1] };
            out.clear();
            out.resize(rows * shape.outputs, T::zero());
            let bias = self.layout.bias(self.params, l);
            for row in out.chunks_exact_mut(shape.outputs) {
                row.copy_from_slice(bias);
            }
            gemm(
                T::one(),
                MatRef::new(prev, rows, shape.inputs),
                MatRef::transposed(self.layout.weights(self.params, l), shape.outputs, shape.inputs),
                T::one(),
                out,
            );
            if shape.activation == Activation::Relu {
                for v in out.iter_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
        }
        Ok(())
    }

    /// Backpropagates `grad_out` (d loss / d output, `rows × output_dim`) through
    /// the activations stored by the preceding [`forward_batch`](Self::forward_batch)
    /// call on the same `x`, accumulating parameter gradients into `grads`.
    pub fn backward(&self, x: &[T], ws: &mut Workspace<T>, grad_out: &[T], grads: &mut [T]) -> Result<()> {
        let rows = ws.rows;
        let layers = self.layout.layers();
        if grads.len() != self.layout.num_params() {
            return Err(Error::dim("backward", self.layout.num_params(), grads.len()));
        }
        if grad_out.len() != rows * self.layout.output_dim() {
            return Err(Error::dim("backward", rows * self.layout.output_dim(), grad_out.len()));
        }
        ws.delta.clear();
        ws.delta.extend_from_slice(grad_out);
        for l in (0..layers.len()).rev() {
            let shape = layers[l];
            if shape.activation == Activation::Relu {
                for (d, &a) in ws.delta.iter_mut().zip(&ws.acts[l]) {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            let input: &[T] = if l == 0 { x } else { &ws.acts[l - 1] };
            let offset = self.layout.offsets[l];
            let (w_grad, rest) = grads[offset..offset + shape.param_len()].split_at_mut(shape.weight_len());
            // dW += deltaᵀ · input
            gemm(
                T::one(),
                MatRef::transposed(&ws.delta, rows, shape.outputs),
                MatRef::new(input, rows, shape.inputs),
                T::one(),
                w_grad,
            );
            for row in ws.delta.chunks_exact(shape.outputs) {
                for (b, &d) in rest.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if l > 0 {
                ws.delta_prev.clear();
                ws.delta_prev.resize(rows * shape.inputs, T::zero());
                gemm(
                    T::one(),
                    MatRef::new(&ws.delta, rows, shape.outputs),
                    MatRef::new(self.layout.weights(self.params, l), shape.outputs, shape.inputs),
                    T::zero(),
                    &mut ws.delta_prev,
                );
                core::mem::swap(&mut ws.delta, &mut ws.delta_prev);
            }
        }
        Ok(())
    }
}

/// A fully connected network owning its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet<T> {
    layout: DenseLayout,
    params: Vec<T>,
}

impl<T: Scalar> DenseNet<T> {
    pub fn from_params(layout: DenseLayout, params: Vec<T>) -> Result<Self> {
        if params.len() != layout.num_params() {
            return Err(Error::dim("DenseNet::from_params", layout.num_params(), params.len()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::numerical("DenseNet::from_params"));
        }
        Ok(DenseNet { layout, params })
    }

    pub fn zeros(layout: DenseLayout) -> Self {
        let params = vec![T::zero(); layout.num_params()];
        DenseNet { layout, params }
    }

    /// Uniform He initialization: weights in `±sqrt(6 / fan_in)`, zero biases.
    pub fn init_he<R: Rng + ?Sized>(layout: DenseLayout, rng: &mut R) -> Self {
        let mut params = vec![T::zero(); layout.num_params()];
        init_he_into(&layout, &mut params, rng);
        DenseNet { layout, params }
    }

    pub fn layout(&self) -> &DenseLayout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn view(&self) -> DenseRef<'_, T> {
        DenseRef {
            layout: &self.layout,
            params: &self.params,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layout.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layout.output_dim()
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.forward_batch(x, 1)
    }

    pub fn forward_batch(&self, x: &[T], rows: usize) -> Result<Vec<T>> {
        let mut ws = Workspace::new();
        self.view().forward_batch(x, rows, &mut ws)?;
        Ok(ws.output().to_vec())
    }
}

pub(crate) fn init_he_into<T: Scalar, R: Rng + ?Sized>(layout: &DenseLayout, params: &mut [T], rng: &mut R) {
    for (l, shape) in layout.layers().iter().enumerate() {
        let limit = libm::sqrt(6.0 / shape.inputs as f64);
        let start = layout.offsets[l];
        for w in &mut params[start..start + shape.weight_len()] {
            *w = T::from_f64(rng.random_range(-limit..limit));
        }
        for b in &mut params[start + shape.weight_len()..start + shape.param_len()] {
            *b = T::zero();
        }
    }
}
