// SPDX-License-Identifier: Apache-2.0

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation value.
    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }
}

/// One affine layer; `weights` is stored out×in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Matrix::zeros(fan_out, fan_in),
            bias: vec![0.0; fan_out],
        }
    }

    fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    /// Input to every layer; `layer_inputs[0]` is the batch itself.
    layer_inputs: Vec<Matrix>,
    /// Pre-activation of every hidden layer.
    hidden_pre: Vec<Matrix>,
}

/// Dense feed-forward classifier: hidden layers use `activation`, the output layer is linear.
#[derive(Debug, Clone)]
pub struct Network {
    layer_dims: Vec<usize>,
    activation: Activation,
    seed: u64,
    layers: Vec<Dense>,
    grads: Vec<Dense>,
    cache: Option<ForwardCache>,
}

impl Network {
    /// Glorot-uniform initialisation drawn from `rng`.
    pub fn new<R: Rng + ?Sized>(
        layer_dims: &[usize],
        activation: Activation,
        seed: u64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_dims, activation, seed)?;
        for layer in &mut net.layers {
            let (fan_out, fan_in) = layer.weights.shape();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in layer.weights.as_mut_slice() {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Argument(
                "a network needs at least an input and an output width".into(),
            ));
        }
        if layer_dims.contains(&0) {
            return Err(Error::Argument("layer widths must be positive".into()));
        }
        let layers: Vec<Dense> = layer_dims
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            activation,
            seed,
            grads: layers.clone(),
            layers,
            cache: None,
        })
    }

    /// Builds a network from explicit layers, checking that shapes compose.
    pub fn from_layers(layers: Vec<Dense>, activation: Activation, seed: u64) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Argument("no layers given".into()))?;
        let mut dims = vec![first.weights.cols()];
        for (i, l) in layers.iter().enumerate() {
            let (out, inp) = l.weights.shape();
            if inp != *dims.last().unwrap() || l.bias.len() != out {
                return Err(Error::Dimension(format!("layer {i} does not compose")));
            }
            dims.push(out);
        }
        let mut net = Self::zeros(&dims, activation, seed)?;
        net.layers = layers;
        Ok(net)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Width of the penultimate representation used for nearest-mean classification.
    pub fn feature_dim(&self) -> usize {
        self.layer_dims[self.layer_dims.len() - 2]
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.cache = None;
        &mut self.layers
    }

    pub fn grads(&self) -> &[Dense] {
        &self.grads
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Parameters flattened layer by layer, weights before bias.
    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn grad_vec(&self) -> Vec<f64> {
        flatten(&self.grads)
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.as_mut_slice() {
                *w = it.next().unwrap();
            }
            for b in &mut l.bias {
                *b = it.next().unwrap();
            }
        }
        self.cache = None;
        Ok(())
    }

    /// Visits every (parameter, gradient) pair in flattening order.
    pub(crate) fn for_each_param_grad(&mut self, mut f: impl FnMut(usize, &mut f64, f64)) {
        let mut idx = 0;
        for (l, g) in self.layers.iter_mut().zip(&self.grads) {
            for (w, &gw) in l
                .weights
                .as_mut_slice()
                .iter_mut()
                .zip(g.weights.as_slice())
            {
                f(idx, w, gw);
                idx += 1;
            }
            for (b, &gb) in l.bias.iter_mut().zip(&g.bias) {
                f(idx, b, gb);
                idx += 1;
            }
        }
        self.cache = None;
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.weights.fill(0.0);
            g.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    fn check_input(&self, inputs: &Matrix) -> Result<()> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network expects {} input features, got {}",
                self.input_dim(),
                inputs.cols()
            )));
        }
        Ok(())
    }

    fn affine(layer: &Dense, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul_transpose(&layer.weights)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        Ok(z)
    }

    /// Forward pass that caches activations for a following [`Network::backward`].
    pub fn forward(&mut self, inputs: &Matrix) -> Result<Matrix> {
        self.check_input(inputs)?;
        let n = self.layers.len();
        let mut layer_inputs = Vec::with_capacity(n);
        let mut hidden_pre = Vec::with_capacity(n - 1);
        let mut x = inputs.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = Self::affine(layer, &x)?;
            layer_inputs.push(x);
            if i + 1 == n {
                self.cache = Some(ForwardCache {
                    layer_inputs,
                    hidden_pre,
                });
                return Ok(z);
            }
            let mut a = z.clone();
            a.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = self.activation.apply(*v));
            hidden_pre.push(z);
            x = a;
        }
        unreachable!("network has at least one layer")
    }

    /// Forward pass without caching; leaves any pending cache intact.
    pub fn predict(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_input(inputs)?;
        let mut x = self.hidden(inputs)?;
        x = Self::affine(self.layers.last().unwrap(), &x)?;
        Ok(x)
    }

    /// Penultimate representation (the input itself for a single-layer network).
    pub fn features(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_input(inputs)?;
        self.hidden(inputs)
    }

    fn hidden(&self, inputs: &Matrix) -> Result<Matrix> {
        let mut x = inputs.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            x = Self::affine(layer, &x)?;
            x.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = self.activation.apply(*v));
        }
        Ok(x)
    }

    /// Back-propagates `dlogits` (gradient of the loss w.r.t. the logits of the
    /// last [`Network::forward`]) and overwrites `grads`.
    pub fn backward(&mut self, dlogits: &Matrix) -> Result<()> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("backward called without a forward pass".into()))?;
        let rows = cache.layer_inputs[0].rows();
        if dlogits.shape() != (rows, self.num_classes()) {
            return Err(Error::State(format!(
                "loss gradient is {}x{} but the cached forward pass produced {}x{}",
                dlogits.rows(),
                dlogits.cols(),
                rows,
                self.num_classes()
            )));
        }
        let mut delta = dlogits.clone();
        for i in (0..self.layers.len()).rev() {
            let x = &cache.layer_inputs[i];
            self.grads[i].weights = delta.transpose_matmul(x)?;
            let gb = &mut self.grads[i].bias;
            gb.iter_mut().for_each(|b| *b = 0.0);
            for r in delta.iter_rows() {
                for (b, d) in gb.iter_mut().zip(r) {
                    *b += d;
                }
            }
            if i == 0 {
                break;
            }
            let mut upstream = delta.matmul(&self.layers[i].weights)?;
            let pre = &cache.hidden_pre[i - 1];
            for (u, &p) in upstream.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                *u *= self.activation.derivative(p);
            }
            delta = upstream;
        }
        Ok(())
    }

    /// Deep copy used as a frozen teacher; the copy carries no forward cache.
    pub fn snapshot(&self) -> Network {
        let mut copy = self.clone();
        copy.cache = None;
        copy
    }

    pub(crate) fn invalidate_cache(&mut self) {
        self.cache = None;
    }
}

fn flatten(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend_from_slice(l.weights.as_slice());
        out.extend_from_slice(&l.bias);
    }
    out
}
