use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::{softmax_into, Matrix};
use crate::{Error, Result};

use super::OutputBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
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

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidConfig(format!("unknown activation `{other}`"))),
        }
    }
}

/// One affine layer. Weights are row-major `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    #[inline]
    fn affine(&self, x: &[f64], out: &mut [f64]) {
        for ((o, w), b) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.in_dim))
            .zip(&self.biases)
        {
            *o = b + dot(w, x);
        }
    }
}

/// Dot product with four interleaved accumulators. The summation order is
/// fixed, so results are reproducible bit for bit.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ac, ar) = a.split_at(a.len() - a.len() % 4);
    let (bc, br) = b.split_at(ac.len());
    for (x, y) in ac.chunks_exact(4).zip(bc.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ar.iter().zip(br) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Dense feedforward classifier with a softmax output layer.
///
/// Hidden layers share one activation; the last layer is affine and feeds
/// the softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkFile", into = "NetworkFile")]
pub struct Network {
    layer_dims: Vec<usize>,
    activation: Activation,
    layers: Vec<Dense>,
}

/// Per-layer parameter gradients, shaped like a [`Network`]'s layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub(crate) fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.biases.fill(0.0);
        }
    }

    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
    }

    pub(crate) fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
    }

    /// All gradient values in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        self.slices().flat_map(|s| s.iter().copied()).collect()
    }
}

/// Reusable per-sample buffers for forward and backward passes.
pub(crate) struct Workspace {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`
    /// (post-activation for hidden layers, logits for the last layer).
    acts: Vec<Vec<f64>>,
    probs: Vec<f64>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    pub(crate) fn new(net: &Network) -> Self {
        Self {
            acts: net.layer_dims.iter().map(|&d| vec![0.0; d]).collect(),
            probs: vec![0.0; net.output_dim()],
            deltas: net.layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
        }
    }

    pub(crate) fn logits(&self) -> &[f64] {
        self.acts.last().expect("network has layers")
    }

    pub(crate) fn probs(&self) -> &[f64] {
        &self.probs
    }
}

impl Network {
    /// Seeded network with uniform Glorot init `±sqrt(6 / (fan_in + fan_out))`
    /// and zero biases.
    pub fn new(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(layer_dims, activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_dims: &[usize], activation: Activation) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidConfig(
                "layer_dims needs at least an input and an output size".into(),
            ));
        }
        if layer_dims.contains(&0) {
            return Err(Error::InvalidConfig("layer sizes must be positive".into()));
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            activation,
            layers,
        })
    }

    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        };
        let mut layer_dims = vec![first.in_dim];
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim != *layer_dims.last().unwrap() {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} inputs but the previous layer emits {}",
                    l.in_dim,
                    layer_dims.last().unwrap()
                )));
            }
            if l.in_dim == 0 || l.out_dim == 0 {
                return Err(Error::InvalidConfig("layer sizes must be positive".into()));
            }
            if l.weights.len() != l.in_dim * l.out_dim || l.biases.len() != l.out_dim {
                return Err(Error::Shape(format!(
                    "layer {i} parameters do not match {}x{}",
                    l.out_dim, l.in_dim
                )));
            }
            layer_dims.push(l.out_dim);
        }
        Ok(Self {
            layer_dims,
            activation,
            layers,
        })
    }

    #[inline]
    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    #[inline]
    pub fn activation(&self) -> Activation {
        self.activation
    }

    #[inline]
    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    #[inline]
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub(crate) fn param_slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
    }

    pub fn param_slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
    }

    pub fn all_params_finite(&self) -> bool {
        self.param_slices().all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "features have {} columns but the network expects {}",
                features.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Runs one sample through the network, leaving logits and posteriors in `ws`.
    pub(crate) fn forward_sample(&self, x: &[f64], ws: &mut Workspace) {
        ws.acts[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = ws.acts.split_at_mut(l + 1);
            let out = &mut tail[0];
            layer.affine(&head[l], out);
            if l < last {
                for v in out.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
        }
        softmax_into(ws.acts.last().unwrap(), &mut ws.probs);
    }

    /// Accumulates `scale * dL/dθ` for one sample whose forward pass is in
    /// `ws`, given `dL/dlogits` in `d_logits`.
    pub(crate) fn backward_sample(
        &self,
        d_logits: &[f64],
        scale: f64,
        ws: &mut Workspace,
        grads: &mut Gradients,
    ) {
        let n = self.layers.len();
        ws.deltas[n - 1].copy_from_slice(d_logits);
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let (lower, upper) = ws.deltas.split_at_mut(l);
            let delta = &upper[0];
            let input = &ws.acts[l];
            let g = &mut grads.layers[l];
            for ((&d, gb), row) in delta
                .iter()
                .zip(g.biases.iter_mut())
                .zip(g.weights.chunks_exact_mut(layer.in_dim))
            {
                let sd = scale * d;
                *gb += sd;
                for (gw, &xi) in row.iter_mut().zip(input) {
                    *gw += sd * xi;
                }
            }
            if l > 0 {
                let prev = &mut lower[l - 1];
                prev.fill(0.0);
                for (&d, w) in delta.iter().zip(layer.weights.chunks_exact(layer.in_dim)) {
                    for (p, &wi) in prev.iter_mut().zip(w) {
                        *p += wi * d;
                    }
                }
                for (p, &a) in prev.iter_mut().zip(&ws.acts[l]) {
                    *p *= self.activation.derivative_from_output(a);
                }
            }
        }
    }

    /// Posterior rows for every feature row.
    pub fn forward(&self, features: &Matrix) -> Result<OutputBatch> {
        self.check_input(features)?;
        let mut ws = Workspace::new(self);
        let mut out = Matrix::zeros(features.rows(), self.output_dim());
        for i in 0..features.rows() {
            self.forward_sample(features.row(i), &mut ws);
            out.row_mut(i).copy_from_slice(ws.probs());
        }
        Ok(OutputBatch::new_unchecked(out))
    }

    /// Pre-softmax logits for every feature row.
    pub fn forward_logits(&self, features: &Matrix) -> Result<Matrix> {
        self.check_input(features)?;
        let mut ws = Workspace::new(self);
        let mut out = Matrix::zeros(features.rows(), self.output_dim());
        for i in 0..features.rows() {
            self.forward_sample(features.row(i), &mut ws);
            out.row_mut(i).copy_from_slice(ws.logits());
        }
        Ok(out)
    }

    /// Posteriors and logits from a single pass.
    pub fn forward_with_logits(&self, features: &Matrix) -> Result<(OutputBatch, Matrix)> {
        self.check_input(features)?;
        let mut ws = Workspace::new(self);
        let mut probs = Matrix::zeros(features.rows(), self.output_dim());
        let mut logits = Matrix::zeros(features.rows(), self.output_dim());
        for i in 0..features.rows() {
            self.forward_sample(features.row(i), &mut ws);
            probs.row_mut(i).copy_from_slice(ws.probs());
            logits.row_mut(i).copy_from_slice(ws.logits());
        }
        Ok((OutputBatch::new_unchecked(probs), logits))
    }

    /// Argmax class per row, ties to the lowest index.
    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>> {
        Ok(self.forward(features)?.decisions())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// On-disk form: layer sizes, activation name, and row-major parameters.
#[derive(Serialize, Deserialize)]
struct NetworkFile {
    layer_dims: Vec<usize>,
    activation: Activation,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl From<Network> for NetworkFile {
    fn from(net: Network) -> Self {
        let (weights, biases) = net
            .layers
            .into_iter()
            .map(|l| (l.weights, l.biases))
            .unzip();
        Self {
            layer_dims: net.layer_dims,
            activation: net.activation,
            weights,
            biases,
        }
    }
}

impl TryFrom<NetworkFile> for Network {
    type Error = Error;

    fn try_from(f: NetworkFile) -> Result<Self> {
        if f.layer_dims.len() < 2
            || f.weights.len() != f.layer_dims.len() - 1
            || f.biases.len() != f.weights.len()
        {
            return Err(Error::Shape(
                "layer_dims, weights and biases disagree on the number of layers".into(),
            ));
        }
        let layers = f
            .layer_dims
            .windows(2)
            .zip(f.weights.into_iter().zip(f.biases))
            .map(|(dims, (weights, biases))| Dense {
                in_dim: dims[0],
                out_dim: dims[1],
                weights,
                biases,
            })
            .collect();
        Network::from_layers(layers, f.activation)
    }
}
