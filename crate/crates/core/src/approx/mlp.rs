use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Unused when std is in the dependency graph (test builds).
#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng as _;

use crate::error::{Error, Result};

/// Activation applied after the last affine map.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OutputActivation {
    Identity,
    Tanh,
    /// `scale * tanh(z)`, bounded by `scale` in absolute value.
    ScaledTanh(f64),
}

impl OutputActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => z,
            OutputActivation::Tanh => z.tanh(),
            OutputActivation::ScaledTanh(s) => s * z.tanh(),
        }
    }

    /// Derivative expressed through the activated output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            OutputActivation::Identity => 1.0,
            OutputActivation::Tanh => 1.0 - y * y,
            OutputActivation::ScaledTanh(s) => {
                let t = y / s;
                s * (1.0 - t * t)
            }
        }
    }
}

/// Affine layer with row-major `(outputs, inputs)` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.inputs).zip(&self.bias) {
            out.push(crate::linalg::dot(row, x) + b);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    output: OutputActivation,
}

/// Per-layer activations recorded by [`Mlp::forward_trace`].
///
/// `inputs[i]` is the input of layer `i`; `output` is the network output.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradients with the same layout as an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Gradients {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights
                .iter_mut()
                .chain(l.bias.iter_mut())
                .for_each(|g| *g *= factor);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }
}

impl Mlp {
    /// Builds a network with `tanh` hidden units and weights drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(layer_sizes: &[usize], output: OutputActivation, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::config(
                "layer_sizes",
                "need at least an input and an output size",
            ));
        }
        if let Some(i) = layer_sizes.iter().position(|&s| s == 0) {
            return Err(Error::config(
                "layer_sizes",
                format!("layer {i} has size 0; all sizes must be >= 1"),
            ));
        }
        if let OutputActivation::ScaledTanh(s) = output {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config(
                    "output_activation",
                    "tanh scale must be positive",
                ));
            }
        }
        let mut rng = crate::seeded_rng(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = || rng.random_range(-bound..bound);
                Layer {
                    inputs: fan_in,
                    outputs: fan_out,
                    weights: (0..fan_in * fan_out).map(|_| draw()).collect(),
                    bias: (0..fan_out).map(|_| draw()).collect(),
                }
            })
            .collect();
        Ok(Mlp { layers, output })
    }

    /// Builds a network from explicit layers (used by checkpoint loading and tests).
    pub fn from_layers(layers: Vec<Layer>, output: OutputActivation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("layer_sizes", "network has no layers"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return Err(Error::config("layer_sizes", format!("layer {i} is empty")));
            }
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::shape(
                    "layer parameters",
                    l.inputs * l.outputs,
                    l.weights.len(),
                ));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(Error::shape(
                    "layer chaining",
                    layers[i - 1].outputs,
                    l.inputs,
                ));
            }
        }
        Ok(Mlp { layers, output })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        sizes.push(self.output_dim());
        sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Zeroes the last layer so the network outputs exactly zero for
    /// `Tanh`/`ScaledTanh`/`Identity` outputs.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("non-empty");
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        last.bias.iter_mut().for_each(|b| *b = 0.0);
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.tanh());
            } else {
                next.iter_mut().for_each(|v| *v = self.output.apply(*v));
            }
            core::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.outputs);
            layer.affine(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.tanh());
            } else {
                next.iter_mut().for_each(|v| *v = self.output.apply(*v));
            }
            inputs.push(core::mem::replace(&mut cur, next));
        }
        Ok(Trace {
            inputs,
            output: cur,
        })
    }

    /// Gradients of `upstream . mlp(x)` with respect to every parameter and to `x`.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let trace = self.forward_trace(x)?;
        let mut grads = Gradients::zeros_like(self);
        let dx = self.backward_accumulate(&trace, upstream, &mut grads)?;
        Ok((grads, dx))
    }

    /// Adds the parameter gradients of `upstream . output` into `grads` and
    /// returns the input gradient.
    pub fn backward_accumulate(
        &self,
        trace: &Trace,
        upstream: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::shape(
                "backward upstream",
                self.output_dim(),
                upstream.len(),
            ));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::shape(
                "gradient layers",
                self.layers.len(),
                grads.layers.len(),
            ));
        }
        let mut delta: Vec<f64> = upstream
            .iter()
            .zip(&trace.output)
            .map(|(u, y)| u * self.output.derivative_from_output(*y))
            .collect();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &trace.inputs[i];
            let g = &mut grads.layers[i];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(gw, xi)| *gw += d * xi);
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
            }
            if i > 0 {
                // input of layer i is tanh output of layer i-1
                prev.iter_mut()
                    .zip(input)
                    .for_each(|(p, h)| *p *= 1.0 - h * h);
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Gradient of `upstream . output` with respect to the network input only.
    pub fn input_gradient(&self, trace: &Trace, upstream: &[f64]) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::shape(
                "backward upstream",
                self.output_dim(),
                upstream.len(),
            ));
        }
        let mut delta: Vec<f64> = upstream
            .iter()
            .zip(&trace.output)
            .map(|(u, y)| u * self.output.derivative_from_output(*y))
            .collect();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let mut prev = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
            }
            if i > 0 {
                prev.iter_mut()
                    .zip(&trace.inputs[i])
                    .for_each(|(p, h)| *p *= 1.0 - h * h);
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            for (a, b) in t
                .weights
                .iter_mut()
                .zip(&s.weights)
                .chain(t.bias.iter_mut().zip(&s.bias))
            {
                *a = tau * b + (1.0 - tau) * *a;
            }
        }
    }

    /// Serializes as little-endian: `u64` count of layer sizes, the `u64`
    /// sizes, then every `f64` parameter (per layer: weights row-major, then bias).
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let sizes = self.layer_sizes();
        let mut out = Vec::with_capacity(8 * (1 + sizes.len() + self.num_params()));
        out.extend_from_slice(&(sizes.len() as u64).to_le_bytes());
        for s in &sizes {
            out.extend_from_slice(&(*s as u64).to_le_bytes());
        }
        for l in &self.layers {
            for v in l.weights.iter().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_le_bytes(bytes: &[u8], output: OutputActivation) -> Result<Self> {
        let mut words = bytes.chunks_exact(8);
        if !words.remainder().is_empty() {
            return Err(Error::Checkpoint(format!(
                "length {} is not a multiple of 8",
                bytes.len()
            )));
        }
        let mut next_word = || -> Result<[u8; 8]> {
            words
                .next()
                .map(|w| w.try_into().expect("chunk of 8"))
                .ok_or_else(|| Error::Checkpoint("truncated".into()))
        };
        let count = u64::from_le_bytes(next_word()?) as usize;
        if !(2..=64).contains(&count) {
            return Err(Error::Checkpoint(format!(
                "implausible layer count {count}"
            )));
        }
        let mut sizes = Vec::with_capacity(count);
        for _ in 0..count {
            let s = u64::from_le_bytes(next_word()?) as usize;
            if s == 0 || s > 1 << 20 {
                return Err(Error::Checkpoint(format!("implausible layer size {s}")));
            }
            sizes.push(s);
        }
        let mut layers = Vec::with_capacity(count - 1);
        for w in sizes.windows(2) {
            let mut read = |n: usize| -> Result<Vec<f64>> {
                (0..n)
                    .map(|_| Ok(f64::from_le_bytes(next_word()?)))
                    .collect()
            };
            let weights = read(w[0] * w[1])?;
            let bias = read(w[1])?;
            layers.push(Layer {
                inputs: w[0],
                outputs: w[1],
                weights,
                bias,
            });
        }
        if next_word().is_ok() {
            return Err(Error::Checkpoint("trailing data".into()));
        }
        Mlp::from_layers(layers, output)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("mlp input", self.input_dim(), x.len()));
        }
        Ok(())
    }
}
