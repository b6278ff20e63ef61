//! Fully connected ReLU network with a linear output layer, trained by plain
//! SGD on the squared TD error of the taken action.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Layer>,
}

/// Parameter gradients, laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl QNetwork {
    /// All-zero network with the given widths (input first, output last).
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Config(format!("bad layer sizes {layer_sizes:?}")));
        }
        Ok(Self {
            layers: layer_sizes
                .windows(2)
                .map(|w| Layer::zeros(w[0], w[1]))
                .collect(),
        })
    }

    /// He-initialized weights, zero biases.
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        for layer in &mut net.layers {
            let normal = Normal::new(0.0, (2.0 / layer.inputs as f64).sqrt()).expect("positive sd");
            layer
                .weights
                .iter_mut()
                .for_each(|w| *w = normal.sample(rng));
        }
        Ok(net)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Model("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.inputs == 0
                || l.outputs == 0
                || l.weights.len() != l.inputs * l.outputs
                || l.biases.len() != l.outputs
            {
                return Err(Error::Model(format!("layer {i} has inconsistent shape")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(Error::Model(format!(
                    "layer {i} input width does not match layer {}",
                    i - 1
                )));
            }
        }
        let net = Self { layers };
        if !net.is_finite() {
            return Err(Error::Model("non-finite parameter".into()));
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_width());
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.affine(&h);
            if i < last {
                relu(&mut h);
            }
        }
        h
    }

    /// Activations after every layer, input first.
    fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let last = self.layers.len() - 1;
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut h = layer.affine(trace.last().expect("non-empty"));
            if i < last {
                relu(&mut h);
            }
            trace.push(h);
        }
        trace
    }

    /// Mean of `(Q(s_i, a_i) - y_i)^2` over the batch.
    pub fn loss(&self, states: &[&[f64]], actions: &[usize], targets: &[f64]) -> f64 {
        let n = states.len() as f64;
        states
            .iter()
            .zip(actions)
            .zip(targets)
            .map(|((s, &a), y)| (self.forward(s)[a] - y).powi(2))
            .sum::<f64>()
            / n
    }

    /// Gradient of [`Self::loss`]; only the taken action's output carries error.
    pub fn gradients(&self, states: &[&[f64]], actions: &[usize], targets: &[f64]) -> Gradients {
        assert!(!states.is_empty(), "empty batch");
        assert!(
            states.len() == actions.len() && actions.len() == targets.len(),
            "misaligned batch"
        );
        let n = states.len() as f64;
        let mut grads = Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        };
        for ((s, &a), y) in states.iter().zip(actions).zip(targets) {
            let trace = self.forward_trace(s);
            let out = trace.last().expect("non-empty");
            let mut delta = vec![0.0; out.len()];
            delta[a] = 2.0 * (out[a] - y) / n;
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &trace[li];
                let g = &mut grads.layers[li];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    g.biases[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(gw, x)| *gw += d * x);
                }
                if li == 0 {
                    break;
                }
                let mut back = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    back.iter_mut().zip(row).for_each(|(b, w)| *b += d * w);
                }
                // ReLU derivative, taken as 0 at the kink.
                back.iter_mut().zip(input).for_each(|(b, x)| {
                    if *x <= 0.0 {
                        *b = 0.0
                    }
                });
                delta = back;
            }
        }
        grads
    }

    pub fn apply(&mut self, grads: &Gradients, learning_rate: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer
                .weights
                .iter_mut()
                .zip(&g.weights)
                .for_each(|(w, d)| *w -= learning_rate * d);
            layer
                .biases
                .iter_mut()
                .zip(&g.biases)
                .for_each(|(b, d)| *b -= learning_rate * d);
        }
    }

    /// One SGD step on the batch; returns the loss before the step.
    pub fn sgd_step(
        &mut self,
        states: &[&[f64]],
        actions: &[usize],
        targets: &[f64],
        learning_rate: f64,
    ) -> f64 {
        let loss = self.loss(states, actions, targets);
        let grads = self.gradients(states, actions, targets);
        self.apply(&grads, learning_rate);
        loss
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().all(|p| p.is_finite())
    }

    /// Weights then biases, layer by layer.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }
}

impl Gradients {
    /// Same order as [`QNetwork::parameters`].
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }
}

fn relu(h: &mut [f64]) {
    h.iter_mut().for_each(|x| *x = x.max(0.0));
}
