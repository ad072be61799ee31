//! Multilayer perceptron used by cluster heads to fuse member readings.
//!
//! Hidden layers use ReLU, the output layer is linear and a single unit.
//! Training is plain full-batch gradient descent on the mean squared error.

use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// One affine layer; `weights` is row-major with `rows` = units in this layer
/// and `cols` = units in the previous layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn affine(&self, input: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let row = &self.weights[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + self.biases[r]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<Layer>,
}

/// Pre-activations and activations of every layer from one forward pass.
/// `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre_activations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub d_weights: Vec<f64>,
    pub d_biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    d_weights: vec![0.0; l.weights.len()],
                    d_biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    fn accumulate(&mut self, other: &Gradients, scale: f64) {
        for (acc, g) in self.layers.iter_mut().zip(&other.layers) {
            for (a, v) in acc.d_weights.iter_mut().zip(&g.d_weights) {
                *a += scale * v;
            }
            for (a, v) in acc.d_biases.iter_mut().zip(&g.d_biases) {
                *a += scale * v;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl TrainBatch {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(SimError::Shape("training batch needs at least one sample".into()));
        }
        if inputs.len() != targets.len() {
            return Err(SimError::Shape(format!(
                "{} input rows but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let width = inputs[0].len();
        if inputs.iter().any(|r| r.len() != width) {
            return Err(SimError::Shape("ragged input matrix".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

// Subgradient at exactly 0 is taken as 0.
fn relu_prime(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn mse_loss(y: &[f64], y_true: &[f64]) -> Result<f64> {
    if y.len() != y_true.len() {
        return Err(SimError::Shape(format!("{} predictions but {} targets", y.len(), y_true.len())));
    }
    if y.is_empty() {
        return Err(SimError::Shape("mse of zero samples".into()));
    }
    Ok(y.iter().zip(y_true).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// Glorot-uniform weights, zero biases.
pub fn init_weights(layer_sizes: &[usize], seed: u64) -> Result<Mlp> {
    init_weights_with(layer_sizes, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub(crate) fn init_weights_with(layer_sizes: &[usize], rng: &mut ChaCha8Rng) -> Result<Mlp> {
    if layer_sizes.len() < 2 {
        return Err(SimError::Config("network needs at least an input and an output layer".into()));
    }
    if layer_sizes.contains(&0) {
        return Err(SimError::Config(format!("zero-width layer in {layer_sizes:?}")));
    }
    if *layer_sizes.last().unwrap() != 1 {
        return Err(SimError::Config("fusion network must have a single output unit".into()));
    }
    let layers = layer_sizes
        .windows(2)
        .map(|w| {
            let (cols, rows) = (w[0], w[1]);
            let limit = glorot_limit(cols, rows);
            let dist = Uniform::new_inclusive(-limit, limit);
            Layer {
                rows,
                cols,
                weights: (0..rows * cols).map(|_| dist.sample(rng)).collect(),
                biases: vec![0.0; rows],
            }
        })
        .collect();
    Ok(Mlp {
        layer_sizes: layer_sizes.to_vec(),
        layers,
    })
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl Mlp {
    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn forward(&self, x: &[f64]) -> Result<(f64, ForwardCache)> {
        if x.len() != self.input_width() {
            return Err(SimError::Shape(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_width()
            )));
        }
        let last = self.layers.len() - 1;
        let mut cache = ForwardCache {
            pre_activations: Vec::with_capacity(self.layers.len()),
            activations: vec![x.to_vec()],
        };
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(cache.activations.last().unwrap());
            let a = if k == last { z.clone() } else { z.iter().map(|&v| relu(v)).collect() };
            cache.pre_activations.push(z);
            cache.activations.push(a);
        }
        let y = cache.activations.last().unwrap()[0];
        Ok((y, cache))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?.0)
    }

    /// Gradients of `½(y - y_true)²` for the sample that produced `cache`.
    pub fn backward(&self, cache: &ForwardCache, y_true: f64) -> Result<Gradients> {
        let consistent = cache.pre_activations.len() == self.layers.len()
            && cache.activations.len() == self.layers.len() + 1
            && cache
                .activations
                .iter()
                .zip(&self.layer_sizes)
                .all(|(a, &n)| a.len() == n);
        if !consistent {
            return Err(SimError::State("forward cache does not match this network".into()));
        }

        let n_layers = self.layers.len();
        let mut grads = Vec::with_capacity(n_layers);
        let y = cache.activations[n_layers][0];
        // Linear output: σ' = 1.
        let mut delta = vec![y - y_true];

        for k in (0..n_layers).rev() {
            let layer = &self.layers[k];
            let a_prev = &cache.activations[k];
            let mut d_weights = vec![0.0; layer.weights.len()];
            for r in 0..layer.rows {
                for c in 0..layer.cols {
                    d_weights[r * layer.cols + c] = delta[r] * a_prev[c];
                }
            }
            grads.push(LayerGrad {
                d_weights,
                d_biases: delta.clone(),
            });
            if k > 0 {
                let z_prev = &cache.pre_activations[k - 1];
                delta = (0..layer.cols)
                    .map(|c| {
                        let back: f64 = (0..layer.rows).map(|r| layer.weights[r * layer.cols + c] * delta[r]).sum();
                        back * relu_prime(z_prev[c])
                    })
                    .collect();
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    pub fn sgd_step(&mut self, grads: &Gradients, eta: f64) -> Result<()> {
        let shapes_match = grads.layers.len() == self.layers.len()
            && grads
                .layers
                .iter()
                .zip(&self.layers)
                .all(|(g, l)| g.d_weights.len() == l.weights.len() && g.d_biases.len() == l.biases.len());
        if !shapes_match {
            return Err(SimError::Shape("gradient shapes do not match the network".into()));
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, dw) in layer.weights.iter_mut().zip(&g.d_weights) {
                *w -= eta * dw;
            }
            for (b, db) in layer.biases.iter_mut().zip(&g.d_biases) {
                *b -= eta * db;
            }
        }
        Ok(())
    }

    /// Mean of per-sample gradients over the batch, plus the batch MSE.
    pub fn batch_gradients(&self, batch: &TrainBatch) -> Result<(Gradients, f64)> {
        let mut total = Gradients::zeros_like(self);
        let m = batch.len() as f64;
        let mut sq = 0.0;
        for (x, &t) in batch.inputs.iter().zip(&batch.targets) {
            let (y, cache) = self.forward(x)?;
            sq += (y - t) * (y - t);
            total.accumulate(&self.backward(&cache, t)?, 1.0 / m);
        }
        Ok((total, sq / m))
    }

    /// Full-batch gradient descent for `epochs` steps. Entry `k` of the
    /// returned history is the batch MSE before step `k`.
    pub fn train(&mut self, batch: &TrainBatch, eta: f64, epochs: usize) -> Result<Vec<f64>> {
        if epochs == 0 {
            return Err(SimError::Config("epochs must be >= 1".into()));
        }
        if batch.inputs[0].len() != self.input_width() {
            return Err(SimError::Shape(format!(
                "batch has {} features, network expects {}",
                batch.inputs[0].len(),
                self.input_width()
            )));
        }
        let mut history = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let (grads, loss) = self.batch_gradients(batch)?;
            if !loss.is_finite() {
                return Err(SimError::Training { epoch, loss });
            }
            history.push(loss);
            self.sgd_step(&grads, eta)?;
            if !self.is_finite() {
                return Err(SimError::Training { epoch, loss: f64::NAN });
            }
        }
        Ok(history)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// Output for `readings` after fitting them to the input width.
    pub fn fuse(&self, readings: &[f64]) -> Result<f64> {
        self.predict(&fit_width(readings, self.input_width())?)
    }
}

/// Truncates `readings` to `width`, or right-pads them with their mean.
pub fn fit_width(readings: &[f64], width: usize) -> Result<Vec<f64>> {
    if readings.is_empty() {
        return Err(SimError::Fusion("no readings to fuse".into()));
    }
    if readings.len() >= width {
        return Ok(readings[..width].to_vec());
    }
    let mean = readings.iter().sum::<f64>() / readings.len() as f64;
    let mut out = readings.to_vec();
    out.resize(width, mean);
    Ok(out)
}

/// A network together with the affine map between raw readings and its
/// normalized input/output space.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub mlp: Mlp,
    pub input_shift: f64,
    pub input_scale: f64,
}

impl FusionModel {
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.input_shift) / self.input_scale
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.input_scale + self.input_shift
    }

    /// Fused estimate `FD_r` in raw reading units.
    pub fn fuse(&self, readings: &[f64]) -> Result<f64> {
        let normalized: Vec<f64> = readings.iter().map(|&r| self.normalize(r)).collect();
        Ok(self.denormalize(self.mlp.fuse(&normalized)?))
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            layer_sizes: self.mlp.layer_sizes.clone(),
            weights: self.mlp.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.mlp.layers.iter().map(|l| l.biases.clone()).collect(),
            input_shift: self.input_shift,
            input_scale: self.input_scale,
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self> {
        let sizes = &doc.layer_sizes;
        if sizes.len() < 2 || sizes.contains(&0) || *sizes.last().unwrap() != 1 {
            return Err(SimError::Config(format!("invalid model layer sizes {sizes:?}")));
        }
        if doc.weights.len() != sizes.len() - 1 || doc.biases.len() != sizes.len() - 1 {
            return Err(SimError::Config("model layer count does not match layer_sizes".into()));
        }
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (k, (w, b)) in doc.weights.into_iter().zip(doc.biases).enumerate() {
            let (cols, rows) = (sizes[k], sizes[k + 1]);
            if w.len() != rows * cols || b.len() != rows {
                return Err(SimError::Config(format!("model layer {k} has the wrong shape")));
            }
            layers.push(Layer {
                rows,
                cols,
                weights: w,
                biases: b,
            });
        }
        let mlp = Mlp {
            layer_sizes: doc.layer_sizes,
            layers,
        };
        if !mlp.is_finite() || !doc.input_shift.is_finite() || !(doc.input_scale.is_finite() && doc.input_scale > 0.0) {
            return Err(SimError::Config("model parameters must be finite with a positive scale".into()));
        }
        Ok(Self {
            mlp,
            input_shift: doc.input_shift,
            input_scale: doc.input_scale,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_document()).expect("model document serializes");
        std::fs::write(path, json + "\n").map_err(|e| SimError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        let doc: ModelDocument = serde_json::from_str(&text).map_err(|e| SimError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_document(doc)
    }
}

/// On-disk form of a [`FusionModel`]: row-major weights per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input_shift: f64,
    pub input_scale: f64,
}
