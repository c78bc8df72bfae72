//! Real-valued multilayer perceptron trained by stochastic gradient descent.
//!
//! Each layer computes `a_l = f_l(a_{l-1} · W_l + b_l)` where `W_l` is stored
//! row-major with shape `(inputs, outputs)`, so row `i` holds the weights
//! leaving input neuron `i`. This is the same orientation as a crossbar:
//! rows are driven by inputs, columns collect outputs.
//!
//! The per-sample loss is `0.5 * Σ_k (a_k - t_k)^2` against one-hot targets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::{Activation, HardSlopes};
use crate::dataio::Dataset;
use crate::error::{Error, Result};

/// Layer topology and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub layer_sizes: Vec<usize>,
    /// One entry per non-input layer.
    pub activations: Vec<Activation>,
    pub learning_rate: f64,
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub hard_slopes: HardSlopes,
}

fn default_batch_size() -> usize {
    1
}

impl NetworkConfig {
    /// A network with the same activation on every non-input layer.
    pub fn uniform(layer_sizes: Vec<usize>, activation: Activation) -> Self {
        let n = layer_sizes.len().saturating_sub(1);
        Self {
            layer_sizes,
            activations: vec![activation; n],
            learning_rate: 0.1,
            epochs: 1,
            batch_size: 1,
            seed: 0,
            hard_slopes: HardSlopes::default(),
        }
    }

    pub fn mnist() -> Self {
        Self {
            learning_rate: 0.3,
            epochs: 5,
            ..Self::uniform(vec![784, 64, 10], Activation::Sigmoid)
        }
    }

    pub fn iris() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            ..Self::uniform(vec![4, 10, 3], Activation::Sigmoid)
        }
    }

    /// Six-layer variant: three extra hidden layers, each the size of the
    /// first hidden layer, inserted before the output.
    pub fn deepened(&self) -> Self {
        let mut cfg = self.clone();
        let hidden = cfg.layer_sizes.get(1).copied().unwrap_or(1);
        let out = cfg.layer_sizes.pop().unwrap_or(1);
        cfg.layer_sizes.extend([hidden; 3]);
        cfg.layer_sizes.push(out);
        let act = cfg.activations.first().copied().unwrap_or(Activation::Sigmoid);
        cfg.activations = vec![act; cfg.layer_sizes.len() - 1];
        cfg
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(
                "layer_sizes needs at least an input and an output layer".into(),
            ));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be >= 1".into()));
        }
        if self.activations.len() != self.n_layers() {
            return Err(Error::Config(format!(
                "{} activations given for {} layers",
                self.activations.len(),
                self.n_layers()
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        self.hard_slopes.validate()
    }
}

/// Dense weights for one layer transition plus its bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    pub bias: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Input("weight matrix dimensions must be positive".into()));
        }
        if values.len() != rows * cols || bias.len() != cols {
            return Err(Error::Input(format!(
                "weight matrix {rows}x{cols} given {} values and {} biases",
                values.len(),
                bias.len()
            )));
        }
        if values.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Input("weights must be finite".into()));
        }
        Ok(Self {
            rows,
            cols,
            values,
            bias,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
            bias: vec![0.0; cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    /// `z = x · W + b`. Zero inputs are skipped.
    pub fn affine(&self, x: &[f64], z: &mut Vec<f64>) {
        z.clear();
        z.extend_from_slice(&self.bias);
        for (xi, row) in x.iter().zip(self.values.chunks_exact(self.cols)) {
            if *xi == 0.0 {
                continue;
            }
            for (zj, w) in z.iter_mut().zip(row) {
                *zj += xi * w;
            }
        }
    }
}

/// Outputs of every layer for one input; `post[0]` is the input itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl ForwardPass {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("forward pass has an input layer")
    }

    pub fn predicted_class(&self) -> usize {
        argmax(self.output())
    }
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// Gradients of the per-sample loss, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(layers: &[WeightMatrix]) -> Self {
        Self {
            weights: layers.iter().map(|l| vec![0.0; l.values.len()]).collect(),
            biases: layers.iter().map(|l| vec![0.0; l.cols]).collect(),
        }
    }

    fn clear(&mut self) {
        self.weights.iter_mut().flatten().for_each(|g| *g = 0.0);
        self.biases.iter_mut().flatten().for_each(|g| *g = 0.0);
    }
}

/// Borrowed view of a layer stack; shared by the float model and the
/// binarized model's digital reference path.
#[derive(Clone, Copy)]
pub(crate) struct LayerStack<'a> {
    pub layers: &'a [WeightMatrix],
    pub activations: &'a [Activation],
    pub slopes: &'a HardSlopes,
}

impl LayerStack<'_> {
    pub fn input_dim(&self) -> usize {
        self.layers[0].rows
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        if x.len() != self.input_dim() {
            return Err(Error::Input(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len() + 1);
        post.push(x.to_vec());
        for (layer, act) in self.layers.iter().zip(self.activations) {
            let mut z = Vec::with_capacity(layer.cols);
            layer.affine(post.last().unwrap(), &mut z);
            let a = z.iter().map(|&v| act.apply_with(v, self.slopes)).collect();
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardPass { pre, post })
    }

    pub fn loss(&self, x: &[f64], label: usize) -> Result<f64> {
        let pass = self.forward(x)?;
        Ok(sample_loss(pass.output(), label))
    }

    /// Output-layer-to-input sweep accumulating `scale * ∂loss/∂θ` into `grads`.
    /// When `biases_only` is set the weight gradients are left untouched.
    pub fn backprop_into(
        &self,
        pass: &ForwardPass,
        label: usize,
        scale: f64,
        grads: &mut Gradients,
        biases_only: bool,
    ) {
        let last = self.layers.len() - 1;
        let out = pass.output();
        let mut delta: Vec<f64> = out
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                let t = if k == label { 1.0 } else { 0.0 };
                (a - t) * self.activations[last].derivative(pass.pre[last][k], a, self.slopes)
            })
            .collect();

        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let input = &pass.post[l];
            for (g, d) in grads.biases[l].iter_mut().zip(&delta) {
                *g += scale * d;
            }
            if !biases_only {
                let gw = &mut grads.weights[l];
                for (i, &ai) in input.iter().enumerate() {
                    if ai == 0.0 {
                        continue;
                    }
                    let row = &mut gw[i * layer.cols..(i + 1) * layer.cols];
                    for (g, d) in row.iter_mut().zip(&delta) {
                        *g += scale * ai * d;
                    }
                }
            }
            if l > 0 {
                let act = self.activations[l - 1];
                delta = (0..layer.rows)
                    .map(|i| {
                        let back: f64 = layer.row(i).iter().zip(&delta).map(|(w, d)| w * d).sum();
                        back * act.derivative(pass.pre[l - 1][i], input[i], self.slopes)
                    })
                    .collect();
            }
        }
    }

    pub fn gradients(&self, x: &[f64], label: usize) -> Result<Gradients> {
        let pass = self.forward(x)?;
        let mut g = Gradients::zeros_like(self.layers);
        self.backprop_into(&pass, label, 1.0, &mut g, false);
        Ok(g)
    }

    pub fn mean_loss(&self, data: &Dataset) -> Result<f64> {
        let mut total = 0.0;
        for (x, y) in data.iter() {
            total += self.loss(x, y)?;
        }
        Ok(total / data.len().max(1) as f64)
    }
}

pub fn sample_loss(output: &[f64], label: usize) -> f64 {
    0.5 * output
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let t = if k == label { 1.0 } else { 0.0 };
            (a - t) * (a - t)
        })
        .sum::<f64>()
}

/// A trained (or freshly initialized) network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: NetworkConfig,
    pub weights: Vec<WeightMatrix>,
    /// Mean training loss before training, then after each epoch.
    pub training_loss_history: Vec<f64>,
}

impl TrainedModel {
    /// Weights uniform in `[-0.5, 0.5]` drawn from `rng`, biases zero.
    pub fn initialize<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let weights = config
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (rows, cols) = (w[0], w[1]);
                let values = (0..rows * cols)
                    .map(|_| rng.random_range(-0.5..=0.5))
                    .collect();
                WeightMatrix {
                    rows,
                    cols,
                    values,
                    bias: vec![0.0; cols],
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            weights,
            training_loss_history: Vec::new(),
        })
    }

    pub(crate) fn stack(&self) -> LayerStack<'_> {
        LayerStack {
            layers: &self.weights,
            activations: &self.config.activations,
            slopes: &self.config.hard_slopes,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        self.stack().forward(x)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.forward(x)?.predicted_class())
    }

    pub fn loss(&self, x: &[f64], label: usize) -> Result<f64> {
        self.stack().loss(x, label)
    }

    /// Analytic gradient of the per-sample loss.
    pub fn gradients(&self, x: &[f64], label: usize) -> Result<Gradients> {
        self.stack().gradients(x, label)
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        let mut hits = 0usize;
        for (x, y) in data.iter() {
            hits += usize::from(self.predict(x)? == y);
        }
        Ok(hits as f64 / data.len().max(1) as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            layer_sizes: self.config.layer_sizes.clone(),
            activations: self.config.activations.clone(),
            weights: self.weights.iter().map(|w| w.values.clone()).collect(),
            biases: self.weights.iter().map(|w| w.bias.clone()).collect(),
            seed: self.config.seed,
            learning_rate: self.config.learning_rate,
            epochs: self.config.epochs,
            batch_size: self.config.batch_size,
            hard_slopes: self.config.hard_slopes,
            training_loss_history: self.training_loss_history.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        let config = NetworkConfig {
            layer_sizes: f.layer_sizes,
            activations: f.activations,
            learning_rate: f.learning_rate,
            epochs: f.epochs,
            batch_size: f.batch_size,
            seed: f.seed,
            hard_slopes: f.hard_slopes,
        };
        config.validate()?;
        if f.weights.len() != config.n_layers() || f.biases.len() != config.n_layers() {
            return Err(Error::Input(format!(
                "model file has {} weight and {} bias arrays for {} layers",
                f.weights.len(),
                f.biases.len(),
                config.n_layers()
            )));
        }
        let weights = config
            .layer_sizes
            .windows(2)
            .zip(f.weights.into_iter().zip(f.biases))
            .map(|(dims, (values, bias))| WeightMatrix::new(dims[0], dims[1], values, bias))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            weights,
            training_loss_history: f.training_loss_history,
        })
    }
}

/// On-disk model schema.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    seed: u64,
    #[serde(default = "default_lr")]
    learning_rate: f64,
    #[serde(default)]
    epochs: usize,
    #[serde(default = "default_batch_size")]
    batch_size: usize,
    #[serde(default)]
    hard_slopes: HardSlopes,
    #[serde(default)]
    training_loss_history: Vec<f64>,
}

fn default_lr() -> f64 {
    0.1
}

/// Train a fresh network on `data` with per-sample (or mini-batch) gradient
/// descent. Weight initialization and per-epoch shuffles all come from one
/// generator seeded with `config.seed`.
pub fn train(config: &NetworkConfig, data: &Dataset) -> Result<TrainedModel> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let n_out = *config.layer_sizes.last().unwrap();
    if data.n_classes() > n_out {
        return Err(Error::Input(format!(
            "{} classes but only {n_out} output neurons",
            data.n_classes()
        )));
    }
    if data.dims() != config.layer_sizes[0] {
        return Err(Error::Input(format!(
            "dataset has {} features, network expects {}",
            data.dims(),
            config.layer_sizes[0]
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = TrainedModel::initialize(config, &mut rng)?;
    let initial = model.stack().mean_loss(data)?;
    model.training_loss_history.push(initial);

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads = Gradients::zeros_like(&model.weights);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let stack = model.stack();
                let pass = stack.forward(data.sample(i))?;
                stack.backprop_into(&pass, data.labels()[i], scale, &mut grads, false);
            }
            apply_update(&mut model.weights, &grads, config.learning_rate, false);
        }
        let loss = model.stack().mean_loss(data)?;
        if !loss.is_finite() {
            return Err(Error::Training { epoch, loss });
        }
        model.training_loss_history.push(loss);
    }
    Ok(model)
}

pub(crate) fn apply_update(layers: &mut [WeightMatrix], grads: &Gradients, lr: f64, biases_only: bool) {
    for (l, layer) in layers.iter_mut().enumerate() {
        if !biases_only {
            for (w, g) in layer.values.iter_mut().zip(&grads.weights[l]) {
                *w -= lr * g;
            }
        }
        for (b, g) in layer.bias.iter_mut().zip(&grads.biases[l]) {
            *b -= lr * g;
        }
    }
}

/// Smallest denominator used when forming relative gradient errors, so that
/// exactly-zero gradients compare by absolute difference.
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-6;

/// Compare backprop against central finite differences over every weight and
/// bias; returns the largest relative error.
pub fn gradient_check(model: &TrainedModel, x: &[f64], label: usize, epsilon: f64) -> Result<f64> {
    gradient_check_with(model, x, label, epsilon, |m, x, y| m.gradients(x, y))
}

/// [`gradient_check`] with a caller-supplied analytic gradient, so that a
/// deliberately wrong gradient can be shown to fail the check.
pub fn gradient_check_with<F>(
    model: &TrainedModel,
    x: &[f64],
    label: usize,
    epsilon: f64,
    analytic: F,
) -> Result<f64>
where
    F: FnOnce(&TrainedModel, &[f64], usize) -> Result<Gradients>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::Config(format!(
            "epsilon must lie in (0, 1e-2], got {epsilon}"
        )));
    }
    let grads = analytic(model, x, label)?;
    let mut probe = model.clone();
    let mut worst = 0.0f64;

    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(GRADIENT_CHECK_FLOOR);

    for l in 0..model.weights.len() {
        for k in 0..model.weights[l].values.len() {
            let orig = probe.weights[l].values[k];
            probe.weights[l].values[k] = orig + epsilon;
            let up = probe.loss(x, label)?;
            probe.weights[l].values[k] = orig - epsilon;
            let down = probe.loss(x, label)?;
            probe.weights[l].values[k] = orig;
            worst = worst.max(rel(grads.weights[l][k], (up - down) / (2.0 * epsilon)));
        }
        for k in 0..model.weights[l].cols {
            let orig = probe.weights[l].bias[k];
            probe.weights[l].bias[k] = orig + epsilon;
            let up = probe.loss(x, label)?;
            probe.weights[l].bias[k] = orig - epsilon;
            let down = probe.loss(x, label)?;
            probe.weights[l].bias[k] = orig;
            worst = worst.max(rel(grads.biases[l][k], (up - down) / (2.0 * epsilon)));
        }
    }
    Ok(worst)
}
