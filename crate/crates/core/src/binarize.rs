//! Four-level weight quantization.
//!
//! Every trained weight is replaced by the nearest member of
//! `{+w_high, +w_low, -w_low, -w_high}`. Ties at `±(w_high + w_low) / 2`
//! round to the high magnitude and `0` maps to `+w_low`. Biases stay real
//! unless [`BinarizeOptions::binarize_biases`] is set.
//!
//! Level magnitudes come from device conductances (`w ∝ G`), so the ratio
//! `w_low / w_high = G_off / G_on = R_on / R_off` is fixed by the memristor.
//! The overall magnitude of a matrix's level set may be calibrated per
//! layer; the crossbar realizes that factor as its readout gain.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::{Activation, HardSlopes};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::mlp::{self, ForwardPass, Gradients, LayerStack, TrainedModel, WeightMatrix};

/// Positive magnitudes of the two programmable weight levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub w_high: f64,
    pub w_low: f64,
}

impl LevelSet {
    pub fn new(w_high: f64, w_low: f64) -> Result<Self> {
        if !(w_low > 0.0 && w_low < w_high && w_high.is_finite()) {
            return Err(Error::Config(format!(
                "level set needs 0 < w_low < w_high, got w_high={w_high}, w_low={w_low}"
            )));
        }
        Ok(Self { w_high, w_low })
    }

    /// `w_low / w_high`.
    pub fn ratio(&self) -> f64 {
        self.w_low / self.w_high
    }

    /// Magnitude at which a weight switches from low to high.
    pub fn threshold(&self) -> f64 {
        0.5 * (self.w_high + self.w_low)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.w_high * factor, self.w_low * factor)
    }

    pub fn magnitude(&self, level: Level) -> f64 {
        match level {
            Level::High => self.w_high,
            Level::Low => self.w_low,
        }
    }
}

/// Level set for a device: `w_high = 1`, `w_low = r_on / r_off`.
pub fn derive_levels(r_on: f64, r_off: f64) -> Result<LevelSet> {
    if !(r_on > 0.0 && r_on.is_finite() && r_off.is_finite()) || r_on >= r_off {
        return Err(Error::Device(format!(
            "need 0 < r_on < r_off, got r_on={r_on}, r_off={r_off}"
        )));
    }
    Ok(LevelSet {
        w_high: 1.0,
        w_low: r_on / r_off,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Pos,
    Neg,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Pos => 1.0,
            Sign::Neg => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Pos => Sign::Neg,
            Sign::Neg => Sign::Pos,
        }
    }
}

/// One quantized weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "&'static str")]
pub struct Cell {
    pub sign: Sign,
    pub level: Level,
}

impl Cell {
    pub const ALL: [Cell; 4] = [
        Cell::new(Sign::Pos, Level::High),
        Cell::new(Sign::Pos, Level::Low),
        Cell::new(Sign::Neg, Level::Low),
        Cell::new(Sign::Neg, Level::High),
    ];

    pub const fn new(sign: Sign, level: Level) -> Self {
        Self { sign, level }
    }

    pub fn decode(self, levels: &LevelSet) -> f64 {
        self.sign.value() * levels.magnitude(self.level)
    }

    pub fn code(self) -> &'static str {
        match (self.sign, self.level) {
            (Sign::Pos, Level::High) => "+H",
            (Sign::Pos, Level::Low) => "+L",
            (Sign::Neg, Level::Low) => "-L",
            (Sign::Neg, Level::High) => "-H",
        }
    }
}

impl From<Cell> for &'static str {
    fn from(c: Cell) -> Self {
        c.code()
    }
}

impl TryFrom<String> for Cell {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        Cell::ALL
            .into_iter()
            .find(|c| c.code() == s)
            .ok_or_else(|| format!("unknown cell code `{s}` (expected +H, +L, -L or -H)"))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Nearest representable level for a single weight.
#[inline]
pub fn binarize_value(w: f64, levels: &LevelSet) -> Cell {
    let sign = if w < 0.0 { Sign::Neg } else { Sign::Pos };
    let level = if w.abs() >= levels.threshold() {
        Level::High
    } else {
        Level::Low
    };
    Cell { sign, level }
}

/// A weight matrix quantized to four levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryWeightMatrix {
    #[serde(rename = "levels")]
    pub level_set: LevelSet,
    #[serde(with = "cell_rows")]
    cells: CellGrid,
    #[serde(rename = "biases")]
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct CellGrid {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
}

mod cell_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{Cell, CellGrid};

    pub fn serialize<S: Serializer>(g: &CellGrid, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[Cell]> = g.cells.chunks(g.cols).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CellGrid, D::Error> {
        let rows: Vec<Vec<Cell>> = Vec::deserialize(d)?;
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(serde::de::Error::custom("cell grid must be a non-empty rectangle"));
        }
        Ok(CellGrid {
            rows: rows.len(),
            cols,
            cells: rows.into_iter().flatten().collect(),
        })
    }
}

impl BinaryWeightMatrix {
    pub fn from_cells(
        rows: usize,
        cols: usize,
        cells: Vec<Cell>,
        level_set: LevelSet,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || cells.len() != rows * cols || bias.len() != cols {
            return Err(Error::Input(format!(
                "binary matrix {rows}x{cols} given {} cells and {} biases",
                cells.len(),
                bias.len()
            )));
        }
        Ok(Self {
            level_set,
            cells: CellGrid { rows, cols, cells },
            bias,
        })
    }

    pub fn rows(&self) -> usize {
        self.cells.rows
    }

    pub fn cols(&self) -> usize {
        self.cells.cols
    }

    /// Row-major cells.
    pub fn cells(&self) -> &[Cell] {
        &self.cells.cells
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells.cells[row * self.cells.cols + col]
    }

    /// Exact real-valued weights `sign * magnitude`.
    pub fn decode(&self) -> WeightMatrix {
        let values = self
            .cells()
            .iter()
            .map(|c| c.decode(&self.level_set))
            .collect();
        WeightMatrix::new(self.rows(), self.cols(), values, self.bias.clone())
            .expect("decoded shapes are consistent")
    }

    fn shape_ok(&self) -> bool {
        self.rows() > 0 && self.cols() > 0 && self.bias.len() == self.cols()
    }
}

/// Quantize every weight of `w`; biases are copied.
pub fn binarize(w: &WeightMatrix, levels: &LevelSet) -> Result<BinaryWeightMatrix> {
    if w.values().iter().chain(&w.bias).any(|v| !v.is_finite()) {
        return Err(Error::Input("cannot binarize non-finite weights".into()));
    }
    let cells = w.values().iter().map(|&v| binarize_value(v, levels)).collect();
    BinaryWeightMatrix::from_cells(w.rows(), w.cols(), cells, *levels, w.bias.clone())
}

pub fn decode(b: &BinaryWeightMatrix) -> WeightMatrix {
    b.decode()
}

/// Choose the overall magnitude of `base` (keeping its ratio) that minimizes
/// `Σ ||x·W - x·Q(W)||²` over the given layer inputs, where `Q` is
/// quantization against the scaled level set.
pub fn calibrate_levels(w: &WeightMatrix, inputs: &[Vec<f64>], base: &LevelSet) -> Result<LevelSet> {
    let max_abs = w.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs == 0.0 || inputs.is_empty() {
        return Ok(*base);
    }
    let ratio = base.ratio();
    let cols = w.cols();
    let mut z = vec![0.0; cols];
    let error_at = |high: f64, z: &mut Vec<f64>| -> f64 {
        let levels = LevelSet {
            w_high: high,
            w_low: high * ratio,
        };
        let diff: Vec<f64> = w
            .values()
            .iter()
            .map(|&v| v - binarize_value(v, &levels).decode(&levels))
            .collect();
        let mut total = 0.0;
        for x in inputs {
            z.iter_mut().for_each(|v| *v = 0.0);
            for (xi, row) in x.iter().zip(diff.chunks_exact(cols)) {
                if *xi == 0.0 {
                    continue;
                }
                for (zj, d) in z.iter_mut().zip(row) {
                    *zj += xi * d;
                }
            }
            total += z.iter().map(|v| v * v).sum::<f64>();
        }
        total
    };

    // Coarse log grid over [max|w| / 100, 2 max|w|], then a finer one around the best point.
    let (lo, hi) = ((max_abs / 100.0).ln(), (2.0 * max_abs).ln());
    let coarse = 48;
    let step = (hi - lo) / coarse as f64;
    let mut best = (f64::INFINITY, lo);
    for k in 0..=coarse {
        let t = lo + step * k as f64;
        let e = error_at(t.exp(), &mut z);
        if e < best.0 {
            best = (e, t);
        }
    }
    let fine = 24;
    let centre = best.1;
    for k in 0..=fine {
        let t = centre - step + 2.0 * step * k as f64 / fine as f64;
        let e = error_at(t.exp(), &mut z);
        if e < best.0 {
            best = (e, t);
        }
    }
    LevelSet::new(best.1.exp(), best.1.exp() * ratio)
}

/// How each layer's level magnitude is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelScaling {
    /// Use the device-derived levels as they are (`w_high = 1`).
    Unit,
    /// Fit one magnitude per layer with [`calibrate_levels`].
    Calibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinarizeOptions {
    pub level_scaling: LevelScaling,
    /// Training samples used for level calibration.
    pub calibration_samples: usize,
    /// Epochs of bias-only gradient descent after quantization (0 = keep the trained biases).
    pub bias_refit_epochs: usize,
    /// Learning rate for the bias refit; the model's own rate when unset.
    pub bias_refit_learning_rate: Option<f64>,
    pub binarize_biases: bool,
}

impl Default for BinarizeOptions {
    fn default() -> Self {
        Self {
            level_scaling: LevelScaling::Calibrated,
            calibration_samples: 500,
            bias_refit_epochs: 1,
            bias_refit_learning_rate: None,
            binarize_biases: false,
        }
    }
}

impl BinarizeOptions {
    /// Straight nearest-level rounding with no calibration or refit.
    pub fn plain() -> Self {
        Self {
            level_scaling: LevelScaling::Unit,
            calibration_samples: 0,
            bias_refit_epochs: 0,
            bias_refit_learning_rate: None,
            binarize_biases: false,
        }
    }
}

/// A network whose weights are all quantized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    #[serde(default)]
    pub hard_slopes: HardSlopes,
    pub layers: Vec<BinaryWeightMatrix>,
    pub seed: u64,
    pub options: BinarizeOptions,
}

impl BinaryModel {
    pub fn decoded(&self) -> Vec<WeightMatrix> {
        self.layers.iter().map(BinaryWeightMatrix::decode).collect()
    }

    /// Digital reference inference over the decoded weights.
    pub fn digital(&self) -> DigitalReference {
        DigitalReference {
            layers: self.decoded(),
            activations: self.activations.clone(),
            slopes: self.hard_slopes,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: BinaryModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2
            || self.layers.len() != self.layer_sizes.len() - 1
            || self.activations.len() != self.layers.len()
        {
            return Err(Error::Input("binary model layer counts are inconsistent".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if !layer.shape_ok()
                || layer.rows() != self.layer_sizes[l]
                || layer.cols() != self.layer_sizes[l + 1]
            {
                return Err(Error::Input(format!("binary layer {l} has the wrong shape")));
            }
            LevelSet::new(layer.level_set.w_high, layer.level_set.w_low)?;
        }
        Ok(())
    }
}

/// Decoded weights of a [`BinaryModel`], ready for float inference.
#[derive(Debug, Clone)]
pub struct DigitalReference {
    pub layers: Vec<WeightMatrix>,
    pub activations: Vec<Activation>,
    pub slopes: HardSlopes,
}

impl DigitalReference {
    fn stack(&self) -> LayerStack<'_> {
        LayerStack {
            layers: &self.layers,
            activations: &self.activations,
            slopes: &self.slopes,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        self.stack().forward(x)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.forward(x)?.predicted_class())
    }
}

/// Quantize a trained model. `train` supplies calibration inputs and the
/// bias-refit set; it may be omitted when neither step is enabled.
pub fn binarize_model(
    model: &TrainedModel,
    base: &LevelSet,
    opts: &BinarizeOptions,
    train: Option<&Dataset>,
) -> Result<BinaryModel> {
    let needs_data = opts.level_scaling == LevelScaling::Calibrated || opts.bias_refit_epochs > 0;
    let data = match (needs_data, train) {
        (true, None) => {
            return Err(Error::Config(
                "level calibration and bias refit need a training set".into(),
            ))
        }
        (_, d) => d,
    };

    let mut layer_levels = vec![*base; model.weights.len()];
    if opts.level_scaling == LevelScaling::Calibrated {
        let data = data.unwrap();
        let n = opts.calibration_samples.clamp(1, data.len());
        let passes = (0..n)
            .map(|i| model.forward(data.sample(i)))
            .collect::<Result<Vec<_>>>()?;
        for (l, w) in model.weights.iter().enumerate() {
            let inputs: Vec<Vec<f64>> = passes.iter().map(|p| p.post[l].clone()).collect();
            layer_levels[l] = calibrate_levels(w, &inputs, base)?;
        }
    }

    let mut layers = model
        .weights
        .iter()
        .zip(&layer_levels)
        .map(|(w, lv)| binarize(w, lv))
        .collect::<Result<Vec<_>>>()?;

    if opts.bias_refit_epochs > 0 {
        let lr = opts
            .bias_refit_learning_rate
            .unwrap_or(model.config.learning_rate);
        refit_biases(
            &mut layers,
            &model.config.activations,
            &model.config.hard_slopes,
            data.unwrap(),
            opts.bias_refit_epochs,
            lr,
            model.config.seed,
        )?;
    }

    if opts.binarize_biases {
        for layer in &mut layers {
            let lv = layer.level_set;
            for b in &mut layer.bias {
                *b = binarize_value(*b, &lv).decode(&lv);
            }
        }
    }

    Ok(BinaryModel {
        layer_sizes: model.config.layer_sizes.clone(),
        activations: model.config.activations.clone(),
        hard_slopes: model.config.hard_slopes,
        layers,
        seed: model.config.seed,
        options: opts.clone(),
    })
}

/// Per-sample gradient descent on the real biases with the quantized weights
/// held fixed.
pub fn refit_biases(
    layers: &mut [BinaryWeightMatrix],
    activations: &[Activation],
    slopes: &HardSlopes,
    data: &Dataset,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<()> {
    let mut decoded: Vec<WeightMatrix> = layers.iter().map(BinaryWeightMatrix::decode).collect();
    let mut grads = Gradients {
        weights: decoded.iter().map(|_| Vec::new()).collect(),
        biases: decoded.iter().map(|l| vec![0.0; l.cols()]).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB1A5_B1A5);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            grads.biases.iter_mut().flatten().for_each(|g| *g = 0.0);
            let stack = LayerStack {
                layers: &decoded,
                activations,
                slopes,
            };
            let pass = stack.forward(data.sample(i))?;
            stack.backprop_into(&pass, data.labels()[i], 1.0, &mut grads, true);
            mlp::apply_update(&mut decoded, &grads, learning_rate, true);
        }
        if decoded.iter().flat_map(|l| &l.bias).any(|b| !b.is_finite()) {
            return Err(Error::Training {
                epoch,
                loss: f64::NAN,
            });
        }
    }
    for (b, d) in layers.iter_mut().zip(decoded) {
        b.bias = d.bias;
    }
    Ok(())
}
