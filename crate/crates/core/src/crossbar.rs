//! Memristive crossbar programming and analog readout.
//!
//! Rows are driven by input voltages in `[0, v_in_max]`, every cell holds
//! one of two stable conductances (`1/r_on` or `1/r_off`), and a per-cell
//! sign path multiplies the cell current by ±1. Column `j` therefore carries
//!
//! ```text
//! I_j = Σ_i sign_ij · v_i · G_ij
//! ```
//!
//! and columns are read one per time slot.
//!
//! Programming applies, independently per cell and in this order: stuck-on
//! faults, stuck-off faults, switching failures (the cell keeps its prior
//! state; a fresh array is all high-resistance), and finally a median-one
//! lognormal factor on the conductance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activation::{Activation, HardSlopes};
use crate::binarize::{BinaryModel, BinaryWeightMatrix, Level, Sign};
use crate::error::{Error, Result};
use crate::mlp::argmax;
use crate::transfer::{circuit_transfer, renormalize, TransferConfig, TransferMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceModel {
    /// Low-resistance state, ohms.
    pub r_on: f64,
    /// High-resistance state, ohms.
    pub r_off: f64,
    /// Programming threshold voltage.
    pub v_threshold: f64,
    /// Log-space standard deviation of the conductance variation.
    pub sigma_r: f64,
    pub p_switch_fail: f64,
    pub p_stuck_on: f64,
    pub p_stuck_off: f64,
}

impl Default for DeviceModel {
    fn default() -> Self {
        Self {
            r_on: 3e3,
            r_off: 62e3,
            v_threshold: 1.0,
            sigma_r: 0.0,
            p_switch_fail: 0.0,
            p_stuck_on: 0.0,
            p_stuck_off: 0.0,
        }
    }
}

impl DeviceModel {
    pub fn g_on(&self) -> f64 {
        1.0 / self.r_on
    }

    pub fn g_off(&self) -> f64 {
        1.0 / self.r_off
    }

    pub fn is_ideal(&self) -> bool {
        self.sigma_r == 0.0
            && self.p_switch_fail == 0.0
            && self.p_stuck_on == 0.0
            && self.p_stuck_off == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_on > 0.0 && self.r_on < self.r_off && self.r_off.is_finite()) {
            return Err(Error::Device(format!(
                "need 0 < r_on < r_off, got r_on={}, r_off={}",
                self.r_on, self.r_off
            )));
        }
        if self.v_threshold.is_nan() || self.v_threshold <= 0.0 {
            return Err(Error::Device("programming threshold must be positive".into()));
        }
        if !(self.sigma_r >= 0.0 && self.sigma_r.is_finite()) {
            return Err(Error::Device(format!("sigma_r must be >= 0, got {}", self.sigma_r)));
        }
        for (name, p) in [
            ("p_switch_fail", self.p_switch_fail),
            ("p_stuck_on", self.p_stuck_on),
            ("p_stuck_off", self.p_stuck_off),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Device(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

/// Voltage limits of the readout path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalogConstraints {
    /// Largest row input voltage.
    pub v_in_max: f64,
    /// Largest drain voltage that keeps the readout transistor linear.
    pub v_drain_max: f64,
    /// Gate (control) voltage of the readout transistors.
    pub v_gate: f64,
    pub v_transistor_threshold: f64,
    pub v_dd: f64,
}

impl Default for AnalogConstraints {
    fn default() -> Self {
        Self {
            v_in_max: 0.1,
            v_drain_max: 0.65,
            v_gate: 1.0,
            v_transistor_threshold: 0.35,
            v_dd: 1.8,
        }
    }
}

impl AnalogConstraints {
    pub fn validate(&self) -> Result<()> {
        if self.v_in_max.is_nan() || self.v_in_max <= 0.0 {
            return Err(Error::Constraint(format!(
                "v_in_max must be positive, got {}",
                self.v_in_max
            )));
        }
        if self.v_in_max > self.v_drain_max {
            return Err(Error::Constraint(format!(
                "v_in_max {} V exceeds v_drain_max {} V: readout transistor leaves its linear region",
                self.v_in_max, self.v_drain_max
            )));
        }
        if self.v_drain_max >= self.v_dd {
            return Err(Error::Constraint(format!(
                "v_drain_max {} V must stay below v_dd {} V",
                self.v_drain_max, self.v_dd
            )));
        }
        let overdrive = self.v_gate - self.v_transistor_threshold;
        if self.v_drain_max > overdrive + 1e-12 {
            return Err(Error::Constraint(format!(
                "v_drain_max {} V exceeds gate overdrive {} V",
                self.v_drain_max, overdrive
            )));
        }
        Ok(())
    }
}

/// A programmed array. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarArray {
    rows: usize,
    cols: usize,
    /// Row-major realized conductances, siemens.
    conductance: Vec<f64>,
    sign: Vec<Sign>,
    /// `sign * conductance`, cached for readout.
    signed: Vec<f64>,
    intended: Option<BinaryWeightMatrix>,
}

/// Serialized array state: resistances in ohms and ±1 sign bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossbarState {
    pub r: Vec<Vec<f64>>,
    pub sign: Vec<Vec<i8>>,
}

impl CrossbarArray {
    fn build(
        rows: usize,
        cols: usize,
        conductance: Vec<f64>,
        sign: Vec<Sign>,
        intended: Option<BinaryWeightMatrix>,
    ) -> Self {
        let signed = conductance
            .iter()
            .zip(&sign)
            .map(|(g, s)| s.value() * g)
            .collect();
        Self {
            rows,
            cols,
            conductance,
            sign,
            signed,
            intended,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn conductance(&self) -> &[f64] {
        &self.conductance
    }

    pub fn conductance_at(&self, row: usize, col: usize) -> f64 {
        self.conductance[row * self.cols + col]
    }

    pub fn signs(&self) -> &[Sign] {
        &self.sign
    }

    pub fn intended(&self) -> Option<&BinaryWeightMatrix> {
        self.intended.as_ref()
    }

    /// The same array with every sign bit inverted.
    pub fn with_flipped_signs(&self) -> Self {
        Self::build(
            self.rows,
            self.cols,
            self.conductance.clone(),
            self.sign.iter().map(|s| s.flip()).collect(),
            self.intended.clone(),
        )
    }

    /// Level each cell currently sits closest to (geometric midpoint split).
    pub fn realized_levels(&self, dev: &DeviceModel) -> Vec<Level> {
        let split = (dev.g_on() * dev.g_off()).sqrt();
        self.conductance
            .iter()
            .map(|&g| if g >= split { Level::High } else { Level::Low })
            .collect()
    }

    /// `Σ_i sign_ij · G_ij` for every column.
    fn signed_column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.signed.chunks_exact(self.cols) {
            for (s, g) in sums.iter_mut().zip(row) {
                *s += g;
            }
        }
        sums
    }

    pub fn state(&self) -> CrossbarState {
        CrossbarState {
            r: self
                .conductance
                .chunks_exact(self.cols)
                .map(|row| row.iter().map(|g| 1.0 / g).collect())
                .collect(),
            sign: self
                .sign
                .chunks_exact(self.cols)
                .map(|row| row.iter().map(|s| s.value() as i8).collect())
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.state())?)
    }

    /// Rebuild an array from an exported state (without its source matrix).
    pub fn from_state(state: &CrossbarState) -> Result<Self> {
        let rows = state.r.len();
        let cols = state.r.first().map_or(0, Vec::len);
        if rows == 0
            || cols == 0
            || state.r.iter().any(|r| r.len() != cols)
            || state.sign.len() != rows
            || state.sign.iter().any(|r| r.len() != cols)
        {
            return Err(Error::Input("crossbar state must be two equal rectangles".into()));
        }
        let mut conductance = Vec::with_capacity(rows * cols);
        for &r in state.r.iter().flatten() {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Input(format!("resistance must be positive, got {r}")));
            }
            conductance.push(1.0 / r);
        }
        let sign = state
            .sign
            .iter()
            .flatten()
            .map(|&s| match s {
                1 => Ok(Sign::Pos),
                -1 => Ok(Sign::Neg),
                other => Err(Error::Input(format!("sign bit must be ±1, got {other}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::build(rows, cols, conductance, sign, None))
    }
}

/// Program `b` into a fresh array (all cells start high-resistance).
pub fn program(b: &BinaryWeightMatrix, dev: &DeviceModel, seed: u64) -> Result<CrossbarArray> {
    let prior = vec![Level::Low; b.rows() * b.cols()];
    program_cells(b, dev, seed, &prior)
}

/// Program `b` over an existing array; cells whose switching fails keep
/// the level they hold in `prior`.
pub fn reprogram(
    prior: &CrossbarArray,
    b: &BinaryWeightMatrix,
    dev: &DeviceModel,
    seed: u64,
) -> Result<CrossbarArray> {
    if prior.rows != b.rows() || prior.cols != b.cols() {
        return Err(Error::Input(format!(
            "cannot program a {}x{} matrix over a {}x{} array",
            b.rows(),
            b.cols(),
            prior.rows,
            prior.cols
        )));
    }
    program_cells(b, dev, seed, &prior.realized_levels(dev))
}

fn program_cells(
    b: &BinaryWeightMatrix,
    dev: &DeviceModel,
    seed: u64,
    prior: &[Level],
) -> Result<CrossbarArray> {
    dev.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let level_g = |l: Level| match l {
        Level::High => dev.g_on(),
        Level::Low => dev.g_off(),
    };
    let mut conductance = Vec::with_capacity(b.cells().len());
    let mut sign = Vec::with_capacity(b.cells().len());
    for (cell, &was) in b.cells().iter().zip(prior) {
        // Fixed number of draws per cell keeps streams aligned across parameter values.
        let u_on: f64 = rng.random();
        let u_off: f64 = rng.random();
        let u_fail: f64 = rng.random();
        let z: f64 = rng.sample(StandardNormal);

        let level = if u_on < dev.p_stuck_on {
            Level::High
        } else if u_off < dev.p_stuck_off {
            Level::Low
        } else if u_fail < dev.p_switch_fail {
            was
        } else {
            cell.level
        };
        let g = level_g(level);
        conductance.push(if dev.sigma_r > 0.0 {
            g * (dev.sigma_r * z).exp()
        } else {
            g
        });
        sign.push(cell.sign);
    }
    Ok(CrossbarArray::build(
        b.rows(),
        b.cols(),
        conductance,
        sign,
        Some(b.clone()),
    ))
}

/// Min-max map of `x` onto `[0, v_in_max]`; a constant vector maps to zeros.
pub fn encode_input(x: &[f64], c: &AnalogConstraints) -> Result<Vec<f64>> {
    c.validate()?;
    check_finite(x)?;
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(scale_into(x, lo, hi, c.v_in_max))
}

/// Map `x` from the known range `[lo, hi]` onto `[0, v_in_max]`.
pub fn encode_input_range(x: &[f64], lo: f64, hi: f64, c: &AnalogConstraints) -> Result<Vec<f64>> {
    c.validate()?;
    check_finite(x)?;
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        return Err(Error::Config(format!("input range [{lo}, {hi}] is empty")));
    }
    if let Some(v) = x.iter().find(|&&v| v < lo || v > hi) {
        return Err(Error::Constraint(format!(
            "input {v} outside the encoding range [{lo}, {hi}]"
        )));
    }
    Ok(scale_into(x, lo, hi, c.v_in_max))
}

fn check_finite(x: &[f64]) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("input contains non-finite values".into()));
    }
    Ok(())
}

fn scale_into(x: &[f64], lo: f64, hi: f64, v_max: f64) -> Vec<f64> {
    let span = hi - lo;
    if span.is_nan() || span <= 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter()
        .map(|&v| ((v - lo) / span * v_max).clamp(0.0, v_max))
        .collect()
}

fn check_voltages(xbar: &CrossbarArray, v: &[f64], c: &AnalogConstraints) -> Result<()> {
    if v.len() != xbar.rows {
        return Err(Error::Input(format!(
            "{} row voltages for a crossbar with {} rows",
            v.len(),
            xbar.rows
        )));
    }
    if let Some((i, &bad)) = v
        .iter()
        .enumerate()
        .find(|(_, &x)| !(0.0..=c.v_in_max).contains(&x))
    {
        return Err(Error::Constraint(format!(
            "row {i} voltage {bad} V outside [0, {}] V",
            c.v_in_max
        )));
    }
    Ok(())
}

/// Current collected by column `j`, amperes.
pub fn column_current(xbar: &CrossbarArray, v: &[f64], j: usize, c: &AnalogConstraints) -> Result<f64> {
    check_voltages(xbar, v, c)?;
    if j >= xbar.cols {
        return Err(Error::Input(format!(
            "column {j} out of range for {} columns",
            xbar.cols
        )));
    }
    let mut sum = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        sum += vi * xbar.signed[i * xbar.cols + j];
    }
    Ok(sum)
}

/// Order in which columns are sampled, one per slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadoutSchedule {
    pub columns: Vec<usize>,
}

impl ReadoutSchedule {
    pub fn sequential(cols: usize) -> Self {
        Self {
            columns: (0..cols).collect(),
        }
    }

    pub fn slots(&self) -> usize {
        self.columns.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerReadout {
    pub currents: Vec<f64>,
    pub schedule: ReadoutSchedule,
}

/// All column currents of one array, read sequentially.
pub fn read_layer(xbar: &CrossbarArray, v: &[f64], c: &AnalogConstraints) -> Result<LayerReadout> {
    check_voltages(xbar, v, c)?;
    let mut currents = vec![0.0; xbar.cols];
    for (&vi, row) in v.iter().zip(xbar.signed.chunks_exact(xbar.cols)) {
        if vi == 0.0 {
            continue;
        }
        for (acc, g) in currents.iter_mut().zip(row) {
            *acc += vi * g;
        }
    }
    Ok(LayerReadout {
        currents,
        schedule: ReadoutSchedule::sequential(xbar.cols),
    })
}

/// How the first layer's raw features become row voltages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputEncoding {
    /// Known feature range shared by every sample.
    Fixed { lo: f64, hi: f64 },
    /// Min-max over each input vector.
    PerVector,
}

impl Default for InputEncoding {
    fn default() -> Self {
        InputEncoding::Fixed { lo: 0.0, hi: 1.0 }
    }
}

#[derive(Debug, Clone)]
struct AnalogLayer {
    xbar: CrossbarArray,
    activation: Activation,
    bias: Vec<f64>,
    w_high: f64,
    /// `Σ_i sign·G` per column, for level-shift compensation.
    column_sums: Vec<f64>,
}

/// Per-sample result of [`AnalogNetwork::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogOutput {
    /// Final-layer activation voltages.
    pub scores: Vec<f64>,
    pub class: usize,
    /// Compensated column currents of every layer, amperes.
    pub currents: Vec<Vec<f64>>,
    /// Total readout slots spent.
    pub slots: usize,
}

/// A binarized network programmed onto one crossbar per layer.
#[derive(Debug, Clone)]
pub struct AnalogNetwork {
    layers: Vec<AnalogLayer>,
    slopes: HardSlopes,
    g_on: f64,
}

/// Per-layer programming seed derived from the network seed.
fn layer_seed(seed: u64, layer: usize) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(layer as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl AnalogNetwork {
    pub fn program(model: &BinaryModel, dev: &DeviceModel, seed: u64) -> Result<Self> {
        model.validate()?;
        let layers = model
            .layers
            .iter()
            .zip(&model.activations)
            .enumerate()
            .map(|(l, (b, &activation))| {
                let xbar = program(b, dev, layer_seed(seed, l))?;
                Ok(AnalogLayer {
                    column_sums: xbar.signed_column_sums(),
                    xbar,
                    activation,
                    bias: b.bias.clone(),
                    w_high: b.level_set.w_high,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layers,
            slopes: model.hard_slopes,
            g_on: dev.g_on(),
        })
    }

    pub fn crossbars(&self) -> impl Iterator<Item = &CrossbarArray> {
        self.layers.iter().map(|l| &l.xbar)
    }

    /// Propagate one sample through every crossbar stage.
    ///
    /// Per layer: read all columns, subtract the level-shift reference when
    /// the inputs came from a bipolar stage, add the bias current, apply the
    /// activation transfer, then buffer the output onto `[0, v_in_max]` for
    /// the next stage. The returned scores are the last stage's activation
    /// voltages before that final buffer.
    pub fn forward(
        &self,
        x: &[f64],
        c: &AnalogConstraints,
        transfer: &TransferConfig,
        encoding: InputEncoding,
    ) -> Result<AnalogOutput> {
        transfer.validate()?;
        let mut v = match encoding {
            InputEncoding::Fixed { lo, hi } => encode_input_range(x, lo, hi, c)?,
            InputEncoding::PerVector => encode_input(x, c)?,
        };
        let rail = transfer.rail;
        let mut bipolar_input = false;
        let mut all_currents = Vec::with_capacity(self.layers.len());
        let mut slots = 0;
        let mut out = Vec::new();

        for layer in &self.layers {
            let readout = read_layer(&layer.xbar, &v, c)?;
            slots += readout.schedule.slots();
            let mut currents = readout.currents;
            // Current per unit of decoded weight times unit activation.
            let mut scale = self.g_on * c.v_in_max / layer.w_high;
            if bipolar_input {
                let half = 0.5 * c.v_in_max;
                for (i, s) in currents.iter_mut().zip(&layer.column_sums) {
                    *i -= half * s;
                }
                scale *= 0.5;
            }

            out = currents
                .iter()
                .zip(&layer.bias)
                .map(|(&i, &b)| match transfer.mode {
                    TransferMode::Ideal => {
                        rail * layer.activation.apply_with(i / scale + b, &self.slopes)
                    }
                    TransferMode::Circuit => circuit_transfer(layer.activation, i + scale * b, transfer),
                })
                .collect();

            bipolar_input = layer.activation.is_bipolar();
            v = if bipolar_input {
                out.iter()
                    .map(|&o| renormalize(o + rail, 2.0 * rail, c.v_in_max))
                    .collect()
            } else {
                out.iter().map(|&o| renormalize(o, rail, c.v_in_max)).collect()
            };
            all_currents.push(currents);
        }

        Ok(AnalogOutput {
            class: argmax(&out),
            scores: out,
            currents: all_currents,
            slots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binarize::{derive_levels, Cell};

    fn constraints() -> AnalogConstraints {
        AnalogConstraints::default()
    }

    fn single(cell: Cell) -> BinaryWeightMatrix {
        let l = derive_levels(3e3, 62e3).unwrap();
        BinaryWeightMatrix::from_cells(1, 1, vec![cell], l, vec![0.0]).unwrap()
    }

    #[test]
    fn single_device_currents() {
        let dev = DeviceModel::default();
        let on = program(&single(Cell::ALL[0]), &dev, 0).unwrap();
        let off = program(&single(Cell::ALL[1]), &dev, 0).unwrap();
        let i_on = column_current(&on, &[0.1], 0, &constraints()).unwrap();
        let i_off = column_current(&off, &[0.1], 0, &constraints()).unwrap();
        assert!((i_on - 33.333_333_333_333_333e-6).abs() / i_on < 1e-12, "{i_on}");
        assert!((i_off - 1.612_903_225_806_451_6e-6).abs() / i_off < 1e-12, "{i_off}");
        assert_eq!(column_current(&on, &[0.0], 0, &constraints()).unwrap(), 0.0);
    }

    #[test]
    fn voltage_limits() {
        let dev = DeviceModel::default();
        let on = program(&single(Cell::ALL[0]), &dev, 0).unwrap();
        assert!(matches!(
            column_current(&on, &[0.2], 0, &constraints()),
            Err(Error::Constraint(_))
        ));
        assert!(matches!(
            column_current(&on, &[-0.01], 0, &constraints()),
            Err(Error::Constraint(_))
        ));
        assert!(matches!(column_current(&on, &[0.1], 1, &constraints()), Err(Error::Input(_))));
    }

    #[test]
    fn constraint_validation() {
        let mut c = constraints();
        assert!(c.validate().is_ok());
        c.v_in_max = 0.7;
        assert!(matches!(c.validate(), Err(Error::Constraint(_))));
        assert!(matches!(encode_input(&[1.0, 2.0], &c), Err(Error::Constraint(_))));
        let mut c = constraints();
        c.v_drain_max = 2.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn encode_examples() {
        let c = constraints();
        let v = encode_input(&[1.0, 2.0, 3.0], &c).unwrap();
        assert_eq!(v, vec![0.0, 0.05, 0.1]);
        assert_eq!(encode_input(&[4.0; 5], &c).unwrap(), vec![0.0; 5]);
        let px = encode_input_range(&[0.0, 255.0, 51.0], 0.0, 255.0, &c).unwrap();
        assert_eq!(px[0], 0.0);
        assert_eq!(px[1], 0.1);
        assert!(encode_input_range(&[300.0], 0.0, 255.0, &c).is_err());
        assert!(encode_input(&[f64::NAN], &c).is_err());
    }

    #[test]
    fn schedule_is_sequential() {
        let l = derive_levels(3e3, 62e3).unwrap();
        let b = BinaryWeightMatrix::from_cells(1, 2, vec![Cell::ALL[0], Cell::ALL[3]], l, vec![0.0; 2])
            .unwrap();
        let x = program(&b, &DeviceModel::default(), 1).unwrap();
        let r = read_layer(&x, &[0.05], &constraints()).unwrap();
        assert_eq!(r.schedule.columns, vec![0, 1]);
        assert_eq!(r.schedule.slots(), 2);
        for j in 0..2 {
            assert_eq!(r.currents[j], column_current(&x, &[0.05], j, &constraints()).unwrap());
        }
        assert!(r.currents[1] < 0.0);
    }

    #[test]
    fn switch_failure_keeps_fresh_state() {
        let l = derive_levels(3e3, 62e3).unwrap();
        let b = BinaryWeightMatrix::from_cells(2, 2, Cell::ALL.to_vec(), l, vec![0.0; 2]).unwrap();
        let dev = DeviceModel {
            p_switch_fail: 1.0,
            ..DeviceModel::default()
        };
        let x = program(&b, &dev, 5).unwrap();
        assert!(x.conductance().iter().all(|&g| g == 1.0 / 62e3));
        // Over a prior array that already holds the intended levels nothing changes.
        let ideal = program(&b, &DeviceModel::default(), 5).unwrap();
        let again = reprogram(&ideal, &b, &dev, 6).unwrap();
        assert_eq!(again.conductance(), ideal.conductance());
    }

    #[test]
    fn stuck_faults() {
        let l = derive_levels(3e3, 62e3).unwrap();
        let b = BinaryWeightMatrix::from_cells(2, 2, Cell::ALL.to_vec(), l, vec![0.0; 2]).unwrap();
        let on = program(&b, &DeviceModel { p_stuck_on: 1.0, ..DeviceModel::default() }, 0).unwrap();
        assert!(on.conductance().iter().all(|&g| g == 1.0 / 3e3));
        let off = program(&b, &DeviceModel { p_stuck_off: 1.0, ..DeviceModel::default() }, 0).unwrap();
        assert!(off.conductance().iter().all(|&g| g == 1.0 / 62e3));
        assert_eq!(off.signs(), on.signs());
    }

    #[test]
    fn invalid_device_rejected() {
        let l = derive_levels(3e3, 62e3).unwrap();
        let b = BinaryWeightMatrix::from_cells(1, 1, vec![Cell::ALL[0]], l, vec![0.0]).unwrap();
        for dev in [
            DeviceModel { r_on: 7e4, ..DeviceModel::default() },
            DeviceModel { p_switch_fail: 1.5, ..DeviceModel::default() },
            DeviceModel { sigma_r: -0.1, ..DeviceModel::default() },
        ] {
            assert!(matches!(program(&b, &dev, 0), Err(Error::Device(_))));
        }
    }

    #[test]
    fn state_round_trip() {
        let l = derive_levels(3e3, 62e3).unwrap();
        let b = BinaryWeightMatrix::from_cells(2, 2, Cell::ALL.to_vec(), l, vec![0.0; 2]).unwrap();
        let x = program(&b, &DeviceModel { sigma_r: 0.1, ..DeviceModel::default() }, 3).unwrap();
        let json = x.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["sign"], serde_json::json!([[1, 1], [-1, -1]]));
        let back = CrossbarArray::from_state(&serde_json::from_str(&json).unwrap()).unwrap();
        for (a, b) in back.conductance().iter().zip(x.conductance()) {
            assert!((a - b).abs() / b < 1e-15);
        }
        assert_eq!(back.signs(), x.signs());
    }
}
