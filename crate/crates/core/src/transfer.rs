//! Behavioral current-to-voltage models of the activation circuits.
//!
//! Each circuit takes a crossbar column current and produces a voltage on
//! its output rail:
//!
//! - sigmoid: `V = rail / (1 + exp(-k i))`
//! - tanh: `V = rail * tanh(k i / 2)`
//! - approximate sigmoid: `clamp(rail * (i / (2 i_sat) + 0.5), 0, rail)`
//! - approximate tanh: `clamp(rail * i / i_sat, -rail, rail)`
//!
//! The default steepness `k = ln(99) / i_range` puts the sigmoid at 99% of
//! its rail at `+i_range`; the default `i_sat` is `i_range / 2`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    /// Circuit-shaped curves driven by the column current.
    Circuit,
    /// The mathematical activation applied to the rescaled current.
    Ideal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    /// Half-width of the input current span, amperes.
    pub i_range: f64,
    /// Output span of the normalized activation, volts.
    pub rail: f64,
    /// Raw output span of the sigmoid circuit before the voltage buffer (V_dd).
    pub supply: f64,
    /// Sigmoid steepness per ampere; `ln(99) / i_range` when unset.
    pub gain_k: Option<f64>,
    /// `i_sat = i_range / approx_saturation_divisor` for the approximate curves.
    pub approx_saturation_divisor: f64,
    pub mode: TransferMode,
    /// First-order lag time constant, seconds (0 = instantaneous).
    pub tau: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            i_range: 90e-6,
            rail: 1.0,
            supply: 1.8,
            gain_k: None,
            approx_saturation_divisor: 2.0,
            mode: TransferMode::Circuit,
            tau: 0.0,
        }
    }
}

impl TransferConfig {
    pub fn ideal() -> Self {
        Self {
            mode: TransferMode::Ideal,
            ..Self::default()
        }
    }

    pub fn with_rail(self, rail: f64) -> Self {
        Self { rail, ..self }
    }

    pub fn gain(&self) -> f64 {
        self.gain_k.unwrap_or_else(|| 99f64.ln() / self.i_range)
    }

    pub fn i_sat(&self) -> f64 {
        self.i_range / self.approx_saturation_divisor
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.i_range)
            || !positive(self.rail)
            || !positive(self.supply)
            || !positive(self.gain())
            || !positive(self.approx_saturation_divisor)
            || !(self.tau >= 0.0 && self.tau.is_finite())
        {
            return Err(Error::Config(format!(
                "transfer config needs positive i_range, rail, supply, gain and divisor and tau >= 0: {self:?}"
            )));
        }
        Ok(())
    }
}

pub fn sigmoid_transfer(i: f64, cfg: &TransferConfig) -> f64 {
    cfg.rail / (1.0 + (-cfg.gain() * i).exp())
}

pub fn tanh_transfer(i: f64, cfg: &TransferConfig) -> f64 {
    cfg.rail * (0.5 * cfg.gain() * i).tanh()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproxKind {
    Sigmoid,
    Tanh,
}

pub fn approx_transfer(kind: ApproxKind, i: f64, cfg: &TransferConfig) -> f64 {
    let i_sat = cfg.i_sat();
    match kind {
        ApproxKind::Sigmoid => (cfg.rail * (i / (2.0 * i_sat) + 0.5)).clamp(0.0, cfg.rail),
        ApproxKind::Tanh => (cfg.rail * i / i_sat).clamp(-cfg.rail, cfg.rail),
    }
}

/// Circuit output for the activation `kind` at column current `i`.
pub fn circuit_transfer(kind: Activation, i: f64, cfg: &TransferConfig) -> f64 {
    match kind {
        Activation::Sigmoid => sigmoid_transfer(i, cfg),
        Activation::Tanh => tanh_transfer(i, cfg),
        Activation::ApproxSigmoid => approx_transfer(ApproxKind::Sigmoid, i, cfg),
        Activation::ApproxTanh => approx_transfer(ApproxKind::Tanh, i, cfg),
    }
}

/// Voltage buffer: linear rescale from one rail to another.
pub fn renormalize(v: f64, from_rail: f64, to_rail: f64) -> f64 {
    debug_assert!(from_rail > 0.0 && to_rail > 0.0);
    v * to_rail / from_rail
}

/// First-order lag towards `target_v`, starting from 0 V at `t = 0`.
pub fn step_response(target_v: f64, cfg: &TransferConfig, t: f64) -> f64 {
    if cfg.tau == 0.0 {
        return target_v;
    }
    target_v * (1.0 - (-t.max(0.0) / cfg.tau).exp())
}

pub const CURVE_HEADER: &str =
    "i_amps,sigmoid_v,sigm_1v,sigm_0v1,tanh_v,approx_sigmoid_v,approx_tanh_v";

/// One point of the DC sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub i_amps: f64,
    /// Raw sigmoid circuit output on the supply rail.
    pub sigmoid_v: f64,
    pub sigm_1v: f64,
    pub sigm_0v1: f64,
    pub tanh_v: f64,
    pub approx_sigmoid_v: f64,
    pub approx_tanh_v: f64,
}

impl CurvePoint {
    pub fn at(i: f64, cfg: &TransferConfig) -> Self {
        let raw = cfg.with_rail(cfg.supply);
        let sigmoid_v = sigmoid_transfer(i, &raw);
        Self {
            i_amps: i,
            sigmoid_v,
            sigm_1v: renormalize(sigmoid_v, cfg.supply, 1.0),
            sigm_0v1: renormalize(sigmoid_v, cfg.supply, 0.1),
            tanh_v: tanh_transfer(i, cfg),
            approx_sigmoid_v: approx_transfer(ApproxKind::Sigmoid, i, cfg),
            approx_tanh_v: approx_transfer(ApproxKind::Tanh, i, cfg),
        }
    }

    pub fn values(&self) -> [f64; 7] {
        [
            self.i_amps,
            self.sigmoid_v,
            self.sigm_1v,
            self.sigm_0v1,
            self.tanh_v,
            self.approx_sigmoid_v,
            self.approx_tanh_v,
        ]
    }
}

/// DC sweep of all six curves over `[-i_range, +i_range]`.
pub fn sweep_curves(cfg: &TransferConfig, n_points: usize) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    if n_points < 2 {
        return Err(Error::Config(format!("need at least 2 sweep points, got {n_points}")));
    }
    let step = 2.0 * cfg.i_range / (n_points - 1) as f64;
    Ok((0..n_points)
        .map(|k| {
            // Pin the endpoints and the centre exactly.
            let i = if k == n_points - 1 {
                cfg.i_range
            } else if 2 * k == n_points - 1 {
                0.0
            } else {
                -cfg.i_range + step * k as f64
            };
            CurvePoint::at(i, cfg)
        })
        .collect())
}

fn fmt_g9(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.8e}");
}

fn csv_from_rows<const N: usize>(header: &str, rows: impl Iterator<Item = [f64; N]>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            fmt_g9(&mut out, *v);
        }
        out.push('\n');
    }
    out
}

/// CSV export of [`sweep_curves`]: 9 significant digits per value.
pub fn export_curves(cfg: &TransferConfig, n_points: usize) -> Result<String> {
    let points = sweep_curves(cfg, n_points)?;
    Ok(csv_from_rows(CURVE_HEADER, points.iter().map(CurvePoint::values)))
}

pub const TRANSIENT_HEADER: &str =
    "t_s,sigmoid_v,sigm_1v,sigm_0v1,tanh_v,approx_sigmoid_v,approx_tanh_v";

/// Time series of every curve's response to a current step from 0 to
/// `i_step` at `t = 0`, sampled at `n_points` instants over `[0, t_end]`.
pub fn export_transient(
    cfg: &TransferConfig,
    i_step: f64,
    t_end: f64,
    n_points: usize,
) -> Result<String> {
    cfg.validate()?;
    if n_points < 2 || t_end.is_nan() || t_end <= 0.0 {
        return Err(Error::Config("transient export needs t_end > 0 and >= 2 points".into()));
    }
    let target = CurvePoint::at(i_step, cfg);
    let rows = (0..n_points).map(|k| {
        let t = t_end * k as f64 / (n_points - 1) as f64;
        let mut row = target.values();
        row[0] = t;
        for v in &mut row[1..] {
            *v = step_response(*v, cfg, t);
        }
        row
    });
    Ok(csv_from_rows(TRANSIENT_HEADER, rows))
}
