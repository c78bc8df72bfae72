//! Element-wise activation functions.
//!
//! The two smooth kinds are the usual logistic sigmoid and hyperbolic
//! tangent. The two approximate kinds are their piecewise-linear (hard)
//! counterparts:
//!
//! - `approx_sigmoid(x) = clamp(s_sig * x + 0.5, 0, 1)` with `s_sig = 0.25` by default
//! - `approx_tanh(x) = clamp(s_tanh * x, -1, 1)` with `s_tanh = 1` by default
//!
//! Derivatives at the clamp kinks belong to the linear region.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    ApproxSigmoid,
    ApproxTanh,
}

/// Slopes of the linear region of the two approximate kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardSlopes {
    pub sigmoid: f64,
    pub tanh: f64,
}

impl Default for HardSlopes {
    fn default() -> Self {
        Self {
            sigmoid: 0.25,
            tanh: 1.0,
        }
    }
}

impl HardSlopes {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.sigmoid > 0.0 && self.sigmoid.is_finite() && self.tanh > 0.0 && self.tanh.is_finite())
        {
            return Err(Error::Config(format!(
                "hard activation slopes must be positive and finite, got {self:?}"
            )));
        }
        Ok(())
    }
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::ApproxSigmoid,
        Activation::ApproxTanh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::ApproxSigmoid => "approx_sigmoid",
            Activation::ApproxTanh => "approx_tanh",
        }
    }

    /// True for kinds whose output spans `[-1, 1]` rather than `[0, 1]`.
    pub fn is_bipolar(self) -> bool {
        matches!(self, Activation::Tanh | Activation::ApproxTanh)
    }

    /// True for the piecewise-linear kinds.
    pub fn is_clamped(self) -> bool {
        matches!(self, Activation::ApproxSigmoid | Activation::ApproxTanh)
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        self.apply_with(x, &HardSlopes::default())
    }

    #[inline]
    pub fn apply_with(self, x: f64, slopes: &HardSlopes) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::ApproxSigmoid => (slopes.sigmoid * x + 0.5).clamp(0.0, 1.0),
            Activation::ApproxTanh => (slopes.tanh * x).clamp(-1.0, 1.0),
        }
    }

    /// Derivative with respect to the pre-activation `x`, expressed through
    /// `x` and the already computed output `y = apply(x)`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64, slopes: &HardSlopes) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::ApproxSigmoid => {
                let u = slopes.sigmoid * x + 0.5;
                if (0.0..=1.0).contains(&u) {
                    slopes.sigmoid
                } else {
                    0.0
                }
            }
            Activation::ApproxTanh => {
                let u = slopes.tanh * x;
                if (-1.0..=1.0).contains(&u) {
                    slopes.tanh
                } else {
                    0.0
                }
            }
        }
    }

    /// Pre-activation values where the derivative is discontinuous.
    pub fn kinks(self, slopes: &HardSlopes) -> Vec<f64> {
        match self {
            Activation::Sigmoid | Activation::Tanh => Vec::new(),
            Activation::ApproxSigmoid => vec![-0.5 / slopes.sigmoid, 0.5 / slopes.sigmoid],
            Activation::ApproxTanh => vec![-1.0 / slopes.tanh, 1.0 / slopes.tanh],
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown activation kind `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_points() {
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::ApproxTanh.apply(3.7), 1.0);
        assert_eq!(Activation::ApproxSigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
    }

    #[test]
    fn sigmoid_at_two() {
        // 1 / (1 + e^-2) evaluated with 50-digit arithmetic.
        let oracle = 0.880_797_077_977_882_4;
        assert!((Activation::Sigmoid.apply(2.0) - oracle).abs() < 1e-15);
    }

    #[test]
    fn hard_kinds_saturate() {
        assert_eq!(Activation::ApproxSigmoid.apply(10.0), 1.0);
        assert_eq!(Activation::ApproxSigmoid.apply(-10.0), 0.0);
        assert_eq!(Activation::ApproxTanh.apply(-3.0), -1.0);
        assert_eq!(Activation::ApproxTanh.apply(0.3), 0.3);
    }

    #[test]
    fn kink_belongs_to_linear_region() {
        let s = HardSlopes::default();
        assert_eq!(Activation::ApproxSigmoid.derivative(2.0, 1.0, &s), 0.25);
        assert_eq!(Activation::ApproxSigmoid.derivative(2.0001, 1.0, &s), 0.0);
        assert_eq!(Activation::ApproxTanh.derivative(-1.0, -1.0, &s), 1.0);
        assert_eq!(Activation::ApproxTanh.derivative(-1.5, -1.0, &s), 0.0);
    }

    #[test]
    fn unknown_kind_is_config_error() {
        assert!(matches!("relu".parse::<Activation>(), Err(Error::Config(_))));
        assert_eq!("approx_tanh".parse::<Activation>().unwrap(), Activation::ApproxTanh);
    }

    #[test]
    fn ranges_and_monotonicity() {
        for kind in Activation::ALL {
            let mut prev = f64::NEG_INFINITY;
            for i in -4000..=4000 {
                let x = i as f64 * 0.005;
                let y = kind.apply(x);
                assert!(y >= prev, "{kind} not monotone at {x}");
                prev = y;
                if kind.is_bipolar() {
                    assert!((-1.0..=1.0).contains(&y));
                } else {
                    assert!((0.0..=1.0).contains(&y));
                }
            }
        }
        // Strict bounds for the logistic sigmoid at moderate arguments.
        assert!(Activation::Sigmoid.apply(-30.0) > 0.0);
        assert!(Activation::Sigmoid.apply(30.0) < 1.0);
    }
}
