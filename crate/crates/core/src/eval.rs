//! Accuracy reports and device fault sweeps.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binarize::BinaryModel;
use crate::crossbar::{AnalogConstraints, AnalogNetwork, DeviceModel, InputEncoding};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::transfer::TransferConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub accuracy: f64,
    /// `None` for classes absent from the evaluated set.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn from_predictions(labels: &[usize], predicted: &[usize], n_classes: usize) -> Result<Self> {
        if labels.len() != predicted.len() {
            return Err(Error::Input(format!(
                "{} labels but {} predictions",
                labels.len(),
                predicted.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::Input("cannot evaluate an empty dataset".into()));
        }
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for (&t, &p) in labels.iter().zip(predicted) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::Input(format!(
                    "class index out of range: true {t}, predicted {p}, classes {n_classes}"
                )));
            }
            confusion[t][p] += 1;
        }
        let correct: usize = (0..n_classes).map(|k| confusion[k][k]).sum();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let total: usize = row.iter().sum();
                (total > 0).then(|| row[k] as f64 / total as f64)
            })
            .collect();
        Ok(Self {
            samples: labels.len(),
            accuracy: correct as f64 / labels.len() as f64,
            per_class_accuracy,
            confusion,
        })
    }

    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "accuracy {:.4} over {} samples", self.accuracy, self.samples);
        for (k, acc) in self.per_class_accuracy.iter().enumerate() {
            match acc {
                Some(a) => {
                    let _ = writeln!(s, "  class {k}: {a:.4}");
                }
                None => {
                    let _ = writeln!(s, "  class {k}: n/a");
                }
            }
        }
        s
    }
}

/// Classify every sample of `data` with `predict`.
pub fn evaluate<F>(data: &Dataset, mut predict: F) -> Result<EvalReport>
where
    F: FnMut(&[f64]) -> Result<usize>,
{
    let predicted = data
        .iter()
        .map(|(x, _)| predict(x))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_predictions(data.labels(), &predicted, data.n_classes())
}

/// Digital inference over the decoded binarized weights.
pub fn evaluate_digital(model: &BinaryModel, data: &Dataset) -> Result<EvalReport> {
    let reference = model.digital();
    evaluate(data, |x| reference.predict(x))
}

/// Analog inference on a programmed network.
pub fn evaluate_analog(
    net: &AnalogNetwork,
    data: &Dataset,
    constraints: &AnalogConstraints,
    transfer: &TransferConfig,
    encoding: InputEncoding,
) -> Result<EvalReport> {
    evaluate(data, |x| Ok(net.forward(x, constraints, transfer, encoding)?.class))
}

/// Observed span of column currents in one layer, amperes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentRange {
    pub layer: usize,
    pub min: f64,
    pub max: f64,
}

/// [`evaluate_analog`] that also records the column current range per layer.
pub fn evaluate_analog_traced(
    net: &AnalogNetwork,
    data: &Dataset,
    constraints: &AnalogConstraints,
    transfer: &TransferConfig,
    encoding: InputEncoding,
) -> Result<(EvalReport, Vec<CurrentRange>)> {
    let mut ranges: Vec<CurrentRange> = Vec::new();
    let report = evaluate(data, |x| {
        let out = net.forward(x, constraints, transfer, encoding)?;
        if ranges.is_empty() {
            ranges = (0..out.currents.len())
                .map(|layer| CurrentRange {
                    layer,
                    min: f64::INFINITY,
                    max: f64::NEG_INFINITY,
                })
                .collect();
        }
        for (r, layer) in ranges.iter_mut().zip(&out.currents) {
            for &i in layer {
                r.min = r.min.min(i);
                r.max = r.max.max(i);
            }
        }
        Ok(out.class)
    })?;
    Ok((report, ranges))
}

/// Device parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    PSwitchFail,
    SigmaR,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::PSwitchFail => "p_switch_fail",
            SweepParam::SigmaR => "sigma_r",
        }
    }

    pub fn apply(self, dev: &DeviceModel, value: f64) -> DeviceModel {
        let mut d = *dev;
        match self {
            SweepParam::PSwitchFail => d.p_switch_fail = value,
            SweepParam::SigmaR => d.sigma_r = value,
        }
        d
    }

    pub fn read(self, dev: &DeviceModel) -> f64 {
        match self {
            SweepParam::PSwitchFail => dev.p_switch_fail,
            SweepParam::SigmaR => dev.sigma_r,
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_switch_fail" => Ok(SweepParam::PSwitchFail),
            "sigma_r" => Ok(SweepParam::SigmaR),
            other => Err(Error::Config(format!(
                "unknown sweep parameter '{other}' (expected p_switch_fail or sigma_r)"
            ))),
        }
    }
}

/// `steps` evenly spaced values from `from` to `to` inclusive.
pub fn sweep_values(from: f64, to: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::Config("sweep needs at least one step".into()));
    }
    if !(from.is_finite() && to.is_finite()) {
        return Err(Error::Config("sweep bounds must be finite".into()));
    }
    if steps == 1 {
        return Ok(vec![from]);
    }
    let n = (steps - 1) as f64;
    Ok((0..steps)
        .map(|k| {
            let k = k as f64;
            (from * (n - k) + to * k) / n
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub p_switch_fail: f64,
    pub sigma_r: f64,
    pub accuracy: f64,
}

pub const SWEEP_HEADER: &str = "seed,p_switch_fail,sigma_r,accuracy";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::with_capacity(32 * (rows.len() + 1));
    s.push_str(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.seed, r.p_switch_fail, r.sigma_r, r.accuracy);
    }
    s
}

/// Everything a sweep needs besides the swept values.
#[derive(Debug, Clone)]
pub struct SweepSetup<'a> {
    pub model: &'a BinaryModel,
    pub test: &'a Dataset,
    pub device: DeviceModel,
    pub constraints: AnalogConstraints,
    pub transfer: TransferConfig,
    pub encoding: InputEncoding,
}

/// Program and evaluate one array per (value, trial). Trial `t` uses
/// programming seed `base_seed + t` for every value, so rows are keyed by
/// `(seed, value)` and their content does not depend on execution order.
/// Rows are ordered by value, then trial.
pub fn fault_sweep(
    setup: &SweepSetup<'_>,
    param: SweepParam,
    values: &[f64],
    trials: usize,
    base_seed: u64,
) -> Result<Vec<SweepRow>> {
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    setup.constraints.validate()?;
    setup.transfer.validate()?;
    for &v in values {
        param.apply(&setup.device, v).validate()?;
    }
    let jobs: Vec<(f64, u64)> = values
        .iter()
        .flat_map(|&v| (0..trials as u64).map(move |t| (v, base_seed.wrapping_add(t))))
        .collect();
    jobs.par_iter()
        .map(|&(value, seed)| {
            let dev = param.apply(&setup.device, value);
            let net = AnalogNetwork::program(setup.model, &dev, seed)?;
            let report = evaluate_analog(
                &net,
                setup.test,
                &setup.constraints,
                &setup.transfer,
                setup.encoding,
            )?;
            Ok(SweepRow {
                seed,
                p_switch_fail: dev.p_switch_fail,
                sigma_r: dev.sigma_r,
                accuracy: report.accuracy,
            })
        })
        .collect()
}

/// Mean accuracy at one swept value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub trials: usize,
    pub mean: f64,
    /// Standard error of the mean (sample std / √n).
    pub std_err: f64,
}

/// Group rows by the swept value, preserving first-appearance order.
pub fn summarize(rows: &[SweepRow], param: SweepParam) -> Vec<SweepPoint> {
    let key = |r: &SweepRow| match param {
        SweepParam::PSwitchFail => r.p_switch_fail,
        SweepParam::SigmaR => r.sigma_r,
    };
    let mut values: Vec<f64> = Vec::new();
    for r in rows {
        if !values.contains(&key(r)) {
            values.push(key(r));
        }
    }
    values
        .into_iter()
        .map(|v| {
            let acc: Vec<f64> = rows.iter().filter(|r| key(r) == v).map(|r| r.accuracy).collect();
            let n = acc.len() as f64;
            let mean = acc.iter().sum::<f64>() / n;
            let var = if acc.len() > 1 {
                acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            SweepPoint {
                value: v,
                trials: acc.len(),
                mean,
                std_err: (var / n).sqrt(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCheck {
    /// Indices `k` where `mean[k+1] > mean[k]`.
    pub inversions: Vec<usize>,
    /// Whether every inversion is within one standard error.
    pub within_std_err: bool,
    pub passed: bool,
}

/// Means must not increase along the sweep, except for at most
/// `allowed` rises each no larger than the combined standard error of the pair.
pub fn check_non_increasing(points: &[SweepPoint], allowed: usize) -> MonotonicityCheck {
    let mut inversions = Vec::new();
    let mut within_std_err = true;
    for (k, w) in points.windows(2).enumerate() {
        let rise = w[1].mean - w[0].mean;
        if rise > 0.0 {
            inversions.push(k);
            let se = w[0].std_err.hypot(w[1].std_err);
            if rise > se {
                within_std_err = false;
            }
        }
    }
    MonotonicityCheck {
        passed: inversions.len() <= allowed && within_std_err,
        inversions,
        within_std_err,
    }
}
