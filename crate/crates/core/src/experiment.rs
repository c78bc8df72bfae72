//! Experiment configuration and dataset preparation shared by the command
//! line front end and the benchmark tests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binarize::{derive_levels, BinarizeOptions, LevelSet};
use crate::cost::CountingPolicy;
use crate::crossbar::{AnalogConstraints, DeviceModel, InputEncoding};
use crate::dataio::{self, Dataset, FeatureScaler};
use crate::error::{Error, Result};
use crate::mlp::NetworkConfig;
use crate::transfer::TransferConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mnist,
    Iris,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// MNIST directory or IRIS CSV file; the data root is used when unset.
    pub path: Option<PathBuf>,
    /// Keep only the first N training samples (MNIST).
    pub train_limit: Option<usize>,
    /// Keep only the first N test samples (MNIST).
    pub test_limit: Option<usize>,
    /// Train share of the seeded split (IRIS).
    pub train_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self::mnist()
    }
}

impl DatasetConfig {
    /// Official split, first 10000 training and 2000 test images.
    pub fn mnist() -> Self {
        Self {
            kind: DatasetKind::Mnist,
            path: None,
            train_limit: Some(10_000),
            test_limit: Some(2_000),
            train_fraction: 0.8,
        }
    }

    pub fn iris() -> Self {
        Self {
            kind: DatasetKind::Iris,
            path: None,
            train_limit: None,
            test_limit: None,
            train_fraction: 0.8,
        }
    }

    pub fn resolved_path(&self) -> PathBuf {
        match (&self.path, self.kind) {
            (Some(p), _) => p.clone(),
            (None, DatasetKind::Mnist) => dataio::data_dir(),
            (None, DatasetKind::Iris) => dataio::data_dir().join(dataio::IRIS_CSV),
        }
    }

    /// Human-readable split description for reports.
    pub fn split_description(&self, seed: u64) -> String {
        match self.kind {
            DatasetKind::Mnist => format!(
                "official train/test split, train limit {}, test limit {}",
                limit_text(self.train_limit),
                limit_text(self.test_limit)
            ),
            DatasetKind::Iris => format!(
                "seeded shuffle split (seed {seed}), train fraction {}, features min-max scaled on the train part",
                self.train_fraction
            ),
        }
    }
}

fn limit_text(l: Option<usize>) -> String {
    l.map_or_else(|| "none".to_string(), |n| n.to_string())
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    pub split: String,
}

fn limit(d: Dataset, n: Option<usize>) -> Dataset {
    match n {
        Some(n) if n < d.len() => d.truncate(n),
        _ => d,
    }
}

/// Load and split a dataset. All features end up in `[0, 1]`.
pub fn prepare(cfg: &DatasetConfig, seed: u64) -> Result<PreparedData> {
    let path = cfg.resolved_path();
    let (train, test) = match cfg.kind {
        DatasetKind::Mnist => {
            let (train, test) = dataio::load_mnist_dir(&path)?;
            (limit(train, cfg.train_limit), limit(test, cfg.test_limit))
        }
        DatasetKind::Iris => {
            let all = dataio::load_iris(&path)?;
            let (train, test) = dataio::split(&all, cfg.train_fraction, seed)?;
            let scaler = FeatureScaler::fit(&train);
            (scaler.apply(&train), scaler.apply(&test))
        }
    };
    Ok(PreparedData {
        train,
        test,
        split: cfg.split_description(seed),
    })
}

/// Whether the files a dataset config points at exist.
pub fn dataset_available(cfg: &DatasetConfig) -> bool {
    let p = cfg.resolved_path();
    match cfg.kind {
        DatasetKind::Mnist => [
            dataio::MNIST_TRAIN_IMAGES,
            dataio::MNIST_TRAIN_LABELS,
            dataio::MNIST_TEST_IMAGES,
            dataio::MNIST_TEST_LABELS,
        ]
        .iter()
        .all(|f| p.join(f).is_file()),
        DatasetKind::Iris => p.is_file(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub param: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            param: "p_switch_fail".into(),
            from: 0.0,
            to: 0.5,
            steps: 6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub model: Option<PathBuf>,
    pub binary_model: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Everything one end-to-end run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub network: NetworkConfig,
    pub binarize: BinarizeOptions,
    pub device: DeviceModel,
    pub constraints: AnalogConstraints,
    pub transfer: TransferConfig,
    pub encoding: InputEncoding,
    pub cost: CountingPolicy,
    pub sweep: SweepConfig,
    pub trials: usize,
    pub outputs: OutputPaths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::mnist()
    }
}

impl ExperimentConfig {
    pub fn mnist() -> Self {
        Self {
            dataset: DatasetConfig::mnist(),
            network: NetworkConfig::mnist(),
            binarize: BinarizeOptions::default(),
            device: DeviceModel::default(),
            constraints: AnalogConstraints::default(),
            transfer: TransferConfig::default(),
            encoding: InputEncoding::default(),
            cost: CountingPolicy::default(),
            sweep: SweepConfig::default(),
            trials: 20,
            outputs: OutputPaths::default(),
        }
    }

    pub fn iris() -> Self {
        Self {
            dataset: DatasetConfig::iris(),
            network: NetworkConfig::iris(),
            ..Self::mnist()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "mnist" => Ok(Self::mnist()),
            "iris" => Ok(Self::iris()),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected mnist or iris)"
            ))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("invalid experiment config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn base_levels(&self) -> Result<LevelSet> {
        derive_levels(self.device.r_on, self.device.r_off)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.device.validate()?;
        self.constraints.validate()?;
        self.transfer.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if !(self.dataset.train_fraction > 0.0 && self.dataset.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.dataset.train_fraction
            )));
        }
        Ok(())
    }
}
