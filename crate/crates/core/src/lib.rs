//! Behavioral simulator for binary-weighted memristive analog neural networks.
//!
//! The pipeline is: train a real-valued perceptron ([`mlp`]), quantize its
//! weights to four levels ([`binarize`]), program the levels into crossbar
//! arrays and run analog inference ([`crossbar`], [`transfer`]), and estimate
//! circuit power and area ([`cost`]). [`dataio`] loads MNIST and IRIS.

pub mod activation;
pub mod binarize;
pub mod cost;
pub mod crossbar;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod mlp;
pub mod transfer;

pub use activation::{Activation, HardSlopes};
pub use binarize::{
    binarize, binarize_model, decode, derive_levels, BinarizeOptions, BinaryModel,
    BinaryWeightMatrix, Cell, LevelSet,
};
pub use crossbar::{AnalogConstraints, AnalogNetwork, CrossbarArray, DeviceModel};
pub use dataio::Dataset;
pub use error::{Category, Error, Result};
pub use experiment::ExperimentConfig;
pub use mlp::{train, NetworkConfig, TrainedModel, WeightMatrix};
pub use transfer::{TransferConfig, TransferMode};
