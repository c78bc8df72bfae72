//! Dataset loading: MNIST IDX files and the IRIS CSV.
//!
//! IDX is MNIST's container: a big-endian `u32` magic (2051 for images,
//! 2049 for labels), one big-endian `u32` per dimension, then raw unsigned
//! bytes. Pixels are scaled to `[0, 1]` by dividing by 255.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;

/// Environment variable naming the dataset root directory.
pub const DATA_DIR_ENV: &str = "BNNSIM_DATA_DIR";

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";
pub const IRIS_CSV: &str = "iris.csv";

/// A labelled sample matrix, stored row-major (`samples x dims`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    features: Vec<f64>,
    dims: usize,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Vec<f64>,
        dims: usize,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        if dims == 0 {
            return Err(Error::Input("dataset dimension must be positive".into()));
        }
        if features.len() != dims * labels.len() {
            return Err(Error::Input(format!(
                "feature matrix has {} values, expected {} samples x {} dims",
                features.len(),
                labels.len(),
                dims
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Input(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("dataset contains non-finite features".into()));
        }
        Ok(Self {
            name: name.into(),
            features,
            dims,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.dims..(i + 1) * self.dims]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.features
            .chunks_exact(self.dims)
            .zip(self.labels.iter().copied())
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dims);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            name: self.name.clone(),
            features,
            dims: self.dims,
            labels,
            n_classes: self.n_classes,
        }
    }

    /// First `n` samples (or all of them when `n >= len`).
    pub fn truncate(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Fraction of samples belonging to the most common class.
    pub fn majority_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let mut counts = vec![0usize; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        *counts.iter().max().unwrap() as f64 / self.len() as f64
    }
}

/// Per-feature affine map to `[0, 1]`, fitted on one dataset and applied to
/// others (values outside the fitted range are clamped).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(data: &Dataset) -> Self {
        let mut lo = vec![f64::INFINITY; data.dims];
        let mut hi = vec![f64::NEG_INFINITY; data.dims];
        for (x, _) in data.iter() {
            for (d, &v) in x.iter().enumerate() {
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        Self { lo, hi }
    }

    pub fn apply(&self, data: &Dataset) -> Dataset {
        let features = data
            .features
            .chunks_exact(data.dims)
            .flat_map(|x| {
                x.iter().enumerate().map(|(d, &v)| {
                    let span = self.hi[d] - self.lo[d];
                    if span > 0.0 {
                        ((v - self.lo[d]) / span).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        Dataset {
            features,
            ..data.clone()
        }
    }
}

/// Resolve the dataset root: `$BNNSIM_DATA_DIR` when set, else `./data`.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_owned(),
            offset: offset as u64,
            msg: "truncated header".into(),
        })
}

/// Raw IDX image tensor: `count` images of `rows x cols` bytes.
#[derive(Debug, Clone)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<IdxImages> {
    let magic = read_u32_be(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            path: path.to_owned(),
            offset: 0,
            msg: format!("expected image magic {IDX_IMAGES_MAGIC}, found {magic}"),
        });
    }
    let count = read_u32_be(bytes, 4, path)? as usize;
    let rows = read_u32_be(bytes, 8, path)? as usize;
    let cols = read_u32_be(bytes, 12, path)? as usize;
    let expected = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < expected {
        return Err(Error::Format {
            path: path.to_owned(),
            offset: bytes.len() as u64,
            msg: format!("truncated pixel data: expected {expected} bytes, found {}", body.len()),
        });
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body[..expected].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = read_u32_be(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            path: path.to_owned(),
            offset: 0,
            msg: format!("expected label magic {IDX_LABELS_MAGIC}, found {magic}"),
        });
    }
    let count = read_u32_be(bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Format {
            path: path.to_owned(),
            offset: bytes.len() as u64,
            msg: format!("truncated label data: expected {count} bytes, found {}", body.len()),
        });
    }
    Ok(body[..count].to_vec())
}

/// Load an MNIST image/label file pair.
pub fn load_mnist(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let ib = fs::read(ip).map_err(|e| Error::io(ip, e))?;
    let lb = fs::read(lp).map_err(|e| Error::io(lp, e))?;
    let images = parse_idx_images(&ib, ip)?;
    let labels = parse_idx_labels(&lb, lp)?;
    if images.count != labels.len() {
        return Err(Error::Format {
            path: lp.to_owned(),
            offset: 4,
            msg: format!(
                "label count {} does not match image count {} in {}",
                labels.len(),
                images.count,
                ip.display()
            ),
        });
    }
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(Error::Format {
            path: lp.to_owned(),
            offset: 8 + pos as u64,
            msg: format!("label {} outside 0..=9", labels[pos]),
        });
    }
    let dims = images.rows * images.cols;
    let features = images.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Dataset::new(
        "mnist",
        features,
        dims,
        labels.into_iter().map(usize::from).collect(),
        10,
    )
}

/// Load the official MNIST train and test splits from `dir`.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let train = load_mnist(dir.join(MNIST_TRAIN_IMAGES), dir.join(MNIST_TRAIN_LABELS))?;
    let test = load_mnist(dir.join(MNIST_TEST_IMAGES), dir.join(MNIST_TEST_LABELS))?;
    Ok((train, test))
}

/// Load IRIS from `sepal_length,sepal_width,petal_length,petal_width,class`
/// rows. Class names map to indices in order of first appearance. Any
/// leading rows whose first field is not numeric are treated as headers.
pub fn load_iris(csv_path: impl AsRef<Path>) -> Result<Dataset> {
    let path = csv_path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                path: path.to_owned(),
                line: 0,
                msg: format!("{other:?}"),
            },
        })?;

    let mut classes: HashMap<String, usize> = HashMap::new();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut in_header = true;

    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if in_header && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        in_header = false;

        if record.len() != 5 {
            return Err(Error::Parse {
                path: path.to_owned(),
                line,
                msg: format!("expected 5 fields, found {}", record.len()),
            });
        }
        for field in record.iter().take(4) {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_owned(),
                line,
                msg: format!("non-numeric feature `{field}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line,
                    msg: format!("non-finite feature `{field}`"),
                });
            }
            features.push(v);
        }
        let name = &record[4];
        let next = classes.len();
        labels.push(*classes.entry(name.to_owned()).or_insert(next));
    }

    if labels.is_empty() {
        return Err(Error::Parse {
            path: path.to_owned(),
            line: 0,
            msg: "no data rows".into(),
        });
    }
    let n_classes = classes.len();
    Dataset::new("iris", features, 4, labels, n_classes)
}

/// Seeded shuffle, then the first `round(n * train_fraction)` samples go to
/// the training set.
pub fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (data.len() as f64 * train_fraction).round() as usize;
    let (a, b) = idx.split_at(n_train);
    Ok((data.select(a), data.select(b)))
}

pub fn one_hot(labels: &[usize], n_classes: usize) -> Vec<Vec<f64>> {
    labels
        .iter()
        .map(|&l| {
            let mut row = vec![0.0; n_classes];
            row[l] = 1.0;
            row
        })
        .collect()
}
