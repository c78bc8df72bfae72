use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use bnnsim::activation::Activation;
use bnnsim::binarize::{binarize_model, derive_levels, BinarizeOptions, BinaryModel};
use bnnsim::crossbar::{AnalogConstraints, AnalogNetwork, DeviceModel, InputEncoding};
use bnnsim::dataio::{self, Dataset};
use bnnsim::eval::{evaluate_analog, evaluate_digital};
use bnnsim::experiment::{dataset_available, prepare, DatasetConfig};
use bnnsim::mlp::{train, NetworkConfig, TrainedModel};
use bnnsim::transfer::TransferConfig;

fn data_root() -> PathBuf {
    std::env::var_os(dataio::DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data")))
}

fn iris_cfg() -> DatasetConfig {
    DatasetConfig {
        path: Some(data_root().join(dataio::IRIS_CSV)),
        ..DatasetConfig::iris()
    }
}

fn mnist_cfg(train: usize, test: usize) -> DatasetConfig {
    DatasetConfig {
        path: Some(data_root()),
        train_limit: Some(train),
        test_limit: Some(test),
        ..DatasetConfig::mnist()
    }
}

fn skip(what: &str) {
    eprintln!("skipping: {what} not found under {}", data_root().display());
}

#[test]
fn forward_matches_matrix_product_oracle() {
    let cfg = NetworkConfig::uniform(vec![3, 4, 2], Activation::Sigmoid);
    let m = TrainedModel::initialize(&cfg, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
    let x = [0.3, -1.2, 0.75];
    let mut a = x.to_vec();
    for w in &m.weights {
        let mut next = Vec::new();
        for j in 0..w.cols() {
            let mut z = w.bias[j];
            for (i, ai) in a.iter().enumerate() {
                z += ai * w.values()[i * w.cols() + j];
            }
            next.push(1.0 / (1.0 + (-z).exp()));
        }
        a = next;
    }
    let out = m.forward(&x).unwrap();
    for (p, q) in out.output().iter().zip(&a) {
        assert!((p - q).abs() <= 1e-12 * q.abs());
    }
}

fn blobs(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for k in 0..200 {
        let class = k % 2;
        let centre = if class == 0 { (0.25, 0.25) } else { (0.75, 0.75) };
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        features.push(centre.0 + 0.06 * dx);
        features.push(centre.1 + 0.06 * dy);
        labels.push(class);
    }
    Dataset::new("blobs", features, 2, labels, 2).unwrap()
}

#[test]
fn separable_blobs_are_learned() {
    let data = blobs(1);
    let cfg = NetworkConfig {
        epochs: 200,
        learning_rate: 0.5,
        ..NetworkConfig::uniform(vec![2, 4, 2], Activation::Sigmoid)
    };
    let m = train(&cfg, &data).unwrap();
    assert!(m.accuracy(&data).unwrap() >= 0.95);
    let h = &m.training_loss_history;
    assert_eq!(h.len(), 201);
    assert!(h.last().unwrap() <= h.first().unwrap());
}

#[test]
fn training_is_reproducible() {
    let data = blobs(2);
    let cfg = NetworkConfig {
        epochs: 5,
        seed: 99,
        batch_size: 4,
        ..NetworkConfig::uniform(vec![2, 3, 2], Activation::ApproxTanh)
    };
    let a = train(&cfg, &data).unwrap();
    let b = train(&cfg, &data).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

fn binarized(m: &TrainedModel, train: &Dataset) -> BinaryModel {
    binarize_model(m, &derive_levels(3e3, 62e3).unwrap(), &BinarizeOptions::default(), Some(train)).unwrap()
}

#[test]
fn iris_loader_and_split() {
    let cfg = iris_cfg();
    if !dataset_available(&cfg) {
        return skip("iris.csv");
    }
    let all = dataio::load_iris(cfg.resolved_path()).unwrap();
    assert_eq!((all.len(), all.dims(), all.n_classes()), (150, 4, 3));
    let d = prepare(&cfg, 4).unwrap();
    assert_eq!((d.train.len(), d.test.len()), (120, 30));
    assert!(d.train.iter().chain(d.test.iter()).all(|(x, _)| x.iter().all(|v| (0.0..=1.0).contains(v))));
}

#[test]
fn iris_analog_pipeline() {
    let cfg = iris_cfg();
    if !dataset_available(&cfg) {
        return skip("iris.csv");
    }
    let d = prepare(&cfg, 3).unwrap();
    let m = train(&NetworkConfig { seed: 3, ..NetworkConfig::iris() }, &d.train).unwrap();
    let b = binarized(&m, &d.train);
    let digital = evaluate_digital(&b, &d.test).unwrap();
    let net = AnalogNetwork::program(&b, &DeviceModel::default(), 0).unwrap();
    let c = AnalogConstraints::default();
    let ideal = evaluate_analog(&net, &d.test, &c, &TransferConfig::ideal(), InputEncoding::default()).unwrap();
    assert_eq!(ideal.confusion, digital.confusion);
    let circuit = evaluate_analog(&net, &d.test, &c, &TransferConfig::default(), InputEncoding::default()).unwrap();
    assert!(circuit.accuracy >= 0.8, "circuit accuracy {}", circuit.accuracy);
}

#[test]
fn tanh_network_uses_level_shift() {
    let cfg = iris_cfg();
    if !dataset_available(&cfg) {
        return skip("iris.csv");
    }
    let d = prepare(&cfg, 5).unwrap();
    let net_cfg = NetworkConfig {
        seed: 5,
        epochs: 200,
        activations: vec![Activation::Tanh, Activation::ApproxSigmoid],
        ..NetworkConfig::iris()
    };
    let m = train(&net_cfg, &d.train).unwrap();
    let b = binarized(&m, &d.train);
    let net = AnalogNetwork::program(&b, &DeviceModel::default(), 0).unwrap();
    let c = AnalogConstraints::default();
    let reference = b.digital();
    for (x, _) in d.test.iter() {
        let analog = net.forward(x, &c, &TransferConfig::ideal(), InputEncoding::default()).unwrap();
        let digital = reference.forward(x).unwrap();
        for (s, y) in analog.scores.iter().zip(digital.output()) {
            assert!((s - y).abs() < 1e-9, "{s} vs {y}");
        }
    }
}

#[test]
fn mnist_headers() {
    let dir = data_root();
    let images = dir.join(dataio::MNIST_TRAIN_IMAGES);
    if !images.is_file() {
        return skip("MNIST");
    }
    let bytes = std::fs::read(&images).unwrap();
    let parsed = dataio::parse_idx_images(&bytes, &images).unwrap();
    assert_eq!((parsed.count, parsed.rows, parsed.cols), (60_000, 28, 28));
    assert_eq!(u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]), 2051);
    let (train, test) = dataio::load_mnist_dir(&dir).unwrap();
    assert_eq!((train.len(), train.dims(), train.n_classes()), (60_000, 784, 10));
    assert_eq!(test.len(), 10_000);
}

#[test]
fn mnist_analog_equals_digital_and_stuck_off_collapses() {
    let cfg = mnist_cfg(3000, 1000);
    if !dataset_available(&cfg) {
        return skip("MNIST");
    }
    let d = prepare(&cfg, 0).unwrap();
    let net_cfg = NetworkConfig {
        seed: 11,
        epochs: 2,
        ..NetworkConfig::mnist()
    };
    let m = train(&net_cfg, &d.train).unwrap();
    let b = binarized(&m, &d.train);
    let c = AnalogConstraints::default();

    let reference = b.digital();
    let net = AnalogNetwork::program(&b, &DeviceModel::default(), 0).unwrap();
    for (x, _) in d.test.iter() {
        let analog = net.forward(x, &c, &TransferConfig::ideal(), InputEncoding::default()).unwrap();
        assert_eq!(analog.class, reference.predict(x).unwrap());
        assert_eq!(analog.slots, 64 + 10);
    }

    let stuck = DeviceModel {
        p_stuck_off: 1.0,
        ..DeviceModel::default()
    };
    let dead = AnalogNetwork::program(&b, &stuck, 0).unwrap();
    let r = evaluate_analog(&dead, &d.test, &c, &TransferConfig::ideal(), InputEncoding::default()).unwrap();
    let healthy = evaluate_digital(&b, &d.test).unwrap();
    let predicted: Vec<usize> = (0..10).map(|k| r.confusion.iter().map(|row| row[k]).sum()).collect();
    eprintln!(
        "all cells stuck off: accuracy {:.3} (majority rate {:.3}, healthy {:.3}), predictions per class {predicted:?}",
        r.accuracy,
        d.test.majority_rate(),
        healthy.accuracy
    );
    let n = d.test.len();
    let (top, &count) = predicted.iter().enumerate().max_by_key(|(_, c)| **c).unwrap();
    assert!(count as f64 >= 0.9 * n as f64, "predictions did not collapse");
    let share = d.test.labels().iter().filter(|&&y| y == top).count() as f64 / n as f64;
    assert!((r.accuracy - share).abs() < 0.05);
    assert!(r.accuracy < healthy.accuracy - 0.2);
}
