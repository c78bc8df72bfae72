//! End-to-end acceptance benchmarks. Runs every criterion, prints one
//! PASS/FAIL line each, and exits non-zero if any failed.
//!
//! MNIST and IRIS are read from `$BNNSIM_DATA_DIR`, falling back to the
//! workspace `data/` directory.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bnnsim::activation::{Activation, HardSlopes};
use bnnsim::binarize::{
    binarize_model, binarize_value, derive_levels, BinarizeOptions, BinaryModel,
    BinaryWeightMatrix, Cell, Level, LevelSet, Sign,
};
use bnnsim::cost::{self, Component, CountingPolicy, ReferenceComparison};
use bnnsim::crossbar::{
    column_current, program, read_layer, AnalogConstraints, AnalogNetwork, DeviceModel,
    InputEncoding,
};
use bnnsim::dataio::{self, Dataset};
use bnnsim::eval::{
    check_non_increasing, evaluate_analog, fault_sweep, summarize, sweep_values, SweepParam,
    SweepSetup,
};
use bnnsim::experiment::{prepare, DatasetConfig, PreparedData};
use bnnsim::mlp::{gradient_check, train, NetworkConfig, TrainedModel};
use bnnsim::transfer::{sweep_curves, TransferConfig};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

type Check = Result<Outcome, String>;

fn data_root() -> PathBuf {
    std::env::var_os(dataio::DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data")))
}

fn mnist_config() -> DatasetConfig {
    DatasetConfig {
        path: Some(data_root()),
        ..DatasetConfig::mnist()
    }
}

fn iris_config() -> DatasetConfig {
    DatasetConfig {
        path: Some(data_root().join(dataio::IRIS_CSV)),
        ..DatasetConfig::iris()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pct(v: &[f64]) -> String {
    v.iter()
        .map(|a| format!("{:.2}", 100.0 * a))
        .collect::<Vec<_>>()
        .join(" ")
}

fn ideal_transfer() -> TransferConfig {
    TransferConfig::ideal()
}

/// Accuracy of the binarized model on ideal devices with ideal transfer.
fn analog_ideal_accuracy(b: &BinaryModel, test: &Dataset) -> Result<f64, String> {
    let net = AnalogNetwork::program(b, &DeviceModel::default(), 0).map_err(|e| e.to_string())?;
    let r = evaluate_analog(
        &net,
        test,
        &AnalogConstraints::default(),
        &ideal_transfer(),
        InputEncoding::default(),
    )
    .map_err(|e| e.to_string())?;
    Ok(r.accuracy)
}

fn circuit_accuracy(b: &BinaryModel, test: &Dataset) -> Result<f64, String> {
    let net = AnalogNetwork::program(b, &DeviceModel::default(), 0).map_err(|e| e.to_string())?;
    let r = evaluate_analog(
        &net,
        test,
        &AnalogConstraints::default(),
        &TransferConfig::default(),
        InputEncoding::default(),
    )
    .map_err(|e| e.to_string())?;
    Ok(r.accuracy)
}

/// Trained float models on the MNIST subset, shared by several criteria.
struct MnistRuns {
    data: PreparedData,
    models: Vec<TrainedModel>,
}

const MNIST_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn mnist_runs() -> Result<MnistRuns, String> {
    let data = prepare(&mnist_config(), 0).map_err(|e| format!("MNIST unavailable: {e}"))?;
    let models = MNIST_SEEDS
        .iter()
        .map(|&seed| {
            let cfg = NetworkConfig {
                seed,
                ..NetworkConfig::mnist()
            };
            train(&cfg, &data.train).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MnistRuns { data, models })
}

fn criterion_1(runs: &Result<MnistRuns, String>) -> Check {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let acc = runs
        .models
        .iter()
        .map(|m| m.accuracy(&runs.data.test).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let m = mean(&acc);
    Ok(outcome(
        m >= 0.87,
        format!(
            "float MNIST mean {:.2}% (need >= 87%) over seeds {:?} [{}]; {}",
            100.0 * m,
            MNIST_SEEDS,
            pct(&acc),
            runs.data.split
        ),
    ))
}

fn criterion_2(runs: &Result<MnistRuns, String>) -> Result<(Outcome, Option<BinaryModel>), String> {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let base = derive_levels(3e3, 62e3).map_err(|e| e.to_string())?;
    let opts = BinarizeOptions::default();
    let mut float_acc = Vec::new();
    let mut analog_acc = Vec::new();
    let mut plain_acc = Vec::new();
    let mut circuit_acc = Vec::new();
    let mut first = None;
    for m in &runs.models {
        float_acc.push(m.accuracy(&runs.data.test).map_err(|e| e.to_string())?);
        let b = binarize_model(m, &base, &opts, Some(&runs.data.train)).map_err(|e| e.to_string())?;
        analog_acc.push(analog_ideal_accuracy(&b, &runs.data.test)?);
        circuit_acc.push(circuit_accuracy(&b, &runs.data.test)?);
        let plain = binarize_model(m, &base, &BinarizeOptions::plain(), None).map_err(|e| e.to_string())?;
        plain_acc.push(analog_ideal_accuracy(&plain, &runs.data.test)?);
        first.get_or_insert(b);
    }
    let (mf, ma) = (mean(&float_acc), mean(&analog_acc));
    let gap = mf - ma;
    Ok((
        outcome(
            ma >= 0.84 && gap <= 0.04,
            format!(
                "binarized ideal-analog MNIST mean {:.2}% (need >= 84%), float {:.2}%, gap {:.2} pp (need <= 4) [{}]; \
                 circuit transfer {:.2}%; uncalibrated unit levels {:.2}%",
                100.0 * ma,
                100.0 * mf,
                100.0 * gap,
                pct(&analog_acc),
                100.0 * mean(&circuit_acc),
                100.0 * mean(&plain_acc)
            ),
        ),
        first,
    ))
}

fn criterion_3() -> Check {
    let mut acc = Vec::new();
    for seed in 1..=20u64 {
        let data = prepare(&iris_config(), seed).map_err(|e| format!("IRIS unavailable: {e}"))?;
        let cfg = NetworkConfig {
            seed,
            ..NetworkConfig::iris()
        };
        let m = train(&cfg, &data.train).map_err(|e| e.to_string())?;
        if data.test.len() != 30 {
            return Ok(outcome(false, format!("test split has {} samples, expected 30", data.test.len())));
        }
        acc.push(m.accuracy(&data.test).map_err(|e| e.to_string())?);
    }
    let m10 = mean(&acc[..10]);
    let best = acc.iter().copied().fold(0.0, f64::max);
    Ok(outcome(
        m10 >= 0.93 && best == 1.0,
        format!(
            "IRIS mean over seeds 1..10 {:.2}% (need >= 93%), max over seeds 1..20 {:.2}% (need 100%) [{}]",
            100.0 * m10,
            100.0 * best,
            pct(&acc)
        ),
    ))
}

/// First seed above chance (if any) and the (digital, analog) accuracy of each seed tried.
type DeepOutcome = (Option<u64>, Vec<(f64, f64)>);

fn deep_pipeline(
    cfg: &NetworkConfig,
    data: &PreparedData,
    chance: f64,
) -> Result<DeepOutcome, String> {
    let base = derive_levels(3e3, 62e3).map_err(|e| e.to_string())?;
    let mut results = Vec::new();
    for seed in 1..=10u64 {
        let cfg = NetworkConfig { seed, ..cfg.clone() };
        let m = train(&cfg, &data.train).map_err(|e| e.to_string())?;
        let float_acc = m.accuracy(&data.test).map_err(|e| e.to_string())?;
        let b = binarize_model(&m, &base, &BinarizeOptions::default(), Some(&data.train))
            .map_err(|e| e.to_string())?;
        let analog = analog_ideal_accuracy(&b, &data.test)?;
        results.push((float_acc, analog));
        if analog > chance {
            return Ok((Some(seed), results));
        }
    }
    Ok((None, results))
}

fn criterion_4(runs: &Result<MnistRuns, String>) -> Check {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let mnist_cfg = NetworkConfig::mnist().deepened();
    let (mnist_seed, mnist_res) = deep_pipeline(&mnist_cfg, &runs.data, 0.10)?;

    let iris_cfg = NetworkConfig::iris().deepened();
    let base = derive_levels(3e3, 62e3).map_err(|e| e.to_string())?;
    let mut iris_seed = None;
    let mut iris_res = Vec::new();
    for seed in 1..=10u64 {
        let data = prepare(&iris_config(), seed).map_err(|e| format!("IRIS unavailable: {e}"))?;
        let cfg = NetworkConfig {
            seed,
            ..iris_cfg.clone()
        };
        let m = train(&cfg, &data.train).map_err(|e| e.to_string())?;
        let f = m.accuracy(&data.test).map_err(|e| e.to_string())?;
        let b = binarize_model(&m, &base, &BinarizeOptions::default(), Some(&data.train))
            .map_err(|e| e.to_string())?;
        let a = analog_ideal_accuracy(&b, &data.test)?;
        iris_res.push((f, a));
        if a > 1.0 / 3.0 {
            iris_seed = Some(seed);
            break;
        }
    }
    let show = |r: &[(f64, f64)]| {
        r.iter()
            .map(|(f, a)| format!("{:.1}/{:.1}", 100.0 * f, 100.0 * a))
            .collect::<Vec<_>>()
            .join(" ")
    };
    Ok(outcome(
        mnist_seed.is_some() && iris_seed.is_some(),
        format!(
            "6-layer MNIST {:?} first seed above 10%: {:?} (float/analog % per seed: {}); \
             6-layer IRIS {:?} first seed above 33.3%: {:?} ({})",
            mnist_cfg.layer_sizes,
            mnist_seed,
            show(&mnist_res),
            iris_cfg.layer_sizes,
            iris_seed,
            show(&iris_res)
        ),
    ))
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dev = DeviceModel::default();
    let c = AnalogConstraints::default();
    let levels = derive_levels(dev.r_on, dev.r_off).map_err(|e| e.to_string())?;
    let scale = dev.g_on() * c.v_in_max;
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..200 {
        let rows = rng.random_range(1..=64);
        let cols = rng.random_range(1..=64);
        let cells: Vec<Cell> = (0..rows * cols).map(|_| Cell::ALL[rng.random_range(0..4)]).collect();
        let b = BinaryWeightMatrix::from_cells(rows, cols, cells, levels, vec![0.0; cols])
            .map_err(|e| e.to_string())?;
        let xbar = program(&b, &dev, rng.random()).map_err(|e| e.to_string())?;
        let v: Vec<f64> = (0..rows).map(|_| rng.random_range(0.0..=c.v_in_max)).collect();
        let got = read_layer(&xbar, &v, &c).map_err(|e| e.to_string())?.currents;
        let w = b.decode();
        for (j, &current) in got.iter().enumerate() {
            let (mut dot, mut mag) = (0.0, 0.0);
            for (i, vi) in v.iter().enumerate() {
                let term = w.get(i, j) * (vi / c.v_in_max);
                dot += term;
                mag += term.abs();
            }
            let expected = scale * dot;
            let err = (current - expected).abs() / (scale * mag).max(f64::MIN_POSITIVE);
            worst = worst.max(err);
            if err > 1e-9 {
                failures += 1;
            }
        }
    }
    Ok(outcome(
        failures == 0,
        format!("200 random crossbars up to 64x64: {failures} failures, worst relative error {worst:.3e} (limit 1e-9)"),
    ))
}

/// Nearest of the four levels by distance; equal distances go to the larger
/// magnitude, and the remaining ±w_low tie at zero goes to +w_low.
fn argmin_oracle(w: f64, l: &LevelSet) -> Cell {
    let candidates = [
        (Sign::Pos, Level::High),
        (Sign::Neg, Level::High),
        (Sign::Pos, Level::Low),
        (Sign::Neg, Level::Low),
    ];
    let mut best = Cell::new(candidates[0].0, candidates[0].1);
    let mut best_d = f64::INFINITY;
    for (s, lv) in candidates {
        let d = (w - s.value() * l.magnitude(lv)).abs();
        let tie = (d - best_d).abs() <= 4.0 * f64::EPSILON * d.max(best_d);
        if best_d.is_infinite() || (d < best_d && !tie) {
            best = Cell::new(s, lv);
            best_d = d;
        }
    }
    best
}

fn criterion_6() -> Check {
    let levels = derive_levels(3e3, 62e3).map_err(|e| e.to_string())?;
    let n = 1_000_000usize;
    let (lo, hi) = (-1.5f64, 1.5f64);
    let mut points: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let t = levels.threshold();
    points.extend([0.0, -0.0, t, -t, levels.w_low, -levels.w_low, levels.w_high, -levels.w_high]);
    let mismatches = points
        .iter()
        .filter(|&&w| binarize_value(w, &levels) != argmin_oracle(w, &levels))
        .count();
    Ok(outcome(
        mismatches == 0,
        format!(
            "{} points over [{lo}, {hi}] plus ties and fixed points: {mismatches} mismatches against the argmin oracle",
            points.len()
        ),
    ))
}

fn near_kink(model: &TrainedModel, x: &[f64], margin: f64) -> bool {
    let pass = model.forward(x).expect("shapes match");
    pass.pre.iter().zip(&model.config.activations).any(|(z, a)| {
        let kinks = a.kinks(&model.config.hard_slopes);
        z.iter().any(|&zi| kinks.iter().any(|k| (zi - k).abs() < margin))
    })
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut kinds_seen = [false; 4];
    for net in 0..50 {
        let depth = 1 + net % 6;
        let sizes: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=6)).collect();
        let activations: Vec<Activation> = (0..depth)
            .map(|l| Activation::ALL[(net + l) % 4])
            .collect();
        for a in &activations {
            kinds_seen[Activation::ALL.iter().position(|b| b == a).unwrap()] = true;
        }
        let cfg = NetworkConfig {
            activations,
            hard_slopes: HardSlopes::default(),
            seed: net as u64,
            ..NetworkConfig::uniform(sizes.clone(), Activation::Sigmoid)
        };
        let mut model = TrainedModel::initialize(&cfg, &mut rng).map_err(|e| e.to_string())?;
        for w in &mut model.weights {
            for v in w.values_mut() {
                *v *= 2.0;
            }
            for b in &mut w.bias {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let label = rng.random_range(0..*sizes.last().unwrap());
        let x = (0..1000)
            .map(|_| (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>())
            .find(|x| !near_kink(&model, x, 1e-3))
            .ok_or("no kink-free sample found")?;
        let err = gradient_check(&model, &x, label, 1e-5).map_err(|e| e.to_string())?;
        worst = worst.max(err);
    }
    Ok(outcome(
        worst < 1e-4 && kinds_seen.iter().all(|&s| s),
        format!("50 random nets (1 to 6 layers, all activation kinds): max relative error {worst:.3e} (limit 1e-4)"),
    ))
}

fn criterion_8() -> Check {
    let dev = DeviceModel::default();
    let c = AnalogConstraints::default();
    let levels = derive_levels(dev.r_on, dev.r_off).map_err(|e| e.to_string())?;
    let read = |cell: Cell| -> Result<f64, String> {
        let b = BinaryWeightMatrix::from_cells(1, 1, vec![cell], levels, vec![0.0]).map_err(|e| e.to_string())?;
        let x = program(&b, &dev, 0).map_err(|e| e.to_string())?;
        column_current(&x, &[0.1], 0, &c).map_err(|e| e.to_string())
    };
    let i_on = read(Cell::new(Sign::Pos, Level::High))?;
    let i_off = read(Cell::new(Sign::Pos, Level::Low))?;
    let (want_on, want_off) = (0.1 / 3000.0, 0.1 / 62000.0);
    let e_on = (i_on - want_on).abs() / want_on;
    let e_off = (i_off - want_off).abs() / want_off;
    let bound = c.v_in_max / dev.r_on;
    Ok(outcome(
        e_on <= 1e-9 && e_off <= 1e-9 && i_on <= bound && i_off > 0.0,
        format!(
            "R_on {:.6} uA (rel err {e_on:.1e}), R_off {:.6} uA (rel err {e_off:.1e}), both within [0, {:.4} uA]",
            i_on * 1e6,
            i_off * 1e6,
            bound * 1e6
        ),
    ))
}

fn criterion_9() -> Check {
    let table: [(&str, f64, f64); 7] = [
        ("crossbar_4x10", 5e-6, 1.36),
        ("weight_control", 11.4e-6, 7.98),
        ("sigmoid", 11.4e-6, 184.0),
        ("current_buffer", 149e-6, 280.0),
        ("voltage_buffer", 451e-6, 1954.6),
        ("voltage_shift", 3.952e-3, 2581.4),
        ("approx_sigmoid_tanh", 41.19e-3, 2118.0),
    ];
    let mut mismatches = Vec::new();
    for (name, p, a_um2) in table {
        let e = cost::lookup_name(name).map_err(|e| e.to_string())?;
        if e.power != p || e.area != a_um2 * 1e-12 {
            mismatches.push(name);
        }
    }
    let covered = Component::ALL.len() == table.len();
    let report = cost::estimate_stages(&cost::reference_configuration(), &CountingPolicy::default())
        .map_err(|e| e.to_string())?;
    let cmp = ReferenceComparison::new(&report);
    Ok(outcome(
        mismatches.is_empty() && covered,
        format!("7 table entries exact (mismatches: {mismatches:?}); two 4x10 sigmoid crossbars: {cmp}"),
    ))
}

fn criterion_10() -> Check {
    let cfg = TransferConfig::default();
    let pts = sweep_curves(&cfg, 1000).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    let names = ["sigmoid_v", "sigm_1v", "sigm_0v1", "tanh_v", "approx_sigmoid_v", "approx_tanh_v"];
    let bounds = [
        (0.0, cfg.supply),
        (0.0, 1.0),
        (0.0, 0.1),
        (-cfg.rail, cfg.rail),
        (0.0, cfg.rail),
        (-cfg.rail, cfg.rail),
    ];
    for (c, name) in names.iter().enumerate() {
        let col: Vec<f64> = pts.iter().map(|p| p.values()[c + 1]).collect();
        if col.windows(2).any(|w| w[1] < w[0]) {
            problems.push(format!("{name} not monotone"));
        }
        let (lo, hi) = bounds[c];
        if col.iter().any(|&v| v < lo || v > hi) {
            problems.push(format!("{name} outside [{lo}, {hi}]"));
        }
    }
    let mut worst_complement = 0.0f64;
    let mut odd_ok = true;
    for p in &pts {
        let q = bnnsim::transfer::CurvePoint::at(-p.i_amps, &cfg);
        worst_complement = worst_complement
            .max((p.sigm_1v + q.sigm_1v - 1.0).abs())
            .max((p.sigmoid_v + q.sigmoid_v - cfg.supply).abs())
            .max((p.sigm_0v1 + q.sigm_0v1 - 0.1).abs())
            .max((p.approx_sigmoid_v + q.approx_sigmoid_v - cfg.rail).abs());
        odd_ok &= p.tanh_v == -q.tanh_v && p.approx_tanh_v == -q.approx_tanh_v;
    }
    if worst_complement > 1e-12 {
        problems.push(format!("complement error {worst_complement:.2e}"));
    }
    if !odd_ok {
        problems.push("tanh curves not odd".into());
    }
    let first = pts.first().unwrap().i_amps;
    let last = pts.last().unwrap().i_amps;
    Ok(outcome(
        problems.is_empty(),
        format!(
            "1000 points over [{:.0}, {:.0}] uA: monotone and rail-bounded, max complement error {worst_complement:.2e} (limit 1e-12); {}",
            first * 1e6,
            last * 1e6,
            if problems.is_empty() { "no violations".to_string() } else { problems.join(", ") }
        ),
    ))
}

fn criterion_11(runs: &Result<MnistRuns, String>, model: Option<&BinaryModel>) -> Check {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let model = model.ok_or("no binarized MNIST model")?;
    let start = Instant::now();
    let setup = SweepSetup {
        model,
        test: &runs.data.test,
        device: DeviceModel::default(),
        constraints: AnalogConstraints::default(),
        transfer: TransferConfig::ideal(),
        encoding: InputEncoding::default(),
    };
    let values = sweep_values(0.0, 0.5, 6).map_err(|e| e.to_string())?;
    let rows = fault_sweep(&setup, SweepParam::PSwitchFail, &values, 20, 1000).map_err(|e| e.to_string())?;
    let points = summarize(&rows, SweepParam::PSwitchFail);
    let check = check_non_increasing(&points, 1);
    let secs = start.elapsed().as_secs_f64();
    let curve = points
        .iter()
        .map(|p| format!("{}:{:.2}±{:.2}", p.value, 100.0 * p.mean, 100.0 * p.std_err))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(outcome(
        check.passed && rows.len() == 120 && secs <= 900.0,
        format!(
            "p_switch_fail sweep, 20 trials x 6 values on {} test images: mean% {curve}; inversions at {:?}; {secs:.1} s",
            runs.data.test.len(),
            check.inversions
        ),
    ))
}

fn report(n: usize, result: Check, failed: &mut Vec<usize>) {
    let o = result.unwrap_or_else(|e| outcome(false, format!("error: {e}")));
    if !o.passed {
        failed.push(n);
    }
    println!(
        "criterion {n:>2}: {}  {}",
        if o.passed { "PASS" } else { "FAIL" },
        o.detail
    );
}

fn main() {
    let start = Instant::now();
    let mut failed = Vec::new();

    report(5, criterion_5(), &mut failed);
    report(6, criterion_6(), &mut failed);
    report(7, criterion_7(), &mut failed);
    report(8, criterion_8(), &mut failed);
    report(9, criterion_9(), &mut failed);
    report(10, criterion_10(), &mut failed);
    report(3, criterion_3(), &mut failed);

    let runs = mnist_runs();
    report(1, criterion_1(&runs), &mut failed);
    let (c2, model) = match criterion_2(&runs) {
        Ok((o, m)) => (Ok(o), m),
        Err(e) => (Err(e), None),
    };
    report(2, c2, &mut failed);
    report(4, criterion_4(&runs), &mut failed);
    report(11, criterion_11(&runs, model.as_ref()), &mut failed);

    failed.sort_unstable();
    println!(
        "acceptance: {} of 11 criteria passed in {:.1} s",
        11 - failed.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
