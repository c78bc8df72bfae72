use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use bnnsim::binarize::{binarize_model, BinaryModel};
use bnnsim::cost::{self, ReferenceComparison};
use bnnsim::crossbar::AnalogNetwork;
use bnnsim::eval::{
    evaluate_analog_traced, evaluate_digital, fault_sweep, summarize, sweep_csv, sweep_values,
    CurrentRange, EvalReport, SweepParam, SweepSetup,
};
use bnnsim::experiment::{prepare, ExperimentConfig, PreparedData};
use bnnsim::mlp::{train, TrainedModel};
use bnnsim::transfer::{export_curves, export_transient};
use bnnsim::{Error, Result};

use crate::{Cli, Command, EvalMode, GlobalArgs};

const DEFAULT_MODEL: &str = "model.json";
const DEFAULT_BINARY: &str = "binary_model.json";

struct Ctx {
    cfg: ExperimentConfig,
    seed: Option<u64>,
    out: Option<PathBuf>,
    quiet: bool,
}

impl Ctx {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    fn require_seed(&self, command: &str) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config(format!("{command} needs an explicit --seed")))
    }

    fn output(&self, configured: Option<&PathBuf>, default: &str) -> PathBuf {
        self.out
            .clone()
            .or_else(|| configured.cloned())
            .unwrap_or_else(|| PathBuf::from(default))
    }
}

fn resolve_config(g: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&g.config, &g.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.network.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    if cli.global.print_config {
        return write_text(Path::new("-"), &format!("{}\n", cfg.to_json()?));
    }
    let ctx = Ctx {
        cfg,
        seed: cli.global.seed,
        out: cli.global.out.clone(),
        quiet: cli.global.quiet,
    };
    match cli.command {
        None => Err(Error::Config(
            "no command given (expected train, binarize, eval, sweep, cost or curves)".into(),
        )),
        Some(Command::Train) => cmd_train(&ctx),
        Some(Command::Binarize { model }) => cmd_binarize(&ctx, model),
        Some(Command::Eval { model, mode }) => cmd_eval(&ctx, model, mode),
        Some(Command::Sweep {
            model,
            param,
            from,
            to,
            steps,
            trials,
        }) => cmd_sweep(&ctx, model, param, from, to, steps, trials),
        Some(Command::Cost {
            activation,
            reference,
        }) => cmd_cost(&ctx, activation, reference),
        Some(Command::Curves {
            points,
            step_current,
            t_end,
        }) => cmd_curves(&ctx, points, step_current, t_end),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if path == Path::new("-") {
        let mut out = std::io::stdout().lock();
        return out
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io { path: path.into(), source: e });
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.into(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

/// Path of the JSON record written next to a CSV artifact.
fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn load_data(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedData> {
    prepare(&cfg.dataset, seed)
}

fn cmd_train(ctx: &Ctx) -> Result<()> {
    let seed = ctx.require_seed("train")?;
    let data = load_data(&ctx.cfg, seed)?;
    let model = train(&ctx.cfg.network, &data.train)?;
    let train_acc = model.accuracy(&data.train)?;
    let test_acc = model.accuracy(&data.test)?;
    let path = ctx.output(ctx.cfg.outputs.model.as_ref(), DEFAULT_MODEL);
    let mut text = model.to_json()?;
    text.push('\n');
    write_text(&path, &text)?;
    let h = &model.training_loss_history;
    ctx.say(format!(
        "trained {:?} for {} epochs (seed {seed}): loss {:.5} -> {:.5}, train accuracy {:.4}, test accuracy {:.4}; wrote {}",
        model.config.layer_sizes,
        model.config.epochs,
        h.first().copied().unwrap_or(f64::NAN),
        h.last().copied().unwrap_or(f64::NAN),
        train_acc,
        test_acc,
        path.display()
    ));
    Ok(())
}

fn cmd_binarize(ctx: &Ctx, model: Option<PathBuf>) -> Result<()> {
    let model_path = model
        .or_else(|| ctx.cfg.outputs.model.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_MODEL));
    let float = TrainedModel::from_json(&read_text(&model_path)?)?;
    let seed = ctx.seed.unwrap_or(float.config.seed);
    let data = load_data(&ctx.cfg, seed)?;
    let binary = binarize_model(&float, &ctx.cfg.base_levels()?, &ctx.cfg.binarize, Some(&data.train))?;
    let digital = evaluate_digital(&binary, &data.test)?;
    let path = ctx.output(ctx.cfg.outputs.binary_model.as_ref(), DEFAULT_BINARY);
    let mut text = binary.to_json()?;
    text.push('\n');
    write_text(&path, &text)?;
    let levels: Vec<String> = binary
        .layers
        .iter()
        .map(|l| format!("{:.4}/{:.5}", l.level_set.w_high, l.level_set.w_low))
        .collect();
    ctx.say(format!(
        "binarized {} (levels per layer {}; biases {}); digital test accuracy {:.4}; wrote {}",
        model_path.display(),
        levels.join(", "),
        if binary.options.binarize_biases { "quantized" } else { "real" },
        digital.accuracy,
        path.display()
    ));
    Ok(())
}

fn load_binary(ctx: &Ctx, model: Option<PathBuf>) -> Result<(PathBuf, BinaryModel)> {
    let path = model
        .or_else(|| ctx.cfg.outputs.binary_model.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_BINARY));
    let b = BinaryModel::from_json(&read_text(&path)?)?;
    Ok((path, b))
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    command: &'static str,
    mode: &'static str,
    seed: u64,
    model: String,
    split: &'a str,
    #[serde(flatten)]
    report: &'a EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    current_ranges: Option<Vec<CurrentRange>>,
    config: &'a ExperimentConfig,
}

fn cmd_eval(ctx: &Ctx, model: Option<PathBuf>, mode: EvalMode) -> Result<()> {
    let (path, binary) = load_binary(ctx, model)?;
    let seed = ctx.seed.unwrap_or(binary.seed);
    let data = load_data(&ctx.cfg, seed)?;
    let (report, ranges, mode_name) = match mode {
        EvalMode::Digital => (evaluate_digital(&binary, &data.test)?, None, "digital"),
        EvalMode::Analog => {
            let net = AnalogNetwork::program(&binary, &ctx.cfg.device, seed)?;
            let (r, ranges) = evaluate_analog_traced(
                &net,
                &data.test,
                &ctx.cfg.constraints,
                &ctx.cfg.transfer,
                ctx.cfg.encoding,
            )?;
            (r, Some(ranges), "analog")
        }
    };
    let mut cfg = ctx.cfg.clone();
    cfg.network.seed = seed;
    let out = EvalOutput {
        command: "eval",
        mode: mode_name,
        seed,
        model: path.display().to_string(),
        split: &data.split,
        report: &report,
        current_ranges: ranges,
        config: &cfg,
    };
    let out_path = ctx.output(ctx.cfg.outputs.report.as_ref(), "eval_report.json");
    write_json(&out_path, &out)?;
    if !ctx.quiet {
        print!("{}", report.summary_table());
    }
    ctx.say(format!(
        "{mode_name} accuracy {:.4} on {} test samples (seed {seed}); wrote {}",
        report.accuracy,
        report.samples,
        out_path.display()
    ));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    ctx: &Ctx,
    model: Option<PathBuf>,
    param: Option<String>,
    from: Option<f64>,
    to: Option<f64>,
    steps: Option<usize>,
    trials: Option<usize>,
) -> Result<()> {
    let seed = ctx.require_seed("sweep")?;
    let s = &ctx.cfg.sweep;
    let param: SweepParam = param.as_deref().unwrap_or(&s.param).parse()?;
    let values = sweep_values(from.unwrap_or(s.from), to.unwrap_or(s.to), steps.unwrap_or(s.steps))?;
    let trials = trials.unwrap_or(ctx.cfg.trials);
    let (path, binary) = load_binary(ctx, model)?;
    let data = load_data(&ctx.cfg, binary.seed)?;
    let setup = SweepSetup {
        model: &binary,
        test: &data.test,
        device: ctx.cfg.device,
        constraints: ctx.cfg.constraints,
        transfer: ctx.cfg.transfer,
        encoding: ctx.cfg.encoding,
    };
    let rows = fault_sweep(&setup, param, &values, trials, seed)?;
    let out_path = ctx.output(None, "sweep.csv");
    write_text(&out_path, &sweep_csv(&rows))?;

    let points = summarize(&rows, param);
    if out_path != Path::new("-") {
        let mut cfg = ctx.cfg.clone();
        cfg.trials = trials;
        cfg.sweep.param = param.name().into();
        cfg.sweep.from = values[0];
        cfg.sweep.to = *values.last().unwrap();
        cfg.sweep.steps = values.len();
        write_json(
            &sidecar(&out_path),
            &json!({
                "command": "sweep",
                "seed": seed,
                "trial_seeds": format!("{seed} + trial index"),
                "model": path.display().to_string(),
                "split": data.split,
                "param": param.name(),
                "summary": points,
                "config": cfg,
            }),
        )?;
    }
    let curve: Vec<String> = points
        .iter()
        .map(|p| format!("{}={:.4}", p.value, p.mean))
        .collect();
    ctx.say(format!(
        "swept {} over {} values x {trials} trials ({} rows); mean accuracy {}; wrote {}",
        param.name(),
        values.len(),
        rows.len(),
        curve.join(" "),
        out_path.display()
    ));
    Ok(())
}

fn cmd_cost(ctx: &Ctx, activation: Option<bnnsim::Activation>, reference: bool) -> Result<()> {
    let report = if reference {
        cost::estimate_stages(&cost::reference_configuration(), &ctx.cfg.cost)?
    } else {
        cost::estimate(&ctx.cfg.network, activation, &ctx.cfg.cost)?
    };
    let reference_report = cost::estimate_stages(&cost::reference_configuration(), &ctx.cfg.cost)?;
    let comparison = ReferenceComparison::new(&reference_report);
    let out_path = ctx.output(None, "cost_report.json");
    write_json(
        &out_path,
        &json!({
            "command": "cost",
            "seed": ctx.cfg.network.seed,
            "network": if reference { "two 4x10 sigmoid crossbars" } else { "configured network" },
            "activation_override": activation.map(|a| a.name()),
            "report": report.to_value(),
            "reference_comparison": comparison,
            "config": ctx.cfg,
        }),
    )?;
    if !ctx.quiet {
        print!("{}", report.to_table());
        println!("reference design: {comparison}");
    }
    ctx.say(format!(
        "total power {:.6e} W, area {:.1} um2, {} readout slots; wrote {}",
        report.total_power,
        report.total_area_um2(),
        report.latency_slots,
        out_path.display()
    ));
    Ok(())
}

fn cmd_curves(ctx: &Ctx, points: usize, step_current: Option<f64>, t_end: Option<f64>) -> Result<()> {
    let t = &ctx.cfg.transfer;
    let (csv, kind) = match step_current {
        None => (export_curves(t, points)?, "DC sweep"),
        Some(i) => {
            let end = match t_end {
                Some(e) => e,
                None if t.tau > 0.0 => 10.0 * t.tau,
                None => {
                    return Err(Error::Config(
                        "step response needs --t-end when transfer.tau is 0".into(),
                    ))
                }
            };
            (export_transient(t, i, end, points)?, "step response")
        }
    };
    let out_path = ctx.output(None, "curves.csv");
    write_text(&out_path, &csv)?;
    if out_path != Path::new("-") {
        write_json(
            &sidecar(&out_path),
            &json!({
                "command": "curves",
                "kind": kind,
                "points": points,
                "step_current": step_current,
                "seed": ctx.cfg.network.seed,
                "config": ctx.cfg,
            }),
        )?;
    }
    ctx.say(format!("{kind}: {points} points; wrote {}", out_path.display()));
    Ok(())
}
