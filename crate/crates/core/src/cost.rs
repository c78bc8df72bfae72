//! Power and on-chip area estimates built from per-component table entries.
//!
//! Entries are held in SI units (watts, square metres). Reports print power
//! in watts and area in µm².

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::mlp::NetworkConfig;

const UM2: f64 = 1e-12;

/// Cell count of the reference crossbar entry.
pub const REFERENCE_CELLS: usize = 40;

/// Published totals for the basic two-crossbar sigmoid network.
pub const PUBLISHED_TOTAL_POWER_W: f64 = 1072.4e-3;
pub const PUBLISHED_TOTAL_AREA_UM2: f64 = 4839.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    #[serde(rename = "crossbar_4x10")]
    Crossbar4x10,
    WeightControl,
    Sigmoid,
    CurrentBuffer,
    VoltageBuffer,
    VoltageShift,
    ApproxSigmoidTanh,
}

impl Component {
    pub const ALL: [Component; 7] = [
        Component::Crossbar4x10,
        Component::WeightControl,
        Component::Sigmoid,
        Component::CurrentBuffer,
        Component::VoltageBuffer,
        Component::VoltageShift,
        Component::ApproxSigmoidTanh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Crossbar4x10 => "crossbar_4x10",
            Component::WeightControl => "weight_control",
            Component::Sigmoid => "sigmoid",
            Component::CurrentBuffer => "current_buffer",
            Component::VoltageBuffer => "voltage_buffer",
            Component::VoltageShift => "voltage_shift",
            Component::ApproxSigmoidTanh => "approx_sigmoid_tanh",
        }
    }

    /// Activation circuit used to realize `kind`.
    pub fn for_activation(kind: Activation) -> Self {
        match kind {
            Activation::Sigmoid | Activation::Tanh => Component::Sigmoid,
            Activation::ApproxSigmoid | Activation::ApproxTanh => Component::ApproxSigmoidTanh,
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown component '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEntry {
    pub component: Component,
    /// Watts.
    pub power: f64,
    /// Square metres.
    pub area: f64,
}

/// Table entry for `component`.
pub fn lookup(component: Component) -> CostEntry {
    let (power, area_um2) = match component {
        Component::Crossbar4x10 => (5e-6, 1.36),
        Component::WeightControl => (11.4e-6, 7.98),
        Component::Sigmoid => (11.4e-6, 184.0),
        Component::CurrentBuffer => (149e-6, 280.0),
        Component::VoltageBuffer => (451e-6, 1954.6),
        Component::VoltageShift => (3.952e-3, 2581.4),
        Component::ApproxSigmoidTanh => (41.19e-3, 2118.0),
    };
    CostEntry {
        component,
        power,
        area: area_um2 * UM2,
    }
}

/// Table entry looked up by its snake_case name.
pub fn lookup_name(name: &str) -> Result<CostEntry> {
    Ok(lookup(name.parse()?))
}

/// Crossbar cost scaled linearly by cell count from the 4×10 entry.
pub fn scale_crossbar(rows: usize, cols: usize) -> Result<CostEntry> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config(format!("crossbar must be at least 1x1, got {rows}x{cols}")));
    }
    let reference = lookup(Component::Crossbar4x10);
    let factor = (rows * cols) as f64 / REFERENCE_CELLS as f64;
    Ok(CostEntry {
        component: Component::Crossbar4x10,
        power: reference.power * factor,
        area: reference.area * factor,
    })
}

/// How many activation chains (current buffer, activation, voltage buffer) a crossbar gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainSharing {
    /// One chain per output column.
    #[default]
    PerColumn,
    /// One chain per crossbar, time-shared by the sequential readout.
    PerCrossbar,
}

/// Where voltage-shift circuits are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftCounting {
    None,
    /// One per chain whose activation has a negative output range.
    #[default]
    PerBipolarChain,
    /// One per chain regardless of activation.
    PerChain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CountingPolicy {
    pub chains: ChainSharing,
    pub voltage_shift: ShiftCounting,
}

impl CountingPolicy {
    pub fn rule(&self) -> String {
        let chains = match self.chains {
            ChainSharing::PerColumn => "per column",
            ChainSharing::PerCrossbar => "per crossbar",
        };
        let shift = match self.voltage_shift {
            ShiftCounting::None => "no voltage shift",
            ShiftCounting::PerBipolarChain => "voltage shift per bipolar chain",
            ShiftCounting::PerChain => "voltage shift per chain",
        };
        format!(
            "crossbar per layer transition scaled by cells/{REFERENCE_CELLS}; weight control per column; \
             current buffer + activation + voltage buffer {chains}; {shift}"
        )
    }
}

/// One crossbar stage of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub rows: usize,
    pub cols: usize,
    pub activation: Activation,
}

/// Stages of `config`, optionally forcing every layer to `activation`.
pub fn transitions(config: &NetworkConfig, activation: Option<Activation>) -> Result<Vec<Transition>> {
    config.validate()?;
    Ok(config
        .layer_sizes
        .windows(2)
        .zip(&config.activations)
        .map(|(w, &a)| Transition {
            rows: w[0],
            cols: w[1],
            activation: activation.unwrap_or(a),
        })
        .collect())
}

/// Two 4×10 sigmoid crossbars.
pub fn reference_configuration() -> Vec<Transition> {
    vec![
        Transition {
            rows: 4,
            cols: 10,
            activation: Activation::Sigmoid,
        };
        2
    ]
}

/// A multiset of components. Crossbars are counted in cells.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Inventory {
    pub crossbar_cells: usize,
    pub counts: BTreeMap<Component, usize>,
    pub latency_slots: usize,
}

impl Inventory {
    pub fn add(&mut self, component: Component, count: usize) {
        if component == Component::Crossbar4x10 {
            self.crossbar_cells += count * REFERENCE_CELLS;
        } else if count > 0 {
            *self.counts.entry(component).or_default() += count;
        }
    }

    pub fn merge(&mut self, other: &Inventory) {
        self.crossbar_cells += other.crossbar_cells;
        self.latency_slots += other.latency_slots;
        for (&c, &n) in &other.counts {
            self.add(c, n);
        }
    }

    pub fn scaled(&self, factor: usize) -> Inventory {
        Inventory {
            crossbar_cells: self.crossbar_cells * factor,
            counts: self.counts.iter().map(|(&c, &n)| (c, n * factor)).collect(),
            latency_slots: self.latency_slots * factor,
        }
    }
}

/// Components instantiated for `stages` under `policy`.
pub fn inventory(stages: &[Transition], policy: &CountingPolicy) -> Result<Inventory> {
    let mut inv = Inventory::default();
    for t in stages {
        scale_crossbar(t.rows, t.cols)?;
        inv.crossbar_cells += t.rows * t.cols;
        inv.add(Component::WeightControl, t.cols);
        let chains = match policy.chains {
            ChainSharing::PerColumn => t.cols,
            ChainSharing::PerCrossbar => 1,
        };
        inv.add(Component::CurrentBuffer, chains);
        inv.add(Component::for_activation(t.activation), chains);
        inv.add(Component::VoltageBuffer, chains);
        let shifts = match policy.voltage_shift {
            ShiftCounting::None => 0,
            ShiftCounting::PerBipolarChain if !t.activation.is_bipolar() => 0,
            _ => chains,
        };
        inv.add(Component::VoltageShift, shifts);
        inv.latency_slots += t.cols;
    }
    Ok(inv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLine {
    pub component: Component,
    /// Instance count; crossbars are counted in reference-array equivalents.
    pub count: f64,
    /// Watts.
    pub power: f64,
    /// Square metres.
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub itemized: Vec<CostLine>,
    pub total_power: f64,
    pub total_area: f64,
    pub latency_slots: usize,
    pub composition_rule: String,
    pub assumptions: Vec<String>,
}

pub const LINEAR_SCALING_NOTE: &str =
    "crossbar power and area extrapolated linearly in cell count from the 4x10 reference entry";

/// Price an inventory.
pub fn price(inv: &Inventory, composition_rule: impl Into<String>) -> CostReport {
    let mut itemized = Vec::new();
    let mut assumptions = Vec::new();
    if inv.crossbar_cells > 0 {
        let reference = lookup(Component::Crossbar4x10);
        let count = inv.crossbar_cells as f64 / REFERENCE_CELLS as f64;
        itemized.push(CostLine {
            component: Component::Crossbar4x10,
            count,
            power: reference.power * count,
            area: reference.area * count,
        });
        assumptions.push(LINEAR_SCALING_NOTE.to_string());
    }
    for (&component, &n) in &inv.counts {
        let e = lookup(component);
        itemized.push(CostLine {
            component,
            count: n as f64,
            power: e.power * n as f64,
            area: e.area * n as f64,
        });
    }
    CostReport {
        total_power: itemized.iter().map(|l| l.power).sum(),
        total_area: itemized.iter().map(|l| l.area).sum(),
        itemized,
        latency_slots: inv.latency_slots,
        composition_rule: composition_rule.into(),
        assumptions,
    }
}

/// Cost of `stages` under `policy`.
pub fn estimate_stages(stages: &[Transition], policy: &CountingPolicy) -> Result<CostReport> {
    Ok(price(&inventory(stages, policy)?, policy.rule()))
}

/// Cost of the network described by `config`.
pub fn estimate(
    config: &NetworkConfig,
    activation: Option<Activation>,
    policy: &CountingPolicy,
) -> Result<CostReport> {
    estimate_stages(&transitions(config, activation)?, policy)
}

#[derive(Debug, Clone, Serialize)]
struct LineView {
    component: Component,
    count: f64,
    power_w: f64,
    area_um2: f64,
}

#[derive(Debug, Clone, Serialize)]
struct ReportView<'a> {
    itemized: Vec<LineView>,
    total_power_w: f64,
    total_area_um2: f64,
    latency_slots: usize,
    composition_rule: &'a str,
    assumptions: &'a [String],
}

impl CostReport {
    pub fn total_area_um2(&self) -> f64 {
        self.total_area / UM2
    }

    fn view(&self) -> ReportView<'_> {
        ReportView {
            itemized: self
                .itemized
                .iter()
                .map(|l| LineView {
                    component: l.component,
                    count: l.count,
                    power_w: l.power,
                    area_um2: l.area / UM2,
                })
                .collect(),
            total_power_w: self.total_power,
            total_area_um2: self.total_area_um2(),
            latency_slots: self.latency_slots,
            composition_rule: &self.composition_rule,
            assumptions: &self.assumptions,
        }
    }

    /// JSON value with power in W and area in µm².
    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self.view()).expect("report view serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<22} {:>10} {:>14} {:>14}",
            "component", "count", "power [W]", "area [um2]"
        );
        for l in &self.itemized {
            let _ = writeln!(
                s,
                "{:<22} {:>10} {:>14.6e} {:>14.3}",
                l.component.name(),
                trim_count(l.count),
                l.power,
                l.area / UM2
            );
        }
        let _ = writeln!(
            s,
            "{:<22} {:>10} {:>14.6e} {:>14.3}",
            "total",
            "",
            self.total_power,
            self.total_area_um2()
        );
        let _ = writeln!(s, "latency slots: {}", self.latency_slots);
        let _ = writeln!(s, "composition: {}", self.composition_rule);
        for a in &self.assumptions {
            let _ = writeln!(s, "assumption: {a}");
        }
        s
    }
}

fn trim_count(c: f64) -> String {
    if c.fract() == 0.0 {
        format!("{c:.0}")
    } else {
        format!("{c:.4}")
    }
}

/// Computed totals next to the published ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub computed_power_w: f64,
    pub computed_area_um2: f64,
    pub published_power_w: f64,
    pub published_area_um2: f64,
    /// (computed − published) / published.
    pub power_deviation: f64,
    pub area_deviation: f64,
}

impl ReferenceComparison {
    pub fn new(report: &CostReport) -> Self {
        let computed_area_um2 = report.total_area_um2();
        Self {
            computed_power_w: report.total_power,
            computed_area_um2,
            published_power_w: PUBLISHED_TOTAL_POWER_W,
            published_area_um2: PUBLISHED_TOTAL_AREA_UM2,
            power_deviation: (report.total_power - PUBLISHED_TOTAL_POWER_W) / PUBLISHED_TOTAL_POWER_W,
            area_deviation: (computed_area_um2 - PUBLISHED_TOTAL_AREA_UM2) / PUBLISHED_TOTAL_AREA_UM2,
        }
    }
}

impl fmt::Display for ReferenceComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "power {:.4} mW vs published {:.1} mW ({:+.2}%); area {:.1} um2 vs published {:.1} um2 ({:+.2}%)",
            self.computed_power_w * 1e3,
            self.published_power_w * 1e3,
            self.power_deviation * 100.0,
            self.computed_area_um2,
            self.published_area_um2,
            self.area_deviation * 100.0
        )
    }
}
