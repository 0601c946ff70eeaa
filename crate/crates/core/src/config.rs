//! Run configuration.
//!
//! A run is described by one TOML document. Unknown keys are rejected so a
//! misspelled physical parameter cannot silently fall back to its default.
//! Quantities accept unit suffixes (see [`crate::units`]); the normalized
//! echo writes everything back in SI.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ExtentConvention, NodeId, PlexusGraph, DEFAULT_CELL_SIZE_UM};
use crate::memristor::MemristorParams;
use crate::neuron::NeuronParams;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(with = "crate::units::seconds", default = "default_dt")]
    pub dt: f64,
    #[serde(with = "crate::units::seconds")]
    pub t_end: f64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub memristor: MemristorParams,
    /// Parameters shared by every neuron unless overridden per neuron.
    #[serde(default)]
    pub neuron: NeuronParams,
    /// Explicitly placed neurons.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub neurons: Vec<NeuronPlacement>,
    /// Seeded random placement of additional neurons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<RandomLayout>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<InputSpec>,
    #[serde(default)]
    pub record: RecordOptions,
}

fn default_dt() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    #[serde(with = "crate::units::micrometers")]
    pub cell_size: f64,
    pub diagonal_fraction: f64,
    pub ohmic_fraction: f64,
    pub g_init: InitialConductance,
    pub extent: ExtentConvention,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            width: 41,
            height: 41,
            cell_size: DEFAULT_CELL_SIZE_UM,
            diagonal_fraction: 0.0,
            ohmic_fraction: 0.0,
            g_init: InitialConductance::Constant(0.0),
            extent: ExtentConvention::NodePitch,
        }
    }
}

/// Initial normalized conductance of memristive edges: a constant or a
/// uniform draw in `[low, high]` per edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialConductance {
    Constant(f64),
    Uniform { low: f64, high: f64 },
}

/// A node given either by index or by `[col, row]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeRef {
    Index(usize),
    Position([usize; 2]),
}

impl NodeRef {
    pub fn resolve(&self, graph: &PlexusGraph) -> Result<NodeId> {
        match *self {
            NodeRef::Index(i) if i < graph.node_count() => Ok(i),
            NodeRef::Index(i) => Err(Error::invalid_arg(format!("node {i} outside grid"))),
            NodeRef::Position([c, r]) => graph.node_at(c, r),
        }
    }
}

/// An explicitly placed neuron, optionally overriding the tunable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronPlacement {
    #[serde(rename = "in")]
    pub in_node: NodeRef,
    #[serde(rename = "out")]
    pub out_node: NodeRef,
    #[serde(default, with = "crate::units::seconds::option", skip_serializing_if = "Option::is_none")]
    pub tau_m: Option<f64>,
    #[serde(default, with = "crate::units::volts::option", skip_serializing_if = "Option::is_none")]
    pub v_th: Option<f64>,
    #[serde(default, with = "crate::units::seconds::option", skip_serializing_if = "Option::is_none")]
    pub t_p: Option<f64>,
    #[serde(default, with = "crate::units::seconds::option", skip_serializing_if = "Option::is_none")]
    pub t_n: Option<f64>,
    #[serde(default, with = "crate::units::volts::option", skip_serializing_if = "Option::is_none")]
    pub a_p: Option<f64>,
    #[serde(default, with = "crate::units::volts::option", skip_serializing_if = "Option::is_none")]
    pub a_n: Option<f64>,
}

impl NeuronPlacement {
    pub fn new(in_node: NodeRef, out_node: NodeRef) -> Self {
        NeuronPlacement {
            in_node,
            out_node,
            tau_m: None,
            v_th: None,
            t_p: None,
            t_n: None,
            a_p: None,
            a_n: None,
        }
    }

    /// Shared parameters with this neuron's overrides applied.
    pub fn params(&self, base: &NeuronParams) -> NeuronParams {
        NeuronParams {
            tau_m: self.tau_m.unwrap_or(base.tau_m),
            v_th: self.v_th.unwrap_or(base.v_th),
            t_p: self.t_p.unwrap_or(base.t_p),
            t_n: self.t_n.unwrap_or(base.t_n),
            a_p: self.a_p.unwrap_or(base.a_p),
            a_n: self.a_n.unwrap_or(base.a_n),
            c_m_over_dt: base.c_m_over_dt,
        }
    }
}

/// Rectangle of nodes: lower-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub col: usize,
    pub row: usize,
    pub width: usize,
    pub height: usize,
}

impl Region {
    pub fn contains(&self, col: usize, row: usize) -> bool {
        col >= self.col && col < self.col + self.width && row >= self.row && row < self.row + self.height
    }

    pub fn fits(&self, graph: &PlexusGraph) -> bool {
        self.width > 0
            && self.height > 0
            && self.col + self.width <= graph.width()
            && self.row + self.height <= graph.height()
    }

    pub fn node_count(&self) -> usize {
        self.width * self.height
    }
}

/// Uniformly random, non-colliding neuron placement. Each neuron takes a
/// random in-electrode node and puts its out-electrode `separation` nodes
/// to its right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomLayout {
    pub count: usize,
    /// Nodes in this region receive no neuron electrodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclude: Option<Region>,
    /// Minimum Chebyshev distance, in nodes, between electrodes of different neurons.
    #[serde(default = "default_spacing")]
    pub min_spacing: usize,
    #[serde(default = "default_separation")]
    pub separation: usize,
}

fn default_spacing() -> usize {
    1
}

fn default_separation() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub node: NodeRef,
    #[serde(with = "crate::units::volts")]
    pub amplitude: f64,
    #[serde(with = "crate::units::seconds", default)]
    pub t_start: f64,
    #[serde(with = "crate::units::seconds")]
    pub t_stop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordOptions {
    /// Firing-rate window; 50 steps when absent.
    #[serde(with = "crate::units::seconds::option", skip_serializing_if = "Option::is_none")]
    pub rate_window: Option<f64>,
    /// Full-field snapshot cadence in steps; 0 disables snapshots.
    pub snapshot_every: u64,
    /// Record the voltage each neuron applies to the plexus at every step.
    pub applied_voltage: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        RecordOptions {
            rate_window: None,
            snapshot_every: 100,
            applied_voltage: true,
        }
    }
}

/// Input electrode after node resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedInput {
    pub node: NodeId,
    pub amplitude: f64,
    pub t_start: f64,
    pub t_stop: f64,
}

impl ResolvedInput {
    /// Whether the input drives the plexus during the step starting at `t`.
    pub fn active_at(&self, t: f64, dt: f64) -> bool {
        let eps = 1e-9 * dt;
        t + eps >= self.t_start && t + eps < self.t_stop
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedNeuron {
    pub in_node: NodeId,
    pub out_node: NodeId,
    pub params: NeuronParams,
}

/// Everything a simulation needs, with all node references and random
/// choices fixed.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub graph: PlexusGraph,
    pub neurons: Vec<ResolvedNeuron>,
    pub inputs: Vec<ResolvedInput>,
    pub steps: u64,
    pub rate_window: f64,
}

impl SimConfig {
    /// Parses a TOML document. Parse errors are reported as config errors
    /// naming the offending key where the parser knows it.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(describe_toml_error(&e, text), e.message().to_string()))
    }

    /// Parses, applying `key=value` overrides (dotted paths) on top of the document.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<document>", e.message().to_string()))?;
        for ov in overrides {
            apply_override(&mut doc, ov)?;
        }
        let text = toml::to_string(&doc).map_err(|e| Error::config("<overrides>", e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Number of whole steps covering `[0, t_end]`.
    pub fn step_count(&self) -> u64 {
        (self.t_end / self.dt + 1e-9).floor() as u64
    }

    pub fn build_graph(&self) -> Result<PlexusGraph> {
        let g = &self.grid;
        PlexusGraph::build_grid_with(g.width, g.height, g.cell_size, g.diagonal_fraction, self.seed, g.extent)
            .map_err(|e| Error::config("grid", e.to_string()))
    }

    /// Full validation: ranges, node references, electrode collisions and input windows.
    pub fn resolve(&self) -> Result<Resolved> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "dt must be positive"));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(Error::config("t_end", "t_end must be at least dt"));
        }
        let grid = &self.grid;
        if grid.width < 2 || grid.height < 2 {
            return Err(Error::config("grid.width", "grid must be at least 2x2"));
        }
        if !(0.0..=1.0).contains(&grid.diagonal_fraction) {
            return Err(Error::config("grid.diagonal_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&grid.ohmic_fraction) {
            return Err(Error::config("grid.ohmic_fraction", "must lie in [0, 1]"));
        }
        match grid.g_init {
            InitialConductance::Constant(g) if !(0.0..=1.0).contains(&g) => {
                return Err(Error::config("grid.g_init", "must lie in [0, 1]"));
            }
            InitialConductance::Uniform { low, high } if !(0.0 <= low && low <= high && high <= 1.0) => {
                return Err(Error::config("grid.g_init", "need 0 <= low <= high <= 1"));
            }
            _ => {}
        }
        self.memristor.validate()?;
        self.neuron.validate()?;
        if let Some(w) = self.record.rate_window {
            if !(w > 0.0) {
                return Err(Error::config("record.rate_window", "window must be positive"));
            }
        }

        let graph = self.build_graph()?;
        let mut occupied: HashSet<NodeId> = HashSet::new();
        let claim = |node: NodeId, field: &str, occupied: &mut HashSet<NodeId>| -> Result<()> {
            if occupied.insert(node) {
                Ok(())
            } else {
                let (col, row) = graph.position(node);
                Err(Error::config(field, format!("two electrodes share node {node} at ({col}, {row})")))
            }
        };

        let mut neurons = Vec::new();
        for (k, placement) in self.neurons.iter().enumerate() {
            let field = format!("neurons[{k}]");
            let in_node = placement.in_node.resolve(&graph).map_err(|e| Error::config(format!("{field}.in"), e.to_string()))?;
            let out_node =
                placement.out_node.resolve(&graph).map_err(|e| Error::config(format!("{field}.out"), e.to_string()))?;
            claim(in_node, &format!("{field}.in"), &mut occupied)?;
            claim(out_node, &format!("{field}.out"), &mut occupied)?;
            let params = placement.params(&self.neuron);
            params.validate().map_err(|e| Error::config(field.clone(), e.to_string()))?;
            neurons.push(ResolvedNeuron { in_node, out_node, params });
        }

        let mut inputs: Vec<ResolvedInput> = Vec::new();
        let mut input_nodes: HashSet<NodeId> = HashSet::new();
        for (k, spec) in self.inputs.iter().enumerate() {
            let field = format!("inputs[{k}]");
            let node = spec.node.resolve(&graph).map_err(|e| Error::config(format!("{field}.node"), e.to_string()))?;
            if !spec.amplitude.is_finite() {
                return Err(Error::config(format!("{field}.amplitude"), "must be finite"));
            }
            let eps = 1e-9 * self.dt;
            if !(spec.t_start >= 0.0 && spec.t_start < spec.t_stop && spec.t_stop <= self.t_end + eps) {
                return Err(Error::config(
                    format!("{field}.t_stop"),
                    "input window must satisfy 0 <= t_start < t_stop <= t_end",
                ));
            }
            // one node may host several pulses as long as they do not overlap
            if input_nodes.contains(&node) {
                if inputs
                    .iter()
                    .any(|o| o.node == node && o.t_start < spec.t_stop && spec.t_start < o.t_stop)
                {
                    return Err(Error::config(field, format!("overlapping input windows on node {node}")));
                }
            } else {
                claim(node, &format!("{field}.node"), &mut occupied)?;
                input_nodes.insert(node);
            }
            inputs.push(ResolvedInput {
                node,
                amplitude: spec.amplitude,
                t_start: spec.t_start,
                t_stop: spec.t_stop,
            });
        }

        if let Some(layout) = &self.layout {
            neurons.extend(random_layout(layout, &graph, &self.neuron, self.seed, &mut occupied)?);
        }

        Ok(Resolved {
            graph,
            neurons,
            inputs,
            steps: self.step_count(),
            rate_window: self.record.rate_window.unwrap_or(50.0 * self.dt),
        })
    }
}

fn random_layout(
    layout: &RandomLayout,
    graph: &PlexusGraph,
    params: &NeuronParams,
    seed: u64,
    occupied: &mut HashSet<NodeId>,
) -> Result<Vec<ResolvedNeuron>> {
    if let Some(region) = &layout.exclude {
        if !region.fits(graph) {
            return Err(Error::config("layout.exclude", "region does not fit in the grid"));
        }
    }
    let mut rng = rng::stream(seed, Stream::NeuronLayout);
    let spacing = layout.min_spacing;
    let sep = layout.separation;
    if sep == 0 || sep >= graph.width() {
        return Err(Error::config("layout.separation", "must be in 1..grid width"));
    }
    let mut taken: Vec<(usize, usize)> = occupied.iter().map(|&n| graph.position(n)).collect();
    let mut placed = Vec::with_capacity(layout.count);
    let max_attempts = 1000 * layout.count.max(1) + 10_000;
    let mut attempts = 0;
    while placed.len() < layout.count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::config(
                "layout.count",
                format!("could only place {} of {} neurons without collisions", placed.len(), layout.count),
            ));
        }
        let col = rng.gen_range(0..graph.width() - sep);
        let row = rng.gen_range(0..graph.height());
        let cells = [(col, row), (col + sep, row)];
        if let Some(region) = &layout.exclude {
            if cells.iter().any(|&(c, r)| region.contains(c, r)) {
                continue;
            }
        }
        let clash = cells.iter().any(|&(c, r)| {
            taken
                .iter()
                .any(|&(tc, tr)| c.abs_diff(tc).max(r.abs_diff(tr)) < spacing.max(1))
        });
        if clash {
            continue;
        }
        let in_node = graph.node_at(col, row)?;
        let out_node = graph.node_at(col + sep, row)?;
        occupied.insert(in_node);
        occupied.insert(out_node);
        taken.extend_from_slice(&cells);
        placed.push(ResolvedNeuron {
            in_node,
            out_node,
            params: *params,
        });
    }
    Ok(placed)
}

fn describe_toml_error(e: &toml::de::Error, text: &str) -> String {
    // locate the key on the line the parser points at, if any
    if let Some(span) = e.span() {
        let start = text[..span.start.min(text.len())].rfind('\n').map(|i| i + 1).unwrap_or(0);
        let line = text[start..].lines().next().unwrap_or("").trim();
        if let Some((key, _)) = line.split_once('=') {
            return key.trim().to_string();
        }
        if !line.is_empty() {
            return line.to_string();
        }
    }
    "<document>".to_string()
}

fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
