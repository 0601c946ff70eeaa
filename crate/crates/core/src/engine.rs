//! Time stepping of the coupled plexus/neuron system.
//!
//! Each step runs, in order:
//!
//! 1. neurons that crossed threshold at the end of the previous step are
//!    already primed and apply their pulse during this step;
//! 2. the voltage constraints of pulsing out-electrodes, active inputs and
//!    grounded in-electrodes are collected and the nodal system is solved;
//! 3. every edge conductance is advanced using the solved potential
//!    difference across it, held for the whole step;
//! 4. integrating neurons integrate the current drained by their
//!    in-electrode, pulsing neurons advance their pulse clock.
//!
//! A spike detected in step `k` is stamped at the end of that step and its
//! pulse is first applied in step `k + 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{InitialConductance, Resolved, SimConfig};
use crate::error::{Error, Result};
use crate::graph::PlexusGraph;
use crate::memristor::{EdgeModel, EdgeState, MemristorParams};
use crate::mna::{MnaSolution, MnaSolver, VoltageConstraint};
use crate::neuron::{NeuronParams, NeuronState};
use crate::rng::{self, Stream};
use crate::trace::{Recorder, RunInfo, StepView, TraceStore};

/// Mutable simulation state. Together with the config it fully determines
/// the continuation of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub step: u64,
    pub edges: Vec<EdgeState>,
    pub neurons: Vec<NeuronState>,
}

/// What happened during one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: u64,
    pub t_start: f64,
    pub t_end: f64,
    /// Neurons that reached threshold in this step.
    pub spiked: Vec<usize>,
    /// Voltage each neuron applied to the plexus during the step.
    pub applied: Vec<f64>,
    /// Current drained by each neuron's in-electrode, A.
    pub in_currents: Vec<f64>,
    /// Current into each input electrode, A; zero when inactive.
    pub input_currents: Vec<f64>,
    /// Mean normalized conductance of memristive edges after the update.
    pub mean_g: f64,
}

pub struct Simulation<M: EdgeModel = MemristorParams> {
    config: SimConfig,
    resolved: Resolved,
    model: M,
    solver: MnaSolver,
    state: SimState,
    constraints: Vec<VoltageConstraint>,
    conductances: Vec<f64>,
    solution: MnaSolution,
}

/// Source ids: neuron `k` owns `2k` (in) and `2k + 1` (out); input `j` owns `2N + j`.
fn input_source_id(neurons: usize, input: usize) -> u32 {
    (2 * neurons + input) as u32
}

impl Simulation<MemristorParams> {
    pub fn new(config: &SimConfig) -> Result<Self> {
        Self::with_model(config, config.memristor)
    }

    /// Rebuilds a simulation around a previously captured state.
    pub fn from_state(config: &SimConfig, state: SimState) -> Result<Self> {
        let mut sim = Self::new(config)?;
        sim.set_state(state)?;
        Ok(sim)
    }
}

impl<M: EdgeModel> Simulation<M> {
    pub fn with_model(config: &SimConfig, model: M) -> Result<Self> {
        let resolved = config.resolve()?;
        let graph = &resolved.graph;

        let mut ohmic_rng = rng::stream(config.seed, Stream::OhmicEdges);
        let mut g_rng = rng::stream(config.seed, Stream::InitialConductance);
        let mut edges = Vec::with_capacity(graph.edge_count());
        for _ in 0..graph.edge_count() {
            let ohmic = ohmic_rng.gen::<f64>() < config.grid.ohmic_fraction;
            let g = match config.grid.g_init {
                InitialConductance::Constant(g) => g,
                InitialConductance::Uniform { low, high } => low + (high - low) * g_rng.gen::<f64>(),
            };
            edges.push(if ohmic { EdgeState::ohmic() } else { EdgeState::memristive(g)? });
        }
        let neurons = resolved
            .neurons
            .iter()
            .map(|n| NeuronState::new(n.in_node, n.out_node))
            .collect::<Result<Vec<_>>>()?;

        let solver = MnaSolver::for_graph(graph);
        let solution = MnaSolution::zeros(graph.node_count(), 0);
        Ok(Simulation {
            config: config.clone(),
            model,
            solver,
            state: SimState { step: 0, edges, neurons },
            constraints: Vec::new(),
            conductances: vec![0.0; graph.edge_count()],
            solution,
            resolved,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn resolved(&self) -> &Resolved {
        &self.resolved
    }

    pub fn graph(&self) -> &PlexusGraph {
        &self.resolved.graph
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    /// Mutable access for instrumented tests and scenario setup.
    pub fn state_mut(&mut self) -> &mut SimState {
        &mut self.state
    }

    pub fn set_state(&mut self, state: SimState) -> Result<()> {
        if state.edges.len() != self.state.edges.len() || state.neurons.len() != self.state.neurons.len() {
            return Err(Error::InvalidState("state does not match the configured topology".into()));
        }
        self.state = state;
        Ok(())
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn neuron_params(&self, k: usize) -> &NeuronParams {
        &self.resolved.neurons[k].params
    }

    /// Solution of the most recent step's nodal system.
    pub fn solution(&self) -> &MnaSolution {
        &self.solution
    }

    /// Edge conductances, S, that entered the most recent step's solve.
    pub fn solved_conductances(&self) -> &[f64] {
        &self.conductances
    }

    /// Constraints applied in the most recent step.
    pub fn constraints(&self) -> &[VoltageConstraint] {
        &self.constraints
    }

    pub fn time(&self) -> f64 {
        self.state.step as f64 * self.config.dt
    }

    pub fn total_steps(&self) -> u64 {
        self.resolved.steps
    }

    pub fn is_finished(&self) -> bool {
        self.state.step >= self.resolved.steps
    }

    pub fn mean_g(&self) -> f64 {
        mean_memristive_g(&self.state.edges)
    }

    /// Edge conductances in siemens for the current state.
    pub fn edge_conductances(&self) -> Result<Vec<f64>> {
        self.state.edges.iter().map(|e| e.conductance(&self.model)).collect()
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        let step = self.state.step;
        self.step_inner().map_err(|e| Error::AtStep {
            step,
            source: Box::new(e),
        })
    }

    fn step_inner(&mut self) -> Result<StepOutcome> {
        let dt = self.config.dt;
        let k = self.state.step;
        let t_start = k as f64 * dt;
        let t_end = (k + 1) as f64 * dt;
        let n_neurons = self.state.neurons.len();

        // (1)+(2): constraints from primed pulses, active inputs and grounds
        self.constraints.clear();
        for (i, neuron) in self.state.neurons.iter().enumerate() {
            neuron.push_constraints(
                &self.resolved.neurons[i].params,
                2 * i as u32,
                2 * i as u32 + 1,
                &mut self.constraints,
            );
        }
        let mut input_slot = vec![usize::MAX; self.resolved.inputs.len()];
        for (j, input) in self.resolved.inputs.iter().enumerate() {
            if input.active_at(t_start, dt) {
                input_slot[j] = self.constraints.len();
                self.constraints
                    .push(VoltageConstraint::new(input.node, input.amplitude, input_source_id(n_neurons, j)));
            }
        }
        for (slot, edge) in self.conductances.iter_mut().zip(&self.state.edges) {
            *slot = edge.conductance(&self.model)?;
        }
        self.solution = self.solver.solve(&self.conductances, &self.constraints)?;

        let mut in_currents = vec![0.0; n_neurons];
        for (c, &current) in self.constraints.iter().zip(&self.solution.source_currents) {
            let id = c.source_id as usize;
            if id < 2 * n_neurons && id.is_multiple_of(2) {
                in_currents[id / 2] = current;
            }
        }
        let input_currents: Vec<f64> = input_slot
            .iter()
            .map(|&s| if s == usize::MAX { 0.0 } else { self.solution.source_currents[s] })
            .collect();

        // (3): conductances from the frozen voltage field
        let v = &self.solution.node_voltages;
        for (edge, e) in self.state.edges.iter_mut().zip(self.resolved.graph.edges()) {
            edge.advance(&self.model, v[e.node_a] - v[e.node_b], dt)?;
        }

        // (4): membranes
        let applied: Vec<f64> = self
            .state
            .neurons
            .iter()
            .enumerate()
            .map(|(i, n)| n.applied_voltage(&self.resolved.neurons[i].params))
            .collect();
        let mut spiked = Vec::new();
        for (i, neuron) in self.state.neurons.iter_mut().enumerate() {
            let params = &self.resolved.neurons[i].params;
            if neuron.is_integrating() {
                if neuron.step_membrane(in_currents[i], dt, t_end, params)? {
                    spiked.push(i);
                }
            } else {
                neuron.advance_pulse(dt, params)?;
            }
        }

        self.state.step += 1;
        Ok(StepOutcome {
            step: k,
            t_start,
            t_end,
            spiked,
            applied,
            in_currents,
            input_currents,
            mean_g: mean_memristive_g(&self.state.edges),
        })
    }

    /// Steps to the configured end, feeding every step to `recorder`.
    pub fn run_to_end(&mut self, recorder: &mut dyn Recorder) -> Result<()> {
        recorder.begin(&RunInfo {
            neurons: self.state.neurons.len(),
            dt: self.config.dt,
            steps: self.resolved.steps,
            rate_window: self.resolved.rate_window,
            initial_mean_g: self.mean_g(),
            t_start: self.time(),
        })?;
        while !self.is_finished() {
            let outcome = match self.step() {
                Ok(o) => o,
                Err(e) => {
                    recorder.finish(Some(&e))?;
                    return Err(e);
                }
            };
            recorder.record(&StepView {
                outcome: &outcome,
                node_voltages: &self.solution.node_voltages,
                edges: &self.state.edges,
            })?;
        }
        recorder.finish(None)
    }
}

pub fn mean_memristive_g(edges: &[EdgeState]) -> f64 {
    let (sum, count) = edges
        .iter()
        .filter(|e| !e.ohmic)
        .fold((0.0, 0usize), |(s, c), e| (s + e.g, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Runs a configuration to completion and returns the in-memory traces.
pub fn run(config: &SimConfig) -> Result<TraceStore> {
    let mut sim = Simulation::new(config)?;
    let mut store = TraceStore::new(config.record.clone());
    sim.run_to_end(&mut store)?;
    Ok(store)
}

/// Runs a configuration, streaming every step into `recorder`.
pub fn run_with(config: &SimConfig, recorder: &mut dyn Recorder) -> Result<()> {
    Simulation::new(config)?.run_to_end(recorder)
}
