//! Simulator of a memristive plexus coupled to leaky integrate-and-fire neurons.
//!
//! The plexus is a grid graph whose edges carry volatile memristive
//! conductances. Neurons read current from one node and drive voltage pulses
//! into another; every step the resistive network is solved by modified
//! nodal analysis.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod config;
pub mod engine;
pub mod error;
pub mod graph;
pub mod manifest;
pub mod memristor;
pub mod mna;
pub mod neuron;
pub mod placement;
pub mod rng;
pub mod runner;
pub mod trace;
pub mod units;

pub use config::SimConfig;
pub use engine::{run, SimState, Simulation, StepOutcome};
pub use error::{Error, Result};
pub use graph::PlexusGraph;
pub use memristor::{EdgeModel, EdgeState, MemristorParams};
pub use neuron::{NeuronParams, NeuronState, Phase};
pub use trace::TraceStore;
