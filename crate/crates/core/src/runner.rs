//! Running a configuration into an output directory.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::SimConfig;
use crate::engine::Simulation;
use crate::error::Result;
use crate::manifest::{unix_now, RunManifest, CONFIG_FILE};
use crate::mna::MnaSystem;
use crate::trace::CsvTraceWriter;

pub const GRAPH_FILE: &str = "graph.txt";
pub const MNA_DUMP_FILE: &str = "mna_step0.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub manifest: RunManifest,
    pub spikes: usize,
    pub final_mean_g: f64,
}

/// Validates `config`, runs it and writes traces, the normalized config,
/// the graph and `manifest.json` into `out`. Nothing is written when the
/// config is invalid. A run that fails mid-way still flushes its traces,
/// leaves an `ERROR` marker and a manifest with the failure status, and
/// returns the error.
pub fn run_to_dir(config: &SimConfig, out: &Path, dump_mna: bool) -> Result<RunReport> {
    let started = unix_now();
    let mut sim = Simulation::new(config)?;
    let mut manifest = RunManifest::new(config, started);

    fs::create_dir_all(out)?;
    fs::write(out.join(CONFIG_FILE), &manifest.config)?;
    fs::write(out.join(GRAPH_FILE), sim.graph().export_text())?;
    let mut files = vec![PathBuf::from(CONFIG_FILE), PathBuf::from(GRAPH_FILE)];

    if dump_mna {
        let mut probe = Simulation::new(config)?;
        probe.step()?;
        let system = MnaSystem::assemble(probe.graph(), probe.solved_conductances(), probe.constraints())?;
        fs::write(out.join(MNA_DUMP_FILE), system.dump_triplets())?;
        files.push(PathBuf::from(MNA_DUMP_FILE));
    }

    let mut writer = CsvTraceWriter::new(out, sim.graph(), config.record.clone())?;
    let result = sim.run_to_end(&mut writer);
    files.extend_from_slice(writer.files());

    manifest.inventory(out, &files)?;
    manifest.finished_unix_s = unix_now();
    manifest.status = match &result {
        Ok(()) => "ok".into(),
        Err(e) => format!("failed: {e}"),
    };
    manifest.write_atomic(out)?;
    result?;
    Ok(RunReport {
        manifest,
        spikes: writer.spike_count(),
        final_mean_g: writer.last_mean_g(),
    })
}
