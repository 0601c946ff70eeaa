//! Recording of spikes, conductance statistics, firing rate and snapshots.

use std::collections::VecDeque;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::RecordOptions;
use crate::engine::StepOutcome;
use crate::error::{Error, Result};
use crate::graph::PlexusGraph;
use crate::memristor::EdgeState;

/// Static facts about a run, handed to a recorder before the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct RunInfo {
    pub neurons: usize,
    pub dt: f64,
    pub steps: u64,
    pub rate_window: f64,
    pub initial_mean_g: f64,
    pub t_start: f64,
}

/// Borrowed view of the system right after a step.
pub struct StepView<'a> {
    pub outcome: &'a StepOutcome,
    pub node_voltages: &'a [f64],
    pub edges: &'a [EdgeState],
}

pub trait Recorder {
    fn begin(&mut self, info: &RunInfo) -> Result<()>;
    fn record(&mut self, view: &StepView<'_>) -> Result<()>;
    /// Called once at the end, with the error that stopped the run if any.
    fn finish(&mut self, error: Option<&Error>) -> Result<()>;
}

/// Population firing rate over `(t - window, t]`, in Hz per neuron.
pub fn firing_rate(spikes: &[(usize, f64)], neurons: usize, window: f64, t: f64) -> Result<f64> {
    if !(window > 0.0) {
        return Err(Error::InvalidArgument(format!("rate window must be positive, got {window}")));
    }
    if neurons == 0 {
        return Ok(0.0);
    }
    let lo = t - window;
    let eps = 1e-9 * window;
    let count = spikes
        .iter()
        .filter(|&&(_, s)| s > lo + eps && s <= t + eps)
        .count();
    Ok(count as f64 / (window * neurons as f64))
}

/// Sliding-window spike counter giving the same value as [`firing_rate`]
/// for monotone query times.
#[derive(Debug, Clone)]
pub struct RateCounter {
    window: f64,
    neurons: usize,
    recent: VecDeque<f64>,
}

impl RateCounter {
    pub fn new(window: f64, neurons: usize) -> Result<Self> {
        if !(window > 0.0) {
            return Err(Error::InvalidArgument(format!("rate window must be positive, got {window}")));
        }
        Ok(RateCounter {
            window,
            neurons,
            recent: VecDeque::new(),
        })
    }

    pub fn push(&mut self, t: f64) {
        self.recent.push_back(t);
    }

    pub fn rate(&mut self, t: f64) -> f64 {
        let eps = 1e-9 * self.window;
        while let Some(&s) = self.recent.front() {
            if s > t - self.window + eps {
                break;
            }
            self.recent.pop_front();
        }
        if self.neurons == 0 {
            return 0.0;
        }
        let count = self.recent.iter().filter(|&&s| s <= t + eps).count();
        count as f64 / (self.window * self.neurons as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub time: f64,
    pub node_voltages: Vec<f64>,
    pub g: Vec<f64>,
}

/// In-memory trace of a whole run.
#[derive(Debug, Clone)]
pub struct TraceStore {
    pub options: RecordOptions,
    pub neurons: usize,
    pub dt: f64,
    pub rate_window: f64,
    pub initial_mean_g: f64,
    /// `(neuron, spike time)` in order of occurrence.
    pub spikes: Vec<(usize, f64)>,
    /// End time of each recorded step.
    pub times: Vec<f64>,
    pub mean_g: Vec<f64>,
    pub rate: Vec<f64>,
    /// Voltage applied by each neuron, one row per step.
    pub applied: Vec<Vec<f64>>,
    pub in_currents: Vec<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
    pub error: Option<String>,
    counter: Option<RateCounter>,
}

impl TraceStore {
    pub fn new(options: RecordOptions) -> Self {
        TraceStore {
            options,
            neurons: 0,
            dt: 0.0,
            rate_window: 0.0,
            initial_mean_g: 0.0,
            spikes: Vec::new(),
            times: Vec::new(),
            mean_g: Vec::new(),
            rate: Vec::new(),
            applied: Vec::new(),
            in_currents: Vec::new(),
            snapshots: Vec::new(),
            error: None,
            counter: None,
        }
    }

    /// Spike times of one neuron.
    pub fn spikes_of(&self, neuron: usize) -> Vec<f64> {
        self.spikes.iter().filter(|s| s.0 == neuron).map(|s| s.1).collect()
    }

    /// First spike time of each neuron, if any.
    pub fn first_spikes(&self) -> Vec<Option<f64>> {
        let mut first = vec![None; self.neurons];
        for &(n, t) in &self.spikes {
            if first[n].is_none() {
                first[n] = Some(t);
            }
        }
        first
    }

    /// Number of spikes with time in `[from, to)`.
    pub fn spike_count_in(&self, from: f64, to: f64) -> usize {
        self.spikes.iter().filter(|s| s.1 >= from && s.1 < to).count()
    }
}

impl Recorder for TraceStore {
    fn begin(&mut self, info: &RunInfo) -> Result<()> {
        self.neurons = info.neurons;
        self.dt = info.dt;
        self.rate_window = info.rate_window;
        self.initial_mean_g = info.initial_mean_g;
        self.counter = Some(RateCounter::new(info.rate_window, info.neurons)?);
        Ok(())
    }

    fn record(&mut self, view: &StepView<'_>) -> Result<()> {
        let o = view.outcome;
        let counter = self
            .counter
            .as_mut()
            .ok_or_else(|| Error::Logic("record called before begin".into()))?;
        for &n in &o.spiked {
            self.spikes.push((n, o.t_end));
            counter.push(o.t_end);
        }
        self.rate.push(counter.rate(o.t_end));
        self.times.push(o.t_end);
        self.mean_g.push(o.mean_g);
        if self.options.applied_voltage {
            self.applied.push(o.applied.clone());
        }
        self.in_currents.push(o.in_currents.clone());
        let every = self.options.snapshot_every;
        if every > 0 && (o.step + 1).is_multiple_of(every) {
            self.snapshots.push(Snapshot {
                step: o.step + 1,
                time: o.t_end,
                node_voltages: view.node_voltages.to_vec(),
                g: view.edges.iter().map(|e| e.g).collect(),
            });
        }
        Ok(())
    }

    fn finish(&mut self, error: Option<&Error>) -> Result<()> {
        self.error = error.map(|e| e.to_string());
        Ok(())
    }
}

/// Streams traces to CSV files in a directory:
/// `spikes.csv`, `mean_g.csv`, `rate.csv`, `voltage.csv` and `snapshots/`.
pub struct CsvTraceWriter {
    dir: PathBuf,
    options: RecordOptions,
    edges: Vec<(usize, usize)>,
    spikes: BufWriter<File>,
    mean_g: BufWriter<File>,
    rate: BufWriter<File>,
    voltage: Option<BufWriter<File>>,
    counter: Option<RateCounter>,
    files: Vec<PathBuf>,
    spike_count: usize,
    last_mean_g: f64,
}

fn create(dir: &Path, name: &str, header: &str, files: &mut Vec<PathBuf>) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "{header}")?;
    files.push(PathBuf::from(name));
    Ok(w)
}

impl CsvTraceWriter {
    pub fn new(dir: &Path, graph: &PlexusGraph, options: RecordOptions) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        let spikes = create(dir, "spikes.csv", "neuron_id,time_s", &mut files)?;
        let mean_g = create(dir, "mean_g.csv", "time_s,mean_g", &mut files)?;
        let rate = create(dir, "rate.csv", "time_s,rate_hz", &mut files)?;
        let voltage = if options.applied_voltage {
            Some(create(dir, "voltage.csv", "time_s,neuron_id,applied_V", &mut files)?)
        } else {
            None
        };
        if options.snapshot_every > 0 {
            fs::create_dir_all(dir.join("snapshots"))?;
        }
        Ok(CsvTraceWriter {
            dir: dir.to_path_buf(),
            options,
            edges: graph.edges().iter().map(|e| (e.node_a, e.node_b)).collect(),
            spikes,
            mean_g,
            rate,
            voltage,
            counter: None,
            files,
            spike_count: 0,
            last_mean_g: 0.0,
        })
    }

    /// Files written so far, relative to the output directory.
    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn spike_count(&self) -> usize {
        self.spike_count
    }

    /// Mean memristive `g` at the last recorded time.
    pub fn last_mean_g(&self) -> f64 {
        self.last_mean_g
    }

    fn write_snapshot(&mut self, step: u64, view: &StepView<'_>) -> Result<()> {
        let name = PathBuf::from("snapshots").join(format!("step_{step:07}.csv"));
        let mut w = BufWriter::new(File::create(self.dir.join(&name))?);
        writeln!(w, "kind,node_a,node_b,value")?;
        for (i, v) in view.node_voltages.iter().enumerate() {
            writeln!(w, "voltage_V,{i},{i},{v:e}")?;
        }
        for (&(a, b), e) in self.edges.iter().zip(view.edges) {
            writeln!(w, "conductance_norm,{a},{b},{:e}", e.g)?;
        }
        w.flush()?;
        self.files.push(name);
        Ok(())
    }
}

impl Recorder for CsvTraceWriter {
    fn begin(&mut self, info: &RunInfo) -> Result<()> {
        self.counter = Some(RateCounter::new(info.rate_window, info.neurons)?);
        writeln!(self.mean_g, "{},{:e}", info.t_start, info.initial_mean_g)?;
        self.last_mean_g = info.initial_mean_g;
        Ok(())
    }

    fn record(&mut self, view: &StepView<'_>) -> Result<()> {
        let o = view.outcome;
        let counter = self
            .counter
            .as_mut()
            .ok_or_else(|| Error::Logic("record called before begin".into()))?;
        for &n in &o.spiked {
            writeln!(self.spikes, "{n},{}", o.t_end)?;
            counter.push(o.t_end);
        }
        writeln!(self.rate, "{},{}", o.t_end, counter.rate(o.t_end))?;
        writeln!(self.mean_g, "{},{:e}", o.t_end, o.mean_g)?;
        self.spike_count += o.spiked.len();
        self.last_mean_g = o.mean_g;
        if let Some(w) = self.voltage.as_mut() {
            for (n, v) in o.applied.iter().enumerate() {
                writeln!(w, "{},{n},{v}", o.t_start)?;
            }
        }
        let every = self.options.snapshot_every;
        if every > 0 && (o.step + 1).is_multiple_of(every) {
            self.write_snapshot(o.step + 1, view)?;
        }
        Ok(())
    }

    fn finish(&mut self, error: Option<&Error>) -> Result<()> {
        self.spikes.flush()?;
        self.mean_g.flush()?;
        self.rate.flush()?;
        if let Some(w) = self.voltage.as_mut() {
            w.flush()?;
        }
        if let Some(e) = error {
            fs::write(self.dir.join("ERROR"), format!("{e}\n"))?;
            self.files.push(PathBuf::from("ERROR"));
        }
        Ok(())
    }
}
