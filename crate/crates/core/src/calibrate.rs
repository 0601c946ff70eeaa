//! Probe for the membrane `C_m / dt`.
//!
//! The probe is a 7x3 plexus with two neurons in a row. The first one holds
//! its out-electrode at `A_p`; the second one has its in-electrode on the
//! node right next to it, across an initially pristine edge. The probe
//! reports how many steps the second neuron needs to reach threshold, and
//! [`calibrate`] inverts that relation.
//!
//! [`crate::neuron::CALIBRATED_CM_OVER_DT`] is not the output of this probe.
//! It was tuned on the 41x41 scenario in `configs/wavefront.toml`; the probe only
//! characterizes it.

use crate::config::{NeuronPlacement, NodeRef, SimConfig};
use crate::engine::Simulation;
use crate::error::{Error, Result};
use crate::memristor::MemristorParams;
use crate::neuron::{NeuronParams, Phase};

/// Longest probe, in steps.
pub const PROBE_LIMIT: u32 = 200;

fn probe_config(c_m_over_dt: f64, neuron: &NeuronParams, memristor: &MemristorParams, dt: f64) -> SimConfig {
    let mut cfg = SimConfig::from_toml("t_end = 1.0\n").expect("static probe config");
    cfg.dt = dt;
    cfg.t_end = dt * PROBE_LIMIT as f64;
    cfg.grid.width = 7;
    cfg.grid.height = 3;
    cfg.memristor = *memristor;
    cfg.neuron = NeuronParams { c_m_over_dt, ..*neuron };
    cfg.record.snapshot_every = 0;
    cfg.neurons = vec![
        NeuronPlacement::new(NodeRef::Position([1, 1]), NodeRef::Position([2, 1])),
        NeuronPlacement::new(NodeRef::Position([3, 1]), NodeRef::Position([4, 1])),
    ];
    cfg
}

/// Number of steps the probe neuron needs to reach threshold, or `None`
/// when it stays silent for [`PROBE_LIMIT`] steps.
pub fn steps_to_threshold(
    c_m_over_dt: f64,
    neuron: &NeuronParams,
    memristor: &MemristorParams,
    dt: f64,
) -> Result<Option<u32>> {
    let cfg = probe_config(c_m_over_dt, neuron, memristor, dt);
    let mut sim = Simulation::new(&cfg)?;
    for k in 1..=PROBE_LIMIT {
        sim.state_mut().neurons[0].phase = Phase::PulsingPositive(neuron.t_p);
        let out = sim.step()?;
        if out.spiked.contains(&1) {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// Bisects `log(C_m / dt)` for the largest value that still fires the probe
/// within `target` steps.
pub fn calibrate(target: u32, neuron: &NeuronParams, memristor: &MemristorParams, dt: f64) -> Result<f64> {
    if target == 0 || target > PROBE_LIMIT {
        return Err(Error::InvalidArgument(format!("target must lie in 1..={PROBE_LIMIT}")));
    }
    let fires_in_time =
        |c: f64| -> Result<bool> { Ok(steps_to_threshold(c, neuron, memristor, dt)?.is_some_and(|s| s <= target)) };
    let (mut lo, mut hi) = (1e-18_f64.ln(), 1e-6_f64.ln());
    if !fires_in_time(lo.exp())? || fires_in_time(hi.exp())? {
        return Err(Error::NumericalFailure("calibration bracket does not straddle the target".into()));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if fires_in_time(mid.exp())? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo.exp())
}
