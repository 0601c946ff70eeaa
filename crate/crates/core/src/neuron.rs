//! Leaky integrate-and-fire neurons with bipolar output pulses.
//!
//! A neuron owns two plexus nodes. Its in-electrode is a virtual ground that
//! drains current from the plexus into the membrane; its out-electrode applies
//! a square `A_p` pulse for `t_p` followed by a square `A_n` pulse for `t_n`
//! when the neuron fires, and floats otherwise. The membrane follows
//!
//! ```text
//! V_m(t + dt) = V_m(t) exp(-dt / tau_m) + I_ext / (C_m / dt)
//! ```
//!
//! where `C_m / dt` is configured directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::mna::VoltageConstraint;

/// `C_m / dt` as listed with the reference neuron parameters, F/s.
pub const REFERENCE_CM_OVER_DT: f64 = 3.5e-20;

/// `C_m / dt` tuned on the 41x41 scenario in `configs/wavefront.toml`: a single
/// corner pulse starts a wavefront and activity thins out but persists.
/// [`crate::calibrate`] measures how fast it drives an adjacent neuron.
pub const CALIBRATED_CM_OVER_DT: f64 = 2.75e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuronParams {
    /// Membrane time constant, s.
    #[serde(with = "crate::units::seconds")]
    pub tau_m: f64,
    /// Membrane capacitance over the time step, F/s.
    #[serde(with = "crate::units::farad_per_second")]
    pub c_m_over_dt: f64,
    /// Spike threshold, V.
    #[serde(with = "crate::units::volts")]
    pub v_th: f64,
    /// Positive pulse width, s.
    #[serde(with = "crate::units::seconds")]
    pub t_p: f64,
    /// Negative (refractory) pulse width, s.
    #[serde(with = "crate::units::seconds")]
    pub t_n: f64,
    /// Positive pulse amplitude, V.
    #[serde(with = "crate::units::volts")]
    pub a_p: f64,
    /// Negative pulse amplitude, V.
    #[serde(with = "crate::units::volts")]
    pub a_n: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams {
            tau_m: 1e-3,
            c_m_over_dt: REFERENCE_CM_OVER_DT,
            v_th: 0.5,
            t_p: 0.5e-3,
            t_n: 0.3e-3,
            a_p: 1.2,
            a_n: -0.1,
        }
    }
}

impl NeuronParams {
    /// Reference parameters with `C_m / dt` replaced by the calibrated value.
    pub fn calibrated() -> Self {
        NeuronParams {
            c_m_over_dt: CALIBRATED_CM_OVER_DT,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, bool, &str); 7] = [
            ("tau_m", self.tau_m > 0.0 && self.tau_m.is_finite(), "must be positive"),
            ("c_m_over_dt", self.c_m_over_dt > 0.0 && self.c_m_over_dt.is_finite(), "must be positive"),
            ("v_th", self.v_th > 0.0 && self.v_th.is_finite(), "must be positive"),
            ("t_p", self.t_p > 0.0 && self.t_p.is_finite(), "must be positive"),
            ("t_n", self.t_n >= 0.0 && self.t_n.is_finite(), "must be non-negative"),
            ("a_p", self.a_p > 0.0 && self.a_p.is_finite(), "must be positive"),
            ("a_n", self.a_n <= 0.0 && self.a_n.is_finite(), "must be non-positive"),
        ];
        for (name, ok, msg) in checks {
            if !ok {
                return Err(Error::config(format!("neuron.{name}"), msg));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", content = "left_s", rename_all = "snake_case")]
pub enum Phase {
    Integrating,
    /// Applying `A_p`; time left in the phase, s.
    PulsingPositive(f64),
    /// Applying `A_n` and refractory; time left in the phase, s.
    PulsingNegative(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    pub v_m: f64,
    pub phase: Phase,
    pub in_node: NodeId,
    pub out_node: NodeId,
    pub spike_times: Vec<f64>,
}

// Phases end once less than this fraction of a step is left, absorbing
// rounding in repeated subtraction of dt.
const PHASE_EPS: f64 = 1e-6;

impl NeuronState {
    pub fn new(in_node: NodeId, out_node: NodeId) -> Result<Self> {
        if in_node == out_node {
            return Err(Error::invalid_arg(format!(
                "in- and out-electrode share node {in_node}"
            )));
        }
        Ok(NeuronState {
            v_m: 0.0,
            phase: Phase::Integrating,
            in_node,
            out_node,
            spike_times: Vec::new(),
        })
    }

    pub fn is_integrating(&self) -> bool {
        matches!(self.phase, Phase::Integrating)
    }

    /// Integrates `i_ext` over one step. Returns `true` when the threshold is
    /// reached, in which case the membrane resets, the positive pulse is
    /// primed and `t_spike` is recorded.
    pub fn step_membrane(&mut self, i_ext: f64, dt: f64, t_spike: f64, p: &NeuronParams) -> Result<bool> {
        if !i_ext.is_finite() {
            return Err(Error::InvalidState(format!("non-finite input current {i_ext}")));
        }
        if !(dt > 0.0) {
            return Err(Error::invalid_arg(format!("dt must be positive, got {dt}")));
        }
        if !self.is_integrating() {
            return Err(Error::Logic("membrane update outside the integrating phase".into()));
        }
        let v = self.v_m * (-dt / p.tau_m).exp() + i_ext / p.c_m_over_dt;
        // the membrane range is [0, V_th]; net outflow cannot hyperpolarize it
        let v = v.max(0.0);
        if v >= p.v_th {
            self.v_m = 0.0;
            self.phase = Phase::PulsingPositive(p.t_p);
            self.spike_times.push(t_spike);
            Ok(true)
        } else {
            self.v_m = v;
            Ok(false)
        }
    }

    /// Advances the pulse clock by one step.
    pub fn advance_pulse(&mut self, dt: f64, p: &NeuronParams) -> Result<()> {
        let eps = PHASE_EPS * dt;
        self.phase = match self.phase {
            Phase::Integrating => {
                return Err(Error::Logic("advance_pulse called on an integrating neuron".into()));
            }
            Phase::PulsingPositive(left) => {
                let left = left - dt;
                if left > eps {
                    Phase::PulsingPositive(left)
                } else if p.t_n > eps {
                    Phase::PulsingNegative(p.t_n)
                } else {
                    Phase::Integrating
                }
            }
            Phase::PulsingNegative(left) => {
                let left = left - dt;
                if left > eps {
                    Phase::PulsingNegative(left)
                } else {
                    Phase::Integrating
                }
            }
        };
        self.v_m = 0.0;
        Ok(())
    }

    /// Voltage imposed on the out-electrode, if any.
    pub fn out_voltage(&self, p: &NeuronParams) -> Option<f64> {
        match self.phase {
            Phase::Integrating => None,
            Phase::PulsingPositive(_) => Some(p.a_p),
            Phase::PulsingNegative(_) => Some(p.a_n),
        }
    }

    /// Voltage the neuron applies to the plexus, 0 while its out-electrode floats.
    pub fn applied_voltage(&self, p: &NeuronParams) -> f64 {
        self.out_voltage(p).unwrap_or(0.0)
    }

    /// Appends this neuron's constraints: the grounded in-electrode always,
    /// the out-electrode only while pulsing.
    pub fn push_constraints(&self, p: &NeuronParams, in_id: u32, out_id: u32, out: &mut Vec<VoltageConstraint>) {
        out.push(VoltageConstraint::new(self.in_node, 0.0, in_id));
        if let Some(v) = self.out_voltage(p) {
            out.push(VoltageConstraint::new(self.out_node, v, out_id));
        }
    }

    pub fn electrode_constraints(&self, p: &NeuronParams) -> Vec<VoltageConstraint> {
        let mut v = Vec::with_capacity(2);
        self.push_constraints(p, 0, 1, &mut v);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = 1e-4;

    fn neuron() -> NeuronState {
        NeuronState::new(0, 1).unwrap()
    }

    #[test]
    fn passive_decay() {
        let p = NeuronParams::default();
        let mut n = neuron();
        n.v_m = 0.4;
        n.step_membrane(0.0, DT, DT, &p).unwrap();
        assert!((n.v_m - 0.4 * (-0.1f64).exp()).abs() < 1e-15);
        assert!((n.v_m - 0.36194).abs() < 1e-5);
    }

    #[test]
    fn resting_membrane_stays_at_rest() {
        let p = NeuronParams::default();
        let mut n = neuron();
        for k in 0..1000 {
            assert!(!n.step_membrane(0.0, DT, k as f64 * DT, &p).unwrap());
            assert_eq!(n.v_m, 0.0);
        }
    }

    #[test]
    fn threshold_crossing_fires_and_resets() {
        let p = NeuronParams::default();
        let mut n = neuron();
        n.v_m = 0.49;
        let fired = n.step_membrane(0.06 * p.c_m_over_dt, DT, 0.0123, &p).unwrap();
        assert!(fired);
        assert_eq!(n.v_m, 0.0);
        assert_eq!(n.phase, Phase::PulsingPositive(0.5e-3));
        assert_eq!(n.spike_times, vec![0.0123]);
    }

    #[test]
    fn exact_threshold_fires() {
        let p = NeuronParams::default();
        let mut n = neuron();
        assert!(n.step_membrane(0.5 * p.c_m_over_dt, DT, 0.0, &p).unwrap());
    }

    #[test]
    fn outflow_does_not_go_below_rest() {
        let p = NeuronParams::default();
        let mut n = neuron();
        n.v_m = 0.1;
        n.step_membrane(-p.c_m_over_dt, DT, 0.0, &p).unwrap();
        assert_eq!(n.v_m, 0.0);
    }

    #[test]
    fn rejects_non_finite_current() {
        let p = NeuronParams::default();
        assert!(matches!(neuron().step_membrane(f64::NAN, DT, 0.0, &p), Err(Error::InvalidState(_))));
    }

    #[test]
    fn pulse_phases() {
        let p = NeuronParams::default();
        let mut n = neuron();
        n.phase = Phase::PulsingPositive(p.t_p);
        for _ in 0..5 {
            n.advance_pulse(DT, &p).unwrap();
        }
        match n.phase {
            Phase::PulsingNegative(left) => assert!((left - 0.3e-3).abs() < 1e-18),
            other => panic!("{other:?}"),
        }
        n.phase = Phase::PulsingNegative(1e-4);
        n.advance_pulse(DT, &p).unwrap();
        assert!(n.is_integrating());
        assert_eq!(n.v_m, 0.0);
        assert!(matches!(n.advance_pulse(DT, &p), Err(Error::Logic(_))));
    }

    #[test]
    fn full_pulse_takes_eight_steps() {
        let p = NeuronParams::default();
        let mut n = neuron();
        n.phase = Phase::PulsingPositive(p.t_p);
        let mut applied = Vec::new();
        while !n.is_integrating() {
            applied.push(n.applied_voltage(&p));
            n.advance_pulse(DT, &p).unwrap();
        }
        assert_eq!(applied, vec![1.2, 1.2, 1.2, 1.2, 1.2, -0.1, -0.1, -0.1]);
    }

    #[test]
    fn zero_refractory_skips_negative_phase() {
        let p = NeuronParams { t_n: 0.0, ..Default::default() };
        let mut n = neuron();
        n.phase = Phase::PulsingPositive(DT);
        n.advance_pulse(DT, &p).unwrap();
        assert!(n.is_integrating());
    }

    #[test]
    fn constraints_by_phase() {
        let p = NeuronParams::default();
        let mut n = neuron();
        assert_eq!(n.electrode_constraints(&p), vec![VoltageConstraint::new(0, 0.0, 0)]);
        n.phase = Phase::PulsingPositive(p.t_p);
        let cs = n.electrode_constraints(&p);
        assert_eq!(cs.len(), 2);
        assert_eq!((cs[0].node, cs[0].volts), (0, 0.0));
        assert_eq!((cs[1].node, cs[1].volts), (1, 1.2));

        let mut other = NeuronState::new(2, 3).unwrap();
        other.phase = Phase::PulsingNegative(p.t_n);
        let dv = n.applied_voltage(&p) - other.applied_voltage(&p);
        assert!((dv - 1.3).abs() < 1e-15);
    }

    #[test]
    fn distinct_electrodes_required() {
        assert!(NeuronState::new(4, 4).is_err());
    }

    #[test]
    fn reference_and_default_params_validate() {
        NeuronParams::default().validate().unwrap();
        NeuronParams::calibrated().validate().unwrap();
        assert_eq!(NeuronParams::default().c_m_over_dt, 3.5e-20);
        let bad = NeuronParams { a_n: 0.2, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
