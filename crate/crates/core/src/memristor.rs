//! Voltage-driven memristive edge model.
//!
//! Each edge carries a normalized conductance `g` in `[0, 1]` that relaxes
//! toward a voltage-dependent attractor
//!
//! ```text
//! dg/dt = (1 - g) k_p(V) - g k_d(V)
//! k_p(V) = k_p0 exp(+eta_p |V|),   k_d(V) = k_d0 exp(-eta_d |V|)
//! ```
//!
//! Under a constant voltage this has the closed form
//! `g(t + dt) = g_inf (1 - e^(-theta dt)) + g(t) e^(-theta dt)` with
//! `theta = k_p + k_d` and `g_inf = k_p / theta`, which is what the
//! simulator steps with. The edge current follows Ohm's law through
//! `G = g G_max + (1 - g) G_min`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Device model for a dynamic plexus edge. The simulator only talks to edges
/// through this interface, so other device models can be dropped in.
pub trait EdgeModel {
    /// Advances the normalized state by `dt` under a constant potential difference `volts`.
    fn update(&self, g: f64, volts: f64, dt: f64) -> Result<f64>;

    /// Conductance in siemens for normalized state `g`.
    fn conductance(&self, g: f64) -> Result<f64>;

    /// Conductance of a non-memristive (Ohmic) edge.
    fn ohmic_conductance(&self) -> f64;

    /// Reference conductance used to rescale the nodal system.
    fn reference_conductance(&self) -> f64 {
        self.ohmic_conductance()
    }
}

/// Parameters of the potentiation/depression rate balance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemristorParams {
    /// Potentiation fitting constant, 1/s.
    #[serde(with = "crate::units::per_second")]
    pub k_p0: f64,
    /// Depression fitting constant, 1/s.
    #[serde(with = "crate::units::per_second")]
    pub k_d0: f64,
    /// Potentiation transition rate, 1/V.
    #[serde(with = "crate::units::per_volt")]
    pub eta_p: f64,
    /// Depression transition rate, 1/V.
    #[serde(with = "crate::units::per_volt")]
    pub eta_d: f64,
    /// Minimum (pristine) conductance, S.
    #[serde(with = "crate::units::siemens")]
    pub g_min: f64,
    /// Maximum conductance, S.
    #[serde(with = "crate::units::siemens")]
    pub g_max: f64,
}

impl Default for MemristorParams {
    fn default() -> Self {
        MemristorParams {
            k_p0: 2.56e-6,
            k_d0: 64.90,
            eta_p: 34.90,
            eta_d: 5.59,
            g_min: 1e-12,
            g_max: 200e-12,
        }
    }
}

fn check_state(g: f64) -> Result<()> {
    if (0.0..=1.0).contains(&g) {
        Ok(())
    } else {
        Err(Error::InvalidState(format!("normalized conductance {g} outside [0, 1]")))
    }
}

fn check_volts(volts: f64) -> Result<()> {
    if volts.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid_arg(format!("non-finite voltage {volts}")))
    }
}

impl MemristorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k_p0", self.k_p0),
            ("k_d0", self.k_d0),
            ("eta_p", self.eta_p),
            ("eta_d", self.eta_d),
            ("g_min", self.g_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("memristor.{name}"), format!("must be positive, got {v}")));
            }
        }
        if !(self.g_max > self.g_min && self.g_max.is_finite()) {
            return Err(Error::config("memristor.g_max", "must exceed g_min"));
        }
        Ok(())
    }

    /// `(k_p, k_d)` at potential difference `volts`; only `|volts|` matters.
    pub fn rate_coefficients(&self, volts: f64) -> Result<(f64, f64)> {
        check_volts(volts)?;
        let v = volts.abs();
        Ok((self.k_p0 * (self.eta_p * v).exp(), self.k_d0 * (-self.eta_d * v).exp()))
    }

    /// Attractor `k_p / (k_p + k_d)` the edge relaxes toward at `volts`.
    pub fn steady_state(&self, volts: f64) -> Result<f64> {
        let (kp, kd) = self.rate_coefficients(volts)?;
        Ok(kp / (kp + kd))
    }

    /// Voltage magnitude at which potentiation and depression rates balance (`g_inf = 1/2`).
    pub fn balance_voltage(&self) -> f64 {
        (self.k_d0 / self.k_p0).ln() / (self.eta_p + self.eta_d)
    }

    pub fn update_conductance(&self, g: f64, volts: f64, dt: f64) -> Result<f64> {
        check_state(g)?;
        if !(dt > 0.0) {
            return Err(Error::invalid_arg(format!("dt must be positive, got {dt}")));
        }
        let (kp, kd) = self.rate_coefficients(volts)?;
        let theta = kp + kd;
        let target = kp / theta;
        let decay = (-theta * dt).exp();
        let next = target * (1.0 - decay) + g * decay;
        // the convex combination can only leave [0, 1] through rounding
        Ok(next.clamp(0.0, 1.0))
    }

    pub fn effective_conductance(&self, g: f64) -> Result<f64> {
        check_state(g)?;
        Ok(g * self.g_max + (1.0 - g) * self.g_min)
    }

    /// Conductivity per coarse-grained unit length, S/m, for a given conductance.
    pub fn conductivity(conductance: f64, unit_length_um: f64) -> f64 {
        conductance / (unit_length_um * 1e-6)
    }
}

impl EdgeModel for MemristorParams {
    fn update(&self, g: f64, volts: f64, dt: f64) -> Result<f64> {
        self.update_conductance(g, volts, dt)
    }

    fn conductance(&self, g: f64) -> Result<f64> {
        self.effective_conductance(g)
    }

    fn ohmic_conductance(&self) -> f64 {
        self.g_min
    }
}

/// Dynamic state of one plexus edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeState {
    pub g: f64,
    pub ohmic: bool,
}

impl EdgeState {
    pub fn memristive(g: f64) -> Result<Self> {
        check_state(g)?;
        Ok(EdgeState { g, ohmic: false })
    }

    pub fn ohmic() -> Self {
        EdgeState { g: 0.0, ohmic: true }
    }

    pub fn advance<M: EdgeModel + ?Sized>(&mut self, model: &M, volts: f64, dt: f64) -> Result<()> {
        if !self.ohmic {
            self.g = model.update(self.g, volts, dt)?;
        }
        Ok(())
    }

    pub fn conductance<M: EdgeModel + ?Sized>(&self, model: &M) -> Result<f64> {
        if self.ohmic {
            Ok(model.ohmic_conductance())
        } else {
            model.conductance(self.g)
        }
    }
}
