// SPDX-License-Identifier: Apache-2.0

//! Time-domain flux drive applied to the tunable bus:
//! Φ(t) = Θ + δ · env(t) · cos(ω_Φ t + φ₀).
//!
//! The envelope is a square pulse with Gaussian turn-on/off edges. The raw
//! truncated Gaussian does not start at zero (it starts at e^{−extent²/2}),
//! so the edges are rescaled as (G − G(0))/(1 − G(0)) to rise exactly from 0
//! to 1; a discontinuous flux step would inject spurious spectral content.
//! The carrier phase is referenced to the envelope start (t = 0), which makes
//! the 180° phase flip used for exchange reversal well defined.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PulseError {
    #[error("modulation amplitude must be >= 0, got {0}")]
    NegativeAmplitude(f64),
    #[error("flat duration must be >= 0, got {0}")]
    NegativeDuration(f64),
    #[error("edge sigma must be > 0, got {0}")]
    BadEdgeSigma(f64),
    #[error("|theta| + delta = {0} reaches the half-flux-quantum singularity (must stay < 0.5)")]
    FluxRangeTooLarge(f64),
}

/// Parametric flux drive description. All times in seconds, flux in units of
/// the flux quantum, `omega_phi` in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxPulse {
    /// DC bias Θ.
    pub theta: f64,
    /// Modulation amplitude δ.
    pub delta: f64,
    /// Modulation angular frequency ω_Φ.
    pub omega_phi: f64,
    /// Carrier phase φ₀ at envelope start.
    pub phase: f64,
    /// Flat-top duration.
    pub flat_duration: f64,
    /// Gaussian edge σ.
    pub edge_sigma: f64,
    /// Edge length in multiples of σ.
    pub edge_extent: f64,
}

/// Edge σ used in the experiments this models.
pub const DEFAULT_EDGE_SIGMA: f64 = 8.3e-9;
/// Edge length as a multiple of σ.
pub const DEFAULT_EDGE_EXTENT: f64 = 3.0;

impl FluxPulse {
    pub fn new(
        theta: f64,
        delta: f64,
        omega_phi: f64,
        flat_duration: f64,
    ) -> Result<Self, PulseError> {
        let pulse = FluxPulse {
            theta,
            delta,
            omega_phi,
            phase: 0.0,
            flat_duration,
            edge_sigma: DEFAULT_EDGE_SIGMA,
            edge_extent: DEFAULT_EDGE_EXTENT,
        };
        pulse.validate()?;
        Ok(pulse)
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        if self.delta < 0.0 {
            return Err(PulseError::NegativeAmplitude(self.delta));
        }
        if self.flat_duration < 0.0 {
            return Err(PulseError::NegativeDuration(self.flat_duration));
        }
        if !(self.edge_sigma > 0.0) {
            return Err(PulseError::BadEdgeSigma(self.edge_sigma));
        }
        let reach = self.theta.abs() + self.delta;
        if reach >= 0.5 {
            return Err(PulseError::FluxRangeTooLarge(reach));
        }
        Ok(())
    }

    /// Total duration including both edges.
    ///
    /// Gate-width sweeps quote this number (flat duration plus both edges),
    /// so a "183 ns" pulse with 3σ = 24.9 ns edges has a 133.2 ns flat top.
    pub fn total_duration(&self) -> f64 {
        self.flat_duration + 2.0 * self.edge_time()
    }

    /// Duration of one Gaussian edge.
    pub fn edge_time(&self) -> f64 {
        self.edge_extent * self.edge_sigma
    }

    /// Same pulse with the flat top chosen so the total duration is `total`.
    pub fn with_total_duration(&self, total: f64) -> Result<Self, PulseError> {
        let flat = total - 2.0 * self.edge_time();
        if flat < 0.0 {
            return Err(PulseError::NegativeDuration(flat));
        }
        let mut out = self.clone();
        out.flat_duration = flat;
        Ok(out)
    }

    pub fn with_phase(&self, phase: f64) -> Self {
        let mut out = self.clone();
        out.phase = phase;
        out
    }

    /// The 180°-flipped pulse used to reverse the exchange direction.
    pub fn phase_flipped(&self) -> Self {
        self.with_phase(self.phase + std::f64::consts::PI)
    }

    /// Dimensionless envelope in [0, 1]; exactly 0 outside the pulse.
    pub fn envelope(&self, t: f64) -> f64 {
        let edge = self.edge_time();
        let total = self.total_duration();
        if t <= 0.0 || t >= total {
            return 0.0;
        }
        if t < edge {
            return self.rescaled_edge(t);
        }
        if t > total - edge {
            return self.rescaled_edge(total - t);
        }
        1.0
    }

    // Rising edge: Gaussian centered on the flat-top start, rescaled so the
    // value is exactly 0 at t=0 and exactly 1 at t=edge.
    fn rescaled_edge(&self, t: f64) -> f64 {
        let edge = self.edge_time();
        let raw = |x: f64| (-(x - edge) * (x - edge) / (2.0 * self.edge_sigma * self.edge_sigma)).exp();
        let floor = raw(0.0);
        (raw(t) - floor) / (1.0 - floor)
    }

    /// Total flux at time `t`: Θ + δ · env(t) · cos(ω_Φ t + φ₀).
    pub fn flux_at(&self, t: f64) -> f64 {
        self.theta + self.delta * self.envelope(t) * (self.omega_phi * t + self.phase).cos()
    }
}
