// SPDX-License-Identifier: Apache-2.0

//! Closed-form device model for two fixed-frequency transmons coupled
//! through a flux-tunable bus: the bus tuning curve, dispersive dressed
//! frequencies, bus-mediated exchange coupling and its flux derivatives,
//! the drive-induced frequency shifts, static ZZ, and extraction of the
//! circuit parameters from spectroscopy data.
//!
//! Everything here is the two-level dispersive description. The full
//! three-level numerics live in [`crate::hamiltonian`] and
//! [`crate::dynamics`]; this module supplies their operating points, seeds
//! and cross-checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitting::{least_squares, FitError, FitOptions};
use crate::numerics::{self, NumericsError};
use crate::units::{ghz, mhz, us};

/// Dispersive-validity threshold on |g/Δ| at an operating bias.
pub const DISPERSIVE_GUARD: f64 = 0.25;

/// Finite-difference base step (units of Φ0) for flux derivatives.
const FD_STEP: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),
    #[error("qubit {qubit} is resonant with the bus at flux {flux} Φ0; dispersive model invalid")]
    Resonance { qubit: usize, flux: f64 },
    #[error("dispersive guard violated at flux {flux} Φ0: |g{qubit}/Δ{qubit}| = {ratio:.3} >= {limit}")]
    DispersiveGuard {
        qubit: usize,
        flux: f64,
        ratio: f64,
        limit: f64,
    },
    #[error("flux derivative requested at {0} Φ0, within {1} Φ0 of a cusp of the tuning curve")]
    AtCusp(f64, f64),
    #[error("spectroscopy data insufficient: {0}")]
    InsufficientData(String),
    #[error("parameter fit failed: {0}")]
    Fit(#[from] FitError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("level assignment failed: {0}")]
    LevelAssignment(String),
}

/// Flux bias in units of the flux quantum, kept away from the half-flux
/// singularity where the bus frequency vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxPoint(f64);

impl FluxPoint {
    pub fn new(theta: f64) -> Result<Self, DeviceError> {
        if !(theta.abs() < 0.5) {
            return Err(DeviceError::InvalidParams(format!(
                "|Θ| = {} must be < 0.5 Φ0",
                theta.abs()
            )));
        }
        Ok(FluxPoint(theta))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Bare circuit constants. Frequencies, anharmonicities and couplings are
/// angular (rad/s); coherence times are seconds. Index 0 is Q1, index 1 Q2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub omega_q: [f64; 2],
    pub alpha_q: [f64; 2],
    pub g_q: [f64; 2],
    pub omega_tb0: f64,
    pub alpha_tb: f64,
    pub t1: [f64; 2],
    pub t2: [f64; 2],
}

impl DeviceParams {
    /// The demonstration device this crate models. The bus anharmonicity is
    /// not reported for that device; −300 MHz (a typical transmon value) is
    /// used and is configurable through the device file.
    pub fn reference() -> Self {
        DeviceParams {
            omega_q: [ghz(5.8899), ghz(5.0311)],
            alpha_q: [mhz(-324.0), mhz(-235.0)],
            g_q: [mhz(100.0), mhz(71.4)],
            omega_tb0: ghz(7.445),
            alpha_tb: mhz(-300.0),
            t1: [us(26.3), us(50.0)],
            t2: [us(12.1), us(28.0)],
        }
    }

    /// DC flux bias used for the two-qubit gate on the reference device.
    pub fn reference_bias() -> FluxPoint {
        FluxPoint::new(-0.108).expect("within range")
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        for q in 0..2 {
            if !(self.omega_q[q] > 0.0) {
                return Err(DeviceError::InvalidParams(format!(
                    "qubit {q} frequency must be positive"
                )));
            }
            if !(self.g_q[q] > 0.0) {
                return Err(DeviceError::InvalidParams(format!(
                    "qubit {q} bus coupling must be positive"
                )));
            }
            if !(self.t1[q] > 0.0 && self.t2[q] > 0.0) {
                return Err(DeviceError::InvalidParams(format!(
                    "qubit {q} coherence times must be positive"
                )));
            }
            if self.t2[q] > 2.0 * self.t1[q] + 1e-15 {
                return Err(DeviceError::InvalidParams(format!(
                    "qubit {q}: T2 = {} must be <= 2 T1 = {}",
                    self.t2[q],
                    2.0 * self.t1[q]
                )));
            }
        }
        if !(self.omega_tb0 > 0.0) {
            return Err(DeviceError::InvalidParams(
                "bus zero-flux frequency must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Checks the dispersive guard |g/Δ| < 0.25 for both qubits at a bias.
    pub fn validate_operating_point(&self, bias: FluxPoint) -> Result<(), DeviceError> {
        self.validate()?;
        for q in 0..2 {
            let delta = self.qubit_bus_detuning(q, bias.value());
            if delta == 0.0 {
                return Err(DeviceError::Resonance {
                    qubit: q + 1,
                    flux: bias.value(),
                });
            }
            let ratio = (self.g_q[q] / delta).abs();
            if ratio >= DISPERSIVE_GUARD {
                return Err(DeviceError::DispersiveGuard {
                    qubit: q + 1,
                    flux: bias.value(),
                    ratio,
                    limit: DISPERSIVE_GUARD,
                });
            }
        }
        Ok(())
    }

    /// Bus frequency ω_TB,0 √|cos(πΦ)| at flux Φ (Φ0 units).
    pub fn bus_frequency(&self, flux: f64) -> f64 {
        self.omega_tb0 * (std::f64::consts::PI * flux).cos().abs().sqrt()
    }

    /// Δ_i(Φ) = ω_i − ω_TB(Φ).
    pub fn qubit_bus_detuning(&self, qubit: usize, flux: f64) -> f64 {
        self.omega_q[qubit] - self.bus_frequency(flux)
    }

    /// Dispersive dressed frequency ω̃_i = ω_i + g_i²/Δ_i(Φ).
    pub fn dressed_frequency(&self, qubit: usize, flux: f64) -> Result<f64, DeviceError> {
        let delta = self.qubit_bus_detuning(qubit, flux);
        if delta == 0.0 || (self.g_q[qubit] / delta).abs() >= 1.0 {
            return Err(DeviceError::Resonance {
                qubit: qubit + 1,
                flux,
            });
        }
        Ok(self.omega_q[qubit] + self.g_q[qubit] * self.g_q[qubit] / delta)
    }

    /// Qubit-qubit detuning ω̃_1 − ω̃_2 at δ = 0.
    pub fn dressed_detuning(&self, flux: f64) -> Result<f64, DeviceError> {
        Ok(self.dressed_frequency(0, flux)? - self.dressed_frequency(1, flux)?)
    }

    /// Bus-mediated exchange J = (g₁g₂/2)(1/Δ₁ + 1/Δ₂).
    pub fn exchange_coupling(&self, flux: f64) -> Result<f64, DeviceError> {
        let mut inv_sum = 0.0;
        for q in 0..2 {
            let delta = self.qubit_bus_detuning(q, flux);
            if delta == 0.0 || (self.g_q[q] / delta).abs() >= 1.0 {
                return Err(DeviceError::Resonance {
                    qubit: q + 1,
                    flux,
                });
            }
            inv_sum += 1.0 / delta;
        }
        Ok(0.5 * self.g_q[0] * self.g_q[1] * inv_sum)
    }

    /// Flux derivative of a dispersive quantity by Richardson-extrapolated
    /// central differences.
    ///
    /// The tuning curve has a |cos| cusp at Φ = ±0.5 and is non-smooth at
    /// Φ = 0, so evaluation too close to either is rejected. Finite
    /// differences rather than the closed-form chain rule keep this robust
    /// if the tuning model is swapped; the chain-rule path appears in tests
    /// as an oracle.
    pub fn flux_derivative(
        &self,
        quantity: FluxQuantity,
        flux: f64,
        order: DerivativeOrder,
    ) -> Result<f64, DeviceError> {
        let guard = 4.0 * FD_STEP;
        if flux.abs() < guard || (0.5 - flux.abs()).abs() < guard {
            return Err(DeviceError::AtCusp(flux, guard));
        }
        let f = |phi: f64| -> f64 {
            match quantity {
                FluxQuantity::DressedFrequency(q) => self
                    .dressed_frequency(q, phi)
                    .unwrap_or(f64::NAN),
                FluxQuantity::Exchange => self.exchange_coupling(phi).unwrap_or(f64::NAN),
            }
        };
        let d = match order {
            DerivativeOrder::First => numerics::derivative1(f, flux, FD_STEP)?,
            DerivativeOrder::Second => numerics::derivative2(f, flux, FD_STEP)?,
        };
        Ok(d)
    }

    /// Time-averaged drive-induced frequency shift of qubit `q` under
    /// modulation Φ(t) = Θ + δ cos(ω_Φ t): (δ²/4) ∂²ω̃/∂Φ².
    ///
    /// The second derivative of both dressed frequencies is negative at the
    /// operating bias (the tuning curve is concave there), so the shift is
    /// negative for both qubits and larger for the qubit closer to the bus,
    /// lowering the qubit-qubit detuning — the resonance moves *down*.
    pub fn drive_induced_shift(
        &self,
        qubit: usize,
        flux: f64,
        delta: f64,
    ) -> Result<f64, DeviceError> {
        if delta == 0.0 {
            return Ok(0.0);
        }
        let d2 = self.flux_derivative(
            FluxQuantity::DressedFrequency(qubit),
            flux,
            DerivativeOrder::Second,
        )?;
        Ok(delta * delta / 4.0 * d2)
    }

    /// Drive-shifted qubit-qubit detuning Δ_{12,δ}.
    pub fn drive_shifted_detuning(&self, flux: f64, delta: f64) -> Result<f64, DeviceError> {
        let base = self.dressed_detuning(flux)?;
        let s1 = self.drive_induced_shift(0, flux, delta)?;
        let s2 = self.drive_induced_shift(1, flux, delta)?;
        Ok(base + s1 - s2)
    }

    /// Static ZZ rate ζ = E₁₁ − E₁₀ − E₀₁ + E₀₀ from the dressed spectrum of
    /// the full three-level model at fixed flux.
    pub fn static_zz(&self, bias: FluxPoint) -> Result<f64, DeviceError> {
        let basis = crate::hamiltonian::measurement_basis(self, bias)
            .map_err(|e| DeviceError::LevelAssignment(e.to_string()))?;
        Ok(basis.static_zz())
    }
}

/// Quantity differentiated by [`DeviceParams::flux_derivative`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxQuantity {
    /// ω̃_i for qubit index 0 or 1.
    DressedFrequency(usize),
    /// Exchange coupling J₁₂.
    Exchange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeOrder {
    First,
    Second,
}

/// One measured tuning curve: (flux in Φ0, frequency in rad/s) samples.
pub type TuningCurve = Vec<(f64, f64)>;

/// Spectroscopy input for parameter extraction.
#[derive(Debug, Clone, Default)]
pub struct SpectroscopyData {
    pub bus: TuningCurve,
    pub q1: TuningCurve,
    pub q2: TuningCurve,
}

/// Fitted circuit frequencies/couplings with linearized 1σ uncertainties.
/// Parameter order: ω_TB,0, ω_1, ω_2, g_1, g_2.
#[derive(Debug, Clone)]
pub struct FittedDeviceParams {
    pub omega_tb0: f64,
    pub omega_q: [f64; 2],
    pub g_q: [f64; 2],
    pub uncertainties: [f64; 5],
    pub residual_rms: f64,
}

impl FittedDeviceParams {
    /// Merge the fitted frequencies/couplings with anharmonicities and
    /// coherence times that spectroscopy does not determine.
    pub fn into_device_params(self, template: &DeviceParams) -> DeviceParams {
        DeviceParams {
            omega_q: self.omega_q,
            g_q: self.g_q,
            omega_tb0: self.omega_tb0,
            ..template.clone()
        }
    }
}

fn curve_span(curve: &TuningCurve) -> f64 {
    let (mut lo, mut hi) = (f64::MAX, f64::MIN);
    for &(phi, _) in curve {
        lo = lo.min(phi);
        hi = hi.max(phi);
    }
    if curve.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Simultaneous nonlinear least squares of the bus tuning curve and both
/// dispersive qubit curves.
///
/// Initial guesses: ω_TB,0 from the largest measured bus frequency, ω_i from
/// the mean of each qubit curve, g_i from the dressed-frequency spread across
/// the measured flux range.
pub fn fit_device_params(data: &SpectroscopyData) -> Result<FittedDeviceParams, DeviceError> {
    for (name, curve) in [("bus", &data.bus), ("q1", &data.q1), ("q2", &data.q2)] {
        if curve.len() < 4 {
            return Err(DeviceError::InsufficientData(format!(
                "{name} curve has {} points, need at least 4",
                curve.len()
            )));
        }
        let span = curve_span(curve);
        if span < 0.1 {
            return Err(DeviceError::InsufficientData(format!(
                "{name} curve spans {span:.4} Φ0, need at least 0.1 (rank-deficient in flux)"
            )));
        }
    }

    let bus_model = |wtb0: f64, phi: f64| wtb0 * (std::f64::consts::PI * phi).cos().abs().sqrt();
    let qubit_model = |wq: f64, g: f64, wtb0: f64, phi: f64| {
        let delta = wq - bus_model(wtb0, phi);
        wq + g * g / delta
    };

    // Initial guesses.
    let wtb0_0 = data
        .bus
        .iter()
        .map(|&(_, w)| w)
        .fold(f64::MIN, f64::max);
    let mean = |c: &TuningCurve| c.iter().map(|&(_, w)| w).sum::<f64>() / c.len() as f64;
    let wq_0 = [mean(&data.q1), mean(&data.q2)];
    let mut g_0 = [0.0; 2];
    for (q, curve) in [&data.q1, &data.q2].into_iter().enumerate() {
        // Spread of ω̃ across flux equals g²·spread(1/Δ); solve for g using
        // the initial bus/qubit estimates.
        let mut inv_lo = f64::MAX;
        let mut inv_hi = f64::MIN;
        let mut w_lo = f64::MAX;
        let mut w_hi = f64::MIN;
        for &(phi, w) in curve {
            let delta = wq_0[q] - bus_model(wtb0_0, phi);
            if delta != 0.0 {
                inv_lo = inv_lo.min(1.0 / delta);
                inv_hi = inv_hi.max(1.0 / delta);
            }
            w_lo = w_lo.min(w);
            w_hi = w_hi.max(w);
        }
        let inv_spread = (inv_hi - inv_lo).abs();
        g_0[q] = if inv_spread > 0.0 {
            ((w_hi - w_lo) / inv_spread).abs().sqrt()
        } else {
            mhz(50.0)
        };
        if !g_0[q].is_finite() || g_0[q] == 0.0 {
            g_0[q] = mhz(50.0);
        }
    }

    let residuals = |p: &[f64]| -> Vec<f64> {
        let (wtb0, w1, w2, g1, g2) = (p[0], p[1], p[2], p[3], p[4]);
        let mut r = Vec::with_capacity(data.bus.len() + data.q1.len() + data.q2.len());
        for &(phi, y) in &data.bus {
            r.push(bus_model(wtb0, phi) - y);
        }
        for &(phi, y) in &data.q1 {
            r.push(qubit_model(w1, g1, wtb0, phi) - y);
        }
        for &(phi, y) in &data.q2 {
            r.push(qubit_model(w2, g2, wtb0, phi) - y);
        }
        r
    };

    let initial = [wtb0_0, wq_0[0], wq_0[1], g_0[0], g_0[1]];
    let outcome = least_squares(residuals, &initial, &FitOptions::default())?;

    let p = &outcome.params;
    Ok(FittedDeviceParams {
        omega_tb0: p[0],
        omega_q: [p[1], p[2]],
        g_q: [p[3].abs(), p[4].abs()],
        uncertainties: [
            outcome.uncertainties[0],
            outcome.uncertainties[1],
            outcome.uncertainties[2],
            outcome.uncertainties[3],
            outcome.uncertainties[4],
        ],
        residual_rms: outcome.residual_rms,
    })
}
