// SPDX-License-Identifier: Apache-2.0

//! Full three-mode Duffing model and its frames.
//!
//! The static Hamiltonian at the DC bias defines the *measurement basis*:
//! the eigenbasis of the 27-dimensional model, with each low-lying eigenstate
//! labeled by the bare occupation it overlaps most. Dynamics under the flux
//! drive is expressed in the interaction frame of those eigenenergies, where
//! the drive appears as the bus-frequency excursion ω_TB(Φ(t)) − ω_TB(Θ)
//! conjugated into the measurement basis. With the drive off the interaction
//! Hamiltonian vanishes identically, which pins the frame convention.

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::device::{DeviceError, DeviceParams, DerivativeOrder, FluxPoint, FluxQuantity};
use crate::operators::{
    self, embed, CMatrix, HilbertSpace, Operator, OperatorError, Units,
};
use crate::pulses::FluxPulse;

/// Occupation label (n_Q1, n_Q2, n_TB).
pub type Label = [usize; 3];

#[derive(Debug, Error)]
pub enum HamiltonianError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("label assignment conflict: eigenstate {eigen_index} claimed by both {first:?} and {second:?}")]
    LabelConflict {
        eigen_index: usize,
        first: Label,
        second: Label,
    },
    #[error("eigenstate for label {label:?} has bare overlap {overlap:.3}, below 0.5; labeling is ambiguous")]
    LowOverlap { label: Label, overlap: f64 },
}

/// Duffing energy diagonal for one mode: ω n + (α/2) n(n−1).
fn duffing_diagonal(levels: usize, omega: f64, alpha: f64) -> CMatrix {
    let mut m = CMatrix::zeros(levels, levels);
    for n in 0..levels {
        let nf = n as f64;
        m[(n, n)] = Complex64::new(omega * nf + 0.5 * alpha * nf * (nf - 1.0), 0.0);
    }
    m
}

/// Full 27-dimensional Duffing Hamiltonian at a given flux, in the bare
/// product basis, rad/s. Includes the counter-rotating coupling
/// g_i (a†_i + a_i)(a†_TB + a_TB).
pub fn build_full_hamiltonian(params: &DeviceParams, flux: f64) -> Operator {
    let space = HilbertSpace::two_transmons_and_bus();
    let a = operators::lowering(3);
    let x = &a + a.adjoint();

    let mut h = embed(
        &duffing_diagonal(3, params.omega_q[0], params.alpha_q[0]),
        "Q1",
        &space,
    )
    .expect("known label");
    h += embed(
        &duffing_diagonal(3, params.omega_q[1], params.alpha_q[1]),
        "Q2",
        &space,
    )
    .expect("known label");
    h += embed(
        &duffing_diagonal(3, params.bus_frequency(flux), params.alpha_tb),
        "TB",
        &space,
    )
    .expect("known label");

    let x_tb = embed(&x, "TB", &space).expect("known label");
    for (q, label) in ["Q1", "Q2"].iter().enumerate() {
        let x_q = embed(&x, label, &space).expect("known label");
        h += (&x_q * &x_tb).map(|z| z * Complex64::new(params.g_q[q], 0.0));
    }

    Operator::hermitian(space, h, Units::AngularFrequency).expect("construction is Hermitian")
}

/// Eigenbasis of the static Hamiltonian at the DC bias, with occupation
/// labels assigned by maximum overlap against bare product states.
#[derive(Debug, Clone)]
pub struct LabeledBasis {
    pub space: HilbertSpace,
    pub params: DeviceParams,
    pub bias: FluxPoint,
    /// Eigenenergies in eigen order (ascending), rad/s.
    pub energies: Vec<f64>,
    /// Columns are eigenvectors in the bare basis (bare → measurement map).
    pub transform: CMatrix,
    eigen_of_label: BTreeMap<Label, usize>,
    label_of_eigen: Vec<Label>,
    /// Bus number operator conjugated into the measurement basis.
    n_tb_measurement: CMatrix,
    bus_frequency_at_bias: f64,
}

/// Diagonalize the static model at `bias` and label the eigenstates.
pub fn measurement_basis(
    params: &DeviceParams,
    bias: FluxPoint,
) -> Result<LabeledBasis, HamiltonianError> {
    let h0 = build_full_hamiltonian(params, bias.value());
    let space = h0.space.clone();
    let (energies, transform) = operators::eigh(&h0.matrix)?;

    let dim = space.total_dim();
    let mut label_of_eigen: Vec<Label> = Vec::with_capacity(dim);
    let mut eigen_of_label: BTreeMap<Label, usize> = BTreeMap::new();
    let mut claimed: Vec<Option<Label>> = vec![None; dim];

    for k in 0..dim {
        let mut best_b = 0;
        let mut best_overlap = -1.0;
        for b in 0..dim {
            let ov = transform[(b, k)].norm_sqr();
            if ov > best_overlap {
                best_overlap = ov;
                best_b = b;
            }
        }
        let occ = space.occupations(best_b);
        let label: Label = [occ[0], occ[1], occ[2]];
        if best_overlap <= 0.5 {
            return Err(HamiltonianError::LowOverlap {
                label,
                overlap: best_overlap,
            });
        }
        if let Some(first) = eigen_of_label.get(&label) {
            return Err(HamiltonianError::LabelConflict {
                eigen_index: k,
                first: label_of_eigen[*first],
                second: label,
            });
        }
        claimed[k] = Some(label);
        eigen_of_label.insert(label, k);
        label_of_eigen.push(label);
    }

    let n_tb_bare = embed(&operators::number(3), "TB", &space)?;
    let n_tb_measurement = transform.adjoint() * n_tb_bare * &transform;

    Ok(LabeledBasis {
        space,
        params: params.clone(),
        bias,
        energies,
        transform,
        eigen_of_label,
        label_of_eigen,
        n_tb_measurement,
        bus_frequency_at_bias: params.bus_frequency(bias.value()),
    })
}

impl LabeledBasis {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn eigen_index(&self, label: Label) -> usize {
        self.eigen_of_label[&label]
    }

    pub fn label_of(&self, eigen_index: usize) -> Label {
        self.label_of_eigen[eigen_index]
    }

    pub fn energy(&self, label: Label) -> f64 {
        self.energies[self.eigen_index(label)]
    }

    /// Eigen indices of the computational states in the order
    /// |00⟩, |01⟩, |10⟩, |11⟩ (bus in the ground state).
    pub fn computational_indices(&self) -> [usize; 4] {
        [
            self.eigen_index([0, 0, 0]),
            self.eigen_index([0, 1, 0]),
            self.eigen_index([1, 0, 0]),
            self.eigen_index([1, 1, 0]),
        ]
    }

    /// Dressed qubit-qubit detuning E(|10⟩) − E(|01⟩) at the bias (rad/s).
    pub fn dressed_splitting(&self) -> f64 {
        self.energy([1, 0, 0]) - self.energy([0, 1, 0])
    }

    /// ζ = E₁₁ − E₁₀ − E₀₁ + E₀₀ (rad/s).
    pub fn static_zz(&self) -> f64 {
        self.energy([1, 1, 0]) - self.energy([1, 0, 0]) - self.energy([0, 1, 0])
            + self.energy([0, 0, 0])
    }

    /// Conjugate a bare-basis operator into the measurement basis.
    pub fn to_measurement_basis(&self, bare: &CMatrix) -> CMatrix {
        self.transform.adjoint() * bare * &self.transform
    }

    /// Bus number operator in the measurement basis (cached).
    pub fn n_tb(&self) -> &CMatrix {
        &self.n_tb_measurement
    }

    /// Drive scalar f(t) = ω_TB(Φ(t)) − ω_TB(Θ); identically zero when the
    /// pulse envelope is zero or δ = 0.
    pub fn drive_scalar(&self, pulse: &FluxPulse, t: f64) -> f64 {
        self.params.bus_frequency(pulse.flux_at(t)) - self.bus_frequency_at_bias
    }

    /// Interaction-frame Hamiltonian at time `t` (27×27, rad/s):
    /// H_I(t) = f(t) · e^{iDt} N e^{−iDt}, where D is the diagonal of
    /// eigenenergies and N the measurement-basis bus number operator. The
    /// frame phases are applied elementwise.
    pub fn interaction_hamiltonian(&self, pulse: &FluxPulse, t: f64) -> CMatrix {
        let f = self.drive_scalar(pulse, t);
        let dim = self.dim();
        if f == 0.0 {
            return CMatrix::zeros(dim, dim);
        }
        let phases: Vec<Complex64> = self
            .energies
            .iter()
            .map(|&e| Complex64::new(0.0, e * t).exp())
            .collect();
        let mut h = self.n_tb_measurement.clone();
        for col in 0..dim {
            for row in 0..dim {
                h[(row, col)] *= phases[row] * phases[col].conj() * f;
            }
        }
        h
    }
}

/// Reduced two-level description of the driven exchange, assembled from the
/// dispersive flux derivatives at the bias.
#[derive(Debug, Clone)]
pub struct EffectiveModel {
    /// Dressed frequencies ω̃₁, ω̃₂ at δ = 0 (rad/s).
    pub dressed_frequencies: [f64; 2],
    /// Exchange rate Ω = (δ/2) ∂J/∂Φ (rad/s): the matrix element coupling
    /// |10⟩ and |01⟩ on resonance; population transfers as sin²(Ω t), a full
    /// swap at Ω t = π/2.
    pub exchange_rate: f64,
    /// Drive-shifted detuning Δ₁₂,δ (rad/s): the resonance condition.
    pub detuning: f64,
    /// Second-harmonic coefficient (δ²/4) ∂²J/∂Φ² (rad/s), resonant at
    /// 2ω_Φ = Δ₁₂,δ.
    pub second_harmonic_rate: f64,
    /// Drive amplitude the model was built for.
    pub delta: f64,
    /// Set when δ exceeds 0.2 and the quadratic expansion becomes doubtful.
    pub beyond_linear_regime: bool,
}

impl EffectiveModel {
    /// Drive duration for a full swap (iSWAP angle), Ω t = π/2.
    pub fn full_swap_duration(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 / self.exchange_rate.abs()
    }

    /// Drive duration for the first equal-superposition crossing, Ω t = π/4.
    pub fn half_swap_duration(&self) -> f64 {
        0.5 * self.full_swap_duration()
    }

    /// Population oscillation period 2π/(2Ω).
    pub fn oscillation_period(&self) -> f64 {
        std::f64::consts::PI / self.exchange_rate.abs()
    }
}

/// Assemble the effective exchange model at a bias and drive amplitude.
pub fn effective_model(
    params: &DeviceParams,
    bias: FluxPoint,
    delta: f64,
) -> Result<EffectiveModel, DeviceError> {
    let theta = bias.value();
    let dressed = [
        params.dressed_frequency(0, theta)?,
        params.dressed_frequency(1, theta)?,
    ];
    let exchange_rate = if delta == 0.0 {
        0.0
    } else {
        0.5 * delta * params.flux_derivative(FluxQuantity::Exchange, theta, DerivativeOrder::First)?
    };
    let second_harmonic_rate = if delta == 0.0 {
        0.0
    } else {
        0.25 * delta
            * delta
            * params.flux_derivative(FluxQuantity::Exchange, theta, DerivativeOrder::Second)?
    };
    let detuning = params.drive_shifted_detuning(theta, delta)?;
    Ok(EffectiveModel {
        dressed_frequencies: dressed,
        exchange_rate,
        detuning,
        second_harmonic_rate,
        delta,
        beyond_linear_regime: delta > 0.2,
    })
}
