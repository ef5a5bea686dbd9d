// SPDX-License-Identifier: Apache-2.0

//! Two-qubit state and process tomography.
//!
//! States are reconstructed from Pauli expectation values measured in the
//! nine two-qubit Pauli bases, with optional finite-shot sampling and a
//! per-qubit symmetric readout confusion model. Linear inversion gives the
//! raw estimate; the maximum-likelihood estimate is the eigenvalue-truncation
//! projection onto the physical (positive, unit-trace) set. Process
//! tomography pushes the sixteen informationally complete product inputs
//! {|0⟩, |1⟩, |+⟩, |+i⟩}⊗² through a channel and assembles the Pauli
//! transfer matrix from the reconstructed outputs.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::operators::{self, eigh, CMatrix, CVector};

#[derive(Debug, Error)]
pub enum TomographyError {
    #[error("readout fidelity {0} makes the confusion matrix singular (must differ from 0.5)")]
    SingularConfusion(f64),
    #[error("state is not positive semidefinite: eigenvalue {0:.3e}")]
    NotPositive(f64),
    #[error("shots must be positive")]
    NoShots,
}

/// Real matrix type for transfer matrices.
pub type RMatrix = DMatrix<f64>;

/// Two-qubit Pauli basis in the order II, IX, IY, IZ, XI, ... ZZ
/// (first factor acts on Q1). Index = 4·a + b.
pub fn pauli_basis() -> Vec<CMatrix> {
    let singles = ['I', 'X', 'Y', 'Z'];
    let mut out = Vec::with_capacity(16);
    for a in singles {
        for b in singles {
            out.push(operators::pauli(a).kronecker(&operators::pauli(b)));
        }
    }
    out
}

/// Pauli transfer matrix: R_ij = Tr(P_i E(P_j))/d with d = 4.
///
/// Rows and columns follow [`pauli_basis`] order. For trace-preserving
/// channels the first row is (1, 0, …, 0); entry magnitudes never exceed 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTransferMatrix {
    pub matrix: RMatrix,
}

impl PauliTransferMatrix {
    pub fn identity() -> Self {
        PauliTransferMatrix {
            matrix: RMatrix::identity(16, 16),
        }
    }

    /// PTM of a unitary acting on the two-qubit space.
    pub fn from_unitary(u: &CMatrix) -> Self {
        let paulis = pauli_basis();
        let udag = u.adjoint();
        let mut r = RMatrix::zeros(16, 16);
        for (j, pj) in paulis.iter().enumerate() {
            let conj = u * pj * &udag;
            for (i, pi) in paulis.iter().enumerate() {
                r[(i, j)] = (pi * &conj).trace().re / 4.0;
            }
        }
        PauliTransferMatrix { matrix: r }
    }

    /// PTM of an arbitrary linear channel given as a closure on 4×4
    /// density-operator space.
    pub fn from_channel<F: Fn(&CMatrix) -> CMatrix>(channel: F) -> Self {
        let paulis = pauli_basis();
        let mut r = RMatrix::zeros(16, 16);
        for (j, pj) in paulis.iter().enumerate() {
            let out = channel(pj);
            for (i, pi) in paulis.iter().enumerate() {
                r[(i, j)] = (pi * &out).trace().re / 4.0;
            }
        }
        PauliTransferMatrix { matrix: r }
    }

    /// Two-qubit depolarizing channel: E(ρ) = (1−p)ρ + p I/4 Tr ρ.
    pub fn depolarizing(p: f64) -> Self {
        let mut r = RMatrix::identity(16, 16) * (1.0 - p);
        r[(0, 0)] = 1.0;
        PauliTransferMatrix { matrix: r }
    }

    /// Channel composition: `self` applied after `earlier`.
    pub fn compose(&self, earlier: &PauliTransferMatrix) -> Self {
        PauliTransferMatrix {
            matrix: &self.matrix * &earlier.matrix,
        }
    }

    /// Apply to a state given as a Pauli expectation vector (length 16,
    /// entry 0 is Tr ρ · … = 1 for unit trace states after the 1/d scaling
    /// used here: v_i = Tr(P_i ρ)).
    pub fn apply_to_pauli_vector(&self, v: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        &self.matrix * v
    }

    /// Average trace retained on the maximally mixed input: Tr E(I)/4.
    /// Equals 1 for trace-preserving channels, less under leakage.
    pub fn trace_retention(&self) -> f64 {
        self.matrix[(0, 0)]
    }

    /// Process fidelity to another PTM: Tr(R_a^T R_b)/d².
    pub fn process_fidelity(&self, other: &PauliTransferMatrix) -> f64 {
        (self.matrix.transpose() * &other.matrix).trace() / 16.0
    }
}

/// Pauli expectation vector of a 4×4 density matrix: v_i = Tr(P_i ρ).
pub fn pauli_vector(rho: &CMatrix) -> nalgebra::DVector<f64> {
    let paulis = pauli_basis();
    nalgebra::DVector::from_iterator(16, paulis.iter().map(|p| (p * rho).trace().re))
}

/// Inverse of [`pauli_vector`]: ρ = (1/4) Σ v_i P_i.
pub fn state_from_pauli_vector(v: &nalgebra::DVector<f64>) -> CMatrix {
    let paulis = pauli_basis();
    let mut rho = CMatrix::zeros(4, 4);
    for (vi, p) in v.iter().zip(&paulis) {
        rho += p.map(|z| z * Complex64::new(vi / 4.0, 0.0));
    }
    rho
}

/// Project a Hermitian matrix onto the nearest positive-semidefinite matrix
/// with unit trace (eigenvalue truncation with uniform redistribution).
///
/// This is the closed-form maximum-likelihood estimate under Gaussian
/// measurement noise: eigenvalues are sorted, negative mass is redistributed
/// over the remaining levels, and clipped levels are set to zero.
pub fn project_to_physical(rho: &CMatrix) -> CMatrix {
    let sym = (rho + rho.adjoint()).scale(0.5);
    let tr = sym.trace().re;
    let normalized = if tr.abs() > 1e-12 {
        sym.map(|z| z / Complex64::new(tr, 0.0))
    } else {
        sym
    };
    let (vals, vecs) = eigh(&normalized).expect("symmetrized input");
    let d = vals.len();
    // Work from the smallest eigenvalue up, zeroing negatives and spreading
    // the deficit across the still-positive levels.
    let mut lambda = vals.clone();
    let mut deficit = 0.0;
    for k in 0..d {
        let adjusted = lambda[k] + deficit / (d - k) as f64;
        if adjusted < 0.0 {
            deficit += lambda[k];
            lambda[k] = 0.0;
        } else {
            for item in lambda.iter_mut().skip(k) {
                *item += deficit / (d - k) as f64;
            }
            break;
        }
    }
    let mut out = CMatrix::zeros(d, d);
    for k in 0..d {
        if lambda[k] > 0.0 {
            let v = vecs.column(k);
            out += (v * v.adjoint()).map(|z| z * Complex64::new(lambda[k], 0.0));
        }
    }
    out
}

/// State fidelity. For a pure target |ψ⟩ this is ⟨ψ|ρ|ψ⟩; in general
/// (Tr √(√ρ σ √ρ))².
pub fn state_fidelity(rho: &CMatrix, sigma: &CMatrix) -> Result<f64, TomographyError> {
    let sqrt_rho = psd_sqrt(rho)?;
    let inner = &sqrt_rho * sigma * &sqrt_rho;
    let (vals, _) = eigh(&(&inner + inner.adjoint()).scale(0.5)).expect("Hermitian");
    let mut acc = 0.0;
    for v in vals {
        if v < -1e-9 {
            return Err(TomographyError::NotPositive(v));
        }
        acc += v.max(0.0).sqrt();
    }
    Ok(acc * acc)
}

/// Fidelity of ρ against a pure state vector: ⟨ψ|ρ|ψ⟩.
pub fn fidelity_to_pure(rho: &CMatrix, psi: &CVector) -> f64 {
    (psi.adjoint() * rho * psi)[(0, 0)].re
}

fn psd_sqrt(m: &CMatrix) -> Result<CMatrix, TomographyError> {
    let (vals, vecs) = eigh(&(m + m.adjoint()).scale(0.5)).expect("Hermitian");
    let d = vals.len();
    let mut out = CMatrix::zeros(d, d);
    for k in 0..d {
        if vals[k] < -1e-9 {
            return Err(TomographyError::NotPositive(vals[k]));
        }
        let v = vecs.column(k);
        out += (v * v.adjoint()).map(|z| z * Complex64::new(vals[k].max(0.0).sqrt(), 0.0));
    }
    Ok(out)
}

/// Measurement settings: the nine product Pauli bases (X, Y, Z)⊗(X, Y, Z).
/// Single-qubit expectations come from the marginals.
const BASIS_SETTINGS: [(char, char); 9] = [
    ('X', 'X'),
    ('X', 'Y'),
    ('X', 'Z'),
    ('Y', 'X'),
    ('Y', 'Y'),
    ('Y', 'Z'),
    ('Z', 'X'),
    ('Z', 'Y'),
    ('Z', 'Z'),
];

/// One measured basis setting: outcome counts over the four two-qubit
/// outcomes (+1+1, +1−1, −1+1, −1−1) in that basis.
#[derive(Debug, Clone)]
pub struct MeasurementRecord {
    pub basis: (char, char),
    pub shots: u64,
    pub counts: [u64; 4],
    pub readout_fidelities: (f64, f64),
}

/// Sampling configuration for simulated tomography experiments.
#[derive(Debug, Clone, Copy)]
pub struct SamplingConfig {
    /// Shots per basis setting; `None` means the infinite-shot limit.
    pub shots_per_setting: Option<u64>,
    /// Per-qubit symmetric readout fidelity (probability of reading the
    /// prepared value). 1.0 is perfect readout.
    pub readout_fidelities: (f64, f64),
}

impl SamplingConfig {
    pub fn ideal() -> Self {
        SamplingConfig {
            shots_per_setting: None,
            readout_fidelities: (1.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<(), TomographyError> {
        for f in [self.readout_fidelities.0, self.readout_fidelities.1] {
            if (f - 0.5).abs() < 1e-9 {
                return Err(TomographyError::SingularConfusion(f));
            }
        }
        if let Some(0) = self.shots_per_setting {
            return Err(TomographyError::NoShots);
        }
        Ok(())
    }
}

/// Result of two-qubit state tomography.
#[derive(Debug, Clone)]
pub struct StateTomography {
    /// Raw linear-inversion estimate (may be unphysical at finite shots).
    pub linear_inversion: CMatrix,
    /// Physical (PSD, unit-trace) maximum-likelihood estimate.
    pub mle: CMatrix,
    /// Estimated Pauli expectation vector (16 entries, entry 0 fixed at 1).
    pub pauli_expectations: nalgebra::DVector<f64>,
    pub records: Vec<MeasurementRecord>,
}

fn single_qubit_basis_change(p: char) -> CMatrix {
    // Rows are measurement outcomes: U|ψ⟩ expressed so outcome k has
    // amplitude ⟨b_k|ψ⟩ with |b_k⟩ the ±1 eigenvectors of the Pauli.
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let c = |re: f64, im: f64| Complex64::new(re, im);
    match p {
        'X' => CMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)]),
        'Y' => CMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(0.0, -s), c(s, 0.0), c(0.0, s)]),
        'Z' => CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]),
        _ => panic!("unknown basis '{p}'"),
    }
}

/// Ideal outcome probabilities for a basis setting, before readout error.
fn outcome_probabilities(rho: &CMatrix, basis: (char, char)) -> [f64; 4] {
    let u = single_qubit_basis_change(basis.0).kronecker(&single_qubit_basis_change(basis.1));
    let rotated = &u * rho * u.adjoint();
    [
        rotated[(0, 0)].re.max(0.0),
        rotated[(1, 1)].re.max(0.0),
        rotated[(2, 2)].re.max(0.0),
        rotated[(3, 3)].re.max(0.0),
    ]
}

/// Apply per-qubit symmetric confusion to ideal outcome probabilities.
fn confuse(probs: &[f64; 4], f1: f64, f2: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (read, out_p) in out.iter_mut().enumerate() {
        for (truth, p) in probs.iter().enumerate() {
            let b1_match = (read >> 1) == (truth >> 1);
            let b2_match = (read & 1) == (truth & 1);
            let w1 = if b1_match { f1 } else { 1.0 - f1 };
            let w2 = if b2_match { f2 } else { 1.0 - f2 };
            *out_p += p * w1 * w2;
        }
    }
    out
}

/// Invert the per-qubit confusion on measured outcome frequencies.
fn deconfuse(freqs: &[f64; 4], f1: f64, f2: f64) -> [f64; 4] {
    // Inverse of the 2×2 symmetric confusion [[f, 1−f], [1−f, f]] is
    // [[f, −(1−f)], [−(1−f), f]] / (2f−1), applied per qubit.
    let inv1 = [
        [f1 / (2.0 * f1 - 1.0), -(1.0 - f1) / (2.0 * f1 - 1.0)],
        [-(1.0 - f1) / (2.0 * f1 - 1.0), f1 / (2.0 * f1 - 1.0)],
    ];
    let inv2 = [
        [f2 / (2.0 * f2 - 1.0), -(1.0 - f2) / (2.0 * f2 - 1.0)],
        [-(1.0 - f2) / (2.0 * f2 - 1.0), f2 / (2.0 * f2 - 1.0)],
    ];
    let mut out = [0.0; 4];
    for (truth, out_p) in out.iter_mut().enumerate() {
        for (read, f) in freqs.iter().enumerate() {
            *out_p += inv1[truth >> 1][read >> 1] * inv2[truth & 1][read & 1] * f;
        }
    }
    out
}

/// Measure one basis setting of a state, with optional sampling noise and
/// readout confusion, and return deconfused outcome frequencies plus the
/// record.
fn measure_setting<R: Rng>(
    rho: &CMatrix,
    basis: (char, char),
    config: &SamplingConfig,
    rng: &mut R,
) -> ([f64; 4], MeasurementRecord) {
    let ideal = outcome_probabilities(rho, basis);
    let (f1, f2) = config.readout_fidelities;
    let confused = confuse(&ideal, f1, f2);
    let (freqs, shots, counts) = match config.shots_per_setting {
        None => (confused, 0, [0u64; 4]),
        Some(shots) => {
            let mut counts = [0u64; 4];
            // Normalize against rounding drift.
            let total: f64 = confused.iter().sum();
            for _ in 0..shots {
                let mut x = rng.gen::<f64>() * total;
                let mut outcome = 3;
                for (k, p) in confused.iter().enumerate() {
                    if x < *p {
                        outcome = k;
                        break;
                    }
                    x -= p;
                }
                counts[outcome] += 1;
            }
            let freqs = [
                counts[0] as f64 / shots as f64,
                counts[1] as f64 / shots as f64,
                counts[2] as f64 / shots as f64,
                counts[3] as f64 / shots as f64,
            ];
            (freqs, shots, counts)
        }
    };
    let deconfused = deconfuse(&freqs, f1, f2);
    (
        deconfused,
        MeasurementRecord {
            basis,
            shots,
            counts,
            readout_fidelities: (f1, f2),
        },
    )
}

/// Two-qubit state tomography over the nine Pauli bases.
pub fn state_tomography<R: Rng>(
    rho: &CMatrix,
    config: &SamplingConfig,
    rng: &mut R,
) -> Result<StateTomography, TomographyError> {
    config.validate()?;
    let mut expectations = nalgebra::DVector::zeros(16);
    expectations[0] = 1.0;
    // Accumulate single-qubit expectations over every setting that contains
    // the Pauli; two-qubit correlators come from their unique setting.
    let mut single_acc = [[0.0; 4]; 2]; // [qubit][pauli 1..3], count in [0]
    let mut records = Vec::with_capacity(9);

    let pauli_index = |p: char| -> usize {
        match p {
            'X' => 1,
            'Y' => 2,
            'Z' => 3,
            _ => unreachable!(),
        }
    };

    for basis in BASIS_SETTINGS {
        let (freqs, record) = measure_setting(rho, basis, config, rng);
        records.push(record);
        // Outcome signs: outcome index bits (b1 b2), 0 → +1.
        let sign = |bit: usize| if bit == 0 { 1.0 } else { -1.0 };
        let mut corr = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (k, f) in freqs.iter().enumerate() {
            corr += sign(k >> 1) * sign(k & 1) * f;
            m1 += sign(k >> 1) * f;
            m2 += sign(k & 1) * f;
        }
        let i = pauli_index(basis.0);
        let j = pauli_index(basis.1);
        expectations[4 * i + j] = corr;
        single_acc[0][i] += m1;
        single_acc[0][0] += 1.0;
        single_acc[1][j] += m2;
        single_acc[1][0] += 1.0;
    }
    // Each single-qubit Pauli appears in three settings; average them.
    for p in 1..4 {
        expectations[4 * p] = single_acc[0][p] / 3.0;
        expectations[p] = single_acc[1][p] / 3.0;
    }

    let linear = state_from_pauli_vector(&expectations);
    let mle = project_to_physical(&linear);
    Ok(StateTomography {
        linear_inversion: linear,
        mle,
        pauli_expectations: expectations,
        records,
    })
}

/// The sixteen informationally complete product input states
/// {|0⟩, |1⟩, |+⟩, |+i⟩} ⊗ {|0⟩, |1⟩, |+⟩, |+i⟩} as density matrices,
/// indexed 4·s1 + s2.
pub fn preparation_states() -> Vec<CMatrix> {
    let kets: Vec<CVector> = vec![
        CVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]),
        CVector::from_vec(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]),
        CVector::from_vec(vec![
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ]),
        CVector::from_vec(vec![
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2),
        ]),
    ];
    let mut out = Vec::with_capacity(16);
    for a in &kets {
        for b in &kets {
            let ket = a.kronecker(b);
            out.push(&ket * ket.adjoint());
        }
    }
    out
}

// Expansion of each single-qubit Pauli over the four preparation states:
// I = ρ0 + ρ1, Z = ρ0 − ρ1, X = 2ρ+ − ρ0 − ρ1, Y = 2ρ+i − ρ0 − ρ1.
const PREP_EXPANSION: [[f64; 4]; 4] = [
    [1.0, 1.0, 0.0, 0.0],
    [-1.0, -1.0, 2.0, 0.0],
    [-1.0, -1.0, 0.0, 2.0],
    [1.0, -1.0, 0.0, 0.0],
];

/// Result of two-qubit process tomography.
#[derive(Debug, Clone)]
pub struct ProcessTomography {
    /// PTM assembled from raw linear-inversion state estimates.
    pub ptm_linear: PauliTransferMatrix,
    /// PTM assembled from MLE state estimates.
    pub ptm_mle: PauliTransferMatrix,
    /// Process / average gate fidelities of both PTMs against the ideal.
    pub process_fidelity_linear: f64,
    pub process_fidelity_mle: f64,
    pub average_fidelity_linear: f64,
    pub average_fidelity_mle: f64,
}

/// Full quantum process tomography of a channel against an ideal unitary.
///
/// `channel` maps a 4×4 input density matrix to the 4×4 output (possibly
/// trace-decreasing under leakage).
pub fn process_tomography<F, R>(
    channel: F,
    ideal: &CMatrix,
    config: &SamplingConfig,
    rng: &mut R,
) -> Result<ProcessTomography, TomographyError>
where
    F: Fn(&CMatrix) -> CMatrix,
    R: Rng,
{
    config.validate()?;
    let preps = preparation_states();
    let mut outputs_linear = Vec::with_capacity(16);
    let mut outputs_mle = Vec::with_capacity(16);
    for prep in &preps {
        let out = channel(prep);
        let tomo = state_tomography(&out, config, rng)?;
        outputs_linear.push(tomo.linear_inversion);
        outputs_mle.push(tomo.mle);
    }

    let assemble = |outputs: &[CMatrix]| -> PauliTransferMatrix {
        let paulis = pauli_basis();
        let mut r = RMatrix::zeros(16, 16);
        for j in 0..16 {
            let (a, b) = (j / 4, j % 4);
            // E(P_a ⊗ P_b) from the linear combination of prepared outputs.
            let mut image = CMatrix::zeros(4, 4);
            for (s1, &c1) in PREP_EXPANSION[a].iter().enumerate() {
                if c1 == 0.0 {
                    continue;
                }
                for (s2, &c2) in PREP_EXPANSION[b].iter().enumerate() {
                    if c2 == 0.0 {
                        continue;
                    }
                    image += outputs[4 * s1 + s2].map(|z| z * Complex64::new(c1 * c2, 0.0));
                }
            }
            for (i, pi) in paulis.iter().enumerate() {
                r[(i, j)] = (pi * &image).trace().re / 4.0;
            }
        }
        PauliTransferMatrix { matrix: r }
    };

    let ptm_linear = assemble(&outputs_linear);
    let ptm_mle = assemble(&outputs_mle);
    let ideal_ptm = PauliTransferMatrix::from_unitary(ideal);
    let fpro_lin = ideal_ptm.process_fidelity(&ptm_linear);
    let fpro_mle = ideal_ptm.process_fidelity(&ptm_mle);
    Ok(ProcessTomography {
        process_fidelity_linear: fpro_lin,
        process_fidelity_mle: fpro_mle,
        average_fidelity_linear: average_fidelity_from_process(fpro_lin, ptm_linear.trace_retention()),
        average_fidelity_mle: average_fidelity_from_process(fpro_mle, ptm_mle.trace_retention()),
        ptm_linear,
        ptm_mle,
    })
}

/// Average gate fidelity from process fidelity: (d·F_pro + s)/(d + 1) with
/// d = 4 and s = Tr E(I)/d, the trace retained on the maximally mixed input
/// (1 for trace-preserving channels; leakage enters as trace loss).
pub fn average_fidelity_from_process(f_pro: f64, trace_retention: f64) -> f64 {
    (4.0 * f_pro + trace_retention) / 5.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn bell_state() -> CVector {
        // (|10⟩ − i|01⟩)/√2, basis order 00, 01, 10, 11.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        CVector::from_vec(vec![c(0.0, 0.0), c(0.0, -s), c(s, 0.0), c(0.0, 0.0)])
    }

    fn iswap() -> CMatrix {
        // Exchange gate at full angle: |01⟩ → −i|10⟩, |10⟩ → −i|01⟩.
        let mut u = CMatrix::zeros(4, 4);
        u[(0, 0)] = c(1.0, 0.0);
        u[(3, 3)] = c(1.0, 0.0);
        u[(1, 2)] = c(0.0, -1.0);
        u[(2, 1)] = c(0.0, -1.0);
        u
    }

    #[test]
    fn ptm_of_identity_is_identity() {
        let ptm = PauliTransferMatrix::from_unitary(&operators::identity(4));
        assert_relative_eq!(
            (ptm.matrix - RMatrix::identity(16, 16)).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn ptm_entries_bounded_and_tp_row() {
        let ptm = PauliTransferMatrix::from_unitary(&iswap());
        for v in ptm.matrix.iter() {
            assert!(v.abs() <= 1.0 + 1e-12);
        }
        assert_relative_eq!(ptm.matrix[(0, 0)], 1.0, epsilon = 1e-12);
        for j in 1..16 {
            assert_relative_eq!(ptm.matrix[(0, j)], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn depolarizing_ptm_fidelity() {
        // F_avg of the fully depolarizing channel against identity is 1/d.
        let dep = PauliTransferMatrix::depolarizing(1.0);
        let f_pro = PauliTransferMatrix::identity().process_fidelity(&dep);
        let f_avg = average_fidelity_from_process(f_pro, dep.trace_retention());
        assert_relative_eq!(f_avg, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn pauli_vector_round_trip() {
        let psi = bell_state();
        let rho = &psi * psi.adjoint();
        let v = pauli_vector(&rho);
        let back = state_from_pauli_vector(&v);
        assert_relative_eq!((back - rho).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn bell_state_pauli_signature() {
        // Direct expectation oracle for (|10⟩ − i|01⟩)/√2: the nonzero
        // Pauli terms are XY = −1, YX = +1, ZZ = −1 (XX = YY = IZ = ZI = 0).
        let psi = bell_state();
        let rho = &psi * psi.adjoint();
        let v = pauli_vector(&rho);
        let idx = |a: usize, b: usize| 4 * a + b; // I,X,Y,Z = 0..3
        assert_relative_eq!(v[idx(1, 2)], -1.0, epsilon = 1e-12); // XY
        assert_relative_eq!(v[idx(2, 1)], 1.0, epsilon = 1e-12); // YX
        assert_relative_eq!(v[idx(3, 3)], -1.0, epsilon = 1e-12); // ZZ
        assert_relative_eq!(v[idx(1, 1)], 0.0, epsilon = 1e-12); // XX
        assert_relative_eq!(v[idx(2, 2)], 0.0, epsilon = 1e-12); // YY
        assert_relative_eq!(v[idx(0, 3)], 0.0, epsilon = 1e-12); // IZ
        assert_relative_eq!(v[idx(3, 0)], 0.0, epsilon = 1e-12); // ZI
        // Sanity: exactly 4 nonzero entries including II.
        let nonzero = v.iter().filter(|x| x.abs() > 1e-9).count();
        assert_eq!(nonzero, 4);
    }

    #[test]
    fn infinite_shot_tomography_is_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut rho = CMatrix::zeros(4, 4);
        rho[(0, 0)] = c(1.0, 0.0); // |00⟩
        let tomo = state_tomography(&rho, &SamplingConfig::ideal(), &mut rng).unwrap();
        assert!(
            (tomo.linear_inversion.clone() - &rho).norm() < 1e-9,
            "residual {}",
            (tomo.linear_inversion - &rho).norm()
        );
    }

    #[test]
    fn linear_inversion_round_trips_random_states() {
        // Noiseless synthetic data round-trips arbitrary physical ρ.
        use rand::Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..5 {
            let g = CMatrix::from_fn(4, 4, |_, _| {
                c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let mut rho = &g * g.adjoint();
            let tr = rho.trace();
            rho /= tr;
            let tomo = state_tomography(&rho, &SamplingConfig::ideal(), &mut rng).unwrap();
            assert!((tomo.linear_inversion - &rho).norm() < 1e-12);
        }
    }

    #[test]
    fn readout_confusion_inverts_exactly_at_infinite_shots() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let psi = bell_state();
        let rho = &psi * psi.adjoint();
        let config = SamplingConfig {
            shots_per_setting: None,
            readout_fidelities: (0.70, 0.73),
        };
        let tomo = state_tomography(&rho, &config, &mut rng).unwrap();
        assert!((tomo.linear_inversion - &rho).norm() < 1e-9);
    }

    #[test]
    fn singular_confusion_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let rho = operators::identity(4).scale(0.25);
        let config = SamplingConfig {
            shots_per_setting: Some(100),
            readout_fidelities: (0.5, 0.9),
        };
        assert!(matches!(
            state_tomography(&rho, &config, &mut rng),
            Err(TomographyError::SingularConfusion(_))
        ));
    }

    #[test]
    fn mle_projection_properties() {
        // Already-physical states are fixed points; unphysical inputs come
        // back PSD with unit trace.
        let psi = bell_state();
        let rho = &psi * psi.adjoint();
        let projected = project_to_physical(&rho);
        assert!((projected.clone() - &rho).norm() < 1e-10);

        let mut bad = rho.clone();
        bad[(3, 3)] = c(-0.2, 0.0);
        bad[(0, 0)] = c(0.2, 0.0);
        let fixed = project_to_physical(&bad);
        let (vals, _) = eigh(&fixed).unwrap();
        assert!(vals.iter().all(|&v| v >= -1e-12));
        assert_relative_eq!(fixed.trace().re, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn finite_shot_error_shrinks_with_shots() {
        // Estimator converges at the 1/√N rate (checked loosely over three
        // shot counts with many repetitions folded into one seed each).
        let psi = bell_state();
        let rho = &psi * psi.adjoint();
        let mut errs = Vec::new();
        for (seed, shots) in [(11u64, 400u64), (12, 10_000), (13, 250_000)] {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let config = SamplingConfig {
                shots_per_setting: Some(shots),
                readout_fidelities: (1.0, 1.0),
            };
            let tomo = state_tomography(&rho, &config, &mut rng).unwrap();
            errs.push((tomo.linear_inversion - &rho).norm());
        }
        assert!(errs[0] > errs[2], "errors {errs:?}");
        // 625× more shots should give ~25× smaller error; allow a wide band.
        assert!(errs[2] < errs[0] / 5.0, "errors {errs:?}");
    }

    #[test]
    fn fidelity_basics() {
        let psi = bell_state();
        let rho = &psi * psi.adjoint();
        assert_relative_eq!(state_fidelity(&rho, &rho).unwrap(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(fidelity_to_pure(&rho, &psi), 1.0, epsilon = 1e-12);

        let mut zero = CMatrix::zeros(4, 4);
        zero[(0, 0)] = c(1.0, 0.0);
        let mut one = CMatrix::zeros(4, 4);
        one[(3, 3)] = c(1.0, 0.0);
        assert_relative_eq!(state_fidelity(&zero, &one).unwrap(), 0.0, epsilon = 1e-12);

        let mixed = operators::identity(4).scale(0.25);
        assert_relative_eq!(fidelity_to_pure(&mixed, &psi), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn process_tomography_identity_channel() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let out = process_tomography(
            |rho| rho.clone(),
            &operators::identity(4),
            &SamplingConfig::ideal(),
            &mut rng,
        )
        .unwrap();
        assert!((out.ptm_linear.matrix.clone() - RMatrix::identity(16, 16)).norm() < 1e-9);
        assert_relative_eq!(out.average_fidelity_linear, 1.0, epsilon = 1e-9);
        assert_relative_eq!(out.average_fidelity_mle, 1.0, epsilon = 1e-7);
    }

    #[test]
    fn process_tomography_matches_conjugation_oracle_for_iswap() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let gate = iswap();
        let u = gate.clone();
        let out = process_tomography(
            move |rho| &u * rho * u.adjoint(),
            &gate,
            &SamplingConfig::ideal(),
            &mut rng,
        )
        .unwrap();
        let oracle = PauliTransferMatrix::from_unitary(&gate);
        assert!((out.ptm_linear.matrix.clone() - &oracle.matrix).norm() < 1e-9);
        assert_relative_eq!(out.average_fidelity_linear, 1.0, epsilon = 1e-9);
    }
}
