// SPDX-License-Identifier: Apache-2.0

//! Dense complex operators on labeled tensor-product Hilbert spaces.
//!
//! Everything downstream (device model, dynamics, tomography) is built on the
//! types here: [`HilbertSpace`] describes the tensor factorization,
//! [`Operator`] is a dense complex matrix tied to a space, and
//! [`DensityMatrix`] is a validated quantum state. Dimensions in this crate
//! are small (≤ 27), so all storage is dense and all spectral operations are
//! direct.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = DMatrix<Complex64>;
/// Dense complex vector (pure states, eigenvalue phases).
pub type CVector = DVector<Complex64>;

pub(crate) const I1: Complex64 = Complex64::new(0.0, 1.0);

/// Relative tolerance for Hermiticity checks.
pub const HERMITICITY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("unknown subsystem label '{0}'")]
    UnknownLabel(String),
    #[error("dimension mismatch: operator is {found}x{found}, subsystem '{label}' has dimension {expected}")]
    DimensionMismatch {
        label: String,
        expected: usize,
        found: usize,
    },
    #[error("matrix is not Hermitian: relative asymmetry {0:.3e}")]
    NotHermitian(f64),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("keep set is empty")]
    EmptyKeepSet,
    #[error("state validation failed: {0}")]
    InvalidState(String),
}

/// Unit tag carried by every [`Operator`].
///
/// Hamiltonian-type operators are stored in angular frequency (rad/s);
/// conversion from cyclic frequencies happens exactly once at config parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Dimensionless,
    /// rad/s
    AngularFrequency,
}

#[derive(Debug, PartialEq, Eq)]
struct SpaceInner {
    dims: Vec<usize>,
    labels: Vec<String>,
}

/// Ordered tensor product of finite-dimensional subsystems, each with a
/// unique name. The first label varies slowest in the composite basis index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertSpace(Arc<SpaceInner>);

impl HilbertSpace {
    /// Build a space from `(label, dimension)` pairs.
    ///
    /// Panics if labels repeat or any dimension is < 2; these are programmer
    /// errors, not runtime conditions.
    pub fn new(subsystems: &[(&str, usize)]) -> Self {
        let mut labels = Vec::with_capacity(subsystems.len());
        let mut dims = Vec::with_capacity(subsystems.len());
        for (label, dim) in subsystems {
            assert!(*dim >= 2, "subsystem '{label}' must have dimension >= 2");
            assert!(
                !labels.contains(&label.to_string()),
                "duplicate subsystem label '{label}'"
            );
            labels.push(label.to_string());
            dims.push(*dim);
        }
        assert!(!dims.is_empty(), "space must have at least one subsystem");
        HilbertSpace(Arc::new(SpaceInner { dims, labels }))
    }

    /// Two qubits and a bus, each truncated to three levels.
    pub fn two_transmons_and_bus() -> Self {
        Self::new(&[("Q1", 3), ("Q2", 3), ("TB", 3)])
    }

    pub fn total_dim(&self) -> usize {
        self.0.dims.iter().product()
    }

    pub fn n_subsystems(&self) -> usize {
        self.0.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.0.dims
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.0.labels.iter().map(|s| s.as_str())
    }

    pub fn position_of(&self, label: &str) -> Result<usize, OperatorError> {
        self.0
            .labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| OperatorError::UnknownLabel(label.to_string()))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize, OperatorError> {
        Ok(self.0.dims[self.position_of(label)?])
    }

    /// Composite basis index of an occupation tuple (first label slowest).
    pub fn basis_index(&self, occupations: &[usize]) -> usize {
        assert_eq!(occupations.len(), self.n_subsystems());
        let mut idx = 0;
        for (n, d) in occupations.iter().zip(self.0.dims.iter()) {
            assert!(n < d, "occupation {n} out of range for dimension {d}");
            idx = idx * d + n;
        }
        idx
    }

    /// Occupation tuple of a composite basis index.
    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.n_subsystems()];
        for (k, d) in self.0.dims.iter().enumerate().rev() {
            occ[k] = index % d;
            index /= d;
        }
        occ
    }

    /// Basis vector |occupations⟩ as a dense column.
    pub fn basis_state(&self, occupations: &[usize]) -> CVector {
        let mut v = CVector::zeros(self.total_dim());
        v[self.basis_index(occupations)] = Complex64::new(1.0, 0.0);
        v
    }
}

impl fmt::Display for HilbertSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .labels
            .iter()
            .zip(&self.0.dims)
            .map(|(l, d)| format!("{l}({d})"))
            .collect();
        write!(f, "{}", parts.join("⊗"))
    }
}

/// Dense complex matrix on a labeled space with an explicit unit tag.
#[derive(Debug, Clone)]
pub struct Operator {
    pub space: HilbertSpace,
    pub matrix: CMatrix,
    pub units: Units,
}

impl Operator {
    pub fn new(space: HilbertSpace, matrix: CMatrix, units: Units) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "operator must be square");
        assert_eq!(
            matrix.nrows(),
            space.total_dim(),
            "operator dimension must match the space"
        );
        Operator {
            space,
            matrix,
            units,
        }
    }

    /// Like [`Operator::new`] but verifies Hermiticity to [`HERMITICITY_TOL`].
    pub fn hermitian(
        space: HilbertSpace,
        matrix: CMatrix,
        units: Units,
    ) -> Result<Self, OperatorError> {
        let asym = hermitian_asymmetry(&matrix);
        if asym > HERMITICITY_TOL {
            return Err(OperatorError::NotHermitian(asym));
        }
        Ok(Self::new(space, matrix, units))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Density matrix with basis labels. Construction validates Hermiticity,
/// unit trace and positivity.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub space: HilbertSpace,
    pub matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self, OperatorError> {
        assert_eq!(matrix.nrows(), matrix.ncols());
        assert_eq!(matrix.nrows(), space.total_dim());
        let asym = hermitian_asymmetry(&matrix);
        if asym > HERMITICITY_TOL {
            return Err(OperatorError::InvalidState(format!(
                "not Hermitian (relative asymmetry {asym:.3e})"
            )));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(OperatorError::InvalidState(format!(
                "trace {tr} is not 1 within 1e-9"
            )));
        }
        let (eigs, _) = eigh_unchecked(&matrix);
        if let Some(min) = eigs.iter().cloned().reduce(f64::min) {
            if min < -1e-9 {
                return Err(OperatorError::InvalidState(format!(
                    "negative eigenvalue {min:.3e}"
                )));
            }
        }
        Ok(DensityMatrix { space, matrix })
    }

    /// |ψ⟩⟨ψ| from a state vector (normalized here).
    pub fn pure(space: HilbertSpace, psi: &CVector) -> Result<Self, OperatorError> {
        let norm = psi.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(OperatorError::NonFinite);
        }
        let normalized = psi / Complex64::new(norm, 0.0);
        let matrix = &normalized * normalized.adjoint();
        Self::new(space, matrix)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Tr ρ²
    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }
}

/// Relative Frobenius asymmetry ‖A − A†‖ / max(‖A‖, 1).
pub fn hermitian_asymmetry(m: &CMatrix) -> f64 {
    let diff = m - m.adjoint();
    diff.norm() / m.norm().max(1.0)
}

/// Identity matrix of dimension `n`.
pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Bosonic lowering operator truncated to `n` levels.
pub fn lowering(n: usize) -> CMatrix {
    let mut a = CMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = Complex64::new((k as f64).sqrt(), 0.0);
    }
    a
}

/// Number operator a†a truncated to `n` levels.
pub fn number(n: usize) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(
        n,
        (0..n).map(|k| Complex64::new(k as f64, 0.0)),
    ))
}

/// Embed a local operator into the full space: I ⊗ … ⊗ op ⊗ … ⊗ I.
pub fn embed(local: &CMatrix, label: &str, space: &HilbertSpace) -> Result<CMatrix, OperatorError> {
    let pos = space.position_of(label)?;
    let dim = space.dims()[pos];
    if local.nrows() != dim || local.ncols() != dim {
        return Err(OperatorError::DimensionMismatch {
            label: label.to_string(),
            expected: dim,
            found: local.nrows(),
        });
    }
    let mut out = CMatrix::identity(1, 1);
    for (k, d) in space.dims().iter().enumerate() {
        if k == pos {
            out = out.kronecker(local);
        } else {
            out = out.kronecker(&CMatrix::identity(*d, *d));
        }
    }
    Ok(out)
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Returns eigenvalues ascending and the matrix of eigenvectors as columns,
/// with each column's largest-magnitude component made real and positive so
/// the transform is deterministic across runs. The input is symmetrized as
/// (H + H†)/2 before decomposing.
pub fn eigh(m: &CMatrix) -> Result<(Vec<f64>, CMatrix), OperatorError> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(OperatorError::NonFinite);
    }
    let asym = hermitian_asymmetry(m);
    if asym > HERMITICITY_TOL {
        return Err(OperatorError::NotHermitian(asym));
    }
    Ok(eigh_unchecked(m))
}

pub(crate) fn eigh_unchecked(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let sym = (m + m.adjoint()).scale(0.5);
    let decomp = sym.symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        decomp.eigenvalues[a]
            .partial_cmp(&decomp.eigenvalues[b])
            .expect("eigenvalues are finite")
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        values.push(decomp.eigenvalues[src]);
        let mut v: CVector = decomp.eigenvectors.column(src).into();
        // Deterministic phase: largest-|component| entry real positive.
        let mut max_idx = 0;
        let mut max_mag = 0.0;
        for (i, z) in v.iter().enumerate() {
            let mag = z.norm_sqr();
            if mag > max_mag {
                max_mag = mag;
                max_idx = i;
            }
        }
        let pivot = v[max_idx];
        if pivot.norm() > 0.0 {
            let phase = pivot / Complex64::new(pivot.norm(), 0.0);
            v /= phase;
        }
        vectors.set_column(col, &v);
    }
    (values, vectors)
}

/// exp(scalar · m).
///
/// Hermitian inputs go through the spectral decomposition, which keeps the
/// result unitary to ~1e-10 for purely imaginary scalars. General inputs use
/// Padé scaling-and-squaring.
pub fn matrix_exponential(m: &CMatrix, scalar: Complex64) -> Result<CMatrix, OperatorError> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
        || !scalar.re.is_finite()
        || !scalar.im.is_finite()
    {
        return Err(OperatorError::NonFinite);
    }
    if hermitian_asymmetry(m) <= HERMITICITY_TOL {
        let (vals, vecs) = eigh_unchecked(m);
        let phases = CVector::from_iterator(
            vals.len(),
            vals.iter().map(|&l| (scalar * Complex64::new(l, 0.0)).exp()),
        );
        let scaled = &vecs * CMatrix::from_diagonal(&phases);
        Ok(scaled * vecs.adjoint())
    } else {
        Ok(m.map(|z| z * scalar).exp())
    }
}

/// Partial trace keeping the listed subsystems (in their original order).
pub fn partial_trace(
    state: &DensityMatrix,
    keep_labels: &[&str],
) -> Result<DensityMatrix, OperatorError> {
    if keep_labels.is_empty() {
        return Err(OperatorError::EmptyKeepSet);
    }
    let space = &state.space;
    let mut keep_positions = Vec::with_capacity(keep_labels.len());
    for label in keep_labels {
        keep_positions.push(space.position_of(label)?);
    }
    keep_positions.sort_unstable();

    let dims = space.dims();
    let traced: Vec<usize> = (0..dims.len())
        .filter(|p| !keep_positions.contains(p))
        .collect();
    let kept_dim: usize = keep_positions.iter().map(|&p| dims[p]).product();
    let mut out = CMatrix::zeros(kept_dim, kept_dim);

    let n = space.total_dim();
    for row in 0..n {
        let row_occ = space.occupations(row);
        for col in 0..n {
            let col_occ = space.occupations(col);
            if traced.iter().any(|&p| row_occ[p] != col_occ[p]) {
                continue;
            }
            let mut r = 0;
            let mut c = 0;
            for &p in &keep_positions {
                r = r * dims[p] + row_occ[p];
                c = c * dims[p] + col_occ[p];
            }
            out[(r, c)] += state.matrix[(row, col)];
        }
    }

    let kept_subsystems: Vec<(&str, usize)> = {
        let labels: Vec<&str> = space.labels().collect();
        keep_positions
            .iter()
            .map(|&p| (labels[p], dims[p]))
            .collect()
    };
    let kept_space = HilbertSpace::new(&kept_subsystems);
    DensityMatrix::new(kept_space, out)
}

/// 2x2 Pauli matrices.
pub fn pauli(which: char) -> CMatrix {
    let o = Complex64::new(0.0, 0.0);
    let l = Complex64::new(1.0, 0.0);
    match which {
        'I' => CMatrix::from_row_slice(2, 2, &[l, o, o, l]),
        'X' => CMatrix::from_row_slice(2, 2, &[o, l, l, o]),
        'Y' => CMatrix::from_row_slice(2, 2, &[o, -I1, I1, o]),
        'Z' => CMatrix::from_row_slice(2, 2, &[l, o, o, -l]),
        _ => panic!("unknown Pauli '{which}'"),
    }
}
