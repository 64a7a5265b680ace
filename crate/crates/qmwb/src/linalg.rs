//! Dense complex linear algebra helpers for small Hilbert spaces.
//!
//! Everything in the workbench lives in dimensions of a few dozen at most,
//! so dense `nalgebra` storage is used throughout. The Born-rule quadratic
//! form is hand-rolled with a fixed accumulation order so that block-embedded
//! states (tensor products with standard-basis leakage vectors) reproduce the
//! base-model probabilities bit for bit.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::QmwbError;

pub type C64 = Complex64;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// Numerical tolerances used by every invariant check in the workbench,
/// collected in one place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// State vectors: deviation of the Euclidean norm from 1.
    pub unit_norm: f64,
    /// Unitarity: entrywise deviation of `U U†` from the identity.
    pub unitary: f64,
    /// Hermiticity: entrywise deviation of `M` from `M†`.
    pub hermitian: f64,
    /// Positive semidefiniteness: smallest allowed eigenvalue.
    pub psd_eigenvalue: f64,
    /// POVM completeness: entrywise deviation of the element sum from identity.
    pub povm_sum: f64,
    /// Outcome distributions: deviation of the probability sum from 1.
    pub prob_sum: f64,
    /// Largest imaginary residue tolerated in a Born-rule expectation value.
    pub imag_residue: f64,
    /// Overlap-matrix comparisons.
    pub overlap: f64,
    /// Posterior / prior normalization.
    pub prior_sum: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        unit_norm: 1e-10,
        unitary: 1e-10,
        hermitian: 1e-10,
        psd_eigenvalue: -1e-10,
        povm_sum: 1e-9,
        prob_sum: 1e-9,
        imag_residue: 1e-10,
        overlap: 1e-10,
        prior_sum: 1e-12,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances::DEFAULT
    }
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

/// `⟨a|b⟩` with the left argument conjugated.
pub fn inner(a: &CVector, b: &CVector) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..a.len() {
        acc += a[i].conj() * b[i];
    }
    acc
}

/// `⟨v| M |v⟩`, accumulated row by row in index order.
///
/// The fixed order matters: embedding `v` into a larger space as
/// `e_k ⊗ v` and `M` as `I ⊗ M` interleaves only exact-zero terms into the
/// sums, so the result is bit-identical to the small-space evaluation.
pub fn quadratic_form(m: &CMatrix, v: &CVector) -> C64 {
    let n = v.len();
    let mut acc = C64::new(0.0, 0.0);
    for row in 0..n {
        let mut t = C64::new(0.0, 0.0);
        for col in 0..n {
            t += m[(row, col)] * v[col];
        }
        acc += v[row].conj() * t;
    }
    acc
}

/// `U† v`, accumulated in index order.
pub fn adjoint_apply(u: &CMatrix, v: &CVector) -> CVector {
    let n = v.len();
    CVector::from_fn(n, |row, _| {
        let mut t = C64::new(0.0, 0.0);
        for col in 0..n {
            t += u[(col, row)].conj() * v[col];
        }
        t
    })
}

/// Largest entrywise deviation of `U U†` from the identity, together with the
/// offending entry.
pub fn unitarity_deviation(u: &CMatrix) -> (f64, (usize, usize)) {
    let prod = u * u.adjoint();
    max_deviation_from(&prod, &identity(u.nrows()))
}

/// Largest entrywise absolute difference between two matrices.
pub fn max_deviation_from(a: &CMatrix, b: &CMatrix) -> (f64, (usize, usize)) {
    let mut worst = 0.0;
    let mut at = (0, 0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let d = (a[(i, j)] - b[(i, j)]).norm();
            if d > worst {
                worst = d;
                at = (i, j);
            }
        }
    }
    (worst, at)
}

/// Largest entrywise deviation of `M` from `M†`.
pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let adj = m.adjoint();
    max_deviation_from(m, &adj).0
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let eig = m.clone().symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

/// Full Hermitian eigendecomposition: pairs `(eigenvalue, eigenvector)`.
pub fn hermitian_eigenpairs(m: &CMatrix) -> Vec<(f64, CVector)> {
    let eig = m.clone().symmetric_eigen();
    let mut pairs: Vec<(f64, CVector)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, eig.eigenvectors.column(i).into_owned()))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs
}

pub fn outer(a: &CVector, b: &CVector) -> CMatrix {
    CMatrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    let mut out = CVector::zeros(a.len() * b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            out[i * b.len() + j] = a[i] * b[j];
        }
    }
    out
}

/// Unit vectors whose Gram matrix is `(1-r)·I + r·J`: every pair of distinct
/// vectors has inner product exactly `r`.
///
/// The Gram matrix is positive definite for `0 ≤ r < 1`, so its Cholesky
/// factor `L` exists and the rows of `L` are the vectors.
pub fn equiangular_unit_vectors(n: usize, r: f64) -> Result<Vec<CVector>, QmwbError> {
    if !(0.0..1.0).contains(&r) {
        return Err(QmwbError::Parameter(format!(
            "pairwise overlap bound r must satisfy 0 <= r < 1, got {r}"
        )));
    }
    if n == 0 {
        return Err(QmwbError::Parameter("need at least one vector".into()));
    }
    let gram = DMatrix::<f64>::from_fn(n, n, |i, j| if i == j { 1.0 } else { r });
    let chol = Cholesky::new(gram).ok_or_else(|| {
        QmwbError::Parameter(format!("Gram matrix for r={r} is not positive definite"))
    })?;
    let l = chol.l();
    Ok((0..n)
        .map(|i| CVector::from_fn(n, |j, _| C64::new(l[(i, j)], 0.0)))
        .collect())
}

/// Inverse square root of a Hermitian PSD matrix on its support
/// (eigenvalues below `cutoff` are treated as zero).
pub fn pseudo_inv_sqrt(m: &CMatrix, cutoff: f64) -> CMatrix {
    let n = m.nrows();
    let mut out = CMatrix::zeros(n, n);
    for (l, v) in hermitian_eigenpairs(m) {
        if l > cutoff {
            out += outer(&v, &v) * C64::new(1.0 / l.sqrt(), 0.0);
        }
    }
    out
}
