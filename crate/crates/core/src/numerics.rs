//! Dense complex linear algebra shared by every other module.
//!
//! Matrices are `nalgebra` dense matrices of `Complex64`. Site 0 is the
//! leftmost tensor factor, i.e. the most significant bit of a basis index.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::NumericsError;

pub mod local;
pub mod rng;

pub use local::LocalOp;
pub use rng::RngStream;

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type StateVector = DVector<C64>;

/// Largest matrix dimension accepted by [`expm`] (a 4-site Liouvillian).
pub const MAX_EXPM_DIM: usize = 256;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn from_rows(n: usize, entries: &[C64]) -> ComplexMatrix {
    ComplexMatrix::from_row_slice(n, n, entries)
}

pub fn pauli_x() -> ComplexMatrix {
    from_rows(2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> ComplexMatrix {
    from_rows(2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> ComplexMatrix {
    from_rows(2, &[ONE, ZERO, ZERO, -ONE])
}

fn check_square(a: &ComplexMatrix) -> Result<usize, NumericsError> {
    if a.nrows() != a.ncols() {
        return Err(NumericsError::NonSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(a.nrows())
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Place an operator acting on `k` consecutive sites starting at `first`
/// into an `n_sites` chain.
pub fn embed(local: &ComplexMatrix, first: usize, n_sites: usize) -> ComplexMatrix {
    let k = local.nrows().trailing_zeros() as usize;
    assert_eq!(1 << k, local.nrows(), "local operator dimension must be a power of two");
    assert!(first + k <= n_sites, "operator support exceeds the chain");
    let left = identity(1 << first);
    let right = identity(1 << (n_sites - first - k));
    kron(&kron(&left, local), &right)
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b + b * a
}

pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermiticity_defect(a: &ComplexMatrix) -> f64 {
    max_abs(&(a - a.adjoint()))
}

pub fn is_hermitian(a: &ComplexMatrix, tol: f64) -> bool {
    a.is_square() && hermiticity_defect(a) <= tol * op_norm(a).unwrap_or(0.0).max(1.0)
}

/// Largest singular value.
pub fn op_norm(a: &ComplexMatrix) -> Result<f64, NumericsError> {
    check_square(a)?;
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(a.singular_values().max())
}

/// Sum of singular values.
pub fn trace_norm(a: &ComplexMatrix) -> Result<f64, NumericsError> {
    check_square(a)?;
    Ok(a.singular_values().sum())
}

/// Spectral decomposition of a Hermitian matrix with a canonical basis:
/// eigenvalues ascending, each eigenvector scaled so that its
/// largest-magnitude component is real and positive.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn new(h: &ComplexMatrix) -> Result<Self, NumericsError> {
        let n = check_square(h)?;
        // Symmetrize so roundoff in the input cannot leak into the spectrum.
        let sym = (h + h.adjoint()) * c(0.5, 0.0);
        let eig = sym.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

        let mut vectors = ComplexMatrix::zeros(n, n);
        let mut values = Vec::with_capacity(n);
        for (col, &src) in order.iter().enumerate() {
            values.push(eig.eigenvalues[src]);
            let v = eig.eigenvectors.column(src);
            // First index wins ties so the choice is deterministic.
            let mut pivot = 0;
            for i in 1..n {
                if v[i].norm() > v[pivot].norm() * (1.0 + 1e-12) {
                    pivot = i;
                }
            }
            let phase = if v[pivot].norm() > 0.0 { v[pivot].conj() / v[pivot].norm() } else { ONE };
            for i in 0..n {
                vectors[(i, col)] = v[i] * phase;
            }
        }
        Ok(Self { values, vectors })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V f(Λ) V†` for a real spectral function.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            for i in 0..n {
                scaled[(i, j)] *= w;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// `exp(-i θ H)`.
    pub fn unitary(&self, theta: f64) -> ComplexMatrix {
        self.map(|lam| C64::from_polar(1.0, -theta * lam))
    }
}

/// Matrix exponential `e^A`.
///
/// With `anti_hermitian` set, `A` is taken to be `-iH` with `H` Hermitian and
/// the exponential is formed from the eigendecomposition of `H`; otherwise
/// Padé scaling and squaring is used.
pub fn expm(a: &ComplexMatrix, anti_hermitian: bool) -> Result<ComplexMatrix, NumericsError> {
    let n = check_square(a)?;
    if n > MAX_EXPM_DIM {
        return Err(NumericsError::DimensionTooLarge { dim: n, max: MAX_EXPM_DIM });
    }
    if n == 0 {
        return Ok(a.clone());
    }
    if anti_hermitian {
        let h = a * I;
        Ok(HermitianEigen::new(&h)?.unitary(1.0))
    } else {
        Ok(a.exp())
    }
}

/// `exp(-i t H)` for Hermitian `H`.
pub fn unitary_exp(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix, NumericsError> {
    let n = check_square(h)?;
    if n > MAX_EXPM_DIM {
        return Err(NumericsError::DimensionTooLarge { dim: n, max: MAX_EXPM_DIM });
    }
    Ok(HermitianEigen::new(h)?.unitary(t))
}

pub fn norm_sqr(psi: &[C64]) -> f64 {
    psi.iter().map(|z| z.norm_sqr()).sum()
}

/// `⟨ψ|A|ψ⟩`, real part only (callers pass Hermitian `A`).
pub fn expectation(a: &ComplexMatrix, psi: &[C64]) -> f64 {
    let n = psi.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = ZERO;
        for j in 0..n {
            row += a[(i, j)] * psi[j];
        }
        acc += (psi[i].conj() * row).re;
    }
    acc
}

pub fn outer(psi: &[C64]) -> ComplexMatrix {
    let n = psi.len();
    ComplexMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj())
}

/// Column-stacking vectorization.
pub fn vectorize(rho: &ComplexMatrix) -> DVector<C64> {
    DVector::from_column_slice(rho.as_slice())
}

pub fn unvectorize(v: &DVector<C64>, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_column_slice(n, n, v.as_slice())
}

/// Superoperator of `ρ ↦ A ρ B†` under column stacking: `conj(B) ⊗ A`.
pub fn sandwich_superop(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    kron(&b.map(|z| z.conj()), a)
}

/// Haar-ish random state from independent complex Gaussians.
pub fn random_state(dim: usize, rng: &mut RngStream) -> StateVector {
    let mut v = StateVector::from_fn(dim, |_, _| c(rng.standard_normal(), rng.standard_normal()));
    let n = v.norm();
    v /= c(n, 0.0);
    v
}

/// Random Hermitian matrix with independent Gaussian entries.
pub fn random_hermitian(dim: usize, rng: &mut RngStream) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(dim, dim, |_, _| c(rng.standard_normal(), rng.standard_normal()));
    (&g + g.adjoint()) * c(0.5, 0.0)
}

pub fn random_unitary(dim: usize, rng: &mut RngStream) -> ComplexMatrix {
    let h = random_hermitian(dim, rng);
    unitary_exp(&h, 1.0).expect("small dimension")
}
