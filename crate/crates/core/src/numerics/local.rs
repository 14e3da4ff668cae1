//! In-place application of one- and two-site operators to a chain state.

use super::{ComplexMatrix, HermitianEigen, C64, ZERO};

/// A 2×2 or 4×4 operator stored row-major in a fixed buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOp {
    span: usize,
    m: [C64; 16],
}

impl LocalOp {
    pub fn identity(span: usize) -> Self {
        let d = 1 << span;
        let mut m = [ZERO; 16];
        for i in 0..d {
            m[i * d + i] = C64::new(1.0, 0.0);
        }
        Self { span, m }
    }

    pub fn from_matrix(a: &ComplexMatrix) -> Self {
        let d = a.nrows();
        assert!(d == 2 || d == 4, "local operators act on one or two sites");
        let mut m = [ZERO; 16];
        for i in 0..d {
            for j in 0..d {
                m[i * d + j] = a[(i, j)];
            }
        }
        Self { span: if d == 2 { 1 } else { 2 }, m }
    }

    /// `exp(-i θ H)` from a precomputed eigendecomposition.
    pub fn unitary(eig: &HermitianEigen, theta: f64) -> Self {
        let mut out = Self::identity(0);
        out.set_unitary(eig, theta);
        out
    }

    pub fn set_unitary(&mut self, eig: &HermitianEigen, theta: f64) {
        let d = eig.dim();
        let mut phase = [ZERO; 4];
        for (z, &lam) in phase.iter_mut().zip(&eig.values) {
            *z = C64::from_polar(1.0, -theta * lam);
        }
        let v = &eig.vectors;
        self.span = if d == 2 { 1 } else { 2 };
        for i in 0..d {
            for j in 0..d {
                let mut acc = ZERO;
                for z in 0..d {
                    acc += v[(i, z)] * phase[z] * v[(j, z)].conj();
                }
                self.m[i * d + j] = acc;
            }
        }
    }

    pub fn span(&self) -> usize {
        self.span
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        let d = 1 << self.span;
        ComplexMatrix::from_fn(d, d, |i, j| self.m[i * d + j])
    }

    /// Apply to sites `first..first+span` of an `n_sites` chain.
    pub fn apply(&self, psi: &mut [C64], n_sites: usize, first: usize) {
        debug_assert_eq!(psi.len(), 1 << n_sites);
        debug_assert!(first + self.span <= n_sites);
        if self.span == 1 {
            apply1(&self.m, psi, n_sites - 1 - first);
        } else {
            apply2(&self.m, psi, n_sites - 2 - first);
        }
    }
}

fn apply1(m: &[C64; 16], psi: &mut [C64], bit: usize) {
    let s = 1usize << bit;
    let (m00, m01, m10, m11) = (m[0], m[1], m[2], m[3]);
    let mut hi = 0;
    while hi < psi.len() {
        for base in hi..hi + s {
            let a = psi[base];
            let b = psi[base + s];
            psi[base] = m00 * a + m01 * b;
            psi[base + s] = m10 * a + m11 * b;
        }
        hi += 2 * s;
    }
}

/// `low` is the bit position of the right-hand site; the left site sits one
/// bit higher, so local index = 2·b_left + b_right.
fn apply2(m: &[C64; 16], psi: &mut [C64], low: usize) {
    let s1 = 1usize << low;
    let s0 = s1 << 1;
    let mut hi = 0;
    while hi < psi.len() {
        for base in hi..hi + s1 {
            let v = [psi[base], psi[base + s1], psi[base + s0], psi[base + s0 + s1]];
            let mut out = [ZERO; 4];
            for (r, o) in out.iter_mut().enumerate() {
                let row = &m[4 * r..4 * r + 4];
                *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
            }
            psi[base] = out[0];
            psi[base + s1] = out[1];
            psi[base + s0] = out[2];
            psi[base + s0 + s1] = out[3];
        }
        hi += 2 * s0;
    }
}
