//! Bond dilation operators `H_I,ℓ` with `γ_ℓ H_I,ℓ² = e_ℓ I − H_Im,ℓ`.
//!
//! With these, the no-jump part of the noise-averaged dynamics generates
//! `H_eff = H_Re − i Σ γ_ℓ H_I,ℓ² = H_target − i E_shift`, which differs from
//! the target only by a scalar damping that cancels in normalized expectations.

use crate::error::DilationError;
use crate::model::{build_h_im, build_h_im_bonds, build_h_re, SpinModel};
use crate::numerics::{c, embed, max_abs, ComplexMatrix, HermitianEigen};

const ZERO_BOND_TOL: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct DilationBond {
    pub bond: usize,
    pub h_im_local: ComplexMatrix,
    pub h_i_local: ComplexMatrix,
    pub h_i_embedded: ComplexMatrix,
    /// `e_ℓ`
    pub e_shift: f64,
    pub gamma: f64,
    /// Ascending eigenvalues `μ` of `H_Im,ℓ` and the matching `λ`.
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Canonical eigenbasis `U_ℓ`.
    pub basis: ComplexMatrix,
}

impl DilationBond {
    pub fn is_trivial(&self) -> bool {
        self.lambda.iter().all(|&l| l == 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct Dilation {
    pub n_sites: usize,
    pub bonds: Vec<DilationBond>,
    pub e_shift_total: f64,
    pub h_re: ComplexMatrix,
    pub h_im: ComplexMatrix,
}

/// Minimal-shift dilation.
pub fn build_dilation(model: &SpinModel, gamma: &[f64]) -> Result<Dilation, DilationError> {
    build_dilation_with_shift(model, gamma, 0.0)
}

/// Dilation with `e_ℓ = max spec(H_Im,ℓ) + extra_shift` on nontrivial bonds.
pub fn build_dilation_with_shift(
    model: &SpinModel,
    gamma: &[f64],
    extra_shift: f64,
) -> Result<Dilation, DilationError> {
    let n_bonds = model.n_bonds();
    if gamma.len() != n_bonds {
        return Err(DilationError::GammaCount { expected: n_bonds, got: gamma.len() });
    }
    assert!(extra_shift >= 0.0 && extra_shift.is_finite(), "shift must be nonnegative");
    let mut bonds = Vec::with_capacity(n_bonds);
    for (im, &g) in build_h_im_bonds(model).into_iter().zip(gamma) {
        let trivial = max_abs(&im.local) <= ZERO_BOND_TOL;
        if g < 0.0 || !g.is_finite() || (!trivial && g == 0.0) {
            return Err(DilationError::NonPositiveGamma { bond: im.bond, gamma: g });
        }
        let eig = HermitianEigen::new(&im.local)?;
        let (e, lambda) = if trivial {
            (0.0, vec![0.0; 4])
        } else {
            let e = eig.values[3] + extra_shift;
            (e, eig.values.iter().map(|mu| ((e - mu).max(0.0) / g).sqrt()).collect())
        };
        let h_i_local = if trivial {
            ComplexMatrix::zeros(4, 4)
        } else {
            let mut scaled = eig.vectors.clone();
            for (j, &l) in lambda.iter().enumerate() {
                scaled.column_mut(j).scale_mut(l);
            }
            let h = &scaled * eig.vectors.adjoint();
            (&h + h.adjoint()) * c(0.5, 0.0)
        };
        bonds.push(DilationBond {
            bond: im.bond,
            h_i_embedded: embed(&h_i_local, im.bond, model.sites),
            h_im_local: im.local,
            h_i_local,
            e_shift: e,
            gamma: g,
            mu: eig.values,
            lambda,
            basis: eig.vectors,
        });
    }
    let e_shift_total = bonds.iter().map(|b| b.e_shift).sum();
    Ok(Dilation {
        n_sites: model.sites,
        bonds,
        e_shift_total,
        h_re: build_h_re(model),
        h_im: build_h_im(model),
    })
}

impl Dilation {
    pub fn dim(&self) -> usize {
        1 << self.n_sites
    }

    pub fn gamma(&self) -> Vec<f64> {
        self.bonds.iter().map(|b| b.gamma).collect()
    }

    /// `Σ γ_ℓ H_I,ℓ²` on the full space.
    pub fn damping(&self) -> ComplexMatrix {
        let d = self.dim();
        self.bonds.iter().fold(ComplexMatrix::zeros(d, d), |acc, b| {
            acc + (&b.h_i_embedded * &b.h_i_embedded) * c(b.gamma, 0.0)
        })
    }

    /// `H_eff = H_Re − i Σ γ_ℓ H_I,ℓ²`.
    pub fn effective_hamiltonian(&self) -> ComplexMatrix {
        &self.h_re - self.damping() * c(0.0, 1.0)
    }

    pub fn h_target(&self) -> ComplexMatrix {
        &self.h_re + &self.h_im * c(0.0, 1.0)
    }

    /// `op_norm(−Σ γ H_I² − (H_Im − E_shift I))`.
    pub fn reconstruction_residual(&self) -> f64 {
        let d = self.dim();
        let shifted = &self.h_im - ComplexMatrix::identity(d, d) * c(self.e_shift_total, 0.0);
        crate::numerics::op_norm(&(-self.damping() - shifted)).expect("square")
    }
}

pub fn effective_hamiltonian(dilation: &Dilation) -> ComplexMatrix {
    dilation.effective_hamiltonian()
}
