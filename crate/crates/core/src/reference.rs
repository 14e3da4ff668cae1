//! Exact oracles by dense exponentiation: the non-Hermitian target, the GKSL
//! master equation and its no-jump part.
//!
//! Superoperators use column stacking, `AρB† ↦ (conj(B) ⊗ A) vec ρ`.

use crate::error::ReferenceError;
use crate::model::Observable;
use crate::nonherm::Dilation;
use crate::numerics::{
    c, expm, identity, kron, outer, sandwich_superop, unvectorize, vectorize, ComplexMatrix,
    StateVector, MAX_EXPM_DIM,
};

const MIN_NORM: f64 = 1e-300;

/// The GKSL generator `L = L_NH + L_J` as `4^L × 4^L` matrices.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    pub dim: usize,
    pub full: ComplexMatrix,
    pub nh: ComplexMatrix,
    pub jump: ComplexMatrix,
}

impl Liouvillian {
    pub fn new(dilation: &Dilation) -> Result<Self, ReferenceError> {
        let d = dilation.dim();
        if d * d > MAX_EXPM_DIM {
            return Err(crate::error::NumericsError::DimensionTooLarge { dim: d * d, max: MAX_EXPM_DIM }.into());
        }
        let id = identity(d);
        let h = &dilation.h_re;
        let mut nh = (kron(&id, h) - kron(&h.transpose(), &id)) * c(0.0, -1.0);
        let mut jump = ComplexMatrix::zeros(d * d, d * d);
        for b in &dilation.bonds {
            let hi = &b.h_i_embedded;
            let h2 = hi * hi;
            jump += sandwich_superop(hi, hi) * c(2.0 * b.gamma, 0.0);
            nh -= (kron(&id, &h2) + kron(&h2.transpose(), &id)) * c(b.gamma, 0.0);
        }
        Ok(Self { dim: d, full: &nh + &jump, nh, jump })
    }

    /// Max over columns of `|Σ_i L[(i,i), ·]|`, the trace-preservation defect.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for col in 0..d * d {
            let mut s = c(0.0, 0.0);
            for i in 0..d {
                s += self.full[(i + i * d, col)];
            }
            worst = worst.max(s.norm());
        }
        worst
    }
}

fn propagate(gen: &ComplexMatrix, rho0: &ComplexMatrix, t: f64) -> Result<ComplexMatrix, ReferenceError> {
    let p = expm(&(gen * c(t, 0.0)), false)?;
    Ok(unvectorize(&(p * vectorize(rho0)), rho0.nrows()))
}

/// `e^{tL} ρ0` under the full GKSL generator.
pub fn evolve_gksl(rho0: &ComplexMatrix, dilation: &Dilation, t: f64) -> Result<ComplexMatrix, ReferenceError> {
    propagate(&Liouvillian::new(dilation)?.full, rho0, t)
}

/// `e^{t L_NH} ρ0`, unnormalized.
pub fn evolve_nh_generator(
    rho0: &ComplexMatrix,
    dilation: &Dilation,
    t: f64,
) -> Result<ComplexMatrix, ReferenceError> {
    propagate(&Liouvillian::new(dilation)?.nh, rho0, t)
}

/// A reference solution sampled on a time grid.
#[derive(Debug, Clone)]
pub struct Curve {
    pub times: Vec<f64>,
    pub states: Vec<ComplexMatrix>,
}

impl Curve {
    pub fn trace(&self, k: usize) -> f64 {
        self.states[k].trace().re
    }

    pub fn expectation(&self, k: usize, o: &Observable) -> f64 {
        (&o.matrix * &self.states[k]).trace().re
    }

    pub fn normalized(&self, k: usize, o: &Observable) -> f64 {
        self.expectation(k, o) / self.trace(k)
    }
}

fn curve(gen: &ComplexMatrix, rho0: &ComplexMatrix, times: &[f64]) -> Result<Curve, ReferenceError> {
    let states = times.iter().map(|&t| propagate(gen, rho0, t)).collect::<Result<_, _>>()?;
    Ok(Curve { times: times.to_vec(), states })
}

pub fn gksl_curve(rho0: &ComplexMatrix, dilation: &Dilation, times: &[f64]) -> Result<Curve, ReferenceError> {
    curve(&Liouvillian::new(dilation)?.full, rho0, times)
}

pub fn nh_generator_curve(rho0: &ComplexMatrix, dilation: &Dilation, times: &[f64]) -> Result<Curve, ReferenceError> {
    curve(&Liouvillian::new(dilation)?.nh, rho0, times)
}

#[derive(Debug, Clone)]
pub struct NonHermitianState {
    pub psi: StateVector,
    pub norm_sqr: f64,
    /// `⟨ψ|O|ψ⟩/⟨ψ|ψ⟩` for each requested observable.
    pub normalized: Vec<f64>,
}

/// `ψ(t) = e^{−iHt} ψ0` for a general (non-Hermitian) `H`.
pub fn evolve_nonhermitian(
    psi0: &StateVector,
    h: &ComplexMatrix,
    t: f64,
    observables: &[Observable],
) -> Result<NonHermitianState, ReferenceError> {
    let u = expm(&(h * c(0.0, -t)), false)?;
    let psi = u * psi0;
    let norm_sqr = psi.norm_squared();
    if !(norm_sqr >= MIN_NORM) {
        return Err(ReferenceError::VanishingNorm(norm_sqr));
    }
    let normalized = observables.iter().map(|o| o.expectation(psi.as_slice()) / norm_sqr).collect();
    Ok(NonHermitianState { psi, norm_sqr, normalized })
}

pub fn pure_density(psi: &StateVector) -> ComplexMatrix {
    outer(psi.as_slice())
}

/// `Tr[Oρ]/Tr ρ`.
pub fn normalized_expectation(o: &ComplexMatrix, rho: &ComplexMatrix) -> f64 {
    (o * rho).trace().re / rho.trace().re
}

/// `2‖O‖ ‖τ−σ‖₁ / min(Tr τ, Tr σ)`.
pub fn normalized_stability_bound(o_norm: f64, tau: &ComplexMatrix, sigma: &ComplexMatrix) -> f64 {
    let dist = crate::numerics::trace_norm(&(tau - sigma)).expect("square");
    let tr = tau.trace().re.min(sigma.trace().re);
    2.0 * o_norm * dist / tr
}
