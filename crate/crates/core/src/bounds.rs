//! Closed-form Trotter and sampling error bounds.
//!
//! All operator norms are taken on the full chain Hilbert space. The
//! expensive part is the table of commutator norms, computed once per
//! Hamiltonian; every bound after that is a handful of sums.

use serde::Serialize;
use std::f64::consts::PI;

use crate::channel::{Scheme, StochasticHamiltonian};
use crate::error::{BoundsError, NumericsError};
use crate::numerics::{commutator, op_norm, ComplexMatrix};

/// Commutator norms entering the Trotter bounds, indexed by noise term.
#[derive(Debug, Clone, Serialize)]
pub struct CommutatorNorms {
    pub gamma: Vec<f64>,
    pub even: Vec<bool>,
    /// `‖H_I,ℓ‖`.
    pub h_i: Vec<f64>,
    /// `‖[H_Re^even, H_Re^odd]‖`.
    pub re_eo: f64,
    /// `‖[H_Re, H_I,ℓ]‖`.
    pub re_i: Vec<f64>,
    /// `‖[H_Re, [H_Re, H_I,ℓ]]‖`.
    pub re_re_i: Vec<f64>,
    /// `[a][b] = ‖[H_I,a, [H_I,b, H_Re]]‖`.
    pub i_i_re: Vec<Vec<f64>>,
    /// `[a][b] = ‖[H_I,a, H_I,b]‖`.
    pub i_i: Vec<Vec<f64>>,
    /// `[a][b][c] = ‖[H_I,a, [H_I,b, H_I,c]]‖`.
    pub i_i_i: Vec<Vec<Vec<f64>>>,
}

impl CommutatorNorms {
    pub fn new(ham: &StochasticHamiltonian) -> Result<Self, NumericsError> {
        let n = ham.n_noise();
        let h_re = ham.h_re();
        let hs = ham.h_i();
        let (re_e, re_o) = ham.h_re_layers();
        let overlaps = |a: usize, b: usize| {
            let (ra, rb) = (ham.noise_terms()[a].term.sites(), ham.noise_terms()[b].term.sites());
            ra.start < rb.end && rb.start < ra.end
        };

        let re_i_ops: Vec<ComplexMatrix> = hs.iter().map(|h| commutator(h_re, h)).collect();
        let mut re_i = Vec::with_capacity(n);
        let mut re_re_i = Vec::with_capacity(n);
        for c in &re_i_ops {
            re_i.push(op_norm(c)?);
            re_re_i.push(op_norm(&commutator(h_re, c))?);
        }
        let mut i_i_re = vec![vec![0.0; n]; n];
        let mut i_i = vec![vec![0.0; n]; n];
        let mut pair_ops = vec![vec![None; n]; n];
        for a in 0..n {
            for b in 0..n {
                // [H_b, H_Re] = -[H_Re, H_b]; the sign is irrelevant under the norm.
                i_i_re[a][b] = op_norm(&commutator(&hs[a], &re_i_ops[b]))?;
                if a != b && overlaps(a, b) {
                    let c = commutator(&hs[a], &hs[b]);
                    i_i[a][b] = op_norm(&c)?;
                    pair_ops[a][b] = Some(c);
                }
            }
        }
        let mut i_i_i = vec![vec![vec![0.0; n]; n]; n];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if let Some(inner) = &pair_ops[b][c] {
                        i_i_i[a][b][c] = op_norm(&commutator(&hs[a], inner))?;
                    }
                }
            }
        }
        Ok(Self {
            gamma: ham.noise_terms().iter().map(|t| t.gamma).collect(),
            even: (0..n).map(|i| ham.noise_is_even(i)).collect(),
            h_i: hs.iter().map(op_norm).collect::<Result<_, _>>()?,
            re_eo: op_norm(&commutator(&re_e, &re_o))?,
            re_i,
            re_re_i,
            i_i_re,
            i_i,
            i_i_i,
        })
    }

    pub fn n_noise(&self) -> usize {
        self.gamma.len()
    }

    fn layer(&self, even: bool) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_noise()).filter(move |&i| self.even[i] == even)
    }

    /// `Σ_ℓ √γ_ℓ ‖[H_Re, H_I,ℓ]‖`, shared by several bounds.
    fn sqrt_gamma_re_i(&self) -> f64 {
        self.gamma.iter().zip(&self.re_i).map(|(g, c)| g.sqrt() * c).sum()
    }

    /// Lie-Trotter between `H_Re` and the noise.
    pub fn lt_nstep(&self, t: f64, dt: f64) -> f64 {
        t * (dt / PI).sqrt() * self.sqrt_gamma_re_i()
    }

    /// Symmetric splitting between `H_Re` and the noise.
    pub fn st_nstep(&self, t: f64, dt: f64) -> f64 {
        let n = self.n_noise();
        let mut same = 0.0;
        let mut cross = 0.0;
        let mut nested = 0.0;
        for a in 0..n {
            same += self.gamma[a] * self.i_i_re[a][a];
            nested += self.gamma[a].sqrt() * self.re_re_i[a];
            for b in (0..n).filter(|&b| b != a) {
                cross += (self.gamma[a] * self.gamma[b]).sqrt() * self.i_i_re[a][b];
            }
        }
        t * dt / 6.0 * same + t * dt / (3.0 * PI) * cross + t * dt.powf(1.5) / (12.0 * PI.sqrt()) * nested
    }

    /// Lie even-odd splitting. The second field is the Δt-independent floor.
    pub fn lt_eo_nstep(&self, t: f64, dt: f64) -> (f64, f64) {
        let mut eo = 0.0;
        for a in self.layer(true) {
            for b in self.layer(false) {
                eo += (self.gamma[a] * self.gamma[b]).sqrt() * self.i_i[a][b];
            }
        }
        let floor = 2.0 * t / PI * eo;
        (t * dt / 2.0 * self.re_eo + floor + self.lt_nstep(t, dt), floor)
    }

    /// Coefficient of `T√Δt` from the nested noise commutators in the
    /// symmetric even-odd bound.
    pub fn st_eo_noise_coefficient(&self) -> f64 {
        let outer = |same: bool| {
            let mut s = 0.0;
            for a in self.layer(same) {
                for b in self.layer(same) {
                    for m in self.layer(!same) {
                        s += (self.gamma[a] * self.gamma[b] * self.gamma[m]).sqrt() * self.i_i_i[b][a][m];
                    }
                }
            }
            s
        };
        (2.0 * outer(false) + outer(true)) / (6.0 * PI.sqrt())
    }

    pub fn st_eo_nstep(&self, t: f64, dt: f64) -> StEoBound {
        let re_term = t * dt / 2.0 * self.re_eo;
        let sqrt_coefficient = self.sqrt_gamma_re_i() / PI.sqrt() + self.st_eo_noise_coefficient();
        let total = re_term + t * dt.sqrt() * sqrt_coefficient;
        StEoBound { total, prefactor: total / (t * dt.sqrt()), sqrt_coefficient, re_term }
    }

    pub fn nstep(&self, scheme: Scheme, t: f64, dt: f64) -> f64 {
        match scheme {
            Scheme::Lie => self.lt_nstep(t, dt),
            Scheme::Strang => self.st_nstep(t, dt),
            Scheme::LieEvenOdd => self.lt_eo_nstep(t, dt).0,
            Scheme::StrangEvenOdd => self.st_eo_nstep(t, dt).total,
        }
    }

    /// Bound on `‖U_k^impl − U_k^ex‖` for one realization of increments.
    pub fn pathwise_step(&self, scheme: Scheme, incs: &[f64], dt: f64) -> f64 {
        let n = self.n_noise();
        assert_eq!(incs.len(), n);
        let lt = dt / 2.0 * (0..n).map(|a| incs[a].abs() * self.re_i[a]).sum::<f64>();
        match scheme {
            Scheme::Lie => lt,
            Scheme::Strang => {
                let mut s = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        s += (incs[a] * incs[b]).abs() * self.i_i_re[a][b];
                    }
                }
                let nested: f64 = (0..n).map(|a| incs[a].abs() * self.re_re_i[a]).sum();
                dt / 12.0 * s + dt * dt / 24.0 * nested
            }
            Scheme::LieEvenOdd => {
                let mut eo = 0.0;
                for a in self.layer(true) {
                    for b in self.layer(false) {
                        eo += (incs[a] * incs[b]).abs() * self.i_i[a][b];
                    }
                }
                dt * dt / 2.0 * self.re_eo + eo / 2.0 + lt
            }
            Scheme::StrangEvenOdd => {
                let outer = |same: bool| {
                    let mut s = 0.0;
                    for a in self.layer(same) {
                        for b in self.layer(same) {
                            for m in self.layer(!same) {
                                s += (incs[a] * incs[b] * incs[m]).abs() * self.i_i_i[b][a][m];
                            }
                        }
                    }
                    s
                };
                dt * dt / 2.0 * self.re_eo + outer(false) / 12.0 + outer(true) / 24.0 + lt
            }
        }
    }

    /// `Σ_ℓ γ_ℓ ‖H_I,ℓ‖²`.
    pub fn noise_strength(&self) -> f64 {
        self.gamma.iter().zip(&self.h_i).map(|(g, h)| g * h * h).sum()
    }

    /// Upper bound on the single-trajectory variance of an observable with
    /// `‖O‖ = o_norm`.
    pub fn variance_bound(&self, o_norm: f64, t: f64) -> f64 {
        8.0 * t * self.noise_strength() * o_norm * o_norm
    }

    pub fn mc_rmse(&self, o_norm: f64, t: f64, n_traj: usize) -> f64 {
        mc_rmse_bound(self.noise_strength(), o_norm, t, n_traj)
    }
}

/// The symmetric even-odd bound and its pieces.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StEoBound {
    pub total: f64,
    /// `total / (T√Δt)`.
    pub prefactor: f64,
    /// Δt-independent coefficient of `T√Δt`.
    pub sqrt_coefficient: f64,
    /// `TΔt/2 ‖[H_Re^even, H_Re^odd]‖`.
    pub re_term: f64,
}

/// `(2‖O‖/√N) √(2T Σ γ‖H_I‖²)`, with `noise_strength = Σ γ‖H_I‖²`.
pub fn mc_rmse_bound(noise_strength: f64, o_norm: f64, t: f64, n_traj: usize) -> f64 {
    2.0 * o_norm / (n_traj.max(1) as f64).sqrt() * (2.0 * t * noise_strength).sqrt()
}

pub fn sqem_rmse_bound(o_norm: f64, n_traj: usize, lambda: f64, p_succ: f64, trace_nh: f64) -> Result<f64, BoundsError> {
    if !(0.0..=1.0).contains(&p_succ) {
        return Err(BoundsError::BadProbability(p_succ));
    }
    if trace_nh == 0.0 {
        return Err(BoundsError::ZeroTrace);
    }
    Ok(2.0 * o_norm / (n_traj.max(1) as f64).sqrt() * lambda * p_succ.sqrt() / trace_nh.abs())
}

/// Systematic-error diagnostic `4‖O‖ ε_ST(eo) / min|Tr|`.
pub fn sys_bound(o_norm: f64, st_eo: f64, min_trace: f64) -> Result<f64, BoundsError> {
    if min_trace == 0.0 {
        return Err(BoundsError::ZeroTrace);
    }
    Ok(4.0 * o_norm * st_eo / min_trace.abs())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundInputs {
    #[serde(rename = "T")]
    pub t: f64,
    pub dt: f64,
    pub n_traj: usize,
    pub o_norm: f64,
    pub lambda: f64,
    pub p_succ: f64,
    pub trace_nh: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub lt_nstep: f64,
    pub st_nstep: f64,
    pub lt_eo_nstep: f64,
    pub lt_eo_floor: f64,
    pub st_eo_nstep: f64,
    pub st_eo_prefactor: f64,
    pub mc_rmse: f64,
    pub variance_bound: f64,
    pub sqem_rmse: f64,
    pub sys_bound: f64,
    pub inputs: BoundInputs,
}

impl BoundReport {
    pub fn new(norms: &CommutatorNorms, inputs: BoundInputs) -> Result<Self, BoundsError> {
        let BoundInputs { t, dt, n_traj, o_norm, .. } = inputs;
        let (lt_eo_nstep, lt_eo_floor) = norms.lt_eo_nstep(t, dt);
        let st_eo = norms.st_eo_nstep(t, dt);
        Ok(Self {
            lt_nstep: norms.lt_nstep(t, dt),
            st_nstep: norms.st_nstep(t, dt),
            lt_eo_nstep,
            lt_eo_floor,
            st_eo_nstep: st_eo.total,
            st_eo_prefactor: st_eo.prefactor,
            mc_rmse: norms.mc_rmse(o_norm, t, n_traj),
            variance_bound: norms.variance_bound(o_norm, t),
            sqem_rmse: sqem_rmse_bound(o_norm, n_traj, inputs.lambda, inputs.p_succ, inputs.trace_nh)?,
            sys_bound: sys_bound(o_norm, st_eo.total, inputs.trace_nh)?,
            inputs,
        })
    }
}
