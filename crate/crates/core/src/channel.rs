//! Trajectory stepping under the stochastic Hamiltonian
//! `H(t) = H_Re + Σ_ℓ f_ℓ(t) H_I,ℓ` with white noise `f_ℓ`.
//!
//! Over one step of length `δ` the noise enters through the increments
//! `ξ_ℓ ~ N(0, 2 γ_ℓ δ)`, and the step is split with one of four Trotter
//! schemes. Averaging `ψψ†` over the noise realizes the GKSL channel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ChannelError;
use crate::model::{h_re_bond_terms, LocalTerm, SpinModel};
use crate::nonherm::Dilation;
use crate::numerics::{
    c, identity, unitary_exp, ComplexMatrix, HermitianEigen, LocalOp, RngStream, StateVector, C64,
    ZERO,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Scheme {
    /// `e^{-iΔt H_Re} e^{-i H_I(k)}`
    #[serde(rename = "LT")]
    Lie,
    /// `e^{-iΔt H_Re/2} e^{-i H_I(k)} e^{-iΔt H_Re/2}`
    #[serde(rename = "ST")]
    Strang,
    /// Lie splitting of both parts into even and odd bond layers.
    #[serde(rename = "LT_EO")]
    LieEvenOdd,
    /// Lie even-odd for `H_Re`; even-half, odd, even-half for the noise.
    #[default]
    #[serde(rename = "ST_EO")]
    StrangEvenOdd,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Lie, Scheme::Strang, Scheme::LieEvenOdd, Scheme::StrangEvenOdd];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Lie => "LT",
            Scheme::Strang => "ST",
            Scheme::LieEvenOdd => "LT_EO",
            Scheme::StrangEvenOdd => "ST_EO",
        }
    }

    pub fn is_layered(self) -> bool {
        matches!(self, Scheme::LieEvenOdd | Scheme::StrangEvenOdd)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|sch| sch.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ChannelError::UnknownScheme(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub horizon: f64,
}

impl NoiseConfig {
    pub fn new(dt: f64, scheme: Scheme, horizon: f64) -> Result<Self, ChannelError> {
        let cfg = Self { dt, scheme, horizon };
        cfg.n_steps()?;
        Ok(cfg)
    }

    /// `N = T / Δt`, which must be an integer.
    pub fn n_steps(&self) -> Result<usize, ChannelError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ChannelError::InvalidConfig(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(ChannelError::InvalidConfig(format!("T = {} must be nonnegative", self.horizon)));
        }
        grid_index(self.horizon, self.dt).ok_or_else(|| {
            ChannelError::InvalidConfig(format!("T = {} is not a multiple of dt = {}", self.horizon, self.dt))
        })
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

fn grid_index(t: f64, dt: f64) -> Option<usize> {
    let k = (t / dt).round();
    ((t / dt - k).abs() <= 1e-9 * k.max(1.0) && k >= 0.0).then_some(k as usize)
}

/// Validated snapshot step indices, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotPlan {
    steps: Vec<usize>,
}

impl SnapshotPlan {
    pub fn new(times: &[f64], cfg: &NoiseConfig) -> Result<Self, ChannelError> {
        let n = cfg.n_steps()?;
        let mut steps = Vec::with_capacity(times.len());
        for &t in times {
            let k = grid_index(t, cfg.dt).filter(|&k| k <= n && t.is_finite());
            let k = k.ok_or(ChannelError::SnapshotOffGrid { time: t })?;
            if steps.last().is_some_and(|&prev| prev >= k) {
                return Err(ChannelError::InvalidConfig("snapshot times must be strictly increasing".into()));
            }
            steps.push(k);
        }
        Ok(Self { steps })
    }

    /// Every `stride`-th step including both ends of the horizon.
    pub fn every(stride: usize, cfg: &NoiseConfig) -> Result<Self, ChannelError> {
        let n = cfg.n_steps()?;
        if stride == 0 {
            return Err(ChannelError::InvalidConfig("snapshot stride must be positive".into()));
        }
        let mut steps: Vec<usize> = (0..=n).step_by(stride).collect();
        if steps.last() != Some(&n) {
            steps.push(n);
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn times(&self, cfg: &NoiseConfig) -> Vec<f64> {
        self.steps.iter().map(|&k| cfg.time(k)).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// One noise channel `f_ℓ(t) H_I,ℓ` with rate `γ_ℓ`.
#[derive(Debug, Clone)]
pub struct NoiseTerm {
    pub term: LocalTerm,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layer {
    Even,
    Odd,
}

fn layer_of(term: &LocalTerm) -> Layer {
    if term.first % 2 == 0 { Layer::Even } else { Layer::Odd }
}

#[derive(Debug, Clone)]
struct Kernel {
    first: usize,
    layer: Layer,
    eig: HermitianEigen,
}

/// `H_Re` split into local terms together with the noise terms, plus the
/// precomputed spectral data the stepper needs.
#[derive(Debug, Clone)]
pub struct StochasticHamiltonian {
    n_sites: usize,
    re_terms: Vec<LocalTerm>,
    noise: Vec<NoiseTerm>,
    re_kernels: Vec<Kernel>,
    noise_kernels: Vec<Kernel>,
    h_re: ComplexMatrix,
    h_re_eig: HermitianEigen,
    h_i: Vec<ComplexMatrix>,
    noise_commutes: bool,
}

impl StochasticHamiltonian {
    /// Build from explicit local terms. Terms in the same parity layer must
    /// have disjoint supports so that each layer is a product of commuting
    /// factors.
    pub fn new(n_sites: usize, re_terms: Vec<LocalTerm>, noise: Vec<NoiseTerm>) -> Result<Self, ChannelError> {
        if n_sites == 0 || n_sites > 8 {
            return Err(ChannelError::InvalidConfig(format!("{n_sites} sites is out of range")));
        }
        for t in re_terms.iter().chain(noise.iter().map(|n| &n.term)) {
            if t.sites().end > n_sites {
                return Err(ChannelError::InvalidConfig("term support exceeds the chain".into()));
            }
        }
        for n in &noise {
            if !(n.gamma >= 0.0 && n.gamma.is_finite()) {
                return Err(ChannelError::InvalidConfig(format!("rate {} must be nonnegative", n.gamma)));
            }
        }
        check_layers(&re_terms)?;
        check_layers(&noise.iter().map(|n| n.term.clone()).collect::<Vec<_>>())?;

        let kernel = |t: &LocalTerm| -> Result<Kernel, ChannelError> {
            Ok(Kernel { first: t.first, layer: layer_of(t), eig: HermitianEigen::new(&t.matrix)? })
        };
        let re_kernels = re_terms.iter().map(kernel).collect::<Result<Vec<_>, _>>()?;
        let noise_kernels = noise.iter().map(|n| kernel(&n.term)).collect::<Result<Vec<_>, _>>()?;

        let d = 1 << n_sites;
        let h_re = re_terms.iter().fold(ComplexMatrix::zeros(d, d), |acc, t| acc + t.embedded(n_sites));
        let h_re_eig = HermitianEigen::new(&h_re)?;
        let h_i: Vec<ComplexMatrix> = noise.iter().map(|n| n.term.embedded(n_sites)).collect();
        let noise_commutes = noise.iter().enumerate().all(|(a, na)| {
            noise[a + 1..].iter().all(|nb| {
                let (ra, rb) = (na.term.sites(), nb.term.sites());
                ra.end <= rb.start || rb.end <= ra.start
            })
        });
        Ok(Self { n_sites, re_terms, noise, re_kernels, noise_kernels, h_re, h_re_eig, h_i, noise_commutes })
    }

    /// The benchmark chain: bond-split `H_Re` and one noise term per
    /// nontrivial dilation bond.
    pub fn from_dilation(model: &SpinModel, dilation: &Dilation) -> Result<Self, ChannelError> {
        let noise = dilation
            .bonds
            .iter()
            .filter(|b| !b.is_trivial())
            .map(|b| NoiseTerm { term: LocalTerm::new(b.bond, b.h_i_local.clone()), gamma: b.gamma })
            .collect();
        Self::new(model.sites, h_re_bond_terms(model), noise)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        1 << self.n_sites
    }

    pub fn n_noise(&self) -> usize {
        self.noise.len()
    }

    pub fn noise_terms(&self) -> &[NoiseTerm] {
        &self.noise
    }

    pub fn re_terms(&self) -> &[LocalTerm] {
        &self.re_terms
    }

    pub fn h_re(&self) -> &ComplexMatrix {
        &self.h_re
    }

    /// Embedded `H_I,ℓ`, in noise-term order.
    pub fn h_i(&self) -> &[ComplexMatrix] {
        &self.h_i
    }

    pub fn noise_is_even(&self, idx: usize) -> bool {
        self.noise_kernels[idx].layer == Layer::Even
    }

    /// `(H_Re^even, H_Re^odd)`.
    pub fn h_re_layers(&self) -> (ComplexMatrix, ComplexMatrix) {
        let d = self.dim();
        let (mut e, mut o) = (ComplexMatrix::zeros(d, d), ComplexMatrix::zeros(d, d));
        for t in &self.re_terms {
            match layer_of(t) {
                Layer::Even => e += t.embedded(self.n_sites),
                Layer::Odd => o += t.embedded(self.n_sites),
            }
        }
        (e, o)
    }

    /// `H_I(k) = Σ ξ_ℓ H_I,ℓ`, optionally restricted to one layer.
    fn noise_sum(&self, incs: &[f64], layer: Option<Layer>) -> ComplexMatrix {
        let d = self.dim();
        let mut h = ComplexMatrix::zeros(d, d);
        for (idx, (m, &xi)) in self.h_i.iter().zip(incs).enumerate() {
            if layer.is_none_or(|l| self.noise_kernels[idx].layer == l) {
                h += m * c(xi, 0.0);
            }
        }
        h
    }

    pub fn noise_operator(&self, incs: &[f64]) -> ComplexMatrix {
        self.noise_sum(incs, None)
    }

    /// Draw `ξ_ℓ ~ N(0, 2 γ_ℓ δ)` into `out`.
    pub fn draw_increments(&self, rng: &mut RngStream, duration: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.noise.iter().map(|n| rng.gaussian((2.0 * n.gamma * duration).sqrt())));
    }

    /// Dense one-step operator, assembled from full-space exponentials.
    pub fn step_unitary(&self, incs: &[f64], dt: f64, scheme: Scheme) -> Result<ComplexMatrix, ChannelError> {
        self.check_incs(incs)?;
        let u = match scheme {
            Scheme::Lie => unitary_exp(&self.h_re, dt)? * unitary_exp(&self.noise_sum(incs, None), 1.0)?,
            Scheme::Strang => {
                let half = unitary_exp(&self.h_re, dt / 2.0)?;
                &half * unitary_exp(&self.noise_sum(incs, None), 1.0)? * &half
            }
            Scheme::LieEvenOdd | Scheme::StrangEvenOdd => {
                let (re_e, re_o) = self.h_re_layers();
                let v_re = unitary_exp(&re_e, dt)? * unitary_exp(&re_o, dt)?;
                let ie = self.noise_sum(incs, Some(Layer::Even));
                let io = self.noise_sum(incs, Some(Layer::Odd));
                let v_i = if scheme == Scheme::LieEvenOdd {
                    unitary_exp(&ie, 1.0)? * unitary_exp(&io, 1.0)?
                } else {
                    let half = unitary_exp(&ie, 0.5)?;
                    &half * unitary_exp(&io, 1.0)? * &half
                };
                v_re * v_i
            }
        };
        Ok(u)
    }

    /// `exp(-i(Δt H_Re + H_I(k)))`.
    pub fn exact_step_unitary(&self, incs: &[f64], dt: f64) -> Result<ComplexMatrix, ChannelError> {
        self.check_incs(incs)?;
        let gen = &self.h_re * c(dt, 0.0) + self.noise_sum(incs, None);
        Ok(unitary_exp(&gen, 1.0)?)
    }

    fn check_incs(&self, incs: &[f64]) -> Result<(), ChannelError> {
        if incs.len() != self.noise.len() {
            return Err(ChannelError::InvalidConfig(format!(
                "{} increments for {} noise terms",
                incs.len(),
                self.noise.len()
            )));
        }
        Ok(())
    }
}

fn check_layers(terms: &[LocalTerm]) -> Result<(), ChannelError> {
    for (a, ta) in terms.iter().enumerate() {
        for tb in &terms[a + 1..] {
            let (ra, rb) = (ta.sites(), tb.sites());
            let overlap = ra.start < rb.end && rb.start < ra.end;
            if overlap && layer_of(ta) == layer_of(tb) {
                return Err(ChannelError::InvalidConfig(format!(
                    "terms at sites {ra:?} and {rb:?} overlap within one layer"
                )));
            }
        }
    }
    Ok(())
}

/// Receives the continuous-time events of the mitigation layer.
pub trait JumpHook {
    /// Absolute time of the next event after `t_now`, if it is `≤ horizon`.
    fn next_event(&mut self, t_now: f64, horizon: f64, rng: &mut RngStream) -> Option<f64>;

    /// Apply the pending event. Returning `false` terminates the trajectory.
    fn fire(&mut self, psi: &mut [C64], n_sites: usize, rng: &mut RngStream) -> bool;
}

/// Channel-only evolution.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoJumps;

impl JumpHook for NoJumps {
    fn next_event(&mut self, _: f64, _: f64, _: &mut RngStream) -> Option<f64> {
        None
    }

    fn fire(&mut self, _: &mut [C64], _: usize, _: &mut RngStream) -> bool {
        true
    }
}

/// Reusable per-worker trajectory stepper.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    ham: &'a StochasticHamiltonian,
    cfg: NoiseConfig,
    n_steps: usize,
    re_full: Vec<LocalOp>,
    re_half_dense: Option<ComplexMatrix>,
    re_full_dense: Option<ComplexMatrix>,
    incs: Vec<f64>,
    ops: Vec<LocalOp>,
    scratch: StateVector,
    work: StateVector,
}

impl<'a> Stepper<'a> {
    pub fn new(ham: &'a StochasticHamiltonian, cfg: NoiseConfig) -> Result<Self, ChannelError> {
        let n_steps = cfg.n_steps()?;
        let re_full = ham.re_kernels.iter().map(|k| LocalOp::unitary(&k.eig, cfg.dt)).collect();
        let (re_half_dense, re_full_dense) = match cfg.scheme {
            Scheme::Lie => (None, Some(ham.h_re_eig.unitary(cfg.dt))),
            Scheme::Strang => (Some(ham.h_re_eig.unitary(cfg.dt / 2.0)), None),
            _ => (None, None),
        };
        let d = ham.dim();
        Ok(Self {
            ham,
            cfg,
            n_steps,
            re_full,
            re_half_dense,
            re_full_dense,
            incs: Vec::with_capacity(ham.n_noise()),
            ops: vec![LocalOp::identity(2); ham.n_noise()],
            scratch: StateVector::zeros(d),
            work: StateVector::zeros(d),
        })
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.cfg
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Advance `psi` by `duration`, drawing fresh increments. `standard`
    /// marks a full grid step, for which the `H_Re` factors are cached.
    fn substep(&mut self, psi: &mut [C64], duration: f64, standard: bool, rng: &mut RngStream) {
        let ham = self.ham;
        let n = ham.n_sites;
        let mut incs = std::mem::take(&mut self.incs);
        ham.draw_increments(rng, duration, &mut incs);
        match self.cfg.scheme {
            Scheme::LieEvenOdd | Scheme::StrangEvenOdd => {
                self.apply_layered_noise(psi, &incs);
                // V_Re = e^{-iδH_even} e^{-iδH_odd}: odd acts first.
                for layer in [Layer::Odd, Layer::Even] {
                    for (idx, k) in ham.re_kernels.iter().enumerate() {
                        if k.layer != layer {
                            continue;
                        }
                        if standard {
                            self.re_full[idx].apply(psi, n, k.first);
                        } else {
                            LocalOp::unitary(&k.eig, duration).apply(psi, n, k.first);
                        }
                    }
                }
            }
            Scheme::Lie => {
                self.apply_full_noise(psi, &incs);
                let u = if standard {
                    self.re_full_dense.clone().expect("cached for LT")
                } else {
                    ham.h_re_eig.unitary(duration)
                };
                self.apply_dense(psi, &u);
            }
            Scheme::Strang => {
                let half = if standard {
                    self.re_half_dense.clone().expect("cached for ST")
                } else {
                    ham.h_re_eig.unitary(duration / 2.0)
                };
                self.apply_dense(psi, &half);
                self.apply_full_noise(psi, &incs);
                self.apply_dense(psi, &half);
            }
        }
        self.incs = incs;
    }

    fn apply_layered_noise(&mut self, psi: &mut [C64], incs: &[f64]) {
        let ham = self.ham;
        let n = ham.n_sites;
        let strang = self.cfg.scheme == Scheme::StrangEvenOdd;
        let has_odd = ham.noise_kernels.iter().any(|k| k.layer == Layer::Odd);
        // Without an odd layer the two even halves merge into one factor.
        let even_theta = if strang && has_odd { 0.5 } else { 1.0 };
        for (idx, k) in ham.noise_kernels.iter().enumerate() {
            let theta = if k.layer == Layer::Even { even_theta } else { 1.0 };
            self.ops[idx].set_unitary(&k.eig, theta * incs[idx]);
        }
        let apply_layer = |ops: &[LocalOp], psi: &mut [C64], layer: Layer| {
            for (idx, k) in ham.noise_kernels.iter().enumerate() {
                if k.layer == layer {
                    ops[idx].apply(psi, n, k.first);
                }
            }
        };
        if strang {
            apply_layer(&self.ops, psi, Layer::Even);
            apply_layer(&self.ops, psi, Layer::Odd);
            if has_odd {
                apply_layer(&self.ops, psi, Layer::Even);
            }
        } else {
            // V_I = e^{-iH_I^even} e^{-iH_I^odd}
            apply_layer(&self.ops, psi, Layer::Odd);
            apply_layer(&self.ops, psi, Layer::Even);
        }
    }

    fn apply_full_noise(&mut self, psi: &mut [C64], incs: &[f64]) {
        let ham = self.ham;
        if ham.noise_commutes {
            for (idx, k) in ham.noise_kernels.iter().enumerate() {
                self.ops[idx].set_unitary(&k.eig, incs[idx]);
                self.ops[idx].apply(psi, ham.n_sites, k.first);
            }
        } else {
            let u = unitary_exp(&ham.noise_sum(incs, None), 1.0).expect("bounded dimension");
            self.apply_dense(psi, &u);
        }
    }

    fn apply_dense(&mut self, psi: &mut [C64], u: &ComplexMatrix) {
        self.work.as_mut_slice().copy_from_slice(psi);
        self.scratch.gemv(c(1.0, 0.0), u, &self.work, ZERO);
        psi.copy_from_slice(self.scratch.as_slice());
    }

    /// Evolve `psi` over `[0, T]`, calling `on_snapshot(i, ψ, hook)` at each
    /// planned snapshot. Events requested by the hook split the enclosing step
    /// into substeps with independent increments. After the hook terminates
    /// the trajectory the state is frozen and snapshots still fire.
    pub fn evolve<H, F>(
        &mut self,
        psi: &mut [C64],
        plan: &SnapshotPlan,
        rng: &mut RngStream,
        hook: &mut H,
        mut on_snapshot: F,
    ) -> bool
    where
        H: JumpHook,
        F: FnMut(usize, &[C64], &H),
    {
        let n = self.n_steps;
        let horizon = self.cfg.horizon;
        let dt = self.cfg.dt;
        let mut pending = hook.next_event(0.0, horizon, rng);
        let mut alive = true;
        let mut snap = 0;
        let steps = plan.steps();
        for k in 0..=n {
            while snap < steps.len() && steps[snap] == k {
                on_snapshot(snap, psi, hook);
                snap += 1;
            }
            if k == n || snap == steps.len() {
                break;
            }
            if !alive {
                continue;
            }
            let t0 = k as f64 * dt;
            let t1 = if k + 1 == n { horizon } else { (k + 1) as f64 * dt };
            let in_step = |t: f64| t < t1 || (k + 1 == n && t <= t1);
            if !pending.is_some_and(in_step) {
                self.substep(psi, dt, true, rng);
                continue;
            }
            let mut t = t0;
            while let Some(tj) = pending.filter(|&tj| in_step(tj)) {
                if tj > t {
                    self.substep(psi, tj - t, false, rng);
                    t = tj;
                }
                if !hook.fire(psi, self.ham.n_sites, rng) {
                    alive = false;
                    break;
                }
                pending = hook.next_event(t, horizon, rng);
            }
            if alive && t1 > t {
                self.substep(psi, t1 - t, false, rng);
            }
        }
        alive
    }
}

/// Convenience wrapper returning the state at each snapshot.
pub fn evolve_trajectory<H: JumpHook>(
    ham: &StochasticHamiltonian,
    psi0: &StateVector,
    cfg: NoiseConfig,
    rng: &mut RngStream,
    snapshots: &[f64],
    hook: &mut H,
) -> Result<Vec<StateVector>, ChannelError> {
    if psi0.len() != ham.dim() {
        return Err(ChannelError::InvalidConfig("initial state has the wrong dimension".into()));
    }
    let plan = SnapshotPlan::new(snapshots, &cfg)?;
    let mut stepper = Stepper::new(ham, cfg)?;
    let mut psi: Vec<C64> = psi0.iter().copied().collect();
    let mut out = Vec::with_capacity(plan.len());
    stepper.evolve(&mut psi, &plan, rng, hook, |_, s, _| out.push(StateVector::from_column_slice(s)));
    Ok(out)
}

/// Product of `n` dense step unitaries for one noise realization, with the
/// matching exact product. Used by the Trotter-error measurements.
pub fn propagator_pair(
    ham: &StochasticHamiltonian,
    scheme: Scheme,
    dt: f64,
    n: usize,
    rng: &mut RngStream,
    mut per_step: impl FnMut(&[f64]),
) -> Result<(ComplexMatrix, ComplexMatrix), ChannelError> {
    let d = ham.dim();
    let (mut u_impl, mut u_ex) = (identity(d), identity(d));
    let mut incs = Vec::new();
    for _ in 0..n {
        ham.draw_increments(rng, dt, &mut incs);
        per_step(&incs);
        u_impl = ham.step_unitary(&incs, dt, scheme)? * u_impl;
        u_ex = ham.exact_step_unitary(&incs, dt)? * u_ex;
    }
    Ok((u_impl, u_ex))
}
