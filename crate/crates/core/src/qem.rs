//! Continuous-time quasi-probability cancellation of the jump term.
//!
//! The bond map `ρ ↦ −2γ_ℓ H_I,ℓ ρ H_I,ℓ` is expanded exactly in the 256
//! tensor products of the sixteen single-Kraus basis channels. Sampling marks
//! at rate `|q|` and multiplying a trajectory sign by `sign(q)` on each jump turns
//! the GKSL generator into the non-Hermitian one, at the price of an overall
//! factor `Λ(T) = e^{κT}` that cancels in normalized ratios.

use std::sync::OnceLock;

use nalgebra::{DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::channel::JumpHook;
use crate::error::QemError;
use crate::nonherm::Dilation;
use crate::numerics::{
    c, identity, kron, norm_sqr, pauli_x, pauli_y, pauli_z, sandwich_superop, vectorize,
    ComplexMatrix, LocalOp, RngStream, C64,
};

pub const DEFAULT_PRUNE: f64 = 1e-12;
const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct BasisChannel {
    pub index: usize,
    pub label: &'static str,
    pub kraus: ComplexMatrix,
    pub trace_preserving: bool,
}

/// The sixteen single-qubit channels `ρ ↦ AρA†`.
pub fn basis_channels() -> &'static [BasisChannel] {
    static TABLE: OnceLock<Vec<BasisChannel>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let (i2, x, y, z) = (identity(2), pauli_x(), pauli_y(), pauli_z());
        let ii = c(0.0, 1.0);
        let r = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let h = c(0.5, 0.0);
        let rows: Vec<(&'static str, ComplexMatrix, bool)> = vec![
            ("I", i2.clone(), true),
            ("X", x.clone(), true),
            ("Y", y.clone(), true),
            ("Z", z.clone(), true),
            ("Rx", (&i2 + &x * ii) * r, true),
            ("Ry", (&i2 + &y * ii) * r, true),
            ("Rz", (&i2 + &z * ii) * r, true),
            ("Ryz", (&y + &z) * r, true),
            ("Rzx", (&z + &x) * r, true),
            ("Rxy", (&x + &y) * r, true),
            ("Px", (&i2 + &x) * h, false),
            ("Py", (&i2 + &y) * h, false),
            ("Pz", (&i2 + &z) * h, false),
            ("Pyz", (&y + &z * ii) * h, false),
            ("Pzx", (&z + &x * ii) * h, false),
            ("Pxy", (&x + &y * ii) * h, false),
        ];
        rows.into_iter()
            .enumerate()
            .map(|(index, (label, kraus, trace_preserving))| BasisChannel { index, label, kraus, trace_preserving })
            .collect()
    })
}

/// Pair index `j = 16 a + b` for channel `a` on the left site, `b` on the right.
pub fn pair_kraus(pair: usize) -> ComplexMatrix {
    let t = basis_channels();
    kron(&t[pair / 16].kraus, &t[pair % 16].kraus)
}

pub fn pair_trace_preserving(pair: usize) -> bool {
    let t = basis_channels();
    t[pair / 16].trace_preserving && t[pair % 16].trace_preserving
}

pub fn pair_superop(pair: usize) -> ComplexMatrix {
    let k = pair_kraus(pair);
    sandwich_superop(&k, &k)
}

struct BasisSystem {
    lu: LU<C64, Dyn, Dyn>,
    matrix: ComplexMatrix,
    cond: f64,
}

fn basis_system() -> &'static BasisSystem {
    static SYS: OnceLock<BasisSystem> = OnceLock::new();
    SYS.get_or_init(|| {
        let mut m = ComplexMatrix::zeros(256, 256);
        for j in 0..256 {
            m.set_column(j, &vectorize(&pair_superop(j)));
        }
        let sv = m.singular_values();
        let cond = sv.max() / sv.min();
        BasisSystem { lu: m.clone().lu(), matrix: m, cond }
    })
}

/// Condition number of the 256×256 matrix whose columns are the vectorized
/// pair channels.
pub fn basis_condition_number() -> f64 {
    basis_system().cond
}

/// Column-stacked superoperator of `ρ ↦ −2γ_ℓ H_I,ℓ ρ H_I,ℓ` on the bond.
pub fn cancellation_generator(dilation: &Dilation, bond: usize) -> ComplexMatrix {
    let b = &dilation.bonds[bond];
    sandwich_superop(&b.h_i_local, &b.h_i_local) * c(-2.0 * b.gamma, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpdEntry {
    pub bond: usize,
    pub pair: usize,
    pub q: f64,
}

impl QpdEntry {
    pub fn parity(&self) -> i8 {
        if self.q < 0.0 { -1 } else { 1 }
    }

    pub fn rate(&self) -> f64 {
        self.q.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpdDecomposition {
    pub q0: f64,
    pub entries: Vec<QpdEntry>,
    pub gamma_tot: f64,
    pub kappa: f64,
    /// Max-entry residual of each bond's expansion, pruned terms included.
    pub bond_residuals: Vec<f64>,
    pub prune_threshold: f64,
}

impl QpdDecomposition {
    /// `Λ(T) = e^{κT}`.
    pub fn overhead(&self, horizon: f64) -> f64 {
        (self.kappa * horizon).exp()
    }

    pub fn max_residual(&self) -> f64 {
        self.bond_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn entries_for_bond(&self, bond: usize) -> impl Iterator<Item = &QpdEntry> {
        self.entries.iter().filter(move |e| e.bond == bond)
    }
}

pub fn solve_qpd(dilation: &Dilation) -> Result<QpdDecomposition, QemError> {
    solve_qpd_with(dilation, DEFAULT_PRUNE)
}

pub fn solve_qpd_with(dilation: &Dilation, prune: f64) -> Result<QpdDecomposition, QemError> {
    let sys = basis_system();
    if !(sys.cond.is_finite() && sys.cond < MAX_CONDITION) {
        return Err(QemError::SingularBasis { cond: sys.cond });
    }
    let mut q0 = 0.0;
    let mut entries = Vec::new();
    let mut bond_residuals = Vec::with_capacity(dilation.bonds.len());
    for (ell, bond) in dilation.bonds.iter().enumerate() {
        if bond.is_trivial() {
            bond_residuals.push(0.0);
            continue;
        }
        let target = vectorize(&cancellation_generator(dilation, ell));
        let q = sys.lu.solve(&target).ok_or(QemError::SingularBasis { cond: f64::INFINITY })?;
        let scale = q.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let imag = q.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if imag > 1e-9 * scale.max(1.0) {
            return Err(QemError::ComplexCoefficient(imag));
        }
        let mut kept = DVector::<C64>::zeros(256);
        kept[0] = c(q[0].re, 0.0);
        q0 += q[0].re;
        for j in 1..256 {
            if q[j].re.abs() > prune {
                entries.push(QpdEntry { bond: ell, pair: j, q: q[j].re });
                kept[j] = c(q[j].re, 0.0);
            }
        }
        let resid = (&sys.matrix * kept - target).iter().map(|z| z.norm()).fold(0.0, f64::max);
        bond_residuals.push(resid);
    }
    let gamma_tot: f64 = entries.iter().map(QpdEntry::rate).sum();
    Ok(QpdDecomposition { q0, kappa: q0 + gamma_tot, entries, gamma_tot, bond_residuals, prune_threshold: prune })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Carry the Kraus weight in the unnormalized state.
    #[default]
    Weighted,
    /// Bernoulli acceptance with renormalization on success.
    Shot,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Weighted => "weighted",
            Mode::Shot => "shot",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub bond: usize,
    pub pair: usize,
    pub parity: i8,
    /// Position in [`QpdDecomposition::entries`].
    pub entry: usize,
}

/// Precomputed mark table and Kraus kernels for fast sampling.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    qpd: QpdDecomposition,
    cumulative: Vec<f64>,
    kraus: Vec<LocalOp>,
    trace_preserving: Vec<bool>,
}

impl JumpSampler {
    pub fn new(qpd: QpdDecomposition) -> Self {
        let mut acc = 0.0;
        let cumulative = qpd
            .entries
            .iter()
            .map(|e| {
                acc += e.rate();
                acc
            })
            .collect();
        let kraus = qpd.entries.iter().map(|e| LocalOp::from_matrix(&pair_kraus(e.pair))).collect();
        let trace_preserving = qpd.entries.iter().map(|e| pair_trace_preserving(e.pair)).collect();
        Self { qpd, cumulative, kraus, trace_preserving }
    }

    pub fn qpd(&self) -> &QpdDecomposition {
        &self.qpd
    }

    pub fn gamma_tot(&self) -> f64 {
        self.qpd.gamma_tot
    }

    /// Inter-jump time `−ln(u)/Γ_tot` for a given `u ∈ (0, 1]`.
    pub fn waiting_time(&self, u: f64) -> f64 {
        -u.ln() / self.qpd.gamma_tot
    }

    /// Index of the entry selected by `x ∈ [0, Γ_tot)`.
    fn mark(&self, x: f64) -> usize {
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1)
    }

    pub fn sample_jump(&self, rng: &mut RngStream, t_now: f64, horizon: f64) -> Option<JumpEvent> {
        if self.qpd.gamma_tot <= 0.0 || self.qpd.entries.is_empty() {
            return None;
        }
        let t = t_now + self.waiting_time(rng.uniform_open0());
        if t > horizon {
            return None;
        }
        let entry = self.mark(rng.uniform() * self.qpd.gamma_tot);
        let e = &self.qpd.entries[entry];
        Some(JumpEvent { time: t, bond: e.bond, pair: e.pair, parity: e.parity(), entry })
    }

    /// Apply the event's Kraus pair. In shot mode trace-decreasing pairs are
    /// accepted with the Born probability and the state is renormalized on
    /// acceptance; the returned flag is `false` on rejection.
    pub fn apply(&self, psi: &mut [C64], n_sites: usize, event: &JumpEvent, mode: Mode, rng: &mut RngStream) -> bool {
        let op = &self.kraus[event.entry];
        if mode == Mode::Weighted || self.trace_preserving[event.entry] {
            op.apply(psi, n_sites, event.bond);
            return true;
        }
        let before = norm_sqr(psi);
        op.apply(psi, n_sites, event.bond);
        let after = norm_sqr(psi);
        if before <= 0.0 || !rng.bernoulli(after / before) {
            return false;
        }
        let scale = (before / after).sqrt();
        psi.iter_mut().for_each(|z| *z *= scale);
        true
    }
}

pub fn sample_jump(rng: &mut RngStream, t_now: f64, sampler: &JumpSampler, horizon: f64) -> Option<JumpEvent> {
    sampler.sample_jump(rng, t_now, horizon)
}

pub fn apply_basis_op(
    psi: &mut [C64],
    n_sites: usize,
    event: &JumpEvent,
    sampler: &JumpSampler,
    mode: Mode,
    rng: &mut RngStream,
) -> bool {
    sampler.apply(psi, n_sites, event, mode, rng)
}

/// Trajectory-level state of the signed jump process.
#[derive(Debug, Clone)]
pub struct SqemHook<'a> {
    sampler: &'a JumpSampler,
    mode: Mode,
    pending: Option<JumpEvent>,
    parity: i8,
    jumps: usize,
    accepted: bool,
    record: Option<Vec<JumpEvent>>,
}

impl<'a> SqemHook<'a> {
    pub fn new(sampler: &'a JumpSampler, mode: Mode) -> Self {
        Self { sampler, mode, pending: None, parity: 1, jumps: 0, accepted: true, record: None }
    }

    /// Also keep the list of fired events.
    pub fn recording(mut self) -> Self {
        self.record = Some(Vec::new());
        self
    }

    pub fn reset(&mut self) {
        self.pending = None;
        self.parity = 1;
        self.jumps = 0;
        self.accepted = true;
        if let Some(r) = self.record.as_mut() {
            r.clear();
        }
    }

    pub fn parity(&self) -> i8 {
        self.parity
    }

    pub fn jumps(&self) -> usize {
        self.jumps
    }

    /// `D_s`: false once a shot-mode acceptance test has failed.
    pub fn accepted(&self) -> bool {
        self.accepted
    }

    pub fn events(&self) -> &[JumpEvent] {
        self.record.as_deref().unwrap_or(&[])
    }
}

impl JumpHook for SqemHook<'_> {
    fn next_event(&mut self, t_now: f64, horizon: f64, rng: &mut RngStream) -> Option<f64> {
        self.pending = self.sampler.sample_jump(rng, t_now, horizon);
        self.pending.map(|e| e.time)
    }

    fn fire(&mut self, psi: &mut [C64], n_sites: usize, rng: &mut RngStream) -> bool {
        let event = self.pending.take().expect("fire follows next_event");
        self.jumps += 1;
        self.parity *= event.parity;
        if let Some(r) = self.record.as_mut() {
            r.push(event);
        }
        self.accepted = self.sampler.apply(psi, n_sites, &event, self.mode, rng);
        self.accepted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_initial_state, SpinModel};
    use crate::nonherm::build_dilation;
    use crate::numerics::{max_abs, outer, random_state, unvectorize, HermitianEigen, ONE, ZERO};

    #[test]
    fn table_matches_definitions() {
        let t = basis_channels();
        assert_eq!(t.len(), 16);
        let tp: Vec<usize> = t.iter().filter(|b| !b.trace_preserving).map(|b| b.index).collect();
        assert_eq!(tp, vec![10, 11, 12, 13, 14, 15]);
        for b in t {
            // A†A ≤ I, with equality exactly for the trace-preserving ones.
            let ata = b.kraus.adjoint() * &b.kraus;
            let top = HermitianEigen::new(&ata).unwrap().values[1];
            assert!(top <= 1.0 + 1e-12, "{}", b.label);
            assert_eq!(max_abs(&(ata - identity(2))) < 1e-12, b.trace_preserving, "{}", b.label);
        }
        // (I+σz)/2 is the projector onto |0⟩.
        let pz = &t[12].kraus;
        assert!((pz[(0, 0)] - ONE).norm() < 1e-15 && pz[(1, 1)] == ZERO);
    }

    #[test]
    fn basis_is_well_conditioned() {
        let cond = basis_condition_number();
        assert!(cond.is_finite() && cond < 1e3, "cond = {cond}");
    }

    #[test]
    fn trivial_model_has_empty_decomposition() {
        let m = SpinModel::new(3, 1.0, 0.0, 1.0, vec![0.0; 3]).unwrap();
        let d = build_dilation(&m, &[1.0, 1.0]).unwrap();
        let q = solve_qpd(&d).unwrap();
        assert!(q.entries.is_empty());
        assert_eq!((q.q0, q.gamma_tot, q.kappa), (0.0, 0.0, 0.0));
        assert_eq!(q.overhead(5.0), 1.0);
        assert_eq!(max_abs(&cancellation_generator(&d, 0)), 0.0);
        let s = JumpSampler::new(q);
        assert!(s.sample_jump(&mut RngStream::new(0, 0), 0.0, 10.0).is_none());
    }

    #[test]
    fn reconstruction_is_exact() {
        for (m, g) in [
            (SpinModel::two_site_benchmark(), vec![1.0]),
            (SpinModel::four_site_benchmark(0.1, 0.1), vec![1.0; 3]),
            (SpinModel::four_site_benchmark(8.0, 0.3), vec![0.5, 1.5, 1.0]),
        ] {
            let d = build_dilation(&m, &g).unwrap();
            let q = solve_qpd(&d).unwrap();
            assert!(q.max_residual() <= 1e-10, "{}", q.max_residual());
            assert!(q.gamma_tot >= 0.0 && q.kappa >= -q.gamma_tot);
            assert_eq!(q.overhead(0.0), 1.0);
        }
    }

    /// Rebuild the superoperator from the stored entries and compare
    /// action on random matrices with the direct map.
    #[test]
    fn entries_reproduce_map_on_states() {
        let m = SpinModel::two_site_benchmark();
        let d = build_dilation(&m, &[1.0]).unwrap();
        let q = solve_qpd(&d).unwrap();
        let h = &d.bonds[0].h_i_local;
        let mut rng = RngStream::new(6, 1);
        for _ in 0..50 {
            let psi = random_state(4, &mut rng);
            let rho = outer(psi.as_slice());
            let direct = h * &rho * h * c(-2.0, 0.0);
            let mut via = &rho * c(q.q0, 0.0);
            for e in &q.entries {
                let k = pair_kraus(e.pair);
                via += &k * &rho * k.adjoint() * c(e.q, 0.0);
            }
            assert!(max_abs(&(direct - via)) < 1e-10);
        }
    }

    #[test]
    fn single_qubit_analogue() {
        // ρ ↦ −2σxρσx is −2 times basis channel 1.
        let x = pauli_x();
        let gen = sandwich_superop(&x, &x) * c(-2.0, 0.0);
        let ch = &basis_channels()[1].kraus;
        let mut rng = RngStream::new(2, 0);
        for _ in 0..50 {
            let a = crate::numerics::random_hermitian(2, &mut rng);
            let via = unvectorize(&(&gen * vectorize(&a)), 2);
            let direct = ch * &a * ch.adjoint() * c(-2.0, 0.0);
            assert!(max_abs(&(via - direct)) < 1e-14);
        }
    }

    #[test]
    fn generator_trace_identity() {
        let m = SpinModel::four_site_benchmark(0.1, 0.1);
        let d = build_dilation(&m, &[1.0; 3]).unwrap();
        let mut rng = RngStream::new(3, 3);
        for ell in 0..3 {
            let gen = cancellation_generator(&d, ell);
            let psi = random_state(4, &mut rng);
            let rho = outer(psi.as_slice());
            let out = unvectorize(&(&gen * vectorize(&rho)), 4);
            let h = &d.bonds[ell].h_i_local;
            let want = (h * h * &rho).trace() * c(-2.0 * d.bonds[ell].gamma, 0.0);
            assert!((out.trace() - want).norm() < 1e-13);
        }
    }

    #[test]
    fn solution_is_stable_under_rhs_perturbation() {
        let m = SpinModel::two_site_benchmark();
        let d = build_dilation(&m, &[1.0]).unwrap();
        let sys = basis_system();
        let rhs = vectorize(&cancellation_generator(&d, 0));
        let q = sys.lu.solve(&rhs).unwrap();
        let mut rng = RngStream::new(1, 2);
        let delta = DVector::from_fn(256, |_, _| c(rng.gaussian(1.0), 0.0));
        let delta = &delta * c(1e-8 / delta.norm(), 0.0);
        let qp = sys.lu.solve(&(&rhs + &delta)).unwrap();
        let rel = (qp - &q).norm() / q.norm();
        assert!(rel <= sys.cond * 1e-8 / rhs.norm() * 1.0001 + 1e-14);
    }

    #[test]
    fn waiting_time_closed_form() {
        let qpd = QpdDecomposition {
            q0: 0.0,
            entries: vec![QpdEntry { bond: 0, pair: 1, q: -2.0 }],
            gamma_tot: 2.0,
            kappa: 2.0,
            bond_residuals: vec![0.0],
            prune_threshold: DEFAULT_PRUNE,
        };
        let s = JumpSampler::new(qpd);
        assert!((s.waiting_time((-2.0f64).exp()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn basis_op_examples() {
        let qpd = QpdDecomposition {
            q0: 0.0,
            entries: vec![
                QpdEntry { bond: 0, pair: 16 + 0, q: 1.0 },  // X ⊗ I
                QpdEntry { bond: 0, pair: 16 * 12, q: -1.0 }, // Pz ⊗ I
            ],
            gamma_tot: 2.0,
            kappa: 2.0,
            bond_residuals: vec![],
            prune_threshold: DEFAULT_PRUNE,
        };
        let s = JumpSampler::new(qpd);
        let ev = |entry| JumpEvent { time: 0.1, bond: 0, pair: 0, parity: 1, entry };
        let mut rng = RngStream::new(0, 0);

        let mut psi: Vec<C64> = build_initial_state("00", 2).unwrap().iter().copied().collect();
        assert!(s.apply(&mut psi, 2, &ev(0), Mode::Weighted, &mut rng));
        let want = build_initial_state("10", 2).unwrap();
        assert!(psi.iter().zip(want.iter()).all(|(a, b)| (a - b).norm() < 1e-15));

        for _ in 0..100 {
            let mut psi: Vec<C64> = build_initial_state("00", 2).unwrap().iter().copied().collect();
            assert!(s.apply(&mut psi, 2, &ev(1), Mode::Shot, &mut rng));
        }
        let n = 10_000;
        let mut hits = 0;
        for _ in 0..n {
            let mut psi: Vec<C64> = build_initial_state("+0", 2).unwrap().iter().copied().collect();
            if s.apply(&mut psi, 2, &ev(1), Mode::Shot, &mut rng) {
                hits += 1;
                assert!((norm_sqr(&psi) - 1.0).abs() < 1e-12);
            }
        }
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 4.0 * (0.25 / n as f64).sqrt(), "{frac}");

        let mut psi: Vec<C64> = build_initial_state("+0", 2).unwrap().iter().copied().collect();
        assert!(s.apply(&mut psi, 2, &ev(1), Mode::Weighted, &mut rng));
        assert!((norm_sqr(&psi) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mark_selection_covers_table() {
        let m = SpinModel::two_site_benchmark();
        let d = build_dilation(&m, &[1.0]).unwrap();
        let s = JumpSampler::new(solve_qpd(&d).unwrap());
        assert_eq!(s.mark(0.0), 0);
        assert_eq!(s.mark(s.gamma_tot() * (1.0 - 1e-16)), s.qpd().entries.len() - 1);
    }
}
