//! The asymmetric-hopping hard-core boson chain in its spin-1/2 form.
//!
//! `H_target = H_Re + i H_Im`, open boundary, with
//!
//! ```text
//! H_Re = -(J cosh g / 2) Σ (XX + YY) + (U/4) Σ (1+Z)(1+Z) + (1/2) Σ h_i (1+Z_i)
//! H_Im = -(J sinh g / 2) Σ (X_i Y_{i+1} - Y_i X_{i+1})
//! ```
//!
//! `Z|0⟩ = +|0⟩`, so `|0⟩` is the occupied state `n = 1`.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::numerics::{
    c, embed, identity, kron, pauli_x, pauli_y, pauli_z, ComplexMatrix, StateVector, C64, ONE,
    ZERO,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinModel {
    #[serde(rename = "L")]
    pub sites: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub g: f64,
    #[serde(rename = "U")]
    pub u: f64,
    pub h: Vec<f64>,
}

/// Disorder pattern used for the four-site benchmark, `h_i = h_amp · r_i`.
pub const FIG3_PATTERN: [f64; 4] = [0.9534, -0.2396, 0.8465, -0.4766];

impl SpinModel {
    pub fn new(sites: usize, j: f64, g: f64, u: f64, h: Vec<f64>) -> Result<Self, ModelError> {
        let m = Self { sites, j, g, u, h };
        m.validate()?;
        Ok(m)
    }

    pub fn with_disorder(
        sites: usize,
        j: f64,
        g: f64,
        u: f64,
        h_amp: f64,
        pattern: &[f64],
    ) -> Result<Self, ModelError> {
        Self::new(sites, j, g, u, pattern.iter().map(|r| h_amp * r).collect())
    }

    /// Two-site benchmark: J=1, g=0.1, U=2, h=(-0.8071, 0.3890).
    pub fn two_site_benchmark() -> Self {
        Self::new(2, 1.0, 0.1, 2.0, vec![-0.8071, 0.3890]).expect("valid preset")
    }

    /// Four-site benchmark: J=1, U=1, h = h_amp · FIG3_PATTERN.
    pub fn four_site_benchmark(h_amp: f64, g: f64) -> Self {
        Self::with_disorder(4, 1.0, g, 1.0, h_amp, &FIG3_PATTERN).expect("valid preset")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.sites < 2 {
            return Err(ModelError::Invalid(format!("L = {} but at least 2 sites are needed", self.sites)));
        }
        if self.sites > 8 {
            return Err(ModelError::Invalid(format!("L = {} exceeds the dense limit of 8", self.sites)));
        }
        if self.h.len() != self.sites {
            return Err(ModelError::Invalid(format!(
                "h has {} entries for L = {}",
                self.h.len(),
                self.sites
            )));
        }
        let finite = [self.j, self.g, self.u].iter().chain(&self.h).all(|x| x.is_finite());
        if !finite {
            return Err(ModelError::Invalid("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << self.sites
    }

    pub fn n_bonds(&self) -> usize {
        self.sites - 1
    }

    pub fn bonds(&self) -> BondSet {
        BondSet::open_chain(self.sites)
    }

    /// Bond that carries the onsite term of `site` in the layered split:
    /// the even bond containing it, or the last bond if there is none.
    pub fn onsite_bond(&self, site: usize) -> usize {
        (2 * (site / 2)).min(self.sites - 2)
    }
}

/// Nearest-neighbour bonds `(i, i+1)`; bond `ℓ` joins sites `ℓ` and `ℓ+1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BondSet {
    pub bonds: Vec<(usize, usize)>,
    pub even_layer: Vec<usize>,
    pub odd_layer: Vec<usize>,
}

impl BondSet {
    pub fn open_chain(sites: usize) -> Self {
        let bonds: Vec<_> = (0..sites.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        let even_layer = (0..bonds.len()).filter(|b| b % 2 == 0).collect();
        let odd_layer = (0..bonds.len()).filter(|b| b % 2 == 1).collect();
        Self { bonds, even_layer, odd_layer }
    }

    pub fn len(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bonds.is_empty()
    }

    pub fn is_even(bond: usize) -> bool {
        bond % 2 == 0
    }
}

/// An operator on `log2(dim)` consecutive sites starting at `first`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTerm {
    pub first: usize,
    pub matrix: ComplexMatrix,
}

impl LocalTerm {
    pub fn new(first: usize, matrix: ComplexMatrix) -> Self {
        assert!(matrix.nrows() == 2 || matrix.nrows() == 4, "local terms act on one or two sites");
        Self { first, matrix }
    }

    pub fn span(&self) -> usize {
        if self.matrix.nrows() == 2 { 1 } else { 2 }
    }

    pub fn sites(&self) -> std::ops::Range<usize> {
        self.first..self.first + self.span()
    }

    pub fn embedded(&self, n_sites: usize) -> ComplexMatrix {
        embed(&self.matrix, self.first, n_sites)
    }
}

fn number_op() -> ComplexMatrix {
    (identity(2) + pauli_z()) * c(0.5, 0.0)
}

fn hopping_block(model: &SpinModel) -> ComplexMatrix {
    let xx = kron(&pauli_x(), &pauli_x());
    let yy = kron(&pauli_y(), &pauli_y());
    (xx + yy) * c(-model.j * model.g.cosh() / 2.0, 0.0)
}

fn interaction_block(model: &SpinModel) -> ComplexMatrix {
    let one_plus_z = identity(2) + pauli_z();
    kron(&one_plus_z, &one_plus_z) * c(model.u / 4.0, 0.0)
}

/// Local 4×4 block of `H_Im` on one bond.
pub fn h_im_block(model: &SpinModel) -> ComplexMatrix {
    let xy = kron(&pauli_x(), &pauli_y());
    let yx = kron(&pauli_y(), &pauli_x());
    (xy - yx) * c(-model.j * model.g.sinh() / 2.0, 0.0)
}

/// Global `H_Re`, assembled term by term over the chain.
pub fn build_h_re(model: &SpinModel) -> ComplexMatrix {
    let n = model.sites;
    let mut h = ComplexMatrix::zeros(model.dim(), model.dim());
    let hop = hopping_block(model);
    let int = interaction_block(model);
    for b in 0..model.n_bonds() {
        h += embed(&hop, b, n);
        h += embed(&int, b, n);
    }
    let occ = number_op();
    for (i, &hi) in model.h.iter().enumerate() {
        h += embed(&occ, i, n) * c(hi, 0.0);
    }
    h
}

/// `H_Re` split into one two-site term per bond, with each onsite field
/// attached to [`SpinModel::onsite_bond`].
pub fn h_re_bond_terms(model: &SpinModel) -> Vec<LocalTerm> {
    let hop = hopping_block(model);
    let int = interaction_block(model);
    let occ = number_op();
    let mut terms: Vec<LocalTerm> =
        (0..model.n_bonds()).map(|b| LocalTerm::new(b, &hop + &int)).collect();
    for (site, &hi) in model.h.iter().enumerate() {
        let b = model.onsite_bond(site);
        let local = if site == b {
            kron(&occ, &identity(2))
        } else {
            kron(&identity(2), &occ)
        };
        terms[b].matrix += local * c(hi, 0.0);
    }
    terms
}

/// `(H_Re^even, H_Re^odd)` on the full space.
pub fn h_re_layers(model: &SpinModel) -> (ComplexMatrix, ComplexMatrix) {
    let d = model.dim();
    let mut even = ComplexMatrix::zeros(d, d);
    let mut odd = ComplexMatrix::zeros(d, d);
    for t in h_re_bond_terms(model) {
        if BondSet::is_even(t.first) {
            even += t.embedded(model.sites);
        } else {
            odd += t.embedded(model.sites);
        }
    }
    (even, odd)
}

#[derive(Debug, Clone)]
pub struct ImBond {
    pub bond: usize,
    pub local: ComplexMatrix,
    pub embedded: ComplexMatrix,
}

pub fn build_h_im_bonds(model: &SpinModel) -> Vec<ImBond> {
    let block = h_im_block(model);
    (0..model.n_bonds())
        .map(|b| ImBond { bond: b, local: block.clone(), embedded: embed(&block, b, model.sites) })
        .collect()
}

pub fn build_h_im(model: &SpinModel) -> ComplexMatrix {
    let d = model.dim();
    build_h_im_bonds(model).iter().fold(ComplexMatrix::zeros(d, d), |acc, b| acc + &b.embedded)
}

pub fn build_h_target(model: &SpinModel) -> ComplexMatrix {
    build_h_re(model) + build_h_im(model) * c(0.0, 1.0)
}

/// Product state from a per-site string over `{0,1,+,-}`, or `"plus_all"`.
pub fn build_initial_state(spec: &str, sites: usize) -> Result<StateVector, ModelError> {
    let bad = || ModelError::BadSpec { spec: spec.to_string(), sites };
    let chars: Vec<char> = if spec == "plus_all" {
        vec!['+'; sites]
    } else {
        spec.chars().collect()
    };
    if chars.len() != sites || sites == 0 {
        return Err(bad());
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut psi = StateVector::from_element(1, ONE);
    for ch in chars {
        let local = match ch {
            '0' => [ONE, ZERO],
            '1' => [ZERO, ONE],
            '+' => [c(r, 0.0), c(r, 0.0)],
            '-' => [c(r, 0.0), c(-r, 0.0)],
            _ => return Err(bad()),
        };
        psi = psi.kronecker(&StateVector::from_column_slice(&local));
    }
    Ok(psi)
}

/// A Hermitian observable. Diagonal ones keep their diagonal so that
/// expectation values cost O(dim).
#[derive(Debug, Clone)]
pub struct Observable {
    pub name: String,
    pub matrix: ComplexMatrix,
    diagonal: Option<Vec<f64>>,
}

impl Observable {
    pub fn new(name: impl Into<String>, matrix: ComplexMatrix) -> Self {
        let n = matrix.nrows();
        let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || matrix[(i, j)] == ZERO))
            && (0..n).all(|i| matrix[(i, i)].im == 0.0);
        let diagonal = is_diag.then(|| (0..n).map(|i| matrix[(i, i)].re).collect());
        Self { name: name.into(), matrix, diagonal }
    }

    /// Parse `sz_i`, `szsz_i_j`, `n_i` or `dn_edge`.
    pub fn parse(name: &str, sites: usize) -> Result<Self, ModelError> {
        let bad = || ModelError::Invalid(format!("unknown observable {name:?}"));
        let site = |s: &str| -> Result<usize, ModelError> {
            let i: usize = s.parse().map_err(|_| bad())?;
            if i < sites { Ok(i) } else { Err(bad()) }
        };
        let parts: Vec<&str> = name.split('_').collect();
        let matrix = match parts.as_slice() {
            ["sz", i] => embed(&pauli_z(), site(i)?, sites),
            ["n", i] => embed(&number_op(), site(i)?, sites),
            ["szsz", i, j] => {
                let (i, j) = (site(i)?, site(j)?);
                if i == j {
                    return Err(bad());
                }
                embed(&pauli_z(), i, sites) * embed(&pauli_z(), j, sites)
            }
            ["dn", "edge"] => {
                embed(&number_op(), sites - 1, sites) - embed(&number_op(), 0, sites)
            }
            _ => return Err(bad()),
        };
        Ok(Self::new(name, matrix))
    }

    pub fn expectation(&self, psi: &[C64]) -> f64 {
        match &self.diagonal {
            Some(d) => psi.iter().zip(d).map(|(z, w)| z.norm_sqr() * w).sum(),
            None => crate::numerics::expectation(&self.matrix, psi),
        }
    }

    pub fn op_norm(&self) -> f64 {
        match &self.diagonal {
            Some(d) => d.iter().fold(0.0, |m, x| f64::max(m, x.abs())),
            None => crate::numerics::op_norm(&self.matrix).expect("square"),
        }
    }
}

pub fn standard_observables(model: &SpinModel) -> Vec<Observable> {
    let l = model.sites;
    let mut names: Vec<String> = (0..l).map(|i| format!("sz_{i}")).collect();
    names.push("szsz_0_1".into());
    names.extend((0..l).map(|i| format!("n_{i}")));
    names.push("dn_edge".into());
    names.iter().map(|n| Observable::parse(n, l).expect("standard name")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{commutator, hermiticity_defect, max_abs, op_norm, HermitianEigen};

    #[test]
    fn zero_parameters_give_zero_h_re() {
        let m = SpinModel::new(2, 0.0, 0.3, 0.0, vec![0.0, 0.0]).unwrap();
        assert_eq!(max_abs(&build_h_re(&m)), 0.0);
    }

    /// Independent assembly from sigma^± hopping and occupation numbers.
    #[test]
    fn two_site_h_re_matches_boson_form() {
        let m = SpinModel::two_site_benchmark();
        let sp = from_pm(1.0); // σ+ = |0⟩⟨1|
        let sm = sp.adjoint();
        let n = number_op();
        // (XX+YY)/2 = σ+σ- + σ-σ+
        let hop = (kron(&sp, &sm) + kron(&sm, &sp)) * c(-m.j * m.g.cosh(), 0.0);
        let int = kron(&n, &n) * c(m.u, 0.0);
        let field = kron(&n, &identity(2)) * c(m.h[0], 0.0) + kron(&identity(2), &n) * c(m.h[1], 0.0);
        let want = hop + int + field;
        assert!(max_abs(&(build_h_re(&m) - want)) < 1e-14);

        let h = build_h_re(&m);
        let e00 = h[(0, 0)].re;
        assert!((e00 - (m.u + m.h[0] + m.h[1])).abs() < 1e-14);
    }

    fn from_pm(scale: f64) -> ComplexMatrix {
        crate::numerics::from_rows(2, &[ZERO, c(scale, 0.0), ZERO, ZERO])
    }

    #[test]
    fn h_im_block_spectrum() {
        let m = SpinModel::new(2, 1.0, 0.1, 0.0, vec![0.0; 2]).unwrap();
        let eig = HermitianEigen::new(&h_im_block(&m)).unwrap();
        let s = 0.1f64.sinh();
        for (got, want) in eig.values.iter().zip([-s, 0.0, 0.0, s]) {
            assert!((got - want).abs() < 1e-13);
        }
        let g0 = SpinModel::new(3, 1.0, 0.0, 1.0, vec![0.2; 3]).unwrap();
        for b in build_h_im_bonds(&g0) {
            assert_eq!(max_abs(&b.local), 0.0);
        }
    }

    #[test]
    fn h_im_against_direct_assembly() {
        let m = SpinModel::new(4, 0.7, 0.4, 1.0, vec![0.0; 4]).unwrap();
        let mut want = ComplexMatrix::zeros(16, 16);
        for i in 0..3 {
            let xy = embed(&pauli_x(), i, 4) * embed(&pauli_y(), i + 1, 4);
            let yx = embed(&pauli_y(), i, 4) * embed(&pauli_x(), i + 1, 4);
            want += (xy - yx) * c(-0.7 * 0.4f64.sinh() / 2.0, 0.0);
        }
        assert!(max_abs(&(build_h_im(&m) - want)) < 1e-12);
    }

    #[test]
    fn bond_split_sums_to_h_re() {
        for sites in 2..=5 {
            let h: Vec<f64> = (0..sites).map(|i| 0.3 * i as f64 - 0.5).collect();
            let m = SpinModel::new(sites, 1.0, 0.2, 0.8, h).unwrap();
            let (e, o) = h_re_layers(&m);
            assert!(max_abs(&(e + o - build_h_re(&m))) < 1e-12, "L={sites}");
        }
    }

    #[test]
    fn layers_commute_internally() {
        let m = SpinModel::four_site_benchmark(0.1, 0.1);
        let terms = h_re_bond_terms(&m);
        let ims = build_h_im_bonds(&m);
        let bonds = m.bonds();
        for layer in [&bonds.even_layer, &bonds.odd_layer] {
            for &a in layer.iter() {
                for &b in layer.iter() {
                    let ra = terms[a].embedded(4);
                    let rb = terms[b].embedded(4);
                    assert!(op_norm(&commutator(&ra, &rb)).unwrap() <= 1e-12);
                    let ia = &ims[a].embedded;
                    let ib = &ims[b].embedded;
                    assert!(op_norm(&commutator(ia, ib)).unwrap() <= 1e-12);
                }
            }
        }
        assert_eq!(bonds.even_layer, vec![0, 2]);
        assert_eq!(bonds.odd_layer, vec![1]);
    }

    #[test]
    fn target_is_hermitian_without_asymmetry() {
        let m = SpinModel::new(3, 1.0, 0.0, 0.5, vec![0.1, -0.2, 0.3]).unwrap();
        assert!(hermiticity_defect(&build_h_target(&m)) <= 1e-12);
        let m = SpinModel::new(3, 1.0, 0.3, 0.5, vec![0.1, -0.2, 0.3]).unwrap();
        assert!(hermiticity_defect(&build_h_target(&m)) > 1e-3);
    }

    #[test]
    fn initial_states() {
        let psi = build_initial_state("0110", 4).unwrap();
        let occ: Vec<f64> =
            (0..4).map(|i| Observable::parse(&format!("n_{i}"), 4).unwrap().expectation(psi.as_slice())).collect();
        assert_eq!(occ, vec![1.0, 0.0, 0.0, 1.0]);
        let plus = build_initial_state("plus_all", 2).unwrap();
        for z in plus.iter() {
            assert!((z - c(0.5, 0.0)).norm() < 1e-15);
        }
        assert!(matches!(build_initial_state("2X0", 3), Err(ModelError::BadSpec { .. })));
        assert!(build_initial_state("01", 3).is_err());
        let minus = build_initial_state("-", 1).unwrap();
        assert!((minus[1].re + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn standard_observable_values() {
        let m = SpinModel::four_site_benchmark(0.1, 0.1);
        let obs = standard_observables(&m);
        let all0 = build_initial_state("0000", 4).unwrap();
        let s = build_initial_state("0110", 4).unwrap();
        for o in &obs {
            assert!(hermiticity_defect(&o.matrix) <= 1e-12);
            if o.name.starts_with("n_") {
                assert_eq!(o.expectation(all0.as_slice()), 1.0);
            }
            if o.name == "dn_edge" {
                assert_eq!(o.expectation(s.as_slice()), 0.0);
                assert!(o.op_norm() <= 1.0);
            }
        }
        let m2 = SpinModel::two_site_benchmark();
        let sz1 = Observable::parse("sz_1", 2).unwrap();
        let plus = build_initial_state("plus_all", 2).unwrap();
        assert!(sz1.expectation(plus.as_slice()).abs() < 1e-15);
        assert_eq!(standard_observables(&m2).len(), 2 + 1 + 2 + 1);
        assert!(Observable::parse("szsz_1_1", 2).is_err());
        assert!(Observable::parse("sz_5", 2).is_err());
    }

    #[test]
    fn serialization_round_trip_is_bit_identical() {
        let m = SpinModel::four_site_benchmark(8.0, 0.1);
        let text = serde_json::to_string(&m).unwrap();
        let back: SpinModel = serde_json::from_str(&text).unwrap();
        assert_eq!(build_h_re(&m), build_h_re(&back));
        assert_eq!(build_h_im(&m), build_h_im(&back));
    }

    #[test]
    fn validation() {
        assert!(SpinModel::new(1, 1.0, 0.0, 0.0, vec![0.0]).is_err());
        assert!(SpinModel::new(3, 1.0, 0.0, 0.0, vec![0.0]).is_err());
        assert!(SpinModel::new(2, f64::NAN, 0.0, 0.0, vec![0.0; 2]).is_err());
    }
}
