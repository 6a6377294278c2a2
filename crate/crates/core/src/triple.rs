//! Finite spectral triples of matrix-geometry type.
//!
//! The Hilbert space is `V ⊗ M_n(C)` with `V` a Clifford module and `M_n(C)`
//! vectorized column-major (see [`crate::linalg`]). A basis index of the full
//! space is `α·n² + (row + n·col)` for Clifford index `α`.
//!
//! Conventions fixed here:
//!
//! * `(1,3)` module: chiral representation `γ⁰ = X ⊗ 1`, `γʲ = (iY) ⊗ σʲ`.
//! * Other `(p,q)`: Jordan–Wigner products of Pauli matrices; the first `p`
//!   generators are hermitian, the remaining `q` are `i·e` and anti-hermitian.
//! * su(2): hermitian `J_i` from ladder operators, `L_i = −i J_i`.
//! * The antisymmetric labels `L_{jk}` of the Dirac operator are identified
//!   with `L_i` for `{i,j,k} = {1,2,3}`: `L₁₂ = L₃`, `L₁₃ = L₂`, `L₂₃ = L₁`.
//!   With the gamma matrices above this orientation reproduces the closed-form
//!   deformed spectrum; flipping the sign of `L₁₃` produces zero modes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    self, adjoint_action, c, commutator, hermiticity_defect, identity, kron, left_multiplication, max_abs,
    right_multiplication, CMatrix, I,
};

/// Tag written next to serialized triples so consumers can tell which
/// conventions produced the Dirac operator.
pub const CONVENTION_TAG: &str = "chiral13-jw/su2-ladder-antihermitian/colmajor/Ljk-complement/v1";

/// A `(p,q)` Clifford module: `p` generators square to `+1`, `q` to `−1`.
#[derive(Clone, Debug)]
pub struct CliffordModule {
    pub p: usize,
    pub q: usize,
    pub gammas: Vec<CMatrix>,
    pub ko_dimension: u8,
    /// Grading operator; only exists for even `p + q`.
    pub chirality: Option<CMatrix>,
}

impl CliffordModule {
    pub fn dim(&self) -> usize {
        self.gammas.first().map_or(1, |g| g.nrows())
    }

    /// Product `γ_{i₁} γ_{i₂} ⋯` of generators; the empty product is the identity.
    pub fn product(&self, indices: &[usize]) -> Result<CMatrix> {
        let mut out = identity(self.dim());
        for &i in indices {
            let g = self.gammas.get(i).ok_or_else(|| {
                invalid(format!(
                    "gamma index {i} out of range for a ({},{}) module",
                    self.p, self.q
                ))
            })?;
            out *= g;
        }
        Ok(out)
    }

    /// Metric signature entry `η_ii`.
    pub fn signature(&self, i: usize) -> f64 {
        if i < self.p {
            1.0
        } else {
            -1.0
        }
    }
}

fn pauli() -> [CMatrix; 3] {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    [
        CMatrix::from_row_slice(2, 2, &[z, one, one, z]),
        CMatrix::from_row_slice(2, 2, &[z, -I, I, z]),
        CMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
    ]
}

fn kron_all(factors: &[CMatrix]) -> CMatrix {
    factors.iter().fold(identity(1), |acc, f| kron(&acc, f))
}

/// Anticommuting hermitian generators squaring to `+1`, Jordan–Wigner style.
fn euclidean_generators(count: usize) -> Vec<CMatrix> {
    let [x, y, z] = pauli();
    let qubits = count / 2;
    let mut out = Vec::with_capacity(count);
    for r in 0..qubits {
        for head in [&x, &y] {
            let mut factors = Vec::with_capacity(qubits);
            factors.extend(std::iter::repeat_n(z.clone(), r));
            factors.push(head.clone());
            factors.extend(std::iter::repeat_n(identity(2), qubits - r - 1));
            out.push(kron_all(&factors));
        }
    }
    if count % 2 == 1 {
        out.push(kron_all(&vec![z.clone(); qubits]));
    }
    out
}

/// Generators of the `(p,q)` Clifford module in the fixed convention.
pub fn clifford_generators(p: usize, q: usize) -> Result<CliffordModule> {
    let total = p + q;
    if !(1..=6).contains(&total) {
        return Err(Error::NotImplemented(format!(
            "Clifford modules with p+q = {total}; supported range is 1..=6"
        )));
    }
    let gammas: Vec<CMatrix> = if (p, q) == (1, 3) {
        let [x, y, z] = pauli();
        let iy = y.map(|v| v * I);
        vec![kron(&x, &identity(2)), kron(&iy, &x), kron(&iy, &y), kron(&iy, &z)]
    } else {
        euclidean_generators(total)
            .into_iter()
            .enumerate()
            .map(|(i, e)| if i < p { e } else { e.map(|v| v * I) })
            .collect()
    };
    let chirality = if total.is_multiple_of(2) {
        let prod = gammas.iter().fold(identity(gammas[0].nrows()), |acc, g| acc * g);
        let square = &prod * &prod;
        let dim = prod.nrows();
        if max_abs(&(square.clone() - identity(dim))) < 1e-12 {
            Some(prod)
        } else {
            Some(prod.map(|v| v * I))
        }
    } else {
        None
    };
    Ok(CliffordModule {
        p,
        q,
        gammas,
        ko_dimension: (q as i64 - p as i64).rem_euclid(8) as u8,
        chirality,
    })
}

/// Irreducible su(2) generators in dimension `n`, anti-hermitian.
#[derive(Clone, Debug)]
pub struct Su2Generators {
    pub n: usize,
    pub l: [CMatrix; 3],
}

impl Su2Generators {
    /// Spin `l = (n−1)/2`.
    pub fn spin(&self) -> f64 {
        (self.n as f64 - 1.0) / 2.0
    }

    /// Hermitian angular momentum `J_i = i L_i`.
    pub fn hermitian(&self, i: usize) -> CMatrix {
        self.l[i].map(|v| v * I)
    }

    pub fn hermitian_all(&self) -> [CMatrix; 3] {
        [self.hermitian(0), self.hermitian(1), self.hermitian(2)]
    }

    /// Squared radius `l(l+1)` of the coordinate sphere `Σ J_i² = l(l+1)`.
    pub fn radius_squared(&self) -> f64 {
        let l = self.spin();
        l * (l + 1.0)
    }

    /// The generator multiplying `γʲγᵏ` in the Dirac operator, `j < k` in `1..=3`.
    pub fn pair(&self, j: usize, k: usize) -> &CMatrix {
        match (j, k) {
            (1, 2) => &self.l[2],
            (1, 3) => &self.l[1],
            (2, 3) => &self.l[0],
            _ => panic!("no su(2) generator labelled ({j},{k})"),
        }
    }
}

/// Spin-`(n−1)/2` representation built from ladder operators.
pub fn su2_generators(n: usize) -> Result<Su2Generators> {
    if n == 0 {
        return Err(invalid("su(2) representation dimension must be at least 1"));
    }
    let l = (n as f64 - 1.0) / 2.0;
    let m = |i: usize| l - i as f64;
    let jz = CMatrix::from_fn(n, n, |r, col| if r == col { c(m(r), 0.0) } else { c(0.0, 0.0) });
    let jplus = CMatrix::from_fn(n, n, |r, col| {
        if col == r + 1 {
            let mm = m(col);
            c((l * (l + 1.0) - mm * (mm + 1.0)).sqrt(), 0.0)
        } else {
            c(0.0, 0.0)
        }
    });
    let jminus = jplus.adjoint();
    let jx = (&jplus + &jminus) * c(0.5, 0.0);
    let jy = (&jplus - &jminus) * c(0.0, -0.5);
    let to_l = |j: CMatrix| j.map(|v| v * c(0.0, -1.0));
    Ok(Su2Generators {
        n,
        l: [to_l(jx), to_l(jy), to_l(jz)],
    })
}

/// Coefficients of the deformed fuzzy-sphere Dirac operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationParams {
    pub c0: f64,
    pub c12: f64,
    pub c13: f64,
    pub c23: f64,
}

impl DeformationParams {
    pub fn round() -> Self {
        Self::new(1.0, 1.0, 1.0, 1.0)
    }

    pub fn new(c0: f64, c12: f64, c13: f64, c23: f64) -> Self {
        Self { c0, c12, c13, c23 }
    }

    /// The two-parameter family with a closed-form spectrum: `c0 = a`,
    /// `c12 = c`, `c13 = c23 = 1`.
    pub fn restricted(a: f64, c: f64) -> Self {
        Self::new(a, c, 1.0, 1.0)
    }

    pub fn scaled(&self, beta: f64) -> Self {
        Self::new(self.c0 * beta, self.c12 * beta, self.c13 * beta, self.c23 * beta)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.c0, self.c12, self.c13, self.c23];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("deformation coefficients must be finite: {self:?}")));
        }
        if self.c0 == 0.0 {
            return Err(invalid("c0 must be nonzero"));
        }
        Ok(())
    }

    /// `(a, c)` if the deformation lies in the closed-form family up to a
    /// permutation of the three commutator coefficients.
    pub fn restricted_form(&self) -> Option<(f64, f64)> {
        let cs = [self.c12, self.c13, self.c23];
        let ones = cs.iter().filter(|&&v| v == 1.0).count();
        match ones {
            3 => Some((self.c0, 1.0)),
            2 => cs.iter().find(|&&v| v != 1.0).map(|&v| (self.c0, v)),
            _ => None,
        }
    }
}

/// Sign `ε′` in `K m + ε′ m K†`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpsPrime {
    Plus,
    Minus,
}

impl EpsPrime {
    pub fn value(self) -> f64 {
        match self {
            EpsPrime::Plus => 1.0,
            EpsPrime::Minus => -1.0,
        }
    }
}

/// One term `ω ⊗ (K m + ε′ m K†)` of a general Dirac operator, with `ω`
/// given as a product of Clifford generators.
#[derive(Clone, Debug)]
pub struct KTerm {
    pub gamma_indices: Vec<usize>,
    pub k: CMatrix,
    pub eps_prime: EpsPrime,
}

#[derive(Clone, Debug)]
pub struct FiniteSpectralTriple {
    pub clifford: CliffordModule,
    pub n: usize,
    pub dirac: CMatrix,
    pub deformation: Option<DeformationParams>,
    pub k_terms: Vec<KTerm>,
}

impl FiniteSpectralTriple {
    pub fn hilbert_dim(&self) -> usize {
        self.clifford.dim() * self.n * self.n
    }

    /// `ρ(a) = ρ_l(a)`: `1_V ⊗ (m ↦ a m)`.
    pub fn left_action(&self, a: &CMatrix) -> CMatrix {
        kron(&identity(self.clifford.dim()), &left_multiplication(a))
    }

    /// `ρ_r(a)`: `1_V ⊗ (m ↦ m a)`.
    pub fn right_action(&self, a: &CMatrix) -> CMatrix {
        kron(&identity(self.clifford.dim()), &right_multiplication(a))
    }

    pub fn to_spec(&self) -> Option<TripleSpec> {
        self.deformation.map(|d| TripleSpec {
            p: self.clifford.p,
            q: self.clifford.q,
            n: self.n,
            c0: d.c0,
            c12: d.c12,
            c13: d.c13,
            c23: d.c23,
            convention_tag: CONVENTION_TAG.to_string(),
        })
    }
}

/// Serialized form of a deformed-sphere triple. The Dirac matrix is rebuilt
/// on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleSpec {
    pub p: usize,
    pub q: usize,
    pub n: usize,
    pub c0: f64,
    pub c12: f64,
    pub c13: f64,
    pub c23: f64,
    pub convention_tag: String,
}

impl TripleSpec {
    pub fn build(&self) -> Result<FiniteSpectralTriple> {
        if (self.p, self.q) != (1, 3) {
            return Err(Error::NotImplemented(format!(
                "deformed sphere on a ({},{}) module",
                self.p, self.q
            )));
        }
        if self.convention_tag != CONVENTION_TAG {
            return Err(invalid(format!(
                "convention tag {:?} does not match {CONVENTION_TAG:?}",
                self.convention_tag
            )));
        }
        build_deformed_dirac(self.n, DeformationParams::new(self.c0, self.c12, self.c13, self.c23))
    }
}

const PAIRS: [(usize, usize); 3] = [(1, 2), (1, 3), (2, 3)];

/// The `K`-term encoding of the deformed Dirac operator: `γ⁰ ⊗ {c0/2, m}`
/// and `γ⁰γʲγᵏ ⊗ [c_jk L_jk, m]`.
pub fn deformed_k_terms(gens: &Su2Generators, params: &DeformationParams) -> Vec<KTerm> {
    let n = gens.n;
    let mut terms = vec![KTerm {
        gamma_indices: vec![0],
        k: identity(n) * c(params.c0 / 2.0, 0.0),
        eps_prime: EpsPrime::Plus,
    }];
    let coeffs = [params.c12, params.c13, params.c23];
    for (&(j, k), &cjk) in PAIRS.iter().zip(&coeffs) {
        terms.push(KTerm {
            gamma_indices: vec![0, j, k],
            k: gens.pair(j, k) * c(cjk, 0.0),
            eps_prime: EpsPrime::Plus,
        });
    }
    terms
}

/// `D = c0 γ⁰ ⊗ 1 + Σ_{j<k} c_jk γ⁰γʲγᵏ ⊗ ad(L_jk)` on `V ⊗ M_n(C)` with
/// `V` the `(1,3)` module.
pub fn build_deformed_dirac(n: usize, params: DeformationParams) -> Result<FiniteSpectralTriple> {
    params.validate()?;
    let clifford = clifford_generators(1, 3)?;
    let gens = su2_generators(n)?;
    let n2 = n * n;
    let g0 = &clifford.gammas[0];
    let mut dirac = kron(g0, &identity(n2)) * c(params.c0, 0.0);
    let coeffs = [params.c12, params.c13, params.c23];
    for (&(j, k), &cjk) in PAIRS.iter().zip(&coeffs) {
        let omega = clifford.product(&[0, j, k])?;
        dirac += kron(&omega, &adjoint_action(gens.pair(j, k))) * c(cjk, 0.0);
    }
    let k_terms = deformed_k_terms(&gens, &params);
    Ok(FiniteSpectralTriple {
        clifford,
        n,
        dirac,
        deformation: Some(params),
        k_terms,
    })
}

/// `D(v ⊗ m) = Σ_i ω_i v ⊗ (K_i m + ε′ m K_i†)`.
pub fn build_general_dirac(clifford: CliffordModule, k_terms: Vec<KTerm>, n: usize) -> Result<FiniteSpectralTriple> {
    if n == 0 {
        return Err(invalid("algebra size n must be at least 1"));
    }
    let kdim = clifford.dim();
    let mut dirac = CMatrix::zeros(kdim * n * n, kdim * n * n);
    for (idx, term) in k_terms.iter().enumerate() {
        if term.k.nrows() != n || term.k.ncols() != n {
            return Err(Error::Validation(format!(
                "term {idx}: K is {}x{}, expected {n}x{n}",
                term.k.nrows(),
                term.k.ncols()
            )));
        }
        let omega = clifford.product(&term.gamma_indices)?;
        let scale = max_abs(&term.k).max(1.0);
        let omega_hermitian = hermiticity_defect(&omega) < 1e-12;
        let k_hermitian = hermiticity_defect(&term.k) <= 1e-12 * scale;
        let k_antihermitian = linalg::antihermiticity_defect(&term.k) <= 1e-12 * scale;
        let consistent = if omega_hermitian { k_hermitian } else { k_antihermitian };
        if !consistent {
            return Err(Error::Validation(format!(
                "term {idx} (gammas {:?}, eps' {:?}): omega is {} but K is not; D would not be self-adjoint",
                term.gamma_indices,
                term.eps_prime,
                if omega_hermitian { "hermitian" } else { "anti-hermitian" }
            )));
        }
        let inner =
            left_multiplication(&term.k) + kron(&term.k.conjugate(), &identity(n)) * c(term.eps_prime.value(), 0.0);
        dirac += kron(&omega, &inner);
    }
    Ok(FiniteSpectralTriple {
        clifford,
        n,
        dirac,
        deformation: None,
        k_terms,
    })
}

/// The Grosse–Prešnajder operator `1 + Σ_{j<k} γ_jγ_k ⊗ ad(L_jk)` on the
/// `(0,3)` module.
pub fn grosse_presnajder(n: usize) -> Result<FiniteSpectralTriple> {
    let clifford = clifford_generators(0, 3)?;
    let gens = su2_generators(n)?;
    let mut terms = vec![KTerm {
        gamma_indices: vec![],
        k: identity(n) * c(0.5, 0.0),
        eps_prime: EpsPrime::Plus,
    }];
    for &(j, k) in &PAIRS {
        terms.push(KTerm {
            gamma_indices: vec![j - 1, k - 1],
            k: gens.pair(j, k).clone(),
            eps_prime: EpsPrime::Plus,
        });
    }
    build_general_dirac(clifford, terms, n)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub hermiticity_defect: f64,
    pub first_order_defect: f64,
    pub symmetry_defect: f64,
    /// Spectrum symmetry only counts towards `passed` for deformed spheres.
    pub symmetry_required: bool,
    pub trials: usize,
    pub tolerance: f64,
    pub passed: bool,
}

pub const VALIDATION_SEED: u64 = 0x5eed_f1e1d;

pub fn validate_triple(t: &FiniteSpectralTriple, trials: usize, tol: f64) -> Result<ValidationReport> {
    validate_triple_seeded(t, trials, tol, VALIDATION_SEED)
}

/// Hermiticity, first-order condition over random `(a, b)` and spectrum symmetry.
pub fn validate_triple_seeded(
    t: &FiniteSpectralTriple,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<ValidationReport> {
    if trials == 0 {
        return Err(invalid("validation needs at least one trial"));
    }
    let herm = hermiticity_defect(&t.dirac);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first_order = 0.0_f64;
    for _ in 0..trials {
        let a = linalg::random_complex_matrix(t.n, t.n, &mut rng);
        let b = linalg::random_complex_matrix(t.n, t.n, &mut rng);
        let inner = commutator(&t.dirac, &t.right_action(&a));
        let outer = commutator(&inner, &t.left_action(&b));
        first_order = first_order.max(max_abs(&outer));
    }
    let hermitian_part = (&t.dirac + t.dirac.adjoint()) * c(0.5, 0.0);
    let eig = linalg::hermitian_eigenvalues(&hermitian_part)?;
    let symmetry = eig
        .iter()
        .zip(eig.iter().rev())
        .fold(0.0_f64, |acc, (lo, hi)| acc.max((lo + hi).abs()));
    let symmetry_required = t.deformation.is_some();
    let passed = herm < tol && first_order < tol && (!symmetry_required || symmetry < tol);
    Ok(ValidationReport {
        hermiticity_defect: herm,
        first_order_defect: first_order,
        symmetry_defect: symmetry,
        symmetry_required,
        trials,
        tolerance: tol,
        passed,
    })
}

/// Max entrywise defect of `γ_i γ_j + γ_j γ_i = 2 η_ij`.
pub fn clifford_relation_defect(module: &CliffordModule) -> f64 {
    let dim = module.dim();
    let mut worst = 0.0_f64;
    for (i, gi) in module.gammas.iter().enumerate() {
        for (j, gj) in module.gammas.iter().enumerate() {
            let expected = if i == j {
                identity(dim) * c(2.0 * module.signature(i), 0.0)
            } else {
                CMatrix::zeros(dim, dim)
            };
            worst = worst.max(max_abs(&(linalg::anticommutator(gi, gj) - expected)));
        }
    }
    worst
}

/// Max entrywise defect of `[L_i, L_j] = ε_ijk L_k`.
pub fn su2_commutator_defect(gens: &Su2Generators) -> f64 {
    let mut worst = 0.0_f64;
    for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
        let lhs = commutator(&gens.l[i], &gens.l[j]);
        worst = worst.max(max_abs(&(lhs - &gens.l[k])));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clifford_13_is_chiral_rep() {
        let m = clifford_generators(1, 3).unwrap();
        assert_eq!(m.gammas.len(), 4);
        assert_eq!(m.dim(), 4);
        assert_eq!(m.ko_dimension, 2);
        let g0 = &m.gammas[0];
        assert!(hermiticity_defect(g0) < 1e-15);
        assert!(max_abs(&(g0 * g0 - identity(4))) < 1e-15);
        // antidiagonal identity blocks
        for r in 0..4 {
            for col in 0..4 {
                let want = if (r + 2) % 4 == col { 1.0 } else { 0.0 };
                assert_eq!(g0[(r, col)], c(want, 0.0));
            }
        }
        for g in &m.gammas[1..] {
            assert!(linalg::antihermiticity_defect(g) < 1e-15);
            assert!(max_abs(&(g * g + identity(4))) < 1e-15);
        }
        assert!(clifford_relation_defect(&m) < 1e-12);
        let gamma = m.chirality.as_ref().unwrap();
        assert!(max_abs(&(gamma * gamma - identity(4))) < 1e-12);
        for g in &m.gammas {
            assert!(max_abs(&linalg::anticommutator(gamma, g)) < 1e-12);
        }
    }

    #[test]
    fn clifford_03_is_scaled_pauli() {
        let m = clifford_generators(0, 3).unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.ko_dimension, 3);
        let p = pauli();
        for (g, s) in m.gammas.iter().zip(p.iter()) {
            assert!(max_abs(&(g - s.map(|v| v * I))) < 1e-15);
            assert!(max_abs(&(g * g + identity(2))) < 1e-15);
        }
        assert!(m.chirality.is_none());
    }

    #[test]
    fn all_small_signatures_satisfy_relations() {
        for total in 1..=6usize {
            for p in 0..=total {
                let m = clifford_generators(p, total - p).unwrap();
                assert_eq!(m.dim(), 1 << (total / 2));
                assert!(clifford_relation_defect(&m) < 1e-12, "({p},{})", total - p);
                for (i, g) in m.gammas.iter().enumerate() {
                    if i < p {
                        assert!(hermiticity_defect(g) < 1e-12);
                    } else {
                        assert!(linalg::antihermiticity_defect(g) < 1e-12);
                    }
                }
                if let Some(gamma) = &m.chirality {
                    assert!(max_abs(&(gamma * gamma - identity(m.dim()))) < 1e-12);
                    assert!(hermiticity_defect(gamma) < 1e-12);
                    for g in &m.gammas {
                        assert!(max_abs(&linalg::anticommutator(gamma, g)) < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn unsupported_clifford_is_explicit() {
        assert!(matches!(clifford_generators(0, 0), Err(Error::NotImplemented(_))));
        assert!(matches!(clifford_generators(4, 3), Err(Error::NotImplemented(_))));
    }

    #[test]
    fn su2_small_cases() {
        let g1 = su2_generators(1).unwrap();
        for l in &g1.l {
            assert_eq!(l[(0, 0)], c(0.0, 0.0));
        }
        assert!(su2_generators(0).is_err());

        let g2 = su2_generators(2).unwrap();
        let casimir = g2.l.iter().fold(CMatrix::zeros(2, 2), |acc, l| acc + l * l);
        assert!(max_abs(&(casimir + identity(2) * c(0.75, 0.0))) < 1e-14);
        // L_i = σ_i / (2i)
        for (l, s) in g2.l.iter().zip(pauli().iter()) {
            assert!(max_abs(&(l - s.map(|v| v * c(0.0, -0.5)))) < 1e-14);
        }
    }

    #[test]
    fn su2_relations_and_casimir() {
        for n in 1..=9 {
            let g = su2_generators(n).unwrap();
            assert!(su2_commutator_defect(&g) < 1e-12, "n={n}");
            for l in &g.l {
                assert!(linalg::antihermiticity_defect(l) < 1e-14);
            }
            let casimir = g.l.iter().fold(CMatrix::zeros(n, n), |acc, l| acc + l * l);
            let expected = identity(n) * c(-g.radius_squared(), 0.0);
            assert!(max_abs(&(casimir - expected)) < 1e-12, "n={n}");
        }
        let g5 = su2_generators(5).unwrap();
        assert_eq!(g5.radius_squared(), 6.0);
    }

    #[test]
    fn n1_dirac_is_gamma0() {
        let t = build_deformed_dirac(1, DeformationParams::round()).unwrap();
        assert!(max_abs(&(&t.dirac - &t.clifford.gammas[0])) < 1e-15);
        let report = validate_triple(&t, 3, 1e-12).unwrap();
        assert_eq!(report.first_order_defect, 0.0);
        assert!(report.passed);
    }

    #[test]
    fn general_matches_deformed() {
        for n in [1, 2, 3, 5] {
            let params = DeformationParams::new(1.0, 1.0, 1.0, 1.0);
            let direct = build_deformed_dirac(n, params).unwrap();
            let gens = su2_generators(n).unwrap();
            let general =
                build_general_dirac(clifford_generators(1, 3).unwrap(), deformed_k_terms(&gens, &params), n).unwrap();
            assert!(max_abs(&(&direct.dirac - &general.dirac)) < 1e-14, "n={n}");
        }
    }

    #[test]
    fn identity_k_term_doubles() {
        let n = 3;
        let t = build_general_dirac(
            clifford_generators(1, 3).unwrap(),
            vec![KTerm {
                gamma_indices: vec![0],
                k: identity(n),
                eps_prime: EpsPrime::Plus,
            }],
            n,
        )
        .unwrap();
        let expected = kron(&t.clifford.gammas[0], &identity(n * n)) * c(2.0, 0.0);
        assert!(max_abs(&(&t.dirac - expected)) < 1e-15);
        assert!(validate_triple(&t, 5, 1e-10).unwrap().passed);
    }

    #[test]
    fn inconsistent_term_is_rejected() {
        let gens = su2_generators(3).unwrap();
        let err = build_general_dirac(
            clifford_generators(1, 3).unwrap(),
            vec![KTerm {
                gamma_indices: vec![0],
                k: gens.l[0].clone(),
                eps_prime: EpsPrime::Plus,
            }],
            3,
        )
        .unwrap_err();
        match err {
            Error::Validation(msg) => assert!(msg.contains("term 0")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn deformed_sphere_validates() {
        let t = build_deformed_dirac(4, DeformationParams::restricted(1.0, 1.5)).unwrap();
        let report = validate_triple(&t, 20, 1e-10).unwrap();
        assert!(report.hermiticity_defect < 1e-12);
        assert!(report.first_order_defect < 1e-10);
        assert!(report.symmetry_defect < 1e-10);
        assert!(report.passed);
    }

    #[test]
    fn perturbed_dirac_fails_hermiticity() {
        let mut t = build_deformed_dirac(2, DeformationParams::round()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dim = t.hilbert_dim();
        t.dirac += linalg::random_complex_matrix(dim, dim, &mut rng) * c(1e-3, 0.0);
        let report = validate_triple(&t, 2, 1e-10).unwrap();
        assert!(report.hermiticity_defect > 1e-6);
        assert!(!report.passed);
    }

    #[test]
    fn spec_roundtrip() {
        let t = build_deformed_dirac(3, DeformationParams::new(1.0, 1.1, 2.0, 1.5)).unwrap();
        let spec = t.to_spec().unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: TripleSpec = serde_json::from_str(&json).unwrap();
        let rebuilt = back.build().unwrap();
        assert_eq!(rebuilt.dirac, t.dirac);
    }

    #[test]
    fn restricted_form_detects_permutations() {
        assert_eq!(
            DeformationParams::new(1.0, 2.0, 1.0, 1.0).restricted_form(),
            Some((1.0, 2.0))
        );
        assert_eq!(
            DeformationParams::new(1.0, 1.0, 1.0, 5.0).restricted_form(),
            Some((1.0, 5.0))
        );
        assert_eq!(DeformationParams::round().restricted_form(), Some((1.0, 1.0)));
        assert_eq!(DeformationParams::new(1.0, 1.1, 1.1, 1.5).restricted_form(), None);
    }
}
