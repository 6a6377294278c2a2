//! Hermitian bases of `M_n(C)`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{c, frobenius, real_inner, symmetric_eigenvalues, CMatrix, I};
use crate::triple::Su2Generators;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Pbw,
    MatrixUnits,
}

impl BasisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisKind::Pbw => "pbw",
            BasisKind::MatrixUnits => "matrix_units",
        }
    }
}

pub const DEFAULT_GRAM_TOLERANCE: f64 = 1e-10;

/// Hermitian matrices, orthonormal in `Re tr(A†B)`.
#[derive(Clone, Debug)]
pub struct AlgebraBasis {
    pub n: usize,
    pub kind: BasisKind,
    pub elements: Vec<CMatrix>,
    pub gram_tolerance: f64,
}

impl AlgebraBasis {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// `Σ x_i e_i`.
    pub fn combine(&self, x: &[f64]) -> CMatrix {
        let mut a = CMatrix::zeros(self.n, self.n);
        for (xi, e) in x.iter().zip(&self.elements) {
            a += e * c(*xi, 0.0);
        }
        a
    }

    /// Orthonormal basis of the traceless part of the span.
    pub fn traceless(&self) -> AlgebraBasis {
        let n = self.n;
        let id = CMatrix::identity(n, n);
        let mut out = Vec::new();
        for e in &self.elements {
            let tr = e.trace() / c(n as f64, 0.0);
            let candidate = e - &id * tr;
            push_if_independent(&mut out, candidate, self.gram_tolerance);
        }
        AlgebraBasis {
            n,
            kind: self.kind,
            elements: out,
            gram_tolerance: self.gram_tolerance,
        }
    }
}

/// Orthogonalize `candidate` against `accepted` (two passes of modified
/// Gram–Schmidt) and keep it if the normalized residual is above `tol`.
fn push_if_independent(accepted: &mut Vec<CMatrix>, candidate: CMatrix, tol: f64) -> bool {
    let norm = frobenius(&candidate);
    if norm == 0.0 {
        return false;
    }
    let mut r = candidate / c(norm, 0.0);
    for _ in 0..2 {
        for q in accepted.iter() {
            let p = real_inner(q, &r);
            r -= q * c(p, 0.0);
        }
    }
    let rn = frobenius(&r);
    if rn * rn <= tol {
        return false;
    }
    accepted.push(r / c(rn, 0.0));
    true
}

/// `(deg+1)²` capped at `n²`: the size of the span of all polynomials of
/// degree at most `deg` in the generators.
pub fn expected_pbw_rank(n: usize, max_degree: usize) -> usize {
    let top = max_degree.min(n.saturating_sub(1));
    ((top + 1) * (top + 1)).min(n * n)
}

/// Ordered monomials `L₁^a L₂^b L₃^c` with `a+b+c ≤ max_degree`, split into
/// hermitian parts `(M+M†)/2` and `i(M−M†)/2` and kept when independent of
/// everything accepted before.
pub fn pbw_basis(gens: &Su2Generators, max_degree: usize, tol: f64) -> Result<AlgebraBasis> {
    if !(tol > 0.0) {
        return Err(invalid(format!("gram tolerance must be positive, got {tol}")));
    }
    let n = gens.n;
    let powers = |g: &CMatrix| {
        let mut p = vec![CMatrix::identity(n, n)];
        for d in 1..=max_degree {
            let next = &p[d - 1] * g;
            p.push(next);
        }
        p
    };
    let p1 = powers(&gens.l[0]);
    let p2 = powers(&gens.l[1]);
    let p3 = powers(&gens.l[2]);
    let mut elements = Vec::new();
    let full = n * n;
    'degrees: for degree in 0..=max_degree {
        for a in (0..=degree).rev() {
            for b in (0..=degree - a).rev() {
                let cc = degree - a - b;
                let m = &p1[a] * &p2[b] * &p3[cc];
                let adj = m.adjoint();
                let sym = (&m + &adj) * c(0.5, 0.0);
                let anti = (&m - &adj) * (I * c(0.5, 0.0));
                push_if_independent(&mut elements, sym, tol);
                push_if_independent(&mut elements, anti, tol);
                if elements.len() == full {
                    break 'degrees;
                }
            }
        }
    }
    let expected = expected_pbw_rank(n, max_degree);
    if elements.len() < expected {
        warn!(
            "PBW basis for n={n}, degree {max_degree} reached rank {} of {expected}; tolerance {tol} may be too large",
            elements.len()
        );
    }
    Ok(AlgebraBasis {
        n,
        kind: BasisKind::Pbw,
        elements,
        gram_tolerance: tol,
    })
}

/// PBW basis with the default degree cap `n − 1`.
pub fn default_pbw_basis(gens: &Su2Generators) -> Result<AlgebraBasis> {
    pbw_basis(gens, gens.n.saturating_sub(1), DEFAULT_GRAM_TOLERANCE)
}

/// `E_jj`, `(E_jk + E_kj)/√2` and `i(E_jk − E_kj)/√2`.
pub fn matrix_unit_basis(n: usize) -> Result<AlgebraBasis> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut elements = Vec::with_capacity(n * n);
    for j in 0..n {
        let mut e = CMatrix::zeros(n, n);
        e[(j, j)] = c(1.0, 0.0);
        elements.push(e);
    }
    for j in 0..n {
        for k in j + 1..n {
            let mut sym = CMatrix::zeros(n, n);
            sym[(j, k)] = c(s, 0.0);
            sym[(k, j)] = c(s, 0.0);
            elements.push(sym);
            let mut anti = CMatrix::zeros(n, n);
            anti[(j, k)] = c(0.0, s);
            anti[(k, j)] = c(0.0, -s);
            elements.push(anti);
        }
    }
    Ok(AlgebraBasis {
        n,
        kind: BasisKind::MatrixUnits,
        elements,
        gram_tolerance: DEFAULT_GRAM_TOLERANCE,
    })
}

pub fn build_basis(kind: BasisKind, gens: &Su2Generators) -> Result<AlgebraBasis> {
    match kind {
        BasisKind::Pbw => default_pbw_basis(gens),
        BasisKind::MatrixUnits => matrix_unit_basis(gens.n),
    }
}

pub fn gram_matrix(elements: &[CMatrix]) -> nalgebra::DMatrix<f64> {
    let m = elements.len();
    nalgebra::DMatrix::from_fn(m, m, |i, j| real_inner(&elements[i], &elements[j]))
}

pub fn gram_min_eigenvalue(elements: &[CMatrix]) -> f64 {
    symmetric_eigenvalues(&gram_matrix(elements))
        .first()
        .copied()
        .unwrap_or(f64::INFINITY)
}
