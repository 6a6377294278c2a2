//! Independent distance oracles that share nothing with the solver except the
//! assembled operator. Norms come from SVDs of the full `[D, ρ(a)]`.

#![allow(dead_code)]

use fuzzysphere::distance::full_commutator;
use fuzzysphere::linalg::{c, spectral_norm, CMatrix, CVector};
use fuzzysphere::triple::FiniteSpectralTriple;
use nalgebra::{DMatrix, DVector};

/// Normalized generalized Gell-Mann matrices spanning the traceless hermitian `n × n` matrices.
pub fn gell_mann(n: usize) -> Vec<CMatrix> {
    let mut out = Vec::new();
    for j in 0..n {
        for k in j + 1..n {
            let mut s = CMatrix::zeros(n, n);
            s[(j, k)] = c(1.0, 0.0);
            s[(k, j)] = c(1.0, 0.0);
            out.push(s / c(2f64.sqrt(), 0.0));
            let mut a = CMatrix::zeros(n, n);
            a[(j, k)] = c(0.0, -1.0);
            a[(k, j)] = c(0.0, 1.0);
            out.push(a / c(2f64.sqrt(), 0.0));
        }
    }
    for l in 1..n {
        let mut d = CMatrix::zeros(n, n);
        for m in 0..l {
            d[(m, m)] = c(1.0, 0.0);
        }
        d[(l, l)] = c(-(l as f64), 0.0);
        let norm = ((l * (l + 1)) as f64).sqrt();
        out.push(d / c(norm, 0.0));
    }
    out
}

fn expect(psi: &CVector, a: &CMatrix) -> f64 {
    psi.dotc(&(a * psi)).re
}

pub struct Oracle<'a> {
    triple: &'a FiniteSpectralTriple,
    basis: Vec<CMatrix>,
    f: Vec<f64>,
}

impl<'a> Oracle<'a> {
    pub fn new(triple: &'a FiniteSpectralTriple, psi1: &CVector, psi2: &CVector) -> Self {
        let basis = gell_mann(psi1.len());
        let f = basis.iter().map(|b| expect(psi1, b) - expect(psi2, b)).collect();
        Oracle { triple, basis, f }
    }

    fn element(&self, x: &[f64]) -> CMatrix {
        let n = self.basis[0].nrows();
        let mut a = CMatrix::zeros(n, n);
        for (xi, b) in x.iter().zip(&self.basis) {
            a += b * c(*xi, 0.0);
        }
        a
    }

    /// `|s1(a) − s2(a)| / ‖[D, ρ(a)]‖` for `a = Σ x_i b_i`.
    pub fn ratio(&self, x: &[f64]) -> f64 {
        let num: f64 = x.iter().zip(&self.f).map(|(a, b)| a * b).sum();
        let den = spectral_norm(&full_commutator(self.triple, &self.element(x)));
        if den <= 1e-300 {
            return 0.0;
        }
        num.abs() / den
    }

    /// Central-cut ellipsoid method on `max f·x` subject to `‖[D, ρ(a(x))]‖ ≤ 1`.
    /// Every center `x` yields the feasible candidate `x / ‖[D, ρ(a(x))]‖`.
    pub fn ellipsoid_method(&self, radius: f64, iterations: usize) -> f64 {
        let m = self.basis.len();
        let parts: Vec<CMatrix> = self.basis.iter().map(|b| full_commutator(self.triple, b)).collect();
        let mut x = vec![0.0; m];
        let mut shape = DMatrix::<f64>::identity(m, m) * (radius * radius);
        let mut best = 0.0f64;
        let mf = m as f64;
        for _ in 0..iterations {
            let mut op = CMatrix::zeros(parts[0].nrows(), parts[0].ncols());
            for (xi, p) in x.iter().zip(&parts) {
                op += p * c(*xi, 0.0);
            }
            let svd = op.svd(true, true);
            let k = svd.singular_values.imax();
            let norm = svd.singular_values[k];
            let value: f64 = x.iter().zip(&self.f).map(|(a, b)| a * b).sum();
            if norm > 1e-300 {
                best = best.max(value / norm);
            }
            let cut: DVector<f64> = if norm > 1.0 {
                let u = svd.u.as_ref().unwrap().column(k).into_owned();
                let v = svd.v_t.as_ref().unwrap().row(k).adjoint();
                DVector::from_iterator(m, parts.iter().map(|p| u.dotc(&(p * &v)).re))
            } else {
                -DVector::from_column_slice(&self.f)
            };
            let pg = &shape * &cut;
            let gpg = cut.dot(&pg);
            if !(gpg > 0.0) {
                break;
            }
            let step = &pg / gpg.sqrt();
            for (xi, si) in x.iter_mut().zip(step.iter()) {
                *xi -= si / (mf + 1.0);
            }
            shape = (&shape - &step * step.transpose() * (2.0 / (mf + 1.0))) * (mf * mf / (mf * mf - 1.0));
        }
        best
    }
}

/// For `n = 2` every traceless hermitian element is `r·(u·σ)`, so the
/// supremum is a maximum over directions `u ∈ S²`: grid, then zoom.
pub fn sphere_search(oracle: &Oracle) -> f64 {
    let dir = |theta: f64, phi: f64| {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        vec![st * cp, st * sp, ct]
    };
    let pi = std::f64::consts::PI;
    let (mut best, mut bt, mut bp) = (0.0f64, 0.0, 0.0);
    for a in 0..=90 {
        for b in 0..180 {
            let (t, p) = (pi * a as f64 / 90.0, 2.0 * pi * b as f64 / 180.0);
            let v = oracle.ratio(&dir(t, p));
            if v > best {
                (best, bt, bp) = (v, t, p);
            }
        }
    }
    let mut span = 2.0 * pi / 90.0;
    for _ in 0..10 {
        let (ct, cp) = (bt, bp);
        for a in -10..=10 {
            for b in -10..=10 {
                let t = ct + span * a as f64 / 10.0;
                let p = cp + span * b as f64 / 10.0;
                let v = oracle.ratio(&dir(t, p));
                if v > best {
                    (best, bt, bp) = (v, t, p);
                }
            }
        }
        span /= 5.0;
    }
    best
}
