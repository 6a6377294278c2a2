//! Connes distance between pure states,
//! `d(s₁, s₂) = sup { s₁(a) − s₂(a) : a = a†, ‖[D, ρ(a)]‖ ≤ 1 }`.
//!
//! For `D = Σ_t ω_t ⊗ (K_t m + ε′ m K_t†)` and `ρ(a) = 1 ⊗ (m ↦ a m)` the
//! commutator is `Σ_t ω_t ⊗ (m ↦ [K_t, a] m)`, unitarily equivalent to
//! `(Σ_t ω_t ⊗ [K_t, a]) ⊗ 1_n`. Norms are therefore evaluated on the
//! `kn × kn` operator `R(a) = Σ_t ω_t ⊗ [K_t, a]`, and `i R(a)` is hermitian
//! for hermitian `a`.
//!
//! Over a traceless orthonormal basis `b_i` the problem is the dual norm
//! `max f·x` subject to `‖Σ x_i H_i‖ ≤ 1` with `H_i = i R(b_i)` and
//! `f_i = s₁(b_i) − s₂(b_i)`. It is solved in two phases: normalized
//! subgradient ascent from several starts, then L-BFGS on a log-sum-exp
//! smoothing of the norm with a decreasing smoothing width. Every reported
//! value comes from a witness rescaled by its exact norm, so it is a
//! certified lower bound.

use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algebra::{AlgebraBasis, BasisKind};
use crate::error::{invalid, Error, Result};
use crate::linalg::{c, hermitian_eigen, hermitian_eigenvalues, hermiticity_defect, kron, max_abs, CMatrix, I};
use crate::optim::{lbfgs, LbfgsOptions};
use crate::states::LocalizedState;
use crate::triple::FiniteSpectralTriple;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceOptions {
    pub restarts: usize,
    /// Iteration cap of each subgradient run.
    pub max_iter: usize,
    pub stall_window: usize,
    /// Relative improvement over `stall_window` iterations that counts as stalled.
    pub stall_tol: f64,
    /// Relative gap below which top singular values count as degenerate.
    pub degeneracy_tol: f64,
    /// Run the smoothed refinement after the subgradient phase.
    pub refine: bool,
    /// Smoothing widths relative to the starting norm, decreased tenfold per stage.
    pub mu_start: f64,
    pub mu_end: f64,
    pub refine_max_iter: usize,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions {
            restarts: 4,
            max_iter: 500,
            stall_window: 50,
            stall_tol: 1e-8,
            degeneracy_tol: 1e-9,
            refine: true,
            mu_start: 1e-1,
            mu_end: 1e-7,
            refine_max_iter: 3000,
        }
    }
}

impl DistanceOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.stall_tol, self.degeneracy_tol, self.mu_start, self.mu_end];
        if positive.iter().any(|v| !(*v > 0.0)) || self.restarts == 0 || self.max_iter == 0 {
            return Err(invalid("distance solver tolerances and counts must be positive"));
        }
        if self.mu_end > self.mu_start {
            return Err(invalid("mu_end must not exceed mu_start"));
        }
        Ok(())
    }
}

/// `R(a) = Σ_t ω_t ⊗ [K_t, a]`, or the full commutator `[D, ρ(a)]` when the
/// triple carries no term decomposition.
pub fn reduced_commutator(t: &FiniteSpectralTriple, a: &CMatrix) -> Result<CMatrix> {
    if t.k_terms.is_empty() {
        return Ok(full_commutator(t, a));
    }
    let kdim = t.clifford.dim();
    let mut out = CMatrix::zeros(kdim * t.n, kdim * t.n);
    for term in &t.k_terms {
        let comm = &term.k * a - a * &term.k;
        if max_abs(&comm) == 0.0 {
            continue;
        }
        out += kron(&t.clifford.product(&term.gamma_indices)?, &comm);
    }
    Ok(out)
}

/// `[D, ρ(a)]` on the full Hilbert space.
pub fn full_commutator(t: &FiniteSpectralTriple, a: &CMatrix) -> CMatrix {
    let rho = t.left_action(a);
    &t.dirac * &rho - &rho * &t.dirac
}

/// `‖[D, ρ(a)]‖` for hermitian `a`.
pub fn lipschitz_seminorm(t: &FiniteSpectralTriple, a: &CMatrix) -> Result<f64> {
    if a.nrows() != t.n || a.ncols() != t.n {
        return Err(invalid(format!(
            "element is {}x{}, algebra is M_{}",
            a.nrows(),
            a.ncols(),
            t.n
        )));
    }
    if hermiticity_defect(a) > 1e-10 * max_abs(a).max(1.0) {
        return Err(invalid("Lipschitz seminorm is evaluated on hermitian elements"));
    }
    let h = reduced_commutator(t, a)? * I;
    let vals = hermitian_eigenvalues(&h)?;
    Ok(vals.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// `H_i = i R(b_i)` for a traceless orthonormal basis, shared by all pairs.
///
/// The operators are stored split into blocks invariant under every `ω_t`
/// commutant, so norms need only the eigenvalues of the smaller blocks.
pub struct CommutatorModel {
    pub basis: AlgebraBasis,
    /// `h[b][i]` is block `b` of `H_i`.
    pub h: Vec<Vec<CMatrix>>,
    null_space: Vec<Vec<f64>>,
}

/// Orthonormal bases of the joint invariant subspaces of `omegas`, found
/// from the eigenspaces of a generic hermitian element of their commutant.
fn invariant_blocks(omegas: &[CMatrix], k: usize) -> Result<Vec<CMatrix>> {
    if omegas.is_empty() || k == 1 {
        return Ok(vec![CMatrix::identity(k, k)]);
    }
    let id = CMatrix::identity(k, k);
    let mut stacked = CMatrix::zeros(omegas.len() * k * k, k * k);
    for (t, w) in omegas.iter().enumerate() {
        // vec(ωX − Xω) = (I ⊗ ω − ωᵀ ⊗ I) vec(X)
        let map = kron(&id, w) - kron(&w.transpose(), &id);
        stacked.view_mut((t * k * k, 0), (k * k, k * k)).copy_from(&map);
    }
    let gram = stacked.adjoint() * &stacked;
    let (vals, vecs) = hermitian_eigen(&gram)?;
    let top = vals.last().copied().unwrap_or(0.0).max(1.0);
    let mut generic = CMatrix::zeros(k, k);
    for (idx, &v) in vals.iter().enumerate() {
        if v > 1e-12 * top {
            break;
        }
        let x = CMatrix::from_column_slice(k, k, vecs.column(idx).as_slice());
        let weight = c(1.0 / (idx as f64 + 1.618), 0.0);
        generic += (&x + x.adjoint()) * weight;
    }
    let (pvals, pvecs) = hermitian_eigen(&generic)?;
    let mut blocks = Vec::new();
    let mut start = 0;
    for end in 1..=k {
        if end == k || (pvals[end] - pvals[end - 1]).abs() > 1e-8 * pvals[k - 1].abs().max(1.0) {
            blocks.push(pvecs.columns(start, end - start).into_owned());
            start = end;
        }
    }
    Ok(blocks)
}

impl CommutatorModel {
    pub fn new(t: &FiniteSpectralTriple, basis: &AlgebraBasis) -> Result<Self> {
        if basis.n != t.n {
            return Err(invalid(format!("basis is for M_{}, triple for M_{}", basis.n, t.n)));
        }
        let traceless = basis.traceless();
        let full: Vec<CMatrix> = traceless
            .elements
            .iter()
            .map(|b| reduced_commutator(t, b).map(|r| r * I))
            .collect::<Result<Vec<_>>>()?;
        let blocks = if t.k_terms.is_empty() {
            let dim = full.first().map(|m| m.nrows()).unwrap_or(0);
            vec![CMatrix::identity(dim, dim)]
        } else {
            let omegas = t
                .k_terms
                .iter()
                .filter(|term| !is_scalar(&term.k))
                .map(|term| t.clifford.product(&term.gamma_indices))
                .collect::<Result<Vec<_>>>()?;
            let id_n = CMatrix::identity(t.n, t.n);
            invariant_blocks(&omegas, t.clifford.dim())?
                .iter()
                .map(|u| kron(u, &id_n))
                .collect()
        };
        let h: Vec<Vec<CMatrix>> = blocks
            .iter()
            .map(|u| full.iter().map(|hi| u.adjoint() * hi * u).collect())
            .collect();
        let m = full.len();
        let mut null_space = Vec::new();
        if m > 0 {
            let gram = DMatrix::from_fn(m, m, |i, j| trace_product(&full[i], &full[j]));
            let eig = gram.symmetric_eigen();
            let top = eig.eigenvalues.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
            for (k, &v) in eig.eigenvalues.iter().enumerate() {
                if v <= 1e-20 * top.max(f64::MIN_POSITIVE) {
                    null_space.push(eig.eigenvectors.column(k).iter().copied().collect());
                }
            }
        }
        Ok(CommutatorModel {
            basis: traceless,
            h,
            null_space,
        })
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Dimensions of the invariant blocks.
    pub fn block_dims(&self) -> Vec<usize> {
        self.h
            .iter()
            .map(|b| b.first().map(|m| m.nrows()).unwrap_or(0))
            .collect()
    }

    fn block_operator(&self, block: usize, x: &[f64]) -> CMatrix {
        let hs = &self.h[block];
        let dim = hs.first().map(|m| m.nrows()).unwrap_or(0);
        let mut out = CMatrix::zeros(dim, dim);
        for (xi, hi) in x.iter().zip(hs) {
            if *xi != 0.0 {
                out += hi * c(*xi, 0.0);
            }
        }
        out
    }

    fn eigen(&self, x: &[f64]) -> Result<Vec<(Vec<f64>, CMatrix)>> {
        (0..self.h.len())
            .map(|b| hermitian_eigen(&self.block_operator(b, x)))
            .collect()
    }

    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        let mut top = 0.0_f64;
        for b in 0..self.h.len() {
            for v in hermitian_eigenvalues(&self.block_operator(b, x))? {
                top = top.max(v.abs());
            }
        }
        Ok(top)
    }

    /// `Σ_b Re tr(H_i^b W_b)` for every basis direction.
    fn traces_against(&self, w: &[CMatrix]) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.h.iter().zip(w).map(|(hb, wb)| trace_product(&hb[i], wb)).sum())
            .collect()
    }

    /// Coefficients of `f` along directions the commutator cannot see.
    fn invisible_component(&self, f: &[f64]) -> f64 {
        self.null_space.iter().map(|v| dot(v, f).powi(2)).sum::<f64>().sqrt()
    }

    /// `f_i = s₁(b_i) − s₂(b_i)`.
    pub fn objective(&self, s1: &LocalizedState, s2: &LocalizedState) -> Vec<f64> {
        self.basis
            .elements
            .iter()
            .map(|b| s1.evaluate(b) - s2.evaluate(b))
            .collect()
    }
}

fn is_scalar(k: &CMatrix) -> bool {
    let d = k[(0, 0)];
    let scale = max_abs(k).max(1e-300);
    k.iter().enumerate().all(|(idx, v)| {
        let (r, col) = (idx % k.nrows(), idx / k.nrows());
        let target = if r == col { d } else { c(0.0, 0.0) };
        (v - target).norm() <= 1e-14 * scale
    })
}

/// `Re tr(A B)`.
fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for r in 0..n {
        for s in 0..n {
            let (x, y) = (a[(r, s)], b[(s, r)]);
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scale(x: &[f64], s: f64) -> Vec<f64> {
    x.iter().map(|v| v * s).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub value: f64,
    /// Coefficients of the optimal element over the traceless basis.
    pub witness: Vec<f64>,
    pub lipschitz_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Ascent {
    x: Vec<f64>,
    value: f64,
    iterations: usize,
    stalled: bool,
}

/// Subgradient of the norm at `x`, averaged over the top eigenspace.
fn norm_subgradient(model: &CommutatorModel, x: &[f64], tol: f64) -> Result<(f64, Vec<f64>)> {
    let eig = model.eigen(x)?;
    let top = eig
        .iter()
        .flat_map(|(vals, _)| vals.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut count = 0.0;
    let mut ws: Vec<CMatrix> = eig
        .iter()
        .map(|(vals, vecs)| {
            let mut w = CMatrix::zeros(vecs.nrows(), vecs.nrows());
            for (k, &v) in vals.iter().enumerate() {
                if v.abs() >= top * (1.0 - tol) {
                    let col = vecs.column(k);
                    w += (col * col.adjoint()) * c(v.signum(), 0.0);
                    count += 1.0;
                }
            }
            w
        })
        .collect();
    for w in ws.iter_mut() {
        *w /= c(count, 0.0);
    }
    Ok((top, model.traces_against(&ws)))
}

fn subgradient_ascent(
    model: &CommutatorModel,
    f: &[f64],
    start: Vec<f64>,
    opts: &DistanceOptions,
) -> Result<Option<Ascent>> {
    let n0 = model.norm(&start)?;
    if !(n0 > 0.0) {
        return Ok(None);
    }
    let mut x = scale(&start, 1.0 / n0);
    let mut value = dot(f, &x);
    if value < 0.0 {
        x = scale(&x, -1.0);
        value = -value;
    }
    let mut history = vec![value];
    let mut step = 0.1;
    let mut stalled = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let (_, u) = norm_subgradient(model, &x, opts.degeneracy_tol)?;
        let g: Vec<f64> = f.iter().zip(&u).map(|(fi, ui)| fi - value * ui).collect();
        let gnorm = dot(&g, &g).sqrt();
        let xnorm = dot(&x, &x).sqrt();
        if gnorm <= 1e-15 * dot(f, f).sqrt() {
            stalled = true;
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = x
                .iter()
                .zip(&g)
                .map(|(xi, gi)| xi + step * xnorm * gi / gnorm)
                .collect();
            let nt = model.norm(&trial)?;
            if nt > 0.0 {
                let vt = dot(f, &trial) / nt;
                if vt > value {
                    x = scale(&trial, 1.0 / nt);
                    value = vt;
                    step = (step * 1.5).min(1.0);
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        history.push(value);
        if !improved {
            stalled = true;
            break;
        }
        if history.len() > opts.stall_window {
            let old = history[history.len() - 1 - opts.stall_window];
            if value - old < opts.stall_tol * value {
                stalled = true;
                break;
            }
        }
    }
    Ok(Some(Ascent {
        x,
        value,
        iterations,
        stalled,
    }))
}

/// Smoothed norm `M + μ log Σ_k (e^{(λ_k−M)/μ} + e^{(−λ_k−M)/μ})` and its gradient.
fn smoothed_norm(model: &CommutatorModel, x: &[f64], mu: f64) -> (f64, Vec<f64>) {
    let Ok(eig) = model.eigen(x) else {
        return (f64::NAN, vec![0.0; x.len()]);
    };
    let top = eig
        .iter()
        .flat_map(|(vals, _)| vals.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut z = 0.0;
    let weights: Vec<Vec<f64>> = eig
        .iter()
        .map(|(vals, _)| {
            vals.iter()
                .map(|&v| {
                    let p = ((v - top) / mu).exp();
                    let q = ((-v - top) / mu).exp();
                    z += p + q;
                    p - q
                })
                .collect()
        })
        .collect();
    let ws: Vec<CMatrix> = eig
        .iter()
        .zip(&weights)
        .map(|((_, vecs), wts)| {
            let mut w = CMatrix::zeros(vecs.nrows(), vecs.nrows());
            for (k, wk) in wts.iter().enumerate() {
                if wk.abs() > 1e-18 * z {
                    let col = vecs.column(k);
                    w += (col * col.adjoint()) * c(wk / z, 0.0);
                }
            }
            w
        })
        .collect();
    (top + mu * z.ln(), model.traces_against(&ws))
}

struct Refinement {
    x: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Minimize the smoothed norm on the hyperplane `f·x = f·x₀`.
fn smoothed_refinement(model: &CommutatorModel, f: &[f64], x0: Vec<f64>, opts: &DistanceOptions) -> Refinement {
    let ff = dot(f, f);
    let project = |v: &[f64]| -> Vec<f64> {
        let p = dot(v, f) / ff;
        v.iter().zip(f).map(|(vi, fi)| vi - p * fi).collect()
    };
    let base_norm = model.norm(&x0).unwrap_or(1.0);
    let mut x = x0;
    let mut iterations = 0;
    let mut converged;
    let mut mu = opts.mu_start;
    loop {
        let width = mu * base_norm;
        let anchor = x.clone();
        let objective = |z: &[f64]| {
            let pz = project(z);
            let point: Vec<f64> = anchor.iter().zip(&pz).map(|(a, b)| a + b).collect();
            let (v, g) = smoothed_norm(model, &point, width);
            (v, project(&g))
        };
        let lopts = LbfgsOptions {
            max_iter: opts.refine_max_iter,
            gtol: 1e-12,
            ftol: 1e-15,
            ..LbfgsOptions::default()
        };
        let m = lbfgs(objective, vec![0.0; x.len()], &lopts);
        iterations += m.iterations;
        let pz = project(&m.x);
        let candidate: Vec<f64> = x.iter().zip(&pz).map(|(a, b)| a + b).collect();
        if candidate.iter().all(|v| v.is_finite()) {
            x = candidate;
        }
        converged = m.converged;
        if mu <= opts.mu_end * (1.0 + 1e-12) {
            break;
        }
        mu = (mu / 10.0).max(opts.mu_end);
    }
    Refinement {
        x,
        iterations,
        converged,
    }
}

/// Connes distance between two states over the model's basis.
pub fn connes_distance(
    model: &CommutatorModel,
    s1: &LocalizedState,
    s2: &LocalizedState,
    opts: &DistanceOptions,
    seed: u64,
) -> Result<DistanceResult> {
    opts.validate()?;
    let m = model.len();
    let f = model.objective(s1, s2);
    let fnorm = dot(&f, &f).sqrt();
    if fnorm <= 1e-14 || m == 0 {
        return Ok(DistanceResult {
            value: 0.0,
            witness: vec![0.0; m],
            lipschitz_norm: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    if model.invisible_component(&f) > 1e-10 * fnorm {
        return Err(Error::Degenerate(
            "the states differ on an element commuting with D; the distance is infinite".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Ascent> = None;
    let mut iterations = 0;
    let mut stalled = false;
    for r in 0..opts.restarts {
        let start: Vec<f64> = if r == 0 {
            f.clone()
        } else {
            (0..m).map(|_| StandardNormal.sample(&mut rng)).collect()
        };
        if let Some(run) = subgradient_ascent(model, &f, start, opts)? {
            iterations += run.iterations;
            stalled |= run.stalled;
            if best.as_ref().is_none_or(|b| run.value > b.value) {
                best = Some(run);
            }
        }
    }
    let Some(best) = best else {
        return Err(Error::Numerical("every start had a vanishing commutator".into()));
    };
    let mut x = best.x;
    let mut converged = stalled;
    if opts.refine {
        let refined = smoothed_refinement(model, &f, x.clone(), opts);
        iterations += refined.iterations;
        let nr = model.norm(&refined.x)?;
        if nr > 0.0 && dot(&f, &refined.x) / nr >= best.value {
            x = refined.x;
            converged = refined.converged || converged;
        }
    }
    let norm = model.norm(&x)?;
    let witness = scale(&x, 1.0 / norm);
    let value = dot(&f, &witness);
    Ok(DistanceResult {
        value,
        lipschitz_norm: model.norm(&witness)?,
        witness,
        iterations,
        converged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub i: usize,
    pub j: usize,
    pub value: f64,
    pub lipschitz_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub witness: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub size: usize,
    pub values: Vec<Vec<f64>>,
    pub converged: Vec<Vec<bool>>,
    pub basis: BasisKind,
    pub options: DistanceOptions,
    pub seed: u64,
    pub pairs: Vec<PairRecord>,
}

impl DistanceMatrix {
    pub fn from_values(values: Vec<Vec<f64>>) -> Self {
        let size = values.len();
        DistanceMatrix {
            size,
            converged: vec![vec![true; size]; size],
            values,
            basis: BasisKind::MatrixUnits,
            options: DistanceOptions::default(),
            seed: 0,
            pairs: Vec::new(),
        }
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().flatten().all(|&v| v)
    }

    /// Off-diagonal entries, each pair once.
    pub fn upper_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.size * self.size.saturating_sub(1) / 2);
        for i in 0..self.size {
            for j in i + 1..self.size {
                out.push(self.values[i][j]);
            }
        }
        out
    }

    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.size, self.size, |i, j| self.values[i][j])
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(w);
        let header: Vec<String> = (0..self.size).map(|i| i.to_string()).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in &self.values {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let size = lines
            .next()
            .ok_or_else(|| invalid("empty distance CSV"))?
            .split(',')
            .count();
        let mut values = Vec::with_capacity(size);
        for (row, line) in lines.enumerate() {
            let cells = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| invalid(format!("distance CSV row {row}: {e}")))?;
            if cells.len() != size {
                return Err(invalid(format!(
                    "distance CSV row {row} has {} cells, expected {size}",
                    cells.len()
                )));
            }
            values.push(cells);
        }
        if values.len() != size {
            return Err(invalid(format!(
                "distance CSV has {} rows, expected {size}",
                values.len()
            )));
        }
        Ok(DistanceMatrix::from_values(values))
    }
}

/// Largest `d_ij − d_ik − d_kj` over all triples; non-positive for a metric.
pub fn max_triangle_violation(values: &[Vec<f64>]) -> f64 {
    let n = values.len();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                worst = worst.max(values[i][j] - values[i][k] - values[k][j]);
            }
        }
    }
    worst
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content hash identifying a triple for the pair cache.
pub fn triple_hash(t: &FiniteSpectralTriple) -> String {
    if let Some(spec) = t.to_spec() {
        if let Ok(json) = serde_json::to_vec(&spec) {
            return sha256_hex(&json);
        }
    }
    let mut h = Sha256::new();
    for v in t.dirac.iter() {
        h.update(v.re.to_le_bytes());
        h.update(v.im.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn pair_key(s1: &LocalizedState, s2: &LocalizedState, opts: &DistanceOptions, seed: u64) -> String {
    let mut h = Sha256::new();
    for s in [s1, s2] {
        for z in s.vector.iter() {
            h.update(z.re.to_le_bytes());
            h.update(z.im.to_le_bytes());
        }
    }
    h.update(serde_json::to_vec(opts).unwrap_or_default());
    h.update(seed.to_le_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Per-pair cache files under `<root>/<triple hash>/<basis kind>/`.
pub struct PairCache {
    dir: PathBuf,
}

impl PairCache {
    pub fn new(root: &Path, t: &FiniteSpectralTriple, basis: BasisKind) -> Result<Self> {
        let dir = root.join(triple_hash(t)).join(basis.as_str());
        fs::create_dir_all(&dir)?;
        Ok(PairCache { dir })
    }

    fn path(&self, i: usize, j: usize, key: &str) -> PathBuf {
        self.dir.join(format!("{i}_{j}_{key}.json"))
    }

    fn load(&self, i: usize, j: usize, key: &str) -> Option<PairRecord> {
        let text = fs::read(self.path(i, j, key)).ok()?;
        serde_json::from_slice(&text).ok()
    }

    fn store(&self, record: &PairRecord, key: &str) -> Result<()> {
        let path = self.path(record.i, record.j, key);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec(record)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

/// Seed for pair `(i, j)` derived from the run seed.
pub fn pair_seed(seed: u64, i: usize, j: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((i as u64) << 32) | j as u64);
    rand::Rng::random(&mut rng)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WitnessCheck {
    /// Largest `‖[D, ρ(a)]‖` over all witnesses, recomputed on the unblocked operator.
    pub max_norm: f64,
    /// Largest `|s_i(a) − s_j(a) − d_ij|`.
    pub max_value_error: f64,
}

/// Re-evaluates every stored witness independently of the solver.
pub fn check_witnesses(
    t: &FiniteSpectralTriple,
    basis: &AlgebraBasis,
    states: &[LocalizedState],
    dm: &DistanceMatrix,
) -> Result<WitnessCheck> {
    let traceless = basis.traceless();
    dm.pairs
        .par_iter()
        .map(|p| -> Result<WitnessCheck> {
            if p.witness.len() != traceless.len() {
                return Err(Error::StructuralMismatch(format!(
                    "pair ({}, {}) has {} witness coefficients for a basis of {}",
                    p.i,
                    p.j,
                    p.witness.len(),
                    traceless.len()
                )));
            }
            let a = traceless.combine(&p.witness);
            let value = states[p.i].evaluate(&a) - states[p.j].evaluate(&a);
            Ok(WitnessCheck {
                max_norm: lipschitz_seminorm(t, &a)?,
                max_value_error: (value - p.value).abs(),
            })
        })
        .try_reduce(WitnessCheck::default, |a, b| {
            Ok(WitnessCheck {
                max_norm: a.max_norm.max(b.max_norm),
                max_value_error: a.max_value_error.max(b.max_value_error),
            })
        })
}

/// All pairwise distances, solved in parallel and optionally cached.
pub fn distance_matrix(
    t: &FiniteSpectralTriple,
    basis: &AlgebraBasis,
    states: &[LocalizedState],
    opts: &DistanceOptions,
    seed: u64,
    cache_root: Option<&Path>,
) -> Result<DistanceMatrix> {
    if states.len() < 2 {
        return Err(invalid("a distance matrix needs at least two states"));
    }
    opts.validate()?;
    let model = CommutatorModel::new(t, basis)?;
    let cache = cache_root.map(|root| PairCache::new(root, t, basis.kind)).transpose()?;
    let n = states.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let total = pairs.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let records = pairs
        .par_iter()
        .map(|&(i, j)| -> Result<PairRecord> {
            let key = pair_key(&states[i], &states[j], opts, seed);
            if let Some(hit) = cache.as_ref().and_then(|c| c.load(i, j, &key)) {
                debug!("pair ({i},{j}) from cache");
                return Ok(hit);
            }
            let r = connes_distance(&model, &states[i], &states[j], opts, pair_seed(seed, i, j))?;
            if !r.converged {
                warn!("pair ({i},{j}) did not converge; best lower bound {}", r.value);
            }
            let record = PairRecord {
                i,
                j,
                value: r.value,
                lipschitz_norm: r.lipschitz_norm,
                iterations: r.iterations,
                converged: r.converged,
                witness: r.witness,
            };
            if let Some(c) = &cache {
                c.store(&record, &key)?;
            }
            let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            if k.is_multiple_of(50) || k == total {
                info!("distances: {k}/{total} pairs");
            }
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = vec![vec![0.0; n]; n];
    let mut converged = vec![vec![true; n]; n];
    for r in &records {
        values[r.i][r.j] = r.value;
        values[r.j][r.i] = r.value;
        converged[r.i][r.j] = r.converged;
        converged[r.j][r.i] = r.converged;
    }
    Ok(DistanceMatrix {
        size: n,
        values,
        converged,
        basis: basis.kind,
        options: opts.clone(),
        seed,
        pairs: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{default_pbw_basis, matrix_unit_basis};
    use crate::linalg::{random_complex_matrix, spectral_norm};
    use crate::triple::{build_deformed_dirac, su2_generators, DeformationParams};

    fn basis_state(n: usize, i: usize, gens: &crate::triple::Su2Generators) -> LocalizedState {
        let mut v = crate::linalg::CVector::zeros(n);
        v[i] = c(1.0, 0.0);
        LocalizedState::new(v, gens, i).unwrap()
    }

    #[test]
    fn reduced_norm_matches_full_commutator() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (n, params) in [
            (2, DeformationParams::round()),
            (4, DeformationParams::new(1.0, 1.5, 0.7, 1.2)),
        ] {
            let t = build_deformed_dirac(n, params).unwrap();
            let x = random_complex_matrix(n, n, &mut rng);
            let a = (&x + x.adjoint()) * c(0.5, 0.0);
            let reduced = lipschitz_seminorm(&t, &a).unwrap();
            let full = spectral_norm(&full_commutator(&t, &a));
            assert!((reduced - full).abs() < 1e-9 * full.max(1.0), "{reduced} vs {full}");
        }
    }

    #[test]
    fn block_split_preserves_norms() {
        let n = 4;
        let g = su2_generators(n).unwrap();
        let t = build_deformed_dirac(n, DeformationParams::new(1.0, 1.3, 0.8, 1.1)).unwrap();
        let model = CommutatorModel::new(&t, &default_pbw_basis(&g).unwrap()).unwrap();
        assert_eq!(model.block_dims(), vec![2 * n, 2 * n]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let x: Vec<f64> = (0..model.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let a = model.basis.combine(&x);
            let direct = lipschitz_seminorm(&t, &a).unwrap();
            assert!((model.norm(&x).unwrap() - direct).abs() < 1e-10 * direct);
        }
    }

    #[test]
    fn trivial_seminorms() {
        let t = build_deformed_dirac(3, DeformationParams::round()).unwrap();
        assert_eq!(lipschitz_seminorm(&t, &CMatrix::identity(3, 3)).unwrap(), 0.0);
        let t1 = build_deformed_dirac(1, DeformationParams::round()).unwrap();
        assert_eq!(
            lipschitz_seminorm(&t1, &(CMatrix::identity(1, 1) * c(3.0, 0.0))).unwrap(),
            0.0
        );
        let g = su2_generators(2).unwrap();
        let t2 = build_deformed_dirac(2, DeformationParams::round()).unwrap();
        let j3 = g.hermitian(2);
        let v = lipschitz_seminorm(&t2, &j3).unwrap();
        assert!(v > 0.0);
        assert!((v - spectral_norm(&full_commutator(&t2, &j3))).abs() < 1e-9);
        let bad = CMatrix::from_fn(2, 2, |r, col| if r < col { c(1.0, 0.0) } else { c(0.0, 0.0) });
        assert!(lipschitz_seminorm(&t2, &bad).is_err());
    }

    #[test]
    fn coincident_states_have_zero_distance() {
        let g = su2_generators(3).unwrap();
        let t = build_deformed_dirac(3, DeformationParams::round()).unwrap();
        let model = CommutatorModel::new(&t, &default_pbw_basis(&g).unwrap()).unwrap();
        let s = basis_state(3, 0, &g);
        let r = connes_distance(&model, &s, &s, &DistanceOptions::default(), 1).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn witness_certifies_value() {
        let g = su2_generators(3).unwrap();
        let t = build_deformed_dirac(3, DeformationParams::restricted(1.0, 1.5)).unwrap();
        let model = CommutatorModel::new(&t, &matrix_unit_basis(3).unwrap()).unwrap();
        let (s1, s2) = (basis_state(3, 0, &g), basis_state(3, 2, &g));
        let r = connes_distance(&model, &s1, &s2, &DistanceOptions::default(), 5).unwrap();
        assert!(r.lipschitz_norm <= 1.0 + 1e-6);
        let a = model.basis.combine(&r.witness);
        assert!((s1.evaluate(&a) - s2.evaluate(&a) - r.value).abs() < 1e-8);
        assert!((lipschitz_seminorm(&t, &a).unwrap() - r.lipschitz_norm).abs() < 1e-9);
    }

    #[test]
    fn basis_choice_does_not_matter() {
        let n = 3;
        let g = su2_generators(n).unwrap();
        let t = build_deformed_dirac(n, DeformationParams::round()).unwrap();
        let (s1, s2) = (basis_state(n, 0, &g), basis_state(n, 1, &g));
        let opts = DistanceOptions::default();
        let a = connes_distance(
            &CommutatorModel::new(&t, &default_pbw_basis(&g).unwrap()).unwrap(),
            &s1,
            &s2,
            &opts,
            3,
        )
        .unwrap();
        let b = connes_distance(
            &CommutatorModel::new(&t, &matrix_unit_basis(n).unwrap()).unwrap(),
            &s1,
            &s2,
            &opts,
            3,
        )
        .unwrap();
        assert!((a.value - b.value).abs() < 1e-6 * a.value, "{} vs {}", a.value, b.value);
    }

    #[test]
    fn unbounded_when_commutator_is_blind() {
        // only the γ⁰ term survives: every element commutes with D
        let t = build_deformed_dirac(2, DeformationParams::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        let g = su2_generators(2).unwrap();
        let model = CommutatorModel::new(&t, &matrix_unit_basis(2).unwrap()).unwrap();
        let r = connes_distance(
            &model,
            &basis_state(2, 0, &g),
            &basis_state(2, 1, &g),
            &DistanceOptions::default(),
            0,
        );
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn triangle_violation_of_a_metric_is_nonpositive() {
        let v = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]];
        assert!(max_triangle_violation(&v) <= 0.0);
        let bad = vec![vec![0.0, 1.0, 3.0], vec![1.0, 0.0, 1.0], vec![3.0, 1.0, 0.0]];
        assert!((max_triangle_violation(&bad) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matrix_csv_round_trip_and_cache() {
        let g = su2_generators(2).unwrap();
        let t = build_deformed_dirac(2, DeformationParams::round()).unwrap();
        let states = vec![basis_state(2, 0, &g), basis_state(2, 1, &g)];
        let dir = tempfile::tempdir().unwrap();
        let opts = DistanceOptions::default();
        let basis = matrix_unit_basis(2).unwrap();
        let a = distance_matrix(&t, &basis, &states, &opts, 7, Some(dir.path())).unwrap();
        let b = distance_matrix(&t, &basis, &states, &opts, 7, Some(dir.path())).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values[0][0], 0.0);
        assert_eq!(a.values[0][1], a.values[1][0]);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let back = DistanceMatrix::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values, a.values);
    }
}
