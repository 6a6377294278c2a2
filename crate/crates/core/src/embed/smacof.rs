//! Weighted SMACOF: stress majorization by repeated Guttman transforms.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmacofOptions {
    pub max_iter: usize,
    /// Stop when the relative stress decrease of one step is below this.
    pub eps: f64,
    pub restarts: usize,
}

impl Default for SmacofOptions {
    fn default() -> Self {
        SmacofOptions {
            max_iter: 3000,
            eps: 1e-10,
            restarts: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmacofRun {
    pub coords: DMatrix<f64>,
    pub stress: f64,
    pub stress_history: Vec<f64>,
    pub restart: usize,
}

fn pairwise(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(n, n, |i, j| (x.row(i) - x.row(j)).norm())
}

/// `Σ_{i<j} w_ij (d_ij(X) − δ_ij)²`.
pub fn stress(delta: &DMatrix<f64>, weights: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    let d = pairwise(x);
    let n = delta.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += weights[(i, j)] * (d[(i, j)] - delta[(i, j)]).powi(2);
        }
    }
    s
}

fn check_inputs(delta: &DMatrix<f64>, weights: &DMatrix<f64>, dim: usize) -> Result<()> {
    let n = delta.nrows();
    if delta.ncols() != n || weights.nrows() != n || weights.ncols() != n {
        return Err(invalid("distance and weight matrices must be square and of equal size"));
    }
    if n < 2 || dim == 0 {
        return Err(invalid("need at least two points and a positive embedding dimension"));
    }
    for i in 0..n {
        for j in 0..n {
            let (d, w) = (delta[(i, j)], weights[(i, j)]);
            if !d.is_finite() || d < 0.0 || !w.is_finite() || w < 0.0 {
                return Err(invalid(format!("entry ({i},{j}) must be finite and nonnegative")));
            }
            if (d - delta[(j, i)]).abs() > 1e-12 * d.abs().max(1.0) || w != weights[(j, i)] {
                return Err(invalid("distance and weight matrices must be symmetric"));
            }
        }
    }
    if (0..n).all(|i| (0..n).all(|j| i == j || delta[(i, j)] == 0.0)) {
        return Err(Error::Degenerate("all distances are zero".into()));
    }
    Ok(())
}

/// Moore–Penrose inverse of `V = Σ w_ij (e_i − e_j)(e_i − e_j)ᵀ`, assuming
/// the weight graph is connected: `(V + 11ᵀ)⁻¹ − 11ᵀ/N²`.
fn v_pseudo_inverse(weights: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = weights.nrows();
    let mut v = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                v[(i, j)] = -weights[(i, j)];
                v[(i, i)] += weights[(i, j)];
            }
        }
    }
    let ones = DMatrix::from_element(n, n, 1.0);
    let inv = (v + &ones)
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("the weight graph is disconnected".into()))?;
    Ok(inv - ones / (n * n) as f64)
}

fn run_one(
    delta: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    vplus: &DMatrix<f64>,
    dim: usize,
    opts: &SmacofOptions,
    seed: u64,
    restart: usize,
) -> SmacofRun {
    let n = delta.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let mean_delta = delta.sum() / (n * (n - 1)) as f64;
    let mut x = DMatrix::from_fn(n, dim, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * mean_delta
    });
    let mut current = stress(delta, weights, &x);
    let mut history = vec![current];
    for _ in 0..opts.max_iter {
        let d = pairwise(&x);
        let mut b = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j && d[(i, j)] > 1e-300 {
                    b[(i, j)] = -weights[(i, j)] * delta[(i, j)] / d[(i, j)];
                }
            }
        }
        for i in 0..n {
            let row: f64 = (0..n).filter(|&j| j != i).map(|j| b[(i, j)]).sum();
            b[(i, i)] = -row;
        }
        let next = vplus * (b * &x);
        let s = stress(delta, weights, &next);
        if !(s <= current) {
            break;
        }
        let rel = (current - s) / current.max(f64::MIN_POSITIVE);
        x = next;
        current = s;
        history.push(s);
        if rel < opts.eps {
            break;
        }
    }
    SmacofRun {
        coords: x,
        stress: current,
        stress_history: history,
        restart,
    }
}

/// Best of `opts.restarts` seeded runs; ties go to the lower restart index.
pub fn smacof(
    delta: &DMatrix<f64>,
    weights: Option<&DMatrix<f64>>,
    dim: usize,
    opts: &SmacofOptions,
    seed: u64,
) -> Result<SmacofRun> {
    let n = delta.nrows();
    let uniform;
    let weights = match weights {
        Some(w) => w,
        None => {
            uniform = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
            &uniform
        }
    };
    check_inputs(delta, weights, dim)?;
    if opts.restarts == 0 || opts.max_iter == 0 || !(opts.eps > 0.0) {
        return Err(invalid("SMACOF needs positive restarts, max_iter and eps"));
    }
    let vplus = v_pseudo_inverse(weights)?;
    let runs: Vec<SmacofRun> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| run_one(delta, weights, &vplus, dim, opts, seed, r))
        .collect();
    Ok(runs
        .into_iter()
        .min_by(|a, b| a.stress.total_cmp(&b.stress).then(a.restart.cmp(&b.restart)))
        .expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_equal(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 })
    }

    #[test]
    fn exact_embeddings() {
        let r = smacof(&all_equal(2), None, 3, &SmacofOptions::default(), 1).unwrap();
        assert!(r.stress < 1e-12);
        assert!(((r.coords.row(0) - r.coords.row(1)).norm() - 1.0).abs() < 1e-6);
        let r = smacof(&all_equal(3), None, 2, &SmacofOptions::default(), 1).unwrap();
        assert!(r.stress < 1e-10, "{}", r.stress);
    }

    #[test]
    fn regular_simplex_does_not_fit_in_the_plane() {
        let r = smacof(&all_equal(4), None, 2, &SmacofOptions::default(), 1).unwrap();
        assert!(r.stress > 1e-3, "{}", r.stress);
        let r3 = smacof(&all_equal(4), None, 3, &SmacofOptions::default(), 1).unwrap();
        assert!(r3.stress < 1e-10);
    }

    #[test]
    fn history_is_monotone_with_weights() {
        let n = 7;
        let delta = DMatrix::from_fn(n, n, |i, j| ((i as f64 - j as f64).abs()).sqrt());
        let w = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 + ((i + j) % 3) as f64 });
        let r = smacof(&delta, Some(&w), 2, &SmacofOptions::default(), 5).unwrap();
        assert!(r.stress_history.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let z = DMatrix::zeros(3, 3);
        assert!(matches!(
            smacof(&z, None, 2, &SmacofOptions::default(), 0),
            Err(Error::Degenerate(_))
        ));
    }
}
