//! Euclidean embedding of distance matrices and shape diagnostics.
//!
//! Per-point correlation is the Pearson coefficient between row `i` of the
//! input distances and row `i` of the embedded distances, diagonal excluded.

pub mod ellipsoid;
pub mod histogram;
pub mod sample;
pub mod smacof;

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::distance::DistanceMatrix;
use crate::error::{invalid, Result};

pub use ellipsoid::{expected_axes, fit_ellipsoid, sorted3, EllipsoidFit, MIN_STARTS};
pub use histogram::{
    distance_histogram, euclidean_distances, freedman_diaconis_bins, great_circle_distances, Histogram,
};
pub use sample::sample_ellipsoid;
pub use smacof::{smacof, stress, SmacofOptions, SmacofRun};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResult {
    pub coords: DMatrix<f64>,
    pub stress: f64,
    pub stress_history: Vec<f64>,
    pub correlations: Vec<f64>,
    /// Points whose input or embedded row had zero variance; their
    /// correlation is reported as 0.
    pub constant_rows: Vec<usize>,
    pub dim: usize,
}

impl EmbeddingResult {
    pub fn mean_correlation(&self) -> f64 {
        self.correlations.iter().sum::<f64>() / self.correlations.len() as f64
    }

    pub fn min_correlation(&self) -> f64 {
        self.correlations.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Rows as 3-vectors, zero padded; only meaningful for `dim ≤ 3`.
    pub fn points3(&self) -> Vec<[f64; 3]> {
        (0..self.coords.nrows())
            .map(|i| {
                let mut p = [0.0; 3];
                for (k, v) in p.iter_mut().enumerate().take(self.dim.min(3)) {
                    *v = self.coords[(i, k)];
                }
                p
            })
            .collect()
    }

    /// Columns `index, x1..xd, correlation` (`x, y, z` when `d = 3`).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = std::io::BufWriter::new(w);
        let names: Vec<String> = if self.dim <= 3 {
            ["x", "y", "z"][..self.dim].iter().map(|s| s.to_string()).collect()
        } else {
            (1..=self.dim).map(|k| format!("x{k}")).collect()
        };
        writeln!(w, "index,{},correlation", names.join(","))?;
        for i in 0..self.coords.nrows() {
            write!(w, "{i}")?;
            for k in 0..self.dim {
                write!(w, ",{:.16e}", self.coords[(i, k)])?;
            }
            writeln!(w, ",{:.16e}", self.correlations[i])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn distance_dmatrix(dm: &DistanceMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(dm.size, dm.size, |i, j| dm.values[i][j])
}

pub fn embedded_distances(coords: &DMatrix<f64>) -> DMatrix<f64> {
    let n = coords.nrows();
    DMatrix::from_fn(n, n, |i, j| (coords.row(i) - coords.row(j)).norm())
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    let scale_a = a.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let scale_b = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let tiny = |s: f64, scale: f64| s <= (1e-14 * scale).powi(2) * n;
    if tiny(saa, scale_a) || tiny(sbb, scale_b) {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Per-point coefficients plus the indices of constant rows.
pub fn correlation_coefficients(delta: &DMatrix<f64>, coords: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<usize>)> {
    let n = delta.nrows();
    if delta.ncols() != n || coords.nrows() != n {
        return Err(invalid(format!(
            "distance matrix is {}x{} but there are {} embedded points",
            delta.nrows(),
            delta.ncols(),
            coords.nrows()
        )));
    }
    if n < 3 {
        return Err(invalid("correlations need at least three points"));
    }
    let e = embedded_distances(coords);
    let mut out = Vec::with_capacity(n);
    let mut constant = Vec::new();
    for i in 0..n {
        let a: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| delta[(i, j)]).collect();
        let b: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| e[(i, j)]).collect();
        match pearson(&a, &b) {
            Some(r) => out.push(r),
            None => {
                out.push(0.0);
                constant.push(i);
            }
        }
    }
    Ok((out, constant))
}

/// SMACOF embedding into `dim` dimensions followed by correlation diagnostics.
pub fn smacof_embed(
    dm: &DistanceMatrix,
    dim: usize,
    weights: Option<&DMatrix<f64>>,
    opts: &SmacofOptions,
    seed: u64,
) -> Result<EmbeddingResult> {
    let delta = distance_dmatrix(dm);
    let run = smacof(&delta, weights, dim, opts, seed)?;
    let (correlations, constant_rows) = correlation_coefficients(&delta, &run.coords)?;
    Ok(EmbeddingResult {
        coords: run.coords,
        stress: run.stress,
        stress_history: run.stress_history,
        correlations,
        constant_rows,
        dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_points(points: &[[f64; 3]]) -> DistanceMatrix {
        let n = points.len();
        let values = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        (0..3)
                            .map(|k| (points[i][k] - points[j][k]).powi(2))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect()
            })
            .collect();
        DistanceMatrix::from_values(values)
    }

    #[test]
    fn perfect_embedding_has_unit_correlations() {
        let pts = sample_ellipsoid([1.0, 0.8, 0.6], 12, 2).unwrap();
        let delta = distance_dmatrix(&from_points(&pts));
        let coords = DMatrix::from_fn(12, 3, |i, k| pts[i][k]);
        let (r, constant) = correlation_coefficients(&delta, &coords).unwrap();
        assert!(constant.is_empty());
        assert!(r.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn smacof_recovers_a_point_cloud() {
        let pts = sample_ellipsoid([1.0, 1.0, 1.0], 14, 6).unwrap();
        let res = smacof_embed(&from_points(&pts), 3, None, &SmacofOptions::default(), 3).unwrap();
        assert!(res.stress < 1e-8, "{}", res.stress);
        assert!(res.min_correlation() > 0.999999);
        assert!(res.stress_history.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn constant_rows_are_flagged() {
        let mut delta = DMatrix::from_element(4, 4, 1.0);
        delta.fill_diagonal(0.0);
        let coords = DMatrix::from_fn(4, 1, |i, _| i as f64);
        let (r, constant) = correlation_coefficients(&delta, &coords).unwrap();
        assert_eq!(constant, vec![0, 1, 2, 3]);
        assert!(r.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let delta = DMatrix::zeros(4, 4);
        assert!(correlation_coefficients(&delta, &DMatrix::zeros(3, 3)).is_err());
    }
}
