//! Least-squares ellipsoid fit. The shape is first fitted with the center at
//! the centroid, then center and shape are polished together.
//!
//! The frame is `u₃ = (sinθ cosφ, sinθ sinφ, cosθ)` plus two orthonormal
//! vectors rotated by a nuisance angle `ψ` about `u₃`. The residual is the
//! algebraic one, `Σ_i (Σ_k (y_i·u_k)²/a_k² − 1)²`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};

pub const MIN_STARTS: usize = 16;
const COLLAPSE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidFit {
    /// Semi-axes, ascending.
    pub axes: [f64; 3],
    /// Polar and azimuthal angle of the longest axis, with `θ ≤ π/2`.
    pub angles: [f64; 2],
    pub center: [f64; 3],
    pub residual: f64,
    pub residual_per_dof: f64,
    /// Some axis collapsed below `1e-6`.
    pub degenerate: bool,
    pub residual_kind: String,
}

type Frame = [[f64; 3]; 3];

fn frame(theta: f64, phi: f64, psi: f64) -> Frame {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let u3 = [st * cp, st * sp, ct];
    let e1 = [ct * cp, ct * sp, -st];
    let e2 = [-sp, cp, 0.0];
    let (ss, cs) = psi.sin_cos();
    let u1 = [
        cs * e1[0] + ss * e2[0],
        cs * e1[1] + ss * e2[1],
        cs * e1[2] + ss * e2[2],
    ];
    let u2 = [
        -ss * e1[0] + cs * e2[0],
        -ss * e1[1] + cs * e2[1],
        -ss * e1[2] + cs * e2[2],
    ];
    [u1, u2, u3]
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Parameters are `(θ, φ, ψ, ln a₁, ln a₂, ln a₃)`.
fn residual(points: &[[f64; 3]], p: &[f64]) -> f64 {
    let u = frame(p[0], p[1], p[2]);
    let inv = [(-2.0 * p[3]).exp(), (-2.0 * p[4]).exp(), (-2.0 * p[5]).exp()];
    points
        .iter()
        .map(|y| {
            let q: f64 = (0..3).map(|k| dot3(y, &u[k]).powi(2) * inv[k]).sum();
            (q - 1.0).powi(2)
        })
        .sum()
}

pub fn centroid(points: &[[f64; 3]]) -> [f64; 3] {
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k] / n;
        }
    }
    c
}

/// Angles of a unit vector with the sign chosen so that `θ ≤ π/2`.
fn axis_angles(mut v: [f64; 3]) -> [f64; 2] {
    if v[2] < 0.0 {
        v = [-v[0], -v[1], -v[2]];
    }
    let theta = v[2].clamp(-1.0, 1.0).acos();
    let phi = if theta.abs() < 1e-15 { 0.0 } else { v[1].atan2(v[0]) };
    [theta, phi]
}

/// Angles of the principal directions of the centred cloud, longest first.
fn principal_start(points: &[[f64; 3]]) -> Option<[f64; 3]> {
    let mut cov = nalgebra::Matrix3::<f64>::zeros();
    for y in points {
        let v = nalgebra::Vector3::new(y[0], y[1], y[2]);
        cov += v * v.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let col = eig.eigenvectors.column(order[0]);
    let [theta, phi] = axis_angles([col[0], col[1], col[2]]);
    let second = eig.eigenvectors.column(order[1]);
    let base = frame(theta, phi, 0.0);
    let s = [second[0], second[1], second[2]];
    let psi = dot3(&s, &base[1]).atan2(dot3(&s, &base[0]));
    psi.is_finite().then_some([theta, phi, psi])
}

/// Multi-start Nelder–Mead fit; at least [`MIN_STARTS`] starts are used.
pub fn fit_ellipsoid(points: &[[f64; 3]], seed: u64, starts: usize) -> Result<EllipsoidFit> {
    let n = points.len();
    if n < 6 {
        return Err(invalid(format!(
            "an ellipsoid fit with five shape parameters needs at least 6 points, got {n}"
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid("points must be finite"));
    }
    let center = centroid(points);
    let centred: Vec<[f64; 3]> = points
        .iter()
        .map(|p| [p[0] - center[0], p[1] - center[1], p[2] - center[2]])
        .collect();
    let rms = (centred.iter().map(|y| dot3(y, y)).sum::<f64>() / n as f64).sqrt();
    if !(rms > 0.0) {
        return Err(invalid("all points coincide"));
    }
    let log_r = rms.ln();
    let starts = starts.max(MIN_STARTS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut initial: Vec<Vec<f64>> = Vec::with_capacity(starts);
    if let Some([t, p, s]) = principal_start(&centred) {
        initial.push(vec![t, p, s, log_r, log_r, log_r]);
    }
    while initial.len() < starts {
        let z: f64 = rng.random_range(-1.0..1.0);
        initial.push(vec![
            z.acos(),
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
            log_r + rng.random_range(-0.5..0.5),
            log_r + rng.random_range(-0.5..0.5),
            log_r + rng.random_range(-0.5..0.5),
        ]);
    }
    let nm = NelderMeadOptions {
        max_evals: 20_000,
        ftol: 1e-16,
        xtol: 1e-12,
    };
    let scale = [0.3, 0.3, 0.3, 0.2, 0.2, 0.2];
    let objective = |p: &[f64]| residual(&centred, p);
    let best = initial
        .into_par_iter()
        .enumerate()
        .map(|(idx, x0)| {
            let mut m = nelder_mead(objective, &x0, &scale, &nm);
            // restart from the optimum to escape simplex collapse
            for _ in 0..3 {
                let polished = nelder_mead(objective, &m.x, &[0.05; 6], &nm);
                let gained = m.value - polished.value;
                m = if polished.value <= m.value { polished } else { m };
                if gained <= 1e-15 * m.value.max(1e-300) {
                    break;
                }
            }
            (idx, m)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .min_by(|(ia, a), (ib, b)| a.value.total_cmp(&b.value).then(ia.cmp(ib)))
        .map(|(_, m)| m)
        .expect("at least one start");
    let (p, value, center, params) = if n >= 9 {
        refine_center(&centred, best.x, best.value, &nm, center)
    } else {
        (best.x, best.value, center, 6)
    };
    let u = frame(p[0], p[1], p[2]);
    let mut axes_dirs: Vec<(f64, [f64; 3])> = (0..3).map(|k| (p[3 + k].exp(), u[k])).collect();
    axes_dirs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let axes = [axes_dirs[0].0, axes_dirs[1].0, axes_dirs[2].0];
    Ok(EllipsoidFit {
        axes,
        angles: axis_angles(axes_dirs[2].1),
        center,
        residual: value,
        residual_per_dof: value / (n + 1 - params) as f64,
        degenerate: axes.iter().any(|a| *a < COLLAPSE),
        residual_kind: "algebraic".to_string(),
    })
}

/// Frees the center: parameters `(θ, φ, ψ, ln a₁, ln a₂, ln a₃, s₁, s₂, s₃)`
/// with the points shifted by `−s`. Returns the shape, residual, absolute
/// center and parameter count.
fn refine_center(
    centred: &[[f64; 3]],
    shape: Vec<f64>,
    value: f64,
    nm: &NelderMeadOptions,
    centroid: [f64; 3],
) -> (Vec<f64>, f64, [f64; 3], usize) {
    let objective = |q: &[f64]| {
        let shifted: Vec<[f64; 3]> = centred
            .iter()
            .map(|y| [y[0] - q[6], y[1] - q[7], y[2] - q[8]])
            .collect();
        residual(&shifted, &q[..6])
    };
    let step = 0.05 * shape[3..6].iter().map(|l| l.exp()).sum::<f64>() / 3.0;
    let mut x: Vec<f64> = shape.iter().cloned().chain([0.0; 3]).collect();
    let mut best = value;
    for _ in 0..20 {
        let m = nelder_mead(
            objective,
            &x,
            &[0.05, 0.05, 0.05, 0.05, 0.05, 0.05, step, step, step],
            nm,
        );
        let gained = best - m.value;
        if m.value < best {
            x = m.x;
            best = m.value;
        }
        if gained <= 1e-12 * best.max(1e-300) {
            break;
        }
    }
    let center = [centroid[0] + x[6], centroid[1] + x[7], centroid[2] + x[8]];
    (x[..6].to_vec(), best, center, 9)
}

/// `(1/(c12 c13), 1/(c12 c23), 1/(c13 c23))`.
pub fn expected_axes(c12: f64, c13: f64, c23: f64) -> Result<[f64; 3]> {
    if [c12, c13, c23].iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
        return Err(invalid(format!(
            "deformation coefficients must be positive, got ({c12}, {c13}, {c23})"
        )));
    }
    Ok([1.0 / (c12 * c13), 1.0 / (c12 * c23), 1.0 / (c13 * c23)])
}

pub fn sorted3(mut v: [f64; 3]) -> [f64; 3] {
    v.sort_by(f64::total_cmp);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation(a: f64, b: f64, c: f64) -> Frame {
        frame(a, b, c)
    }

    fn synthetic(axes: [f64; 3], count: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = rotation(0.7, -1.1, 2.3);
        let shift = [0.3, -0.2, 0.5];
        let mut pts = Vec::new();
        for _ in 0..count / 2 {
            let z: f64 = rng.random_range(-1.0..1.0);
            let ph: f64 = rng.random_range(-PI..PI);
            let s = (1.0 - z * z).sqrt();
            let local = [axes[0] * s * ph.cos(), axes[1] * s * ph.sin(), axes[2] * z];
            for sign in [1.0, -1.0] {
                let mut p = shift;
                for k in 0..3 {
                    for d in 0..3 {
                        p[d] += sign * local[k] * r[k][d];
                    }
                }
                pts.push(p);
            }
        }
        pts
    }

    #[test]
    fn recovers_synthetic_axes() {
        let pts = synthetic([0.5, 0.5, 1.0], 200, 8);
        let fit = fit_ellipsoid(&pts, 1, 16).unwrap();
        for (a, b) in fit.axes.iter().zip([0.5, 0.5, 1.0]) {
            assert!((a - b).abs() < 1e-3, "{:?}", fit.axes);
        }
        assert!(fit.residual_per_dof < 1e-10);
        let r = rotation(0.7, -1.1, 2.3);
        let main = axis_angles(r[2]);
        assert!((fit.angles[0] - main[0]).abs() < 1e-3);
    }

    #[test]
    fn recovers_triaxial_axes() {
        let pts = synthetic([0.4, 0.7, 1.2], 200, 9);
        let fit = fit_ellipsoid(&pts, 2, 16).unwrap();
        for (a, b) in fit.axes.iter().zip([0.4, 0.7, 1.2]) {
            assert!((a - b).abs() < 1e-3, "{:?}", fit.axes);
        }
    }

    #[test]
    fn recovers_center_of_one_sided_samples() {
        let pts: Vec<[f64; 3]> = synthetic([0.6, 0.9, 1.4], 400, 4).into_iter().step_by(2).collect();
        let c = centroid(&pts);
        assert!((c[0] - 0.3).abs() + (c[1] + 0.2).abs() + (c[2] - 0.5).abs() > 1e-2);
        let fit = fit_ellipsoid(&pts, 3, 16).unwrap();
        for (a, b) in fit.axes.iter().zip([0.6, 0.9, 1.4]) {
            assert!((a - b).abs() < 1e-4, "{:?}", fit.axes);
        }
        for (a, b) in fit.center.iter().zip([0.3, -0.2, 0.5]) {
            assert!((a - b).abs() < 1e-4, "{:?}", fit.center);
        }
    }

    #[test]
    fn too_few_points() {
        let pts = vec![[1.0, 0.0, 0.0]; 5];
        assert!(fit_ellipsoid(&pts, 0, 16).is_err());
    }

    #[test]
    fn expected_axes_examples() {
        assert_eq!(expected_axes(1.0, 1.0, 1.0).unwrap(), [1.0, 1.0, 1.0]);
        assert_eq!(sorted3(expected_axes(1.0, 1.0, 2.0).unwrap()), [0.5, 0.5, 1.0]);
        let e = sorted3(expected_axes(1.1, 1.1, 1.5).unwrap());
        for (a, b) in e.iter().zip([0.61, 0.61, 0.83]) {
            assert!((a - b).abs() < 0.005);
        }
        assert!(expected_axes(0.0, 1.0, 1.0).is_err());
    }
}
