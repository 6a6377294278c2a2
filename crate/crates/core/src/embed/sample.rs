//! Evenly spread points on an ellipsoid surface by Coulomb repulsion.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};

const MAX_ITER: usize = 5000;

fn project(p: [f64; 3], axes: &[f64; 3]) -> [f64; 3] {
    let q: f64 = (0..3).map(|k| (p[k] / axes[k]).powi(2)).sum();
    let s = 1.0 / q.sqrt();
    [p[0] * s, p[1] * s, p[2] * s]
}

fn energy(points: &[[f64; 3]]) -> f64 {
    let mut e = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d: f64 = (0..3).map(|k| (points[i][k] - points[j][k]).powi(2)).sum();
            e += 1.0 / d.sqrt();
        }
    }
    e
}

/// Tangential part of `−∇E` at every point.
fn forces(points: &[[f64; 3]], axes: &[f64; 3]) -> Vec<[f64; 3]> {
    let n = points.len();
    let mut f = vec![[0.0; 3]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = [
                points[i][0] - points[j][0],
                points[i][1] - points[j][1],
                points[i][2] - points[j][2],
            ];
            let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            let w = 1.0 / (r2 * r2.sqrt());
            for k in 0..3 {
                f[i][k] += w * d[k];
                f[j][k] -= w * d[k];
            }
        }
    }
    for (p, fi) in points.iter().zip(f.iter_mut()) {
        let normal = [p[0] / axes[0].powi(2), p[1] / axes[1].powi(2), p[2] / axes[2].powi(2)];
        let nn: f64 = normal.iter().map(|v| v * v).sum();
        let along: f64 = (0..3).map(|k| fi[k] * normal[k]).sum::<f64>() / nn;
        for k in 0..3 {
            fi[k] -= along * normal[k];
        }
    }
    f
}

/// `count` points on `Σ x_k²/a_k² = 1` minimizing `Σ 1/‖x_i − x_j‖`.
pub fn sample_ellipsoid(axes: [f64; 3], count: usize, seed: u64) -> Result<Vec<[f64; 3]>> {
    if axes.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
        return Err(invalid(format!("axes must be positive, got {axes:?}")));
    }
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<[f64; 3]> = (0..count)
        .map(|_| {
            let g: [f64; 3] = [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ];
            project([g[0] * axes[0], g[1] * axes[1], g[2] * axes[2]], &axes)
        })
        .collect();
    if count == 1 {
        return Ok(points);
    }
    let scale = axes.iter().cloned().fold(0.0, f64::max);
    let mut e = energy(&points);
    let mut step = 0.1 * scale / count as f64;
    for _ in 0..MAX_ITER {
        let f = forces(&points, &axes);
        let fmax = f
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
            .fold(0.0, f64::max);
        if fmax < 1e-14 {
            break;
        }
        let mut accepted = false;
        while step > 1e-18 * scale {
            let trial: Vec<[f64; 3]> = points
                .iter()
                .zip(&f)
                .map(|(p, fi)| {
                    let s = step / fmax;
                    project([p[0] + s * fi[0], p[1] + s * fi[1], p[2] + s * fi[2]], &axes)
                })
                .collect();
            let et = energy(&trial);
            if et < e {
                let rel = (e - et) / e;
                points = trial;
                e = et;
                step *= 1.3;
                accepted = true;
                if rel < 1e-15 {
                    return Ok(points);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
        (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn two_points_are_antipodal() {
        let p = sample_ellipsoid([1.0; 3], 2, 3).unwrap();
        assert!((dist(&p[0], &p[1]) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn six_points_form_an_octahedron() {
        let p = sample_ellipsoid([1.0; 3], 6, 4).unwrap();
        let mut d: Vec<f64> = Vec::new();
        for i in 0..6 {
            for j in i + 1..6 {
                d.push(dist(&p[i], &p[j]));
            }
        }
        d.sort_by(f64::total_cmp);
        for v in &d[..12] {
            assert!((v - 2f64.sqrt()).abs() < 1e-3, "{d:?}");
        }
        for v in &d[12..] {
            assert!((v - 2.0).abs() < 1e-3, "{d:?}");
        }
    }

    #[test]
    fn points_stay_on_the_surface() {
        let axes = [0.5, 0.5, 1.0];
        for p in sample_ellipsoid(axes, 21, 5).unwrap() {
            let q: f64 = (0..3).map(|k| (p[k] / axes[k]).powi(2)).sum();
            assert!((q - 1.0).abs() < 1e-9);
        }
    }
}
