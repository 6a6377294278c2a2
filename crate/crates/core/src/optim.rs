//! Small unconstrained minimizers: limited-memory BFGS for smooth
//! objectives and Nelder–Mead for derivative-free ones.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when `‖∇f‖∞ ≤ gtol · max(1, |f|)`.
    pub gtol: f64,
    /// Stop when the relative decrease of `f` over one step is below `ftol`.
    pub ftol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iter: 2000,
            gtol: 1e-10,
            ftol: 1e-14,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Limited-memory BFGS with a backtracking Armijo line search.
///
/// `f` returns the value and gradient at a point.
pub fn lbfgs<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut evaluations = 1;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if !fx.is_finite() {
            break;
        }
        if inf_norm(&g) <= opts.gtol * fx.abs().max(1.0) {
            converged = true;
            break;
        }
        iterations += 1;

        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = match history.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / inf_norm(&g).max(1e-300),
        };
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut direction: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &direction);
        if !(slope < 0.0) {
            history.clear();
            direction = g.iter().map(|v| -v / inf_norm(&g).max(1e-300)).collect();
            slope = dot(&g, &direction);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&direction).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&trial);
            evaluations += 1;
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            // no decrease along a descent direction: at numerical precision
            converged = history.is_empty();
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let decrease = fx - fnew;
        x = xn;
        g = gn;
        let previous = fx;
        fx = fnew;
        if decrease <= opts.ftol * previous.abs().max(1e-300) {
            converged = true;
            break;
        }
    }
    Minimum {
        x,
        value: fx,
        iterations,
        evaluations,
        converged,
    }
}

#[derive(Clone, Debug)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub ftol: f64,
    /// Stop when the simplex diameter falls below this.
    pub xtol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 20_000,
            ftol: 1e-15,
            xtol: 1e-12,
        }
    }
}

/// Nelder–Mead simplex search started from `x0` with per-coordinate
/// initial edge lengths `scale`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], scale: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..dim {
        let mut p = x0.to_vec();
        p[i] += scale[i];
        let v = f(&p);
        simplex.push((p, v));
    }
    let mut evaluations = dim + 1;
    let mut iterations = 0;
    let mut converged = false;
    let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    while evaluations < opts.max_evals {
        simplex.sort_by(|a, b| key(a.1).total_cmp(&key(b.1)));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(p, _)| {
                p.iter()
                    .zip(&simplex[0].0)
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .fold(0.0_f64, f64::max);
        if (worst - best).abs() <= opts.ftol * best.abs().max(1e-300) + 1e-300 || diameter <= opts.xtol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut centroid = vec![0.0; dim];
        for (p, _) in &simplex[..dim] {
            for (ci, pi) in centroid.iter_mut().zip(p) {
                *ci += pi / dim as f64;
            }
        }
        let along = |t: f64, from: &[f64]| -> Vec<f64> {
            centroid.iter().zip(from).map(|(ci, wi)| ci + t * (wi - ci)).collect()
        };
        let worst_point = simplex[dim].0.clone();
        let reflected = along(-1.0, &worst_point);
        let fr = f(&reflected);
        evaluations += 1;
        if key(fr) < key(simplex[0].1) {
            let expanded = along(-2.0, &worst_point);
            let fe = f(&expanded);
            evaluations += 1;
            simplex[dim] = if key(fe) < key(fr) {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
        } else if key(fr) < key(simplex[dim - 1].1) {
            simplex[dim] = (reflected, fr);
        } else {
            let (contracted, fc) = if key(fr) < key(worst) {
                let p = along(-0.5, &worst_point);
                let v = f(&p);
                (p, v)
            } else {
                let p = along(0.5, &worst_point);
                let v = f(&p);
                (p, v)
            };
            evaluations += 1;
            if key(fc) < key(fr.min(worst)) {
                simplex[dim] = (contracted, fc);
            } else {
                let best_point = simplex[0].0.clone();
                for (p, v) in simplex[1..].iter_mut() {
                    for (pi, bi) in p.iter_mut().zip(&best_point) {
                        *pi = bi + 0.5 * (*pi - bi);
                    }
                    *v = f(p);
                }
                evaluations += dim;
            }
        }
    }
    simplex.sort_by(|a, b| key(a.1).total_cmp(&key(b.1)));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn lbfgs_solves_rosenbrock() {
        let m = lbfgs(rosenbrock, vec![-1.2, 1.0], &LbfgsOptions::default());
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m);
    }

    #[test]
    fn lbfgs_quadratic_in_many_dimensions() {
        let dim = 50;
        let f = |x: &[f64]| {
            let v: f64 = x
                .iter()
                .enumerate()
                .map(|(i, xi)| (i + 1) as f64 * (xi - 1.0).powi(2))
                .sum();
            let g = x
                .iter()
                .enumerate()
                .map(|(i, xi)| 2.0 * (i + 1) as f64 * (xi - 1.0))
                .collect();
            (v, g)
        };
        let m = lbfgs(f, vec![0.0; dim], &LbfgsOptions::default());
        assert!(m.converged);
        assert!(m.x.iter().all(|v| (v - 1.0).abs() < 1e-8));
    }

    #[test]
    fn nelder_mead_solves_rosenbrock() {
        let m = nelder_mead(
            |x| rosenbrock(x).0,
            &[-1.2, 1.0],
            &[0.5, 0.5],
            &NelderMeadOptions::default(),
        );
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m);
    }
}
