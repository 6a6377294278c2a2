//! The few special functions the observables need.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

const MAX_TERMS: usize = 10_000;
const EPS: f64 = 1e-16;

/// `Γ(k/2)` for a positive integer `k`.
pub fn gamma_half_integer(k: u32) -> f64 {
    assert!(k > 0, "Γ has a pole at 0");
    // Γ(1) = 1, Γ(1/2) = √π, Γ(x+1) = xΓ(x)
    let (mut x, mut value) = if k.is_multiple_of(2) { (1.0, 1.0) } else { (0.5, PI.sqrt()) };
    let target = k as f64 / 2.0;
    while x < target {
        value *= x;
        x += 1.0;
    }
    value
}

/// Volume of the unit ball in `d` dimensions, `π^{d/2} / Γ(d/2 + 1)`.
pub fn unit_ball_volume(d: u32) -> f64 {
    PI.powf(d as f64 / 2.0) / gamma_half_integer(d + 2)
}

/// Exponential integral `E₁(x)` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    if x <= 0.0 || !x.is_finite() {
        return Err(invalid(format!("E1 needs a positive finite argument, got {x}")));
    }
    if x < 1.0 {
        // E₁(x) = −γ − ln x − Σ_{k≥1} (−x)^k / (k·k!)
        const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..MAX_TERMS {
            term *= -x / k as f64;
            let contribution = term / k as f64;
            sum += contribution;
            if contribution.abs() < EPS * sum.abs() {
                return Ok(-EULER_GAMMA - x.ln() - sum);
            }
        }
        Err(Error::NonConvergence {
            iterations: MAX_TERMS,
            detail: format!("E1 series at x={x}"),
        })
    } else {
        // modified Lentz on e^{-x} / (x + 1 − 1²/(x + 3 − 2²/(x + 5 − …)))
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut cc = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_TERMS {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            cc = b + an / cc;
            let delta = cc * d;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                return Ok(h * (-x).exp());
            }
        }
        Err(Error::NonConvergence {
            iterations: MAX_TERMS,
            detail: format!("E1 continued fraction at x={x}"),
        })
    }
}

/// Lower incomplete gamma `γ(a, x)` by its power series, `a > 0`.
fn lower_gamma_series(a: f64, x: f64) -> Result<f64> {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..MAX_TERMS {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < EPS * sum.abs() {
            return Ok(sum * (a * x.ln() - x).exp());
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_TERMS,
        detail: format!("lower incomplete gamma series at a={a}, x={x}"),
    })
}

/// Upper incomplete gamma `Γ(1 − d/2, x)` for a positive integer `d`.
///
/// Even `d` starts from `Γ(0, x) = E₁(x)` (continued fraction), odd `d` from
/// `Γ(1/2, x) = √π − γ(1/2, x)` (series); both then recur downwards with
/// `Γ(a, x) = (Γ(a+1, x) − x^a e^{−x}) / a`.
pub fn upper_gamma_one_minus_half(d: u32, x: f64) -> Result<f64> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if x <= 0.0 || !x.is_finite() {
        return Err(invalid(format!("x must be positive and finite, got {x}")));
    }
    let (mut a, mut value) = if d.is_multiple_of(2) {
        (0.0, exp_integral_e1(x)?)
    } else {
        (0.5, PI.sqrt() - lower_gamma_series(0.5, x)?)
    };
    let target = 1.0 - d as f64 / 2.0;
    while a > target + 0.25 {
        a -= 1.0;
        value = (value - x.powf(a) * (-x).exp()) / a;
    }
    Ok(value)
}
