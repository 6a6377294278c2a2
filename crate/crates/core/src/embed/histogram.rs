//! Equal-width histograms of pairwise distances.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges from 0 to the largest value.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Counts normalized to unit area.
    pub density: Vec<f64>,
    pub mean: f64,
}

impl Histogram {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = std::io::BufWriter::new(w);
        writeln!(w, "lower,upper,count,density")?;
        for b in 0..self.counts.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{},{:.16e}",
                self.edges[b],
                self.edges[b + 1],
                self.counts[b],
                self.density[b]
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Freedman–Diaconis bin count over `[0, max]`, at least one.
pub fn freedman_diaconis_bins(values: &[f64]) -> usize {
    if values.len() < 2 {
        return 1;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let iqr = quantile(&v, 0.75) - quantile(&v, 0.25);
    let max = v[v.len() - 1];
    if !(iqr > 0.0) || !(max > 0.0) {
        return 1;
    }
    let width = 2.0 * iqr / (v.len() as f64).cbrt();
    ((max / width).ceil() as usize).clamp(1, 10_000)
}

/// `bins = None` selects the Freedman–Diaconis rule.
pub fn distance_histogram(values: &[f64], bins: Option<usize>) -> Result<Histogram> {
    if values.is_empty() {
        return Err(invalid("histogram of an empty list"));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid("distances must be finite and nonnegative"));
    }
    let bins = bins.unwrap_or_else(|| freedman_diaconis_bins(values));
    if bins == 0 {
        return Err(invalid("bins must be at least 1"));
    }
    let max = values.iter().cloned().fold(0.0, f64::max);
    let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|b| b as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = ((v / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let total = values.len() as f64;
    let density = counts.iter().map(|&c| c as f64 / (total * width)).collect();
    Ok(Histogram {
        edges,
        counts,
        density,
        mean: values.iter().sum::<f64>() / total,
    })
}

pub fn euclidean_distances(points: &[[f64; 3]]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            out.push(
                (0..3)
                    .map(|k| (points[i][k] - points[j][k]).powi(2))
                    .sum::<f64>()
                    .sqrt(),
            );
        }
    }
    out
}

/// `radius · angle` between the points seen from `center`.
pub fn great_circle_distances(points: &[[f64; 3]], center: [f64; 3], radius: f64) -> Vec<f64> {
    let rel: Vec<[f64; 3]> = points
        .iter()
        .map(|p| [p[0] - center[0], p[1] - center[1], p[2] - center[2]])
        .collect();
    let mut out = Vec::new();
    for i in 0..rel.len() {
        for j in i + 1..rel.len() {
            let (a, b) = (&rel[i], &rel[j]);
            let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            let cross = [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ];
            let cn = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
            out.push(radius * cn.atan2(dot));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, UnitSphere};

    #[test]
    fn single_value_fills_one_bin() {
        let h = distance_histogram(&[2.0; 10], None).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        let h = distance_histogram(&[2.0; 10], Some(5)).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
    }

    #[test]
    fn density_has_unit_area() {
        let v: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let h = distance_histogram(&v, Some(7)).unwrap();
        let area: f64 = h.density.iter().map(|d| d * (h.edges[1] - h.edges[0])).sum();
        assert!((area - 1.0).abs() < 1e-12);
        assert_eq!(h.counts.iter().sum::<usize>(), 100);
    }

    #[test]
    fn sphere_means_match_monte_carlo_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pts: Vec<[f64; 3]> = (0..1500).map(|_| UnitSphere.sample(&mut rng)).collect();
        let chord = distance_histogram(&euclidean_distances(&pts), None).unwrap();
        let arc = distance_histogram(&great_circle_distances(&pts, [0.0; 3], 1.0), None).unwrap();
        assert!((chord.mean - 4.0 / 3.0).abs() < 0.02, "{}", chord.mean);
        assert!((arc.mean - std::f64::consts::FRAC_PI_2).abs() < 0.02, "{}", arc.mean);
    }
}
