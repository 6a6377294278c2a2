//! Heat-kernel observables of a Dirac spectrum: spectral dimension and
//! variance, the zeta-function volume and the state-count heuristic.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::special::{unit_ball_volume, upper_gamma_one_minus_half};
use crate::spectrum::{analytic_spectrum, EigenvalueTable};

/// Below this matrix size the dimension estimate is reported but flagged.
pub const LOW_RESOLUTION_N: usize = 6;

/// Number of points on the logarithmic `t` grid of the curves.
pub const CURVE_POINTS: usize = 200;

/// Reference geometry used to fix the volume normalization.
pub const CALIBRATION_N: usize = 20;
pub const CALIBRATION_C: f64 = 1.0;

/// Heat-kernel moments `⟨λ²⟩`, `⟨λ⁴⟩` with weights `e^{−tλ²}`.
///
/// Weights are shifted by the smallest `λ²` so nothing underflows.
fn moments(spec: &EigenvalueTable, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid(format!("t must be positive and finite, got {t}")));
    }
    if spec.entries.is_empty() {
        return Err(invalid("empty spectrum"));
    }
    let min_sq = spec
        .entries
        .iter()
        .map(|e| e.value * e.value)
        .fold(f64::INFINITY, f64::min);
    let (mut z, mut m2, mut m4) = (0.0, 0.0, 0.0);
    for (v, mult) in spec.weighted() {
        let s = v * v;
        let w = mult * (-t * (s - min_sq)).exp();
        z += w;
        m2 += w * s;
        m4 += w * s * s;
    }
    Ok((m2 / z, m4 / z))
}

/// `d_s(t) = 2t ⟨λ²⟩`.
pub fn spectral_dimension(spec: &EigenvalueTable, t: f64) -> Result<f64> {
    let (m2, _) = moments(spec, t)?;
    Ok(2.0 * t * m2)
}

/// `v_s(t) = 2t² (⟨λ⁴⟩ − ⟨λ²⟩²)`.
pub fn spectral_variance(spec: &EigenvalueTable, t: f64) -> Result<f64> {
    let (m2, m4) = moments(spec, t)?;
    Ok(2.0 * t * t * (m4 - m2 * m2).max(0.0))
}

fn probe_scale_for(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Degenerate(format!(
            "spectral cut-off must be positive, got {lambda}"
        )));
    }
    Ok((lambda + 1.0).ln().powi(2) / lambda)
}

/// `t_d = (log(Λ+1))² / Λ` with `Λ = max |λ|`.
pub fn probe_scale(spec: &EigenvalueTable) -> Result<f64> {
    if spec.entries.is_empty() {
        return Err(invalid("empty spectrum"));
    }
    probe_scale_for(spec.max_abs())
}

/// `d_s(t_d)` rounded half away from zero.
pub fn dimension_estimate(spec: &EigenvalueTable) -> Result<u32> {
    let t = probe_scale(spec)?;
    Ok(spectral_dimension(spec, t)?.round().max(0.0) as u32)
}

/// How eigenvalues are rescaled before entering the zeta-function volume.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeReading {
    /// `λ′ = t(Λ²)·λ²` with `Λ² = max λ²`.
    #[default]
    Squared,
    /// `λ′ = t(Λ)·|λ|` with `Λ = max |λ|`.
    Absolute,
}

/// Zeta-function volume
/// `(4π)^{d/2}/m · s^{d/2} · Σ_λ e^{−λ′−1}/(λ′+1) · Γ(1−d/2, 1)`,
/// where `s` is the probe scale of the rescaling and `m = calibration`.
pub fn volume_with(spec: &EigenvalueTable, d: u32, calibration: f64, reading: VolumeReading) -> Result<f64> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if !(calibration > 0.0) || !calibration.is_finite() {
        return Err(invalid(format!("calibration must be positive, got {calibration}")));
    }
    if spec.entries.is_empty() {
        return Err(invalid("empty spectrum"));
    }
    let lambda = spec.max_abs();
    let (scale, rescale): (f64, Box<dyn Fn(f64) -> f64>) = match reading {
        VolumeReading::Squared => {
            let s = probe_scale_for(lambda * lambda)?;
            (s, Box::new(move |v: f64| s * v * v))
        }
        VolumeReading::Absolute => {
            let s = probe_scale_for(lambda)?;
            (s, Box::new(move |v: f64| s * v.abs()))
        }
    };
    let sum: f64 = spec
        .weighted()
        .map(|(v, mult)| {
            let lp = rescale(v);
            mult * (-lp - 1.0).exp() / (lp + 1.0)
        })
        .sum();
    let half_d = d as f64 / 2.0;
    let gamma = upper_gamma_one_minus_half(d, 1.0)?;
    Ok((4.0 * PI).powf(half_d) / calibration * scale.powf(half_d) * sum * gamma)
}

/// Volume with the default eigenvalue reading.
pub fn volume(spec: &EigenvalueTable, d: u32, calibration: f64) -> Result<f64> {
    volume_with(spec, d, calibration, VolumeReading::default())
}

/// Twice the area of the unit round sphere, the reference for volume ratios.
pub const REFERENCE_VOLUME: f64 = 8.0 * PI;

/// The divisor `m` that makes the ratio `V/(8π)` exactly one for the round
/// `n = 20` spectrum.
pub fn calibrate_volume(d: u32, reading: VolumeReading) -> Result<f64> {
    let reference = analytic_spectrum(CALIBRATION_N, 1.0, CALIBRATION_C)?;
    Ok(volume_with(&reference, d, 1.0, reading)? / REFERENCE_VOLUME)
}

/// `max(1, ⌊V / (δ^d B_d)⌋)` with `B_d` the unit-ball volume.
pub fn max_states(v_geom: f64, delta: f64, d: u32) -> Result<usize> {
    if !(v_geom > 0.0) || !(delta > 0.0) || d == 0 {
        return Err(invalid(format!(
            "max_states needs v > 0, delta > 0, d >= 1; got v={v_geom}, delta={delta}, d={d}"
        )));
    }
    let count = (v_geom / (delta.powi(d as i32) * unit_ball_volume(d))).floor();
    Ok(if count.is_finite() {
        count.max(1.0) as usize
    } else {
        usize::MAX
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub t: Vec<f64>,
    pub spectral_dimension: Vec<f64>,
    pub spectral_variance: Vec<f64>,
}

impl Curves {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = std::io::BufWriter::new(w);
        writeln!(w, "t,d_s,v_s")?;
        for i in 0..self.t.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e}",
                self.t[i], self.spectral_dimension[i], self.spectral_variance[i]
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `count` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Both curves on `[t_d/100, 100 t_d]`.
pub fn curves(spec: &EigenvalueTable) -> Result<Curves> {
    let td = probe_scale(spec)?;
    let t = log_grid(td / 100.0, td * 100.0, CURVE_POINTS);
    let spectral_dimension = t
        .iter()
        .map(|&x| spectral_dimension(spec, x))
        .collect::<Result<Vec<_>>>()?;
    let spectral_variance = t
        .iter()
        .map(|&x| spectral_variance(spec, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(Curves {
        t,
        spectral_dimension,
        spectral_variance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableReport {
    pub n: usize,
    pub lambda_max: f64,
    pub t_d: f64,
    pub spectral_dimension_at_t_d: f64,
    pub spectral_variance_at_t_d: f64,
    pub dimension_estimate: u32,
    pub low_resolution: bool,
    pub volume: f64,
    pub volume_ratio: f64,
    pub volume_calibration: f64,
    pub volume_reading: VolumeReading,
    /// Present once a localization length is known.
    pub localization_length: Option<f64>,
    pub max_states: Option<usize>,
    pub curves: Curves,
}

/// All observables of one spectrum. The volume uses `d` from the dimension
/// estimate (at least 1).
pub fn observable_report(
    spec: &EigenvalueTable,
    calibration: f64,
    reading: VolumeReading,
    localization_length: Option<f64>,
) -> Result<ObservableReport> {
    let t_d = probe_scale(spec)?;
    let ds = spectral_dimension(spec, t_d)?;
    let dimension = dimension_estimate(spec)?;
    let vol = volume_with(spec, dimension.max(1), calibration, reading)?;
    let max_states = localization_length
        .map(|delta| max_states(vol, delta, dimension.max(1)))
        .transpose()?;
    Ok(ObservableReport {
        n: spec.n,
        lambda_max: spec.max_abs(),
        t_d,
        spectral_dimension_at_t_d: ds,
        spectral_variance_at_t_d: spectral_variance(spec, t_d)?,
        dimension_estimate: dimension,
        low_resolution: spec.n < LOW_RESOLUTION_N,
        volume: vol,
        volume_ratio: vol / REFERENCE_VOLUME,
        volume_calibration: calibration,
        volume_reading: reading,
        localization_length,
        max_states,
        curves: curves(spec)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::EigenvalueTable;

    fn table(values: &[f64]) -> EigenvalueTable {
        EigenvalueTable::from_values(1, values.to_vec())
    }

    #[test]
    fn trivial_moments() {
        assert!((spectral_dimension(&table(&[1.0, -1.0]), 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((spectral_dimension(&table(&[2.0, -2.0]), 0.5).unwrap() - 4.0).abs() < 1e-15);
        assert!(spectral_variance(&table(&[1.0, -1.0]), 3.7).unwrap().abs() < 1e-15);
        assert!(spectral_dimension(&table(&[1.0]), 0.0).is_err());
        assert!(spectral_dimension(&table(&[1.0]), -1.0).is_err());
    }

    #[test]
    fn probe_scale_values() {
        let one = probe_scale(&table(&[1.0, -1.0])).unwrap();
        assert!((one - 2f64.ln().powi(2)).abs() < 1e-15);
        assert!((one - 0.480_453_013_918_201_4).abs() < 1e-12);
        let round = analytic_spectrum(20, 1.0, 1.0).unwrap();
        let td = probe_scale(&round).unwrap();
        assert!((td - 21f64.ln().powi(2) / 20.0).abs() < 1e-15);
        assert!((td - 0.4634).abs() < 1e-4);
        assert!(matches!(probe_scale(&table(&[0.0, 0.0])), Err(Error::Degenerate(_))));
    }

    #[test]
    fn unit_spectrum_dimension_is_one() {
        // 2·(log 2)²·1 = 0.961 rounds to 1
        assert_eq!(dimension_estimate(&table(&[1.0, -1.0])).unwrap(), 1);
    }

    #[test]
    fn underflow_is_avoided() {
        let t = table(&[1e3, -1e3, 1e3 + 1.0]);
        let ds = spectral_dimension(&t, 10.0).unwrap();
        assert!(ds.is_finite() && ds > 0.0);
    }

    #[test]
    fn max_states_unit_case() {
        assert_eq!(max_states(PI, 1.0, 2).unwrap(), 1);
        assert_eq!(max_states(1e-9, 1.0, 2).unwrap(), 1);
        assert_eq!(max_states(10.0 * PI, 1.0, 2).unwrap(), 10);
        assert!(max_states(1.0, 0.0, 2).is_err());
    }

    #[test]
    fn calibration_fixes_reference_ratio() {
        for reading in [VolumeReading::Squared, VolumeReading::Absolute] {
            let m = calibrate_volume(2, reading).unwrap();
            let round = analytic_spectrum(20, 1.0, 1.0).unwrap();
            let ratio = volume_with(&round, 2, m, reading).unwrap() / REFERENCE_VOLUME;
            assert!((ratio - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_is_logarithmic() {
        let g = log_grid(0.01, 100.0, 5);
        for (a, b) in g.iter().zip([0.01, 0.1, 1.0, 10.0, 100.0]) {
            assert!((a - b).abs() < 1e-12 * b);
        }
    }

    #[test]
    fn report_fields() {
        let spec = analytic_spectrum(8, 1.0, 1.0).unwrap();
        let m = calibrate_volume(2, VolumeReading::Squared).unwrap();
        let r = observable_report(&spec, m, VolumeReading::Squared, Some(0.3)).unwrap();
        assert_eq!(r.dimension_estimate, 2);
        assert!(!r.low_resolution);
        assert_eq!(r.curves.t.len(), CURVE_POINTS);
        assert!(r.curves.t.windows(2).all(|w| w[1] > w[0]));
        assert!(r.max_states.unwrap() >= 1);
        let mut buf = Vec::new();
        r.curves.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), CURVE_POINTS + 1);
    }
}
