//! Eigenvalue tables: closed form for the two-parameter deformation,
//! dense diagonalization otherwise, and multiset comparison.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::hermitian_eigenvalues;
use crate::triple::FiniteSpectralTriple;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    PositiveRoot,
    NegativeRoot,
    Numeric,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::PositiveRoot => "positive-root",
            Branch::NegativeRoot => "negative-root",
            Branch::Numeric => "numeric",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "positive-root" => Ok(Branch::PositiveRoot),
            "negative-root" => Ok(Branch::NegativeRoot),
            "numeric" => Ok(Branch::Numeric),
            other => Err(invalid(format!("unknown branch {other:?}"))),
        }
    }
}

/// One eigenvalue with multiplicity. Half-integer labels are stored doubled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub value: f64,
    pub multiplicity: u32,
    pub branch: Branch,
    pub two_j: Option<u32>,
    pub two_k: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueTable {
    pub n: usize,
    pub entries: Vec<SpectrumEntry>,
}

impl EigenvalueTable {
    pub fn total_multiplicity(&self) -> usize {
        self.entries.iter().map(|e| e.multiplicity as usize).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.total_multiplicity() == 4 * self.n * self.n
    }

    /// All eigenvalues repeated by multiplicity, ascending.
    pub fn expanded(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.value, e.multiplicity as usize))
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// `(value, multiplicity)` pairs.
    pub fn weighted(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.entries.iter().map(|e| (e.value, e.multiplicity as f64))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.value.abs()))
    }

    /// Largest deviation from symmetry under `λ ↦ −λ`.
    pub fn symmetry_defect(&self) -> f64 {
        let v = self.expanded();
        let m = v.len();
        (0..m).fold(0.0, |acc, i| acc.max((v[i] + v[m - 1 - i]).abs()))
    }

    /// Build a numeric table from raw eigenvalues.
    pub fn from_values(n: usize, mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        let entries = values
            .into_iter()
            .map(|value| SpectrumEntry {
                value,
                multiplicity: 1,
                branch: Branch::Numeric,
                two_j: None,
                two_k: None,
            })
            .collect();
        EigenvalueTable { n, entries }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = std::io::BufWriter::new(w);
        writeln!(w, "value,multiplicity,branch,two_j,two_k")?;
        let opt = |x: Option<u32>| x.map(|v| v.to_string()).unwrap_or_default();
        for e in &self.entries {
            writeln!(
                w,
                "{:.16e},{},{},{},{}",
                e.value,
                e.multiplicity,
                e.branch.as_str(),
                opt(e.two_j),
                opt(e.two_k)
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`EigenvalueTable::write_csv`]; `n` is not stored in the
    /// file and is inferred from the total multiplicity.
    pub fn read_csv<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "value,multiplicity,branch,two_j,two_k" => {}
            other => return Err(invalid(format!("unexpected spectrum CSV header {other:?}"))),
        }
        let mut entries = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| invalid(format!("spectrum CSV line {}: bad {what}", lineno + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad("field count"));
            }
            let opt = |s: &str| -> Result<Option<u32>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad("half-integer label"))
                }
            };
            entries.push(SpectrumEntry {
                value: f[0].parse().map_err(|_| bad("value"))?,
                multiplicity: f[1].parse().map_err(|_| bad("multiplicity"))?,
                branch: Branch::parse(f[2])?,
                two_j: opt(f[3])?,
                two_k: opt(f[4])?,
            });
        }
        let total: usize = entries.iter().map(|e| e.multiplicity as usize).sum();
        let n = ((total / 4) as f64).sqrt().round() as usize;
        Ok(EigenvalueTable { n, entries })
    }
}

/// Closed-form spectrum of the deformation `(c0, c12, c13, c23) = (a, c, 1, 1)`.
///
/// Positive branch: `±(a − c/2 + √(j² + (c²−1)k²))` for `j = 1/2 … n−1/2`;
/// negative branch: `±(a − c/2 − √((j+1)² + (c²−1)k²))` for `j = 1/2 … n−3/2`;
/// in both `k = 1/2 … j`, each signed value with multiplicity two.
pub fn analytic_spectrum(n: usize, a: f64, c: f64) -> Result<EigenvalueTable> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if !a.is_finite() || !c.is_finite() {
        return Err(invalid("a and c must be finite"));
    }
    let shift = a - c / 2.0;
    let c2m1 = c * c - 1.0;
    let mut entries = Vec::with_capacity(2 * n * n);
    let mut push = |x: f64, branch: Branch, two_j: u32, two_k: u32| {
        for value in [x, -x] {
            entries.push(SpectrumEntry {
                value,
                multiplicity: 2,
                branch,
                two_j: Some(two_j),
                two_k: Some(two_k),
            });
        }
    };
    let n2 = n as u32;
    for two_j in (1..2 * n2).step_by(2) {
        let j = two_j as f64 / 2.0;
        for two_k in (1..=two_j).step_by(2) {
            let k = two_k as f64 / 2.0;
            let root = (j * j + c2m1 * k * k).max(0.0).sqrt();
            push(shift + root, Branch::PositiveRoot, two_j, two_k);
        }
    }
    for two_j in (1..2 * n2.saturating_sub(1)).step_by(2) {
        let j = two_j as f64 / 2.0;
        for two_k in (1..=two_j).step_by(2) {
            let k = two_k as f64 / 2.0;
            let root = ((j + 1.0) * (j + 1.0) + c2m1 * k * k).max(0.0).sqrt();
            push(shift - root, Branch::NegativeRoot, two_j, two_k);
        }
    }
    Ok(EigenvalueTable { n, entries })
}

/// Dense diagonalization of the assembled Dirac operator.
pub fn numeric_spectrum(t: &FiniteSpectralTriple) -> Result<EigenvalueTable> {
    let values = hermitian_eigenvalues(&t.dirac)?;
    Ok(EigenvalueTable::from_values(t.n, values))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDiff {
    pub count: usize,
    pub max_abs_deviation: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

/// Positional comparison of the sorted expansions, which is the optimal
/// matching for one-dimensional multisets.
pub fn compare_spectra(x: &EigenvalueTable, y: &EigenvalueTable, tol: f64) -> Result<SpectrumDiff> {
    let a = x.expanded();
    let b = y.expanded();
    if a.len() != b.len() {
        return Err(Error::StructuralMismatch(format!(
            "tables hold {} and {} eigenvalues",
            a.len(),
            b.len()
        )));
    }
    let max_abs_deviation = a.iter().zip(&b).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()));
    Ok(SpectrumDiff {
        count: a.len(),
        max_abs_deviation,
        tolerance: tol,
        within_tolerance: max_abs_deviation <= tol,
    })
}
