//! Localized pure states of `M_n(C)`.
//!
//! A state is a unit vector `ψ ∈ C^n`. Its coordinates are the expectations
//! of the hermitian generators `J_i = i L_i`, and its dispersion proxy is the
//! summed variance `Σ_i ⟨J_i²⟩ − ⟨J_i⟩²`. States are generated one after the
//! other by minimizing the proxy plus a Coulomb repulsion `g / d̃` from the
//! states already placed.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{c, random_unit_vector, CMatrix, CVector};
use crate::triple::{DeformationParams, Su2Generators};

/// How coordinates are obtained from the anti-hermitian generators.
pub const COORDINATE_CONVENTION: &str = "expectations of J_i = i L_i";

const NORM_TOL: f64 = 1e-10;
const COINCIDENT_TOL: f64 = 1e-12;

/// Default Coulomb coupling `0.05 · l`.
pub fn default_coulomb_g(n: usize) -> f64 {
    0.05 * (n as f64 - 1.0) / 2.0
}

fn check_unit(psi: &CVector, n: usize) -> Result<()> {
    if psi.len() != n {
        return Err(invalid(format!("state has length {}, expected {n}", psi.len())));
    }
    let norm = psi.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(invalid(format!("state is not normalized (norm {norm})")));
    }
    Ok(())
}

fn expect_real(psi: &CVector, a: &CMatrix) -> f64 {
    psi.dotc(&(a * psi)).re
}

/// `(⟨J₁⟩, ⟨J₂⟩, ⟨J₃⟩)`.
pub fn coordinates(psi: &CVector, j: &[CMatrix; 3]) -> [f64; 3] {
    [
        expect_real(psi, &j[0]),
        expect_real(psi, &j[1]),
        expect_real(psi, &j[2]),
    ]
}

fn dispersion_hermitian(psi: &CVector, j: &[CMatrix; 3]) -> f64 {
    j.iter()
        .map(|jk| {
            let v = jk * psi;
            let mean = psi.dotc(&v).re;
            v.norm_squared() - mean * mean
        })
        .sum::<f64>()
        .max(0.0)
}

/// `Σ_i ⟨J_i²⟩ − ⟨J_i⟩²` for a unit vector.
pub fn dispersion_proxy(psi: &CVector, gens: &Su2Generators) -> Result<f64> {
    check_unit(psi, gens.n)?;
    Ok(dispersion_hermitian(psi, &gens.hermitian_all()))
}

fn coordinate_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizedState {
    #[serde(with = "interleaved")]
    pub vector: CVector,
    pub dispersion: f64,
    pub coordinates: [f64; 3],
    pub seed_index: usize,
}

impl LocalizedState {
    pub fn new(vector: CVector, gens: &Su2Generators, seed_index: usize) -> Result<Self> {
        let j = gens.hermitian_all();
        check_unit(&vector, gens.n)?;
        Ok(LocalizedState {
            dispersion: dispersion_hermitian(&vector, &j),
            coordinates: coordinates(&vector, &j),
            vector,
            seed_index,
        })
    }

    /// `s(a) = ⟨ψ, a ψ⟩`, real for hermitian `a`.
    pub fn evaluate(&self, a: &CMatrix) -> f64 {
        expect_real(&self.vector, a)
    }
}

/// Euclidean norm of the coordinate difference.
pub fn distance_proxy(s1: &LocalizedState, s2: &LocalizedState) -> f64 {
    coordinate_distance(&s1.coordinates, &s2.coordinates)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateEnsemble {
    pub states: Vec<LocalizedState>,
    pub coulomb_g: f64,
    pub generator_n: usize,
    pub deformation: DeformationParams,
    pub rng_seed: u64,
    pub coordinate_convention: String,
}

impl StateEnsemble {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn mean_dispersion(&self) -> f64 {
        mean_dispersion(&self.states)
    }
}

pub fn mean_dispersion(states: &[LocalizedState]) -> f64 {
    if states.is_empty() {
        return f64::NAN;
    }
    states.iter().map(|s| s.dispersion).sum::<f64>() / states.len() as f64
}

/// Mean dispersion rescaled to a unit coordinate sphere,
/// `sqrt(mean δ̃ / l(l+1))`.
pub fn localization_length(states: &[LocalizedState], gens: &Su2Generators) -> Result<f64> {
    if states.is_empty() {
        return Err(invalid("no states to measure"));
    }
    let r2 = gens.radius_squared();
    if r2 == 0.0 {
        return Err(Error::Degenerate("a one-point geometry has no length scale".into()));
    }
    Ok((mean_dispersion(states) / r2).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateOptions {
    /// Coulomb coupling; `None` selects [`default_coulomb_g`].
    pub coulomb_g: Option<f64>,
    pub restarts: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for StateOptions {
    fn default() -> Self {
        StateOptions {
            coulomb_g: None,
            restarts: 8,
            max_iter: 5000,
            rel_tol: 1e-9,
        }
    }
}

struct Minimum {
    psi: CVector,
    energy: f64,
}

/// Sequential generator; each call to [`StateGenerator::next_state`] places
/// one more state against all previous ones.
pub struct StateGenerator<'a> {
    gens: &'a Su2Generators,
    j: [CMatrix; 3],
    g: f64,
    opts: StateOptions,
    seed: u64,
    attempts: usize,
    states: Vec<LocalizedState>,
}

impl<'a> StateGenerator<'a> {
    pub fn new(gens: &'a Su2Generators, opts: StateOptions, seed: u64) -> Result<Self> {
        let g = opts.coulomb_g.unwrap_or_else(|| default_coulomb_g(gens.n));
        if !(g > 0.0) && gens.n > 1 {
            return Err(invalid(format!("Coulomb coupling must be positive, got {g}")));
        }
        if opts.restarts == 0 || opts.max_iter == 0 || !(opts.rel_tol > 0.0) {
            return Err(invalid("restarts, max_iter and rel_tol must be positive"));
        }
        Ok(StateGenerator {
            gens,
            j: gens.hermitian_all(),
            g,
            opts,
            seed,
            attempts: 0,
            states: Vec::new(),
        })
    }

    pub fn coulomb_g(&self) -> f64 {
        self.g
    }

    pub fn states(&self) -> &[LocalizedState] {
        &self.states
    }

    fn energy(&self, psi: &CVector) -> (f64, [f64; 3]) {
        let x = coordinates(psi, &self.j);
        let mut e = dispersion_hermitian(psi, &self.j);
        for s in &self.states {
            e += self.g / coordinate_distance(&x, &s.coordinates);
        }
        (e, x)
    }

    /// Tangent gradient of the energy with respect to the real coordinates of `ψ`.
    fn gradient(&self, psi: &CVector, x: &[f64; 3]) -> CVector {
        let jpsi: Vec<CVector> = self.j.iter().map(|jk| jk * psi).collect();
        let mut coeff = [-2.0 * x[0], -2.0 * x[1], -2.0 * x[2]];
        for s in &self.states {
            let r = coordinate_distance(x, &s.coordinates);
            let w = -self.g / (r * r * r);
            for k in 0..3 {
                coeff[k] += w * (x[k] - s.coordinates[k]);
            }
        }
        let mut grad = CVector::zeros(psi.len());
        for k in 0..3 {
            grad.axpy(c(2.0 * coeff[k], 0.0), &jpsi[k], c(1.0, 0.0));
        }
        let radial = psi.dotc(&grad).re;
        grad.axpy(c(-radial, 0.0), psi, c(1.0, 0.0));
        grad
    }

    fn descend(&self, mut psi: CVector) -> Option<Minimum> {
        let (mut energy, mut x) = self.energy(&psi);
        if !energy.is_finite() {
            return None;
        }
        let mut step = 0.5 / self.gens.spin().max(0.5);
        for _ in 0..self.opts.max_iter {
            let grad = self.gradient(&psi, &x);
            if grad.norm() < 1e-14 {
                break;
            }
            let mut accepted = false;
            while step > 1e-16 {
                let mut trial = &psi - &grad * c(step, 0.0);
                let norm = trial.norm();
                trial /= c(norm, 0.0);
                let (e, tx) = self.energy(&trial);
                if e.is_finite() && e < energy {
                    let rel = (energy - e) / energy.abs().max(f64::MIN_POSITIVE);
                    psi = trial;
                    energy = e;
                    x = tx;
                    step *= 1.2;
                    accepted = true;
                    if rel < self.opts.rel_tol {
                        return Some(Minimum { psi, energy });
                    }
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Some(Minimum { psi, energy })
    }

    /// Place the next state. `None` means no restart produced a usable
    /// minimum; the failure is logged and the ensemble is left unchanged.
    pub fn next_state(&mut self) -> Option<&LocalizedState> {
        let index = self.states.len();
        let attempt = self.attempts;
        self.attempts += 1;
        if self.gens.n == 1 && index >= 1 {
            warn!("a one-dimensional algebra has a single pure state; skipping state {index}");
            return None;
        }
        let restarts = self.opts.restarts;
        let seed = self.seed;
        let best = (0..restarts)
            .into_par_iter()
            .filter_map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((attempt as u64) << 16) | r as u64);
                let start = random_unit_vector(self.gens.n, &mut rng);
                self.descend(start).map(|m| (r, m))
            })
            .collect::<Vec<_>>()
            .into_iter()
            .min_by(|(ra, a), (rb, b)| a.energy.total_cmp(&b.energy).then(ra.cmp(rb)));
        let Some((_, min)) = best else {
            warn!("state {index}: no restart converged to a finite energy; skipped");
            return None;
        };
        let state = match LocalizedState::new(min.psi, self.gens, index) {
            Ok(s) => s,
            Err(e) => {
                warn!("state {index}: {e}; skipped");
                return None;
            }
        };
        if self.states.iter().any(|s| distance_proxy(s, &state) < COINCIDENT_TOL) {
            warn!("state {index} coincides with an earlier state; skipped");
            return None;
        }
        self.states.push(state);
        self.states.last()
    }

    /// Keep adding states until `target` is reached or `target` attempts
    /// in a row have failed.
    pub fn fill_to(&mut self, target: usize) {
        let mut failures = 0;
        while self.states.len() < target && failures < target.max(1) {
            if self.next_state().is_none() {
                failures += 1;
            }
            if self.gens.n == 1 && !self.states.is_empty() {
                break;
            }
        }
        if self.states.len() < target {
            warn!("generated {} of {target} requested states", self.states.len());
        }
    }

    pub fn into_ensemble(self, deformation: DeformationParams) -> StateEnsemble {
        StateEnsemble {
            states: self.states,
            coulomb_g: self.g,
            generator_n: self.gens.n,
            deformation,
            rng_seed: self.seed,
            coordinate_convention: COORDINATE_CONVENTION.to_string(),
        }
    }
}

/// Generate `target_count` states with coupling `g` from a fixed seed.
pub fn generate_states(
    gens: &Su2Generators,
    target_count: usize,
    g: f64,
    seed: u64,
    deformation: DeformationParams,
) -> Result<StateEnsemble> {
    generate_states_with(
        gens,
        target_count,
        StateOptions {
            coulomb_g: Some(g),
            ..StateOptions::default()
        },
        seed,
        deformation,
    )
}

pub fn generate_states_with(
    gens: &Su2Generators,
    target_count: usize,
    opts: StateOptions,
    seed: u64,
    deformation: DeformationParams,
) -> Result<StateEnsemble> {
    if target_count == 0 {
        return Err(invalid("target_count must be at least 1"));
    }
    let mut generator = StateGenerator::new(gens, opts, seed)?;
    generator.fill_to(target_count);
    Ok(generator.into_ensemble(deformation))
}

mod interleaved {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg::CVector;

    pub fn serialize<S: Serializer>(v: &CVector, s: S) -> Result<S::Ok, S::Error> {
        let flat: Vec<f64> = v.iter().flat_map(|z| [z.re, z.im]).collect();
        flat.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CVector, D::Error> {
        let flat = Vec::<f64>::deserialize(d)?;
        if flat.len() % 2 != 0 {
            return Err(serde::de::Error::custom("interleaved complex vector has odd length"));
        }
        Ok(CVector::from_iterator(
            flat.len() / 2,
            flat.chunks(2).map(|p| Complex64::new(p[0], p[1])),
        ))
    }
}
