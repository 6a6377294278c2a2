//! End-to-end run: spectrum, observables, states, distances, embedding, fit.
//!
//! [`run_pipeline`] hands the partially filled [`PipelineOutput`] to a
//! callback after each stage so callers can persist artifacts as they appear.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::algebra::{build_basis, BasisKind};
use crate::distance::{
    check_witnesses, distance_matrix, max_triangle_violation, DistanceMatrix, DistanceOptions, WitnessCheck,
};
use crate::embed::{
    distance_histogram, euclidean_distances, expected_axes, fit_ellipsoid, great_circle_distances, sample_ellipsoid,
    smacof_embed, sorted3, EllipsoidFit, EmbeddingResult, Histogram, SmacofOptions, MIN_STARTS,
};
use crate::error::{invalid, Error, Result};
use crate::observables::{calibrate_volume, dimension_estimate, observable_report, ObservableReport, VolumeReading};
use crate::spectrum::{analytic_spectrum, compare_spectra, numeric_spectrum, EigenvalueTable, SpectrumDiff};
use crate::states::{localization_length, StateEnsemble, StateGenerator, StateOptions};
use crate::triple::{build_deformed_dirac, su2_generators, DeformationParams};

/// Size of the first batch of states used to measure the localization length.
pub const INITIAL_BATCH: usize = 5;

/// Tolerance for agreement of the closed-form and numeric spectra.
pub const SPECTRUM_TOLERANCE: f64 = 1e-8;

/// A value that is either given or derived during the run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Auto<T> {
    #[default]
    Auto,
    Value(T),
}

impl<T: Copy> Auto<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            Auto::Auto => None,
            Auto::Value(v) => Some(*v),
        }
    }
}

impl<T: Serialize> Serialize for Auto<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Auto::Auto => s.serialize_str("auto"),
            Auto::Value(v) => v.serialize(s),
        }
    }
}

impl<'de, T: DeserializeOwned> Deserialize<'de> for Auto<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = serde_json::Value::deserialize(d)?;
        if raw.as_str() == Some("auto") {
            return Ok(Auto::Auto);
        }
        serde_json::from_value(raw)
            .map(Auto::Value)
            .map_err(|e| serde::de::Error::custom(format!("expected \"auto\" or a value: {e}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmacofWeights {
    /// `w_ij = 1`.
    #[default]
    Uniform,
    /// `w_ij = δ_ij⁻²`, emphasizing short distances.
    InverseSquare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub n: usize,
    pub c0: f64,
    pub c12: f64,
    pub c13: f64,
    pub c23: f64,
    pub seed: u64,
    pub coulomb_g: Auto<f64>,
    pub basis: BasisKind,
    pub target_states: Auto<usize>,
    pub embed_dim: usize,
    pub states: StateOptions,
    pub distance: DistanceOptions,
    pub smacof: SmacofOptions,
    pub smacof_weights: SmacofWeights,
    pub fit_starts: usize,
    /// `None` selects the Freedman–Diaconis rule.
    pub histogram_bins: Option<usize>,
    pub volume_calibration: Auto<f64>,
    pub volume_reading: VolumeReading,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 8,
            c0: 1.0,
            c12: 1.0,
            c13: 1.0,
            c23: 1.0,
            seed: 0,
            coulomb_g: Auto::Auto,
            basis: BasisKind::Pbw,
            target_states: Auto::Auto,
            embed_dim: 3,
            states: StateOptions::default(),
            distance: DistanceOptions::default(),
            smacof: SmacofOptions::default(),
            smacof_weights: SmacofWeights::Uniform,
            fit_starts: MIN_STARTS,
            histogram_bins: None,
            volume_calibration: Auto::Auto,
            volume_reading: VolumeReading::Squared,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn deformation(&self) -> DeformationParams {
        DeformationParams::new(self.c0, self.c12, self.c13, self.c23)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n: must be at least 1"));
        }
        if self.embed_dim == 0 {
            return Err(invalid("embed_dim: must be at least 1"));
        }
        self.deformation().validate()?;
        if let Auto::Value(g) = self.coulomb_g {
            if !(g > 0.0) || !g.is_finite() {
                return Err(invalid(format!("coulomb_g: must be positive, got {g}")));
            }
        }
        if let Auto::Value(0) = self.target_states {
            return Err(invalid("target_states: must be at least 1"));
        }
        if let Auto::Value(m) = self.volume_calibration {
            if !(m > 0.0) || !m.is_finite() {
                return Err(invalid(format!("volume_calibration: must be positive, got {m}")));
            }
        }
        if self.states.restarts == 0 || self.states.max_iter == 0 || !(self.states.rel_tol > 0.0) {
            return Err(invalid("states: restarts, max_iter and rel_tol must be positive"));
        }
        self.distance
            .validate()
            .map_err(|e| invalid(format!("distance: {e}")))?;
        let s = &self.smacof;
        if s.restarts == 0 || s.max_iter == 0 || !(s.eps > 0.0) {
            return Err(invalid("smacof: restarts, max_iter and eps must be positive"));
        }
        if self.histogram_bins == Some(0) {
            return Err(invalid("histogram_bins: must be at least 1"));
        }
        Ok(())
    }

    /// Seeds for the stochastic stages, each derived from `seed`.
    pub fn stage_seeds(&self) -> StageSeeds {
        StageSeeds {
            states: self.seed,
            distances: self.seed.wrapping_add(1),
            embedding: self.seed.wrapping_add(2),
            fit: self.seed.wrapping_add(3),
            samples: self.seed.wrapping_add(4),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub states: u64,
    pub distances: u64,
    pub embedding: u64,
    pub fit: u64,
    pub samples: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Spectrum,
    Observables,
    States,
    Distances,
    Embed,
    Fit,
    Report,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Spectrum => "spectrum",
            Stage::Observables => "observables",
            Stage::States => "states",
            Stage::Distances => "distances",
            Stage::Embed => "embed",
            Stage::Fit => "fit",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An error together with the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumStage {
    /// Closed form when available, numeric otherwise.
    pub primary: EigenvalueTable,
    pub numeric: EigenvalueTable,
    pub analytic: Option<EigenvalueTable>,
    pub diff: Option<SpectrumDiff>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub pairs: usize,
    pub mean: f64,
    pub max: f64,
    pub all_converged: bool,
    pub max_triangle_violation: f64,
    pub witness: WitnessCheck,
}

/// Pairwise-distance means of the Connes distances and of matched continuum
/// samples on a sphere of the fitted radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramStage {
    pub connes: Histogram,
    pub chord_sample: Histogram,
    pub arc_sample: Histogram,
    pub radius: f64,
    pub normalized_connes_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitStage {
    pub fit: EllipsoidFit,
    /// Sorted `(1/(c12 c13), 1/(c12 c23), 1/(c13 c23))`.
    pub expected_axes: Option<[f64; 3]>,
    pub deformation: DeformationParams,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub spectrum: f64,
    pub observables: f64,
    pub states: f64,
    pub distances: f64,
    pub embed: f64,
    pub fit: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.spectrum + self.observables + self.states + self.distances + self.embed + self.fit
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n: usize,
    pub deformation: DeformationParams,
    pub seed: u64,
    pub seeds: StageSeeds,
    pub state_count: usize,
    pub max_states: Option<usize>,
    pub target_from_heuristic: bool,
    pub localization_length: f64,
    pub mean_dispersion: f64,
    pub coulomb_g: f64,
    pub dimension_estimate: u32,
    pub volume_ratio: f64,
    pub volume_calibration: f64,
    pub distances: DistanceSummary,
    pub stress: f64,
    pub mean_correlation: f64,
    pub min_correlation: f64,
    pub fit: Option<FitStage>,
    pub normalized_connes_mean: Option<f64>,
}

/// Everything a run produces; fields fill in stage by stage.
#[derive(Clone, Debug, Default)]
pub struct PipelineOutput {
    pub config: RunConfig,
    pub spectrum: Option<SpectrumStage>,
    pub observables: Option<ObservableReport>,
    pub states: Option<StateEnsemble>,
    pub distances: Option<DistanceMatrix>,
    pub distance_summary: Option<DistanceSummary>,
    pub embedding: Option<EmbeddingResult>,
    pub fit: Option<FitStage>,
    pub histograms: Option<HistogramStage>,
    pub report: Option<PipelineReport>,
    pub timings: StageTimings,
}

fn staged<T>(stage: Stage, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|error| StageError { stage, error })
}

pub fn spectrum_stage(params: DeformationParams, n: usize) -> Result<SpectrumStage> {
    let t = build_deformed_dirac(n, params)?;
    let numeric = numeric_spectrum(&t)?;
    let analytic = params
        .restricted_form()
        .map(|(a, c)| analytic_spectrum(n, a, c))
        .transpose()?;
    let diff = analytic
        .as_ref()
        .map(|a| compare_spectra(a, &numeric, SPECTRUM_TOLERANCE))
        .transpose()?;
    Ok(SpectrumStage {
        primary: analytic.clone().unwrap_or_else(|| numeric.clone()),
        numeric,
        analytic,
        diff,
    })
}

/// Volume calibration constant for a config, computed when `auto`.
pub fn resolve_calibration(cfg: &RunConfig, spec: &EigenvalueTable) -> Result<f64> {
    match cfg.volume_calibration {
        Auto::Value(m) => Ok(m),
        Auto::Auto => calibrate_volume(dimension_estimate(spec)?.max(1), cfg.volume_reading),
    }
}

pub fn smacof_weight_matrix(kind: SmacofWeights, dm: &DistanceMatrix) -> Option<nalgebra::DMatrix<f64>> {
    match kind {
        SmacofWeights::Uniform => None,
        SmacofWeights::InverseSquare => Some(nalgebra::DMatrix::from_fn(dm.size, dm.size, |i, j| {
            let d = dm.values[i][j];
            if i == j || d <= 0.0 {
                0.0
            } else {
                1.0 / (d * d)
            }
        })),
    }
}

fn summarize(dm: &DistanceMatrix, witness: WitnessCheck) -> DistanceSummary {
    let upper = dm.upper_values();
    DistanceSummary {
        pairs: upper.len(),
        mean: upper.iter().sum::<f64>() / upper.len().max(1) as f64,
        max: upper.iter().cloned().fold(0.0, f64::max),
        all_converged: dm.all_converged(),
        max_triangle_violation: max_triangle_violation(&dm.values),
        witness,
    }
}

/// Runs the stages up to and including `until`; `cache_root` enables the
/// per-pair distance cache.
pub fn run_pipeline<F>(
    cfg: &RunConfig,
    cache_root: Option<&Path>,
    until: Stage,
    mut after_stage: F,
) -> std::result::Result<PipelineOutput, StageError>
where
    F: FnMut(Stage, &PipelineOutput) -> Result<()>,
{
    staged(Stage::Spectrum, cfg.validate())?;
    let seeds = cfg.stage_seeds();
    let params = cfg.deformation();
    let mut out = PipelineOutput {
        config: cfg.clone(),
        ..PipelineOutput::default()
    };
    let mut notify = |stage: Stage, out: &PipelineOutput| staged(stage, after_stage(stage, out));

    let clock = Instant::now();
    let spectrum = staged(Stage::Spectrum, spectrum_stage(params, cfg.n))?;
    if let Some(diff) = &spectrum.diff {
        if !diff.within_tolerance {
            return Err(StageError {
                stage: Stage::Spectrum,
                error: Error::Numerical(format!(
                    "numeric and closed-form spectra differ by {:.3e}",
                    diff.max_abs_deviation
                )),
            });
        }
    }
    out.spectrum = Some(spectrum);
    out.timings.spectrum = clock.elapsed().as_secs_f64();
    notify(Stage::Spectrum, &out)?;
    if until == Stage::Spectrum {
        return Ok(out);
    }
    let primary = &out.spectrum.as_ref().expect("spectrum stage").primary;

    let clock = Instant::now();
    let calibration = staged(Stage::Observables, resolve_calibration(cfg, primary))?;
    let gens = staged(Stage::States, su2_generators(cfg.n))?;
    let opts = StateOptions {
        coulomb_g: cfg.coulomb_g.value().or(cfg.states.coulomb_g),
        ..cfg.states.clone()
    };
    let mut generator = staged(Stage::States, StateGenerator::new(&gens, opts, seeds.states))?;
    let clock_states = Instant::now();
    let batch = match cfg.target_states {
        Auto::Auto => INITIAL_BATCH,
        Auto::Value(k) => k.min(INITIAL_BATCH),
    };
    generator.fill_to(batch);
    let states_time = clock_states.elapsed().as_secs_f64();
    let delta = if cfg.n > 1 && !generator.states().is_empty() {
        Some(staged(
            Stage::Observables,
            localization_length(generator.states(), &gens),
        )?)
    } else {
        None
    };
    let observables = staged(
        Stage::Observables,
        observable_report(primary, calibration, cfg.volume_reading, delta),
    )?;
    let heuristic = observables.max_states;
    out.observables = Some(observables);
    out.timings.observables = clock.elapsed().as_secs_f64() - states_time;
    notify(Stage::Observables, &out)?;
    if until == Stage::Observables {
        return Ok(out);
    }

    let clock = Instant::now();
    let target = match (cfg.target_states, heuristic) {
        (Auto::Value(k), _) => k,
        (Auto::Auto, Some(k)) => k,
        (Auto::Auto, None) => 1,
    };
    info!("states: target {target} (heuristic {heuristic:?})");
    generator.fill_to(target);
    let ensemble = generator.into_ensemble(params);
    if ensemble.len() < target {
        info!("states: only {} distinct states could be placed", ensemble.len());
    }
    out.states = Some(ensemble);
    out.timings.states = states_time + clock.elapsed().as_secs_f64();
    notify(Stage::States, &out)?;
    if until == Stage::States {
        return Ok(out);
    }
    let states = &out.states.as_ref().expect("states stage").states;

    let clock = Instant::now();
    let triple = staged(Stage::Distances, build_deformed_dirac(cfg.n, params))?;
    let basis = staged(Stage::Distances, build_basis(cfg.basis, &gens))?;
    let dm = staged(
        Stage::Distances,
        distance_matrix(&triple, &basis, states, &cfg.distance, seeds.distances, cache_root),
    )?;
    let witness = staged(Stage::Distances, check_witnesses(&triple, &basis, states, &dm))?;
    out.distance_summary = Some(summarize(&dm, witness));
    out.distances = Some(dm);
    out.timings.distances = clock.elapsed().as_secs_f64();
    notify(Stage::Distances, &out)?;
    if until == Stage::Distances {
        return Ok(out);
    }
    let dm = out.distances.as_ref().expect("distance stage");

    let clock = Instant::now();
    let weights = smacof_weight_matrix(cfg.smacof_weights, dm);
    let embedding = staged(
        Stage::Embed,
        smacof_embed(dm, cfg.embed_dim, weights.as_ref(), &cfg.smacof, seeds.embedding),
    )?;
    out.embedding = Some(embedding);
    out.timings.embed = clock.elapsed().as_secs_f64();
    notify(Stage::Embed, &out)?;
    if until == Stage::Embed {
        return Ok(out);
    }
    let embedding = out.embedding.as_ref().expect("embed stage");

    let clock = Instant::now();
    if cfg.embed_dim == 3 && embedding.coords.nrows() >= 6 {
        let fit = staged(
            Stage::Fit,
            fit_ellipsoid(&embedding.points3(), seeds.fit, cfg.fit_starts),
        )?;
        let expected = expected_axes(params.c12, params.c13, params.c23).ok().map(sorted3);
        out.fit = Some(FitStage {
            fit,
            expected_axes: expected,
            deformation: params,
        });
    }
    let radius = out
        .fit
        .as_ref()
        .map(|f| f.fit.axes.iter().sum::<f64>() / 3.0)
        .unwrap_or(1.0);
    let connes = dm.upper_values();
    if !connes.is_empty() {
        let sample = staged(Stage::Fit, sample_ellipsoid([radius; 3], dm.size, seeds.samples))?;
        let connes_h = staged(Stage::Fit, distance_histogram(&connes, cfg.histogram_bins))?;
        let chord = staged(
            Stage::Fit,
            distance_histogram(&euclidean_distances(&sample), cfg.histogram_bins),
        )?;
        let arc = staged(
            Stage::Fit,
            distance_histogram(&great_circle_distances(&sample, [0.0; 3], radius), cfg.histogram_bins),
        )?;
        out.histograms = Some(HistogramStage {
            normalized_connes_mean: connes_h.mean / radius,
            connes: connes_h,
            chord_sample: chord,
            arc_sample: arc,
            radius,
        });
    }
    out.timings.fit = clock.elapsed().as_secs_f64();
    notify(Stage::Fit, &out)?;
    if until == Stage::Fit {
        return Ok(out);
    }

    let obs = out.observables.as_ref().expect("observables stage");
    let ensemble = out.states.as_ref().expect("states stage");
    let report = PipelineReport {
        n: cfg.n,
        deformation: params,
        seed: cfg.seed,
        seeds,
        state_count: ensemble.len(),
        max_states: obs.max_states,
        target_from_heuristic: cfg.target_states == Auto::Auto,
        localization_length: delta.unwrap_or(0.0),
        mean_dispersion: ensemble.mean_dispersion(),
        coulomb_g: ensemble.coulomb_g,
        dimension_estimate: obs.dimension_estimate,
        volume_ratio: obs.volume_ratio,
        volume_calibration: obs.volume_calibration,
        distances: out.distance_summary.clone().expect("distance stage"),
        stress: embedding.stress,
        mean_correlation: embedding.mean_correlation(),
        min_correlation: embedding.min_correlation(),
        fit: out.fit.clone(),
        normalized_connes_mean: out.histograms.as_ref().map(|h| h.normalized_connes_mean),
    };
    out.report = Some(report);
    notify(Stage::Report, &out)?;
    Ok(out)
}
