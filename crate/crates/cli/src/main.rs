//! Command-line front end for the fuzzy-sphere geometry pipeline.

mod svg;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fuzzysphere::algebra::build_basis;
use fuzzysphere::distance::{check_witnesses, distance_matrix, sha256_hex, DistanceMatrix};
use fuzzysphere::embed::{expected_axes, fit_ellipsoid, smacof_embed, sorted3, EmbeddingResult};
use fuzzysphere::observables::{observable_report, ObservableReport};
use fuzzysphere::pipeline::{
    resolve_calibration, run_pipeline, smacof_weight_matrix, FitStage, PipelineOutput, RunConfig, Stage, StageError,
    StageTimings,
};
use fuzzysphere::spectrum::EigenvalueTable;
use fuzzysphere::states::StateEnsemble;
use fuzzysphere::triple::{build_deformed_dirac, su2_generators, validate_triple, CONVENTION_TAG};
use fuzzysphere::Error;
use serde::Serialize;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_PARTIAL: u8 = 4;
const EXIT_OTHER: u8 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "fuzzysphere",
    version,
    about = "Spectral geometry of the deformed fuzzy sphere"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`; default `run`).
    #[arg(long, global = true)]
    outdir: Option<PathBuf>,
    /// Run seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Reuse cached pair distances under `<outdir>/cache`.
    #[arg(long, global = true)]
    resume: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dirac spectrum, closed form and numeric.
    Spectrum,
    /// Spectral dimension, variance and volume.
    Observables {
        /// Read the spectrum from a CSV written by `spectrum`.
        #[arg(long)]
        spectrum: Option<PathBuf>,
    },
    /// Localized states.
    States,
    /// Connes distance matrix.
    Distances {
        /// Read states from a JSON file written by `states`.
        #[arg(long)]
        states: Option<PathBuf>,
    },
    /// SMACOF embedding of the distance matrix.
    Embed {
        /// Read distances from a CSV written by `distances`.
        #[arg(long)]
        distances: Option<PathBuf>,
    },
    /// Ellipsoid fit of a three-dimensional embedding.
    Fit {
        /// Read points from a CSV written by `embed`.
        #[arg(long)]
        embedding: Option<PathBuf>,
    },
    /// Every stage, with report and plots.
    Pipeline,
    /// Structural checks of the Dirac operator.
    Validate {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
}

/// Error carrying the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: format!("configuration error: {e}"),
        }
    }

    fn from_core(e: &Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::Json(_) => EXIT_CONFIG,
            Error::NonConvergence { .. } => EXIT_PARTIAL,
            Error::Io(_) => EXIT_OTHER,
            _ => EXIT_NUMERICAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }

    fn from_stage(e: &StageError) -> Self {
        let mut f = Failure::from_core(&e.error);
        f.message = e.to_string();
        f
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let code = match e.downcast_ref::<Error>() {
            Some(core) => Failure::from_core(core).code,
            None => EXIT_OTHER,
        };
        Failure {
            code,
            message: format!("{e:#}"),
        }
    }
}

#[derive(Serialize)]
struct Artifact {
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    cli_version: &'static str,
    core_version: &'static str,
    convention: &'static str,
    command: &'a str,
    status: &'a str,
    failed_stage: Option<&'a str>,
    message: Option<&'a str>,
    config: &'a RunConfig,
    seeds: fuzzysphere::pipeline::StageSeeds,
    volume_calibration: Option<f64>,
    workers: usize,
    timings: &'a StageTimings,
    wall_seconds: f64,
    artifacts: &'a BTreeMap<String, Artifact>,
}

/// Output directory that records a content hash for every file written.
struct RunDir {
    root: PathBuf,
    artifacts: BTreeMap<String, Artifact>,
}

impl RunDir {
    fn create(root: PathBuf) -> anyhow::Result<Self> {
        fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        Ok(RunDir {
            root,
            artifacts: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.root.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.insert(
            name.to_string(),
            Artifact {
                sha256: sha256_hex(bytes),
                bytes: bytes.len(),
            },
        );
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.write(name, &text)
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> fuzzysphere::Result<()>) -> anyhow::Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn cache_dir(&self) -> PathBuf {
        self.root.join("cache")
    }
}

fn load_config(global: &GlobalArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &global.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &global.outdir {
        cfg.output_dir = Some(dir.clone());
    }
    cfg.validate().map_err(Failure::config)?;
    Ok(cfg)
}

fn write_spectrum(run: &mut RunDir, out: &PipelineOutput) -> anyhow::Result<()> {
    let Some(s) = &out.spectrum else { return Ok(()) };
    run.csv("spectrum.csv", |w| s.primary.write_csv(w))?;
    run.csv("spectrum_numeric.csv", |w| s.numeric.write_csv(w))?;
    if let Some(a) = &s.analytic {
        run.csv("spectrum_analytic.csv", |w| a.write_csv(w))?;
    }
    if let Some(d) = &s.diff {
        run.json("spectrum_diff.json", d)?;
    }
    Ok(())
}

fn write_observables(run: &mut RunDir, obs: &ObservableReport) -> anyhow::Result<()> {
    run.json("observables.json", obs)?;
    run.csv("curves.csv", |w| obs.curves.write_csv(w))?;
    let c = &obs.curves;
    let plot = svg::curves(
        "Spectral dimension and variance",
        "t",
        &c.t,
        &[("d_s", &c.spectral_dimension), ("v_s", &c.spectral_variance)],
    );
    run.write("curves.svg", plot.as_bytes())
}

fn write_distances(run: &mut RunDir, dm: &DistanceMatrix) -> anyhow::Result<()> {
    run.csv("distances.csv", |w| dm.write_csv(w))?;
    run.json("distance_pairs.json", &dm.pairs)
}

fn write_embedding(run: &mut RunDir, e: &EmbeddingResult) -> anyhow::Result<()> {
    run.csv("embedding.csv", |w| e.write_csv(w))?;
    #[derive(Serialize)]
    struct Summary<'a> {
        dim: usize,
        stress: f64,
        mean_correlation: f64,
        min_correlation: f64,
        constant_rows: &'a [usize],
        stress_history: &'a [f64],
    }
    run.json(
        "embedding.json",
        &Summary {
            dim: e.dim,
            stress: e.stress,
            mean_correlation: e.mean_correlation(),
            min_correlation: e.min_correlation(),
            constant_rows: &e.constant_rows,
            stress_history: &e.stress_history,
        },
    )?;
    let pts = e.points3();
    run.write(
        "embedding_xy.svg",
        svg::scatter("Embedding (x, y)", &pts, &e.correlations, (0, 1)).as_bytes(),
    )?;
    if e.dim >= 3 {
        run.write(
            "embedding_xz.svg",
            svg::scatter("Embedding (x, z)", &pts, &e.correlations, (0, 2)).as_bytes(),
        )?;
    }
    Ok(())
}

fn write_stage(run: &mut RunDir, stage: Stage, out: &PipelineOutput) -> anyhow::Result<()> {
    match stage {
        Stage::Spectrum => write_spectrum(run, out),
        Stage::Observables => match &out.observables {
            Some(obs) => write_observables(run, obs),
            None => Ok(()),
        },
        Stage::States => match &out.states {
            Some(s) => run.json("states.json", s),
            None => Ok(()),
        },
        Stage::Distances => {
            if let Some(dm) = &out.distances {
                write_distances(run, dm)?;
            }
            if let Some(s) = &out.distance_summary {
                run.json("distance_summary.json", s)?;
            }
            Ok(())
        }
        Stage::Embed => match &out.embedding {
            Some(e) => write_embedding(run, e),
            None => Ok(()),
        },
        Stage::Fit => {
            if let Some(fit) = &out.fit {
                run.json("fit.json", fit)?;
            }
            if let Some(h) = &out.histograms {
                run.csv("histogram_connes.csv", |w| h.connes.write_csv(w))?;
                run.csv("histogram_chord.csv", |w| h.chord_sample.write_csv(w))?;
                run.csv("histogram_arc.csv", |w| h.arc_sample.write_csv(w))?;
                run.json("histograms.json", h)?;
                run.write(
                    "histogram_connes.svg",
                    svg::histogram("Connes distances", "d", &h.connes.edges, &h.connes.density).as_bytes(),
                )?;
            }
            Ok(())
        }
        Stage::Report => match &out.report {
            Some(r) => run.json("report.json", r),
            None => Ok(()),
        },
    }
}

struct Outcome {
    timings: StageTimings,
    calibration: Option<f64>,
    partial: bool,
}

fn staged_run(
    cfg: &RunConfig,
    run: &mut RunDir,
    until: Stage,
) -> Result<Outcome, (Failure, Option<Stage>, StageTimings)> {
    let cache = run.cache_dir();
    let mut last_timings = StageTimings::default();
    let mut calibration = None;
    let result = run_pipeline(cfg, Some(&cache), until, |stage, out| {
        last_timings = out.timings.clone();
        if let Some(obs) = &out.observables {
            calibration = Some(obs.volume_calibration);
        }
        write_stage(run, stage, out).map_err(|e| Error::Io(std::io::Error::other(format!("{e:#}"))))
    });
    match result {
        Ok(out) => Ok(Outcome {
            partial: out.distances.as_ref().is_some_and(|d| !d.all_converged()),
            timings: out.timings,
            calibration,
        }),
        Err(e) => Err((Failure::from_stage(&e), Some(e.stage), last_timings)),
    }
}

fn standalone_distances(cfg: &RunConfig, run: &mut RunDir, states_path: &Path) -> anyhow::Result<Outcome> {
    let clock = Instant::now();
    let text = fs::read_to_string(states_path).with_context(|| format!("reading {}", states_path.display()))?;
    let ensemble: StateEnsemble = serde_json::from_str(&text)
        .map_err(Error::from)
        .with_context(|| format!("parsing {}", states_path.display()))?;
    if ensemble.generator_n != cfg.n {
        return Err(Error::InvalidArgument(format!(
            "states were generated for n = {} but the config has n = {}",
            ensemble.generator_n, cfg.n
        ))
        .into());
    }
    let triple = build_deformed_dirac(cfg.n, cfg.deformation())?;
    let gens = su2_generators(cfg.n)?;
    let basis = build_basis(cfg.basis, &gens)?;
    let seeds = cfg.stage_seeds();
    let cache = run.cache_dir();
    let dm = distance_matrix(
        &triple,
        &basis,
        &ensemble.states,
        &cfg.distance,
        seeds.distances,
        Some(&cache),
    )?;
    let witness = check_witnesses(&triple, &basis, &ensemble.states, &dm)?;
    write_distances(run, &dm)?;
    run.json("witness_check.json", &witness)?;
    Ok(Outcome {
        timings: StageTimings {
            distances: clock.elapsed().as_secs_f64(),
            ..StageTimings::default()
        },
        calibration: None,
        partial: !dm.all_converged(),
    })
}

fn standalone_observables(cfg: &RunConfig, run: &mut RunDir, path: &Path) -> anyhow::Result<Outcome> {
    let clock = Instant::now();
    let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let spec = EigenvalueTable::read_csv(file)?;
    let calibration = resolve_calibration(cfg, &spec)?;
    let obs = observable_report(&spec, calibration, cfg.volume_reading, None)?;
    write_observables(run, &obs)?;
    Ok(Outcome {
        timings: StageTimings {
            observables: clock.elapsed().as_secs_f64(),
            ..StageTimings::default()
        },
        calibration: Some(calibration),
        partial: false,
    })
}

fn standalone_embed(cfg: &RunConfig, run: &mut RunDir, path: &Path) -> anyhow::Result<Outcome> {
    let clock = Instant::now();
    let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let dm = DistanceMatrix::read_csv(file)?;
    let weights = smacof_weight_matrix(cfg.smacof_weights, &dm);
    let e = smacof_embed(
        &dm,
        cfg.embed_dim,
        weights.as_ref(),
        &cfg.smacof,
        cfg.stage_seeds().embedding,
    )?;
    write_embedding(run, &e)?;
    Ok(Outcome {
        timings: StageTimings {
            embed: clock.elapsed().as_secs_f64(),
            ..StageTimings::default()
        },
        calibration: None,
        partial: false,
    })
}

/// Points from an embedding CSV with header `index,x,y,z,correlation`.
fn read_points(path: &Path) -> anyhow::Result<Vec<[f64; 3]>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header.trim() != "index,x,y,z,correlation" {
        return Err(Error::InvalidArgument(format!(
            "{}: expected a three-dimensional embedding CSV, found header {header:?}",
            path.display()
        ))
        .into());
    }
    let mut points = Vec::new();
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::InvalidArgument(format!("{}: line {} is malformed", path.display(), k + 2));
        if f.len() != 5 {
            return Err(bad().into());
        }
        let mut p = [0.0; 3];
        for (d, v) in p.iter_mut().enumerate() {
            *v = f[d + 1].trim().parse().map_err(|_| bad())?;
        }
        points.push(p);
    }
    Ok(points)
}

fn standalone_fit(cfg: &RunConfig, run: &mut RunDir, path: &Path) -> anyhow::Result<Outcome> {
    let clock = Instant::now();
    let points = read_points(path)?;
    let fit = fit_ellipsoid(&points, cfg.stage_seeds().fit, cfg.fit_starts)?;
    let params = cfg.deformation();
    let stage = FitStage {
        fit,
        expected_axes: expected_axes(params.c12, params.c13, params.c23).ok().map(sorted3),
        deformation: params,
    };
    run.json("fit.json", &stage)?;
    Ok(Outcome {
        timings: StageTimings {
            fit: clock.elapsed().as_secs_f64(),
            ..StageTimings::default()
        },
        calibration: None,
        partial: false,
    })
}

fn validate(cfg: &RunConfig, run: &mut RunDir, trials: usize, tol: f64) -> anyhow::Result<bool> {
    let triple = build_deformed_dirac(cfg.n, cfg.deformation())?;
    let report = validate_triple(&triple, trials, tol)?;
    run.json("validation.json", &report)?;
    Ok(report.passed)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Spectrum => "spectrum",
        Command::Observables { .. } => "observables",
        Command::States => "states",
        Command::Distances { .. } => "distances",
        Command::Embed { .. } => "embed",
        Command::Fit { .. } => "fit",
        Command::Pipeline => "pipeline",
        Command::Validate { .. } => "validate",
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let started = Instant::now();
    let cfg = load_config(&cli.global)?;
    let workers = cli
        .global
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Failure::config("--workers must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Failure {
            code: EXIT_OTHER,
            message: format!("thread pool: {e}"),
        })?;
    let root = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("run"));
    let mut run = RunDir::create(root)?;
    let cache = run.cache_dir();
    if !cli.global.resume && cache.exists() {
        fs::remove_dir_all(&cache).with_context(|| format!("clearing {}", cache.display()))?;
    }
    let name = command_name(&cli.command);
    let result: Result<Outcome, (Failure, Option<Stage>, StageTimings)> = match &cli.command {
        Command::Spectrum => staged_run(&cfg, &mut run, Stage::Spectrum),
        Command::Observables { spectrum: Some(p) } => {
            standalone_observables(&cfg, &mut run, p).map_err(|e| (e.into(), None, StageTimings::default()))
        }
        Command::Observables { spectrum: None } => staged_run(&cfg, &mut run, Stage::Observables),
        Command::States => staged_run(&cfg, &mut run, Stage::States),
        Command::Distances { states: Some(p) } => {
            standalone_distances(&cfg, &mut run, p).map_err(|e| (e.into(), None, StageTimings::default()))
        }
        Command::Distances { states: None } => staged_run(&cfg, &mut run, Stage::Distances),
        Command::Embed { distances: Some(p) } => {
            standalone_embed(&cfg, &mut run, p).map_err(|e| (e.into(), None, StageTimings::default()))
        }
        Command::Embed { distances: None } => staged_run(&cfg, &mut run, Stage::Embed),
        Command::Fit { embedding: Some(p) } => {
            standalone_fit(&cfg, &mut run, p).map_err(|e| (e.into(), None, StageTimings::default()))
        }
        Command::Fit { embedding: None } => staged_run(&cfg, &mut run, Stage::Fit),
        Command::Pipeline => staged_run(&cfg, &mut run, Stage::Report),
        Command::Validate { trials, tol } => match validate(&cfg, &mut run, *trials, *tol) {
            Ok(true) => Ok(Outcome {
                timings: StageTimings::default(),
                calibration: None,
                partial: false,
            }),
            Ok(false) => Err((
                Failure {
                    code: EXIT_NUMERICAL,
                    message: "validation failed; see validation.json".into(),
                },
                None,
                StageTimings::default(),
            )),
            Err(e) => Err((e.into(), None, StageTimings::default())),
        },
    };
    let (status, failure, stage, timings, calibration) = match result {
        Ok(o) if o.partial => (
            "partial",
            Some(Failure {
                code: EXIT_PARTIAL,
                message: "some distances did not converge; artifacts are lower bounds".into(),
            }),
            None,
            o.timings,
            o.calibration,
        ),
        Ok(o) => ("ok", None, None, o.timings, o.calibration),
        Err((f, stage, timings)) => ("failed", Some(f), stage, timings, None),
    };
    let manifest = Manifest {
        tool: "fuzzysphere",
        cli_version: env!("CARGO_PKG_VERSION"),
        core_version: fuzzysphere::VERSION,
        convention: CONVENTION_TAG,
        command: name,
        status,
        failed_stage: stage.map(Stage::as_str),
        message: failure.as_ref().map(|f| f.message.as_str()),
        config: &cfg,
        seeds: cfg.stage_seeds(),
        volume_calibration: calibration,
        workers,
        timings: &timings,
        wall_seconds: started.elapsed().as_secs_f64(),
        artifacts: &run.artifacts,
    };
    let mut text = serde_json::to_vec_pretty(&manifest).map_err(|e| Failure {
        code: EXIT_OTHER,
        message: e.to_string(),
    })?;
    text.push(b'\n');
    fs::write(run.root.join("manifest.json"), text).map_err(|e| Failure {
        code: EXIT_OTHER,
        message: format!("writing manifest: {e}"),
    })?;
    match failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
