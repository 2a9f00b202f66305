//! Command dispatch and output files.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use horoshear_core::experiments::{
    fit_decay, fit_mixing, fit_points, haar_base_points, run_decay_experiment,
    run_mixing_experiment, shadow_sweep, shearing_identity_check, write_decay_csv,
    write_mixing_csv, write_shadow_csv, DecayMetadata, FitPoint, FitWeights, MixingEstimator,
};
use horoshear_core::{
    AlgebraVector, DecayModel, FitResult, FuchsianGroupModel, GroupDefinition, MixingEntry,
    Observable, Precision, QuadratureOptions, ShearingReport,
};
use serde::{Deserialize, Serialize};

use crate::config::{Command, ExperimentConfig};
use crate::verify::run_suites;
use crate::CliError;

/// Everything a run needs besides the command.
#[derive(Clone, Debug)]
pub struct RunRequest {
    pub config: ExperimentConfig,
    /// Directory that relative paths in the config are resolved against.
    pub base_dir: PathBuf,
    /// Overrides `config.output`.
    pub out: Option<PathBuf>,
    /// Worker threads; the rayon default when absent.
    pub workers: Option<usize>,
    /// Overrides `config.precision`.
    pub precision: Option<Precision>,
}

/// Written to `manifest.json` in every output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    /// The configuration as run, after command-line overrides.
    pub config: ExperimentConfig,
    /// The lattice the run used, resolved from `config.lattice`.
    pub lattice: GroupDefinition,
    pub outputs: Vec<String>,
    pub passed: bool,
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub outputs: Vec<String>,
    pub passed: bool,
    /// Why the run did not pass.
    pub failure: Option<String>,
}

/// A fit or the reason it could not be made.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitOutcome {
    Fit(FitResult),
    Error(String),
}

impl FitOutcome {
    fn from(r: horoshear_core::Result<FitResult>) -> Self {
        match r {
            Ok(f) => FitOutcome::Fit(f),
            Err(e) => FitOutcome::Error(e.to_string()),
        }
    }

    pub fn slope(&self) -> Option<f64> {
        match self {
            FitOutcome::Fit(f) => Some(f.slope),
            FitOutcome::Error(_) => None,
        }
    }
}

/// `decay_w{i}_fit.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFitReport {
    pub direction: AlgebraVector,
    pub all_converged: bool,
    pub pure_power: FitOutcome,
    pub power_times_log: FitOutcome,
}

/// `mixing_report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub estimator: MixingEstimator,
    pub entries: Vec<MixingEntry>,
    /// Exponent of the pure power law fitted to `|⟨f∘h_t, g⟩|`.
    pub slope: Option<f64>,
    pub fit: FitOutcome,
    pub shearing: Vec<ShearingReport>,
    pub identity_holds: bool,
    pub bound_holds: bool,
}

/// Largest shadow distance over the base points at one `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowMax {
    pub t: f64,
    pub max_distance: f64,
}

/// `shadow_w{i}_fit.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowFitReport {
    pub direction: AlgebraVector,
    pub maxima: Vec<ShadowMax>,
    pub slope: Option<f64>,
    pub fit: FitOutcome,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        context: path.display().to_string(),
        source,
    }
}

/// Collects the files a command writes, in order.
struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    fn create(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(OutDir {
            dir,
            written: Vec::new(),
        })
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(io_err(&path))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value).map_err(horoshear_core::Error::from)?;
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))?;
        self.written.push(name.to_string());
        Ok(())
    }
}

/// Config-stage failures (bad lattice, bad observable) are configuration errors.
fn config_err(what: &str) -> impl FnOnce(horoshear_core::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{what}: {e}"))
}

fn build_observables(
    config: &ExperimentConfig,
    group: &Arc<FuchsianGroupModel>,
) -> Result<Vec<Observable>, CliError> {
    config
        .observables
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            spec.build(group.clone())
                .map_err(|e| CliError::Config(format!("observable {i}: {e}")))
        })
        .collect()
}

/// Runs `command` and writes its outputs and manifest.
pub fn execute(command: Command, request: RunRequest) -> Result<Outcome, CliError> {
    let mut config = request.config;
    config.validate_for(command)?;
    if let Some(p) = request.precision {
        config.precision = p;
    }
    config.command = Some(command);
    let out = request
        .out
        .or_else(|| {
            config.output.as_ref().map(|o| {
                if o.is_absolute() {
                    o.clone()
                } else {
                    request.base_dir.join(o)
                }
            })
        })
        .ok_or_else(|| {
            CliError::Config("no output directory: pass --out or set `output`".into())
        })?;
    let lattice = config.lattice.definition(&request.base_dir)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = request.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Failed(format!("cannot start the worker pool: {e}")))?;

    let mut dir = OutDir::create(out)?;
    let failure = pool.install(|| match command {
        Command::Verify => verify(&config, &lattice, &mut dir),
        Command::Decay => decay(&config, &lattice, &mut dir),
        Command::Mixing => mixing(&config, &lattice, &mut dir),
        Command::Shadow => shadow(&config, &lattice, &mut dir),
    })?;
    let mut outputs = dir.written.clone();
    outputs.push(MANIFEST.to_string());
    let manifest = Manifest {
        tool: "horoshear".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command,
        config,
        lattice,
        outputs: outputs.clone(),
        passed: failure.is_none(),
    };
    dir.json(MANIFEST, &manifest)?;
    Ok(Outcome {
        out_dir: dir.dir,
        outputs,
        passed: failure.is_none(),
        failure,
    })
}

/// Reads a manifest back.
pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

type Failure = Option<String>;

fn verify(
    config: &ExperimentConfig,
    lattice: &GroupDefinition,
    dir: &mut OutDir,
) -> Result<Failure, CliError> {
    // Unvalidated on purpose: a broken lattice is reported by the lattice suite.
    let group = lattice
        .to_model_unchecked()
        .map_err(config_err("lattice"))?;
    let report = run_suites(&group, config.verify.cases, config.seed);
    dir.json("verify_report.json", &report)?;
    Ok(report.first_failure().map(|s| {
        format!(
            "suite `{}` failed: {}",
            s.name,
            s.failure.as_deref().unwrap_or("check exceeded its limit")
        )
    }))
}

fn decay(
    config: &ExperimentConfig,
    lattice: &GroupDefinition,
    dir: &mut OutDir,
) -> Result<Failure, CliError> {
    let group = Arc::new(lattice.to_model().map_err(config_err("lattice"))?);
    let f = build_observables(config, &group)?.remove(0);
    let bases = haar_base_points(&group, config.base_points, config.seed)?;
    let opts = QuadratureOptions {
        kappa: config.kappa,
        precision: config.precision,
    };
    let observable =
        serde_json::to_string(&config.observables[0]).map_err(horoshear_core::Error::from)?;
    let mut unconverged = Vec::new();
    for (i, w) in config.directions.iter().enumerate() {
        let metadata = DecayMetadata {
            observable: observable.clone(),
            direction: *w,
            length: config.length,
            kappa: config.kappa,
            seed: config.seed,
            base_points: config.base_points,
            precision: config.precision,
        };
        let series = run_decay_experiment(
            &f,
            w,
            config.length,
            &config.t_grid,
            &bases,
            &opts,
            metadata,
        )?;
        write_decay_csv(&series, dir.open(&format!("decay_w{i}.csv"))?)?;
        let report = DecayFitReport {
            direction: *w,
            all_converged: series.all_converged(),
            pure_power: FitOutcome::from(fit_decay(&series, DecayModel::PurePower)),
            power_times_log: FitOutcome::from(fit_decay(&series, DecayModel::PowerTimesLog)),
        };
        dir.json(&format!("decay_w{i}_fit.json"), &report)?;
        for e in series.entries.iter().filter(|e| !e.converged) {
            unconverged.push(format!("W = {w} at t = {}", e.t));
        }
    }
    Ok((!unconverged.is_empty())
        .then(|| format!("quadrature did not converge for {}", unconverged.join(", "))))
}

fn mixing(
    config: &ExperimentConfig,
    lattice: &GroupDefinition,
    dir: &mut OutDir,
) -> Result<Failure, CliError> {
    let group = Arc::new(lattice.to_model().map_err(config_err("lattice"))?);
    let obs = build_observables(config, &group)?;
    let f = &obs[0];
    let g = obs.get(1).unwrap_or(f);
    let settings = &config.mixing;
    let entries = run_mixing_experiment(
        f,
        g,
        &config.t_grid,
        settings.n_mc,
        config.seed,
        settings.estimator,
    )?;
    write_mixing_csv(&entries, dir.open("mixing.csv")?)?;
    let fit = FitOutcome::from(fit_mixing(&entries, DecayModel::PurePower));
    let shearing_grid = settings.shearing_t_grid.as_ref().unwrap_or(&config.t_grid);
    let shearing = shearing_grid
        .iter()
        .map(|&t| shearing_identity_check(f, g, t, &settings.shearing, config.seed))
        .collect::<horoshear_core::Result<Vec<_>>>()?;
    let report = MixingReport {
        estimator: settings.estimator,
        slope: fit.slope(),
        fit,
        identity_holds: shearing.iter().all(|r| r.identity_holds),
        bound_holds: shearing.iter().all(|r| r.bound_holds),
        entries,
        shearing,
    };
    dir.json("mixing_report.json", &report)?;
    let mut problems = Vec::new();
    for r in &report.shearing {
        if !r.identity_holds {
            problems.push(format!(
                "shearing identity off by {:.2} standard errors at t = {}",
                r.z_score, r.t
            ));
        }
        if !r.bound_holds {
            problems.push(format!(
                "mixing bound {:e} exceeded at t = {}",
                r.bound, r.t
            ));
        }
    }
    Ok((!problems.is_empty()).then(|| problems.join("; ")))
}

fn shadow(
    config: &ExperimentConfig,
    lattice: &GroupDefinition,
    dir: &mut OutDir,
) -> Result<Failure, CliError> {
    let group = lattice.to_model().map_err(config_err("lattice"))?;
    for (i, w) in config.directions.iter().enumerate() {
        let entries = shadow_sweep(
            &group,
            w,
            config.length,
            config.sigma,
            &config.t_grid,
            config.base_points,
            config.shadow.nodes,
            config.seed,
        )?;
        write_shadow_csv(&entries, dir.open(&format!("shadow_w{i}.csv"))?)?;
        let maxima: Vec<ShadowMax> = config
            .t_grid
            .iter()
            .map(|&t| ShadowMax {
                t,
                max_distance: entries
                    .iter()
                    .filter(|e| e.t == t)
                    .map(|e| e.max_distance)
                    .fold(0.0, f64::max),
            })
            .collect();
        let points: Vec<FitPoint> = maxima
            .iter()
            .map(|m| FitPoint {
                t: m.t,
                value: m.max_distance,
                stderr: 0.0,
            })
            .collect();
        let fit = FitOutcome::from(fit_points(&points, DecayModel::PurePower, FitWeights::Unit));
        dir.json(
            &format!("shadow_w{i}_fit.json"),
            &ShadowFitReport {
                direction: *w,
                maxima,
                slope: fit.slope(),
                fit,
            },
        )?;
    }
    Ok(None)
}
