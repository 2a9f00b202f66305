//! Experiment configuration files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use horoshear_core::experiments::{MixingEstimator, ShearingOptions};
use horoshear_core::observables::Centering;
use horoshear_core::{
    AlgebraVector, FuchsianGroupModel, GroupDefinition, Mat2, ObservableSpec, Precision,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Verify,
    Decay,
    Mixing,
    Shadow,
}

impl Command {
    pub const ALL: [Command; 4] = [
        Command::Verify,
        Command::Decay,
        Command::Mixing,
        Command::Shadow,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Decay => "decay",
            Command::Mixing => "mixing",
            Command::Shadow => "shadow",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinLattice {
    /// The genus-2 Bolza surface with its regular octagon domain.
    Bolza,
}

/// Where the lattice comes from; file paths are relative to the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeSource {
    Builtin(BuiltinLattice),
    File(PathBuf),
    Inline(GroupDefinition),
}

impl Default for LatticeSource {
    fn default() -> Self {
        LatticeSource::Builtin(BuiltinLattice::Bolza)
    }
}

impl LatticeSource {
    /// The group definition, resolving files against `base_dir`.
    pub fn definition(&self, base_dir: &Path) -> Result<GroupDefinition, CliError> {
        match self {
            LatticeSource::Builtin(BuiltinLattice::Bolza) => {
                Ok(FuchsianGroupModel::bolza().to_definition())
            }
            LatticeSource::File(path) => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                GroupDefinition::load(&full)
                    .map_err(|e| CliError::Config(format!("lattice file {}: {e}", full.display())))
            }
            LatticeSource::Inline(def) => Ok(def.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixingSettings {
    /// Samples at the largest time; earlier times use fewer.
    pub n_mc: usize,
    pub estimator: MixingEstimator,
    /// Times for the shearing-identity check; the correlation grid if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shearing_t_grid: Option<Vec<f64>>,
    pub shearing: ShearingOptions,
}

impl Default for MixingSettings {
    fn default() -> Self {
        MixingSettings {
            n_mc: 1 << 26,
            estimator: MixingEstimator::Importance,
            shearing_t_grid: None,
            shearing: ShearingOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowSettings {
    /// Parameters sampled per partition window.
    pub nodes: usize,
}

impl Default for ShadowSettings {
    fn default() -> Self {
        ShadowSettings { nodes: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    /// Random configurations per suite.
    pub cases: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings { cases: 100 }
    }
}

fn default_length() -> f64 {
    1.0
}
fn default_sigma() -> f64 {
    1.0
}
fn default_kappa() -> f64 {
    20.0
}
fn default_base_points() -> usize {
    8
}

/// One run of one command.
///
/// `seed` is required: every random draw in a run derives from it or from
/// the observables' own seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default)]
    pub lattice: LatticeSource,
    #[serde(default)]
    pub observables: Vec<ObservableSpec>,
    /// Transverse directions `W`.
    #[serde(default)]
    pub directions: Vec<AlgebraVector>,
    /// Arc length `S`.
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    pub seed: u64,
    #[serde(default = "default_base_points")]
    pub base_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub mixing: MixingSettings,
    #[serde(default)]
    pub shadow: ShadowSettings,
    #[serde(default)]
    pub verify: VerifySettings,
}

/// `2, 4, …, 2^k`.
pub fn powers_of_two(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 2f64.powi(k)).collect()
}

/// The K-invariant bump at `i` with `r_b = 1.2`, `k = 6`, centered exactly.
pub fn default_observable() -> ObservableSpec {
    ObservableSpec {
        center: Mat2::IDENTITY,
        radius: 1.2,
        smoothness: 6,
        amplitude: 1.0,
        k_invariant: true,
        seed: 1,
        centering_samples: 100_000,
        sobolev_order: 6,
        centering: Centering::Exact,
    }
}

impl ExperimentConfig {
    fn base(command: Command, seed: u64) -> Self {
        ExperimentConfig {
            command: Some(command),
            lattice: LatticeSource::default(),
            observables: Vec::new(),
            directions: Vec::new(),
            length: default_length(),
            sigma: default_sigma(),
            t_grid: Vec::new(),
            kappa: default_kappa(),
            seed,
            base_points: default_base_points(),
            output: None,
            precision: Precision::Double,
            mixing: MixingSettings::default(),
            shadow: ShadowSettings::default(),
            verify: VerifySettings::default(),
        }
    }

    /// The configuration used when `--config` is omitted.
    pub fn default_for(command: Command) -> Self {
        match command {
            Command::Verify => ExperimentConfig::base(command, 1),
            Command::Decay => ExperimentConfig {
                observables: vec![default_observable()],
                directions: vec![AlgebraVector::X, AlgebraVector::V],
                t_grid: powers_of_two(1, 9),
                ..ExperimentConfig::base(command, 11)
            },
            Command::Mixing => ExperimentConfig {
                observables: vec![default_observable()],
                t_grid: powers_of_two(1, 8),
                ..ExperimentConfig::base(command, 5)
            },
            Command::Shadow => ExperimentConfig {
                directions: vec![AlgebraVector::V, AlgebraVector::new(0.6, 0.8, -0.3)],
                t_grid: powers_of_two(2, 8),
                base_points: 4,
                ..ExperimentConfig::base(command, 3)
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }

    /// Checks that the fields `command` needs are present and in range.
    pub fn validate_for(&self, command: Command) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if let Some(c) = self.command {
            if c != command {
                return bad(format!("config is for `{c}` but `{command}` was requested"));
            }
        }
        if command == Command::Verify {
            if self.verify.cases == 0 {
                return bad("verify.cases must be positive".into());
            }
            return Ok(());
        }
        if self.t_grid.is_empty() {
            return bad("t_grid is empty".into());
        }
        if self.t_grid.iter().any(|t| !t.is_finite() || *t < 0.0)
            || self.t_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return bad("t_grid must be finite, nonnegative and strictly increasing".into());
        }
        if !(self.sigma > 0.0) || !(self.length >= 0.0) || self.length > self.sigma {
            return bad(format!(
                "need 0 <= length <= sigma and sigma > 0, got {} and {}",
                self.length, self.sigma
            ));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        let needs_directions = matches!(command, Command::Decay | Command::Shadow);
        if needs_directions && self.directions.is_empty() {
            return bad("no directions given".into());
        }
        if let Some(w) = self
            .directions
            .iter()
            .find(|w| w.is_zero() || !w.is_finite())
        {
            return bad(format!("direction {w} must be finite and nonzero"));
        }
        match command {
            Command::Decay if self.observables.len() != 1 => bad(format!(
                "decay takes one observable, got {}",
                self.observables.len()
            )),
            Command::Decay if self.base_points < 4 => bad(format!(
                "need at least 4 base points, got {}",
                self.base_points
            )),
            Command::Mixing if !(1..=2).contains(&self.observables.len()) => bad(format!(
                "mixing takes one or two observables (f, g), got {}",
                self.observables.len()
            )),
            Command::Mixing if self.mixing.n_mc == 0 => bad("mixing.n_mc must be positive".into()),
            Command::Shadow if self.t_grid[0] < 2.0 => bad("shadow curves need t >= 2".into()),
            Command::Shadow if self.base_points == 0 || self.shadow.nodes < 2 => {
                bad("shadow needs base points and at least 2 nodes per window".into())
            }
            _ => Ok(()),
        }
    }
}
