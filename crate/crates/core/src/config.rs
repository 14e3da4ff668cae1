//! The JSON experiment document. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{NoiseConfig, Scheme, SnapshotPlan};
use crate::error::{Error, Result};
use crate::model::{build_initial_state, Observable, SpinModel};
use crate::numerics::StateVector;
use crate::qem::{Mode, DEFAULT_PRUNE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub noise: NoiseSection,
    #[serde(default)]
    pub sqem: SqemConfig,
    pub run: RunConfig,
    pub observables: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "L")]
    pub sites: usize,
    #[serde(rename = "J", default = "one")]
    pub j: f64,
    pub g: f64,
    #[serde(rename = "U")]
    pub u: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_amp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<Vec<f64>>,
    pub initial_state: String,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Uniform(f64),
    PerBond(Vec<f64>),
}

impl GammaSpec {
    pub fn resolve(&self, n_bonds: usize) -> Result<Vec<f64>> {
        let g = match self {
            GammaSpec::Uniform(g) => vec![*g; n_bonds],
            GammaSpec::PerBond(v) if v.len() == n_bonds => v.clone(),
            GammaSpec::PerBond(v) => {
                return Err(Error::ConfigInvalid(format!("{} rates given for {n_bonds} bonds", v.len())))
            }
        };
        if let Some(bad) = g.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
            return Err(Error::ConfigInvalid(format!("rate {bad} must be nonnegative")));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub gamma: GammaSpec,
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Added to the minimal per-bond shift `e_ℓ`.
    #[serde(default)]
    pub extra_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqemConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_prune")]
    pub prune_threshold: f64,
}

fn yes() -> bool {
    true
}

fn default_prune() -> f64 {
    DEFAULT_PRUNE
}

impl Default for SqemConfig {
    fn default() -> Self {
        Self { enabled: true, mode: Mode::Weighted, prune_threshold: DEFAULT_PRUNE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Optional cross-check; must equal `batches * batch_size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<u64>,
    pub batch_size: usize,
    pub batches: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn total_trajectories(&self) -> u64 {
        self.batches as u64 * self.batch_size as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

fn invalid(e: impl std::fmt::Display) -> Error {
    Error::ConfigInvalid(e.to_string())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(invalid)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks that need more than the type system.
    pub fn validate(&self) -> Result<()> {
        let model = self.spin_model()?;
        self.gamma(&model)?;
        self.initial_state(&model)?;
        self.observables(&model)?;
        self.snapshots()?;
        let r = &self.run;
        if r.batches == 0 || r.batch_size == 0 {
            return Err(invalid("batches and batch_size must be positive"));
        }
        if let Some(n) = r.n_traj {
            if n != r.total_trajectories() {
                return Err(invalid(format!(
                    "n_traj = {n} but batches * batch_size = {}",
                    r.total_trajectories()
                )));
            }
        }
        if r.workers == Some(0) {
            return Err(invalid("workers must be positive"));
        }
        if !(self.noise.extra_shift >= 0.0 && self.noise.extra_shift.is_finite()) {
            return Err(invalid("extra_shift must be nonnegative"));
        }
        if !(self.sqem.prune_threshold >= 0.0) {
            return Err(invalid("prune_threshold must be nonnegative"));
        }
        if self.observables.is_empty() {
            return Err(invalid("at least one observable is required"));
        }
        Ok(())
    }

    pub fn spin_model(&self) -> Result<SpinModel> {
        let m = &self.model;
        let h = match (&m.h, m.h_amp, &m.pattern) {
            (Some(h), None, None) => h.clone(),
            (None, Some(a), Some(p)) => p.iter().map(|r| a * r).collect(),
            (None, None, None) => vec![0.0; m.sites],
            _ => return Err(invalid("give either h or both h_amp and pattern")),
        };
        SpinModel::new(m.sites, m.j, m.g, m.u, h).map_err(invalid)
    }

    pub fn gamma(&self, model: &SpinModel) -> Result<Vec<f64>> {
        self.noise.gamma.resolve(model.n_bonds())
    }

    pub fn initial_state(&self, model: &SpinModel) -> Result<StateVector> {
        build_initial_state(&self.model.initial_state, model.sites).map_err(invalid)
    }

    pub fn observables(&self, model: &SpinModel) -> Result<Vec<Observable>> {
        self.observables.iter().map(|n| Observable::parse(n, model.sites).map_err(invalid)).collect()
    }

    pub fn noise_config(&self) -> Result<NoiseConfig> {
        NoiseConfig::new(self.noise.dt, self.noise.scheme, self.run.t).map_err(invalid)
    }

    pub fn snapshots(&self) -> Result<SnapshotPlan> {
        let cfg = self.noise_config()?;
        cfg.n_steps().map_err(invalid)?;
        match (&self.run.times, self.run.snapshot_stride) {
            (Some(t), None) => SnapshotPlan::new(t, &cfg).map_err(invalid),
            (None, Some(s)) => SnapshotPlan::every(s, &cfg).map_err(invalid),
            (None, None) => SnapshotPlan::new(&[self.run.t], &cfg).map_err(invalid),
            (Some(_), Some(_)) => Err(invalid("give snapshot_stride or times, not both")),
        }
    }
}
