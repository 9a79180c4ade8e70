//! Experiment configuration: a versioned TOML file that fully determines a
//! run. Every knob has a default except `seed`, which the experimenter must
//! pick so no artifact is ever the product of an accidental seed. The
//! serialized form is always fully resolved, so an echoed config reproduces
//! the run even if the original file relied on defaults.

use serde::{Deserialize, Serialize};
use skillrep_core::adapt::IteConfig;
use skillrep_core::env::{DamageSpec, EnvParams, FreezeMode, NUM_LEGS};
use skillrep_core::learner::{FeatureConfig, TrainConfig, TrainError};
use std::path::PathBuf;

pub const CONFIG_VERSION: u32 = 1;

/// One config problem, reported as JSON so scripts can react to the field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub field: String,
    pub reason: String,
}

impl ValidationIssue {
    fn new(field: &str, reason: impl Into<String>) -> Self {
        Self { field: field.to_string(), reason: reason.into() }
    }
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

impl From<TrainError> for ValidationIssue {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig { field, reason } => {
                Self { field: field.to_string(), reason }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Skills are 4-D leg duty factors measured from contact flags.
    #[default]
    Heuristic,
    /// Skills are VAE latents learned from raw states during training.
    Unsupervised,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub total_steps: u64,
    pub sampling_period: u64,
    pub gamma: f64,
    pub horizon: usize,
    pub capacity: usize,
    pub n_z: usize,
    pub batch_size: usize,
    pub n_pairs: usize,
    pub es_sigma: f64,
    pub lr_policy: f64,
    pub lr_dual: f64,
    pub exploration_sigma: f64,
    pub policy_hidden: usize,
    pub replay_capacity: usize,
    pub dual_grid_per_dim: usize,
    pub dual_grid_lo: f64,
    pub dual_grid_hi: f64,
    pub distance_constraint_enabled: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        // published full-scale discount; everything else keeps the core
        // defaults, which are calibrated for desk-scale runs
        let t = TrainConfig::default();
        Self {
            total_steps: t.total_steps,
            sampling_period: t.sampling_period,
            gamma: 0.995,
            horizon: t.horizon,
            capacity: t.capacity,
            n_z: t.n_z,
            batch_size: t.batch_size,
            n_pairs: t.n_pairs,
            es_sigma: t.es_sigma,
            lr_policy: t.lr_policy,
            lr_dual: t.lr_dual,
            exploration_sigma: t.exploration_sigma,
            policy_hidden: t.policy_hidden,
            replay_capacity: t.replay_capacity,
            dual_grid_per_dim: t.dual_grid_per_dim,
            dual_grid_lo: t.dual_grid_lo,
            dual_grid_hi: t.dual_grid_hi,
            distance_constraint_enabled: t.distance_constraint_enabled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeSection {
    pub hidden: usize,
    pub learning_rate: f64,
    pub recon_scale: f64,
    pub batch_size: usize,
    /// Repertoire re-encode cadence, in train phases.
    pub reencode_every: u64,
}

impl Default for VaeSection {
    fn default() -> Self {
        Self {
            hidden: 32,
            learning_rate: 1e-3,
            recon_scale: 1.0,
            batch_size: 32,
            reencode_every: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageSection {
    /// Bins per skill dimension.
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    /// Steps per fresh evaluation rollout when measuring achieved skills.
    pub rollout_steps: usize,
}

impl Default for CoverageSection {
    fn default() -> Self {
        Self { bins: 20, lo: 0.0, hi: 1.0, rollout_steps: 250 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    /// Smoothing window for the reward curve, in environment steps.
    pub reward_window_steps: u64,
}

impl Default for ExportSection {
    fn default() -> Self {
        Self { reward_window_steps: 750 }
    }
}

/// One damage scenario: the listed legs freeze, either at whatever angle
/// they hold when damage strikes (`angle` omitted) or at a fixed angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DamageScenario {
    pub name: String,
    pub legs: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
}

impl DamageScenario {
    pub fn spec(&self) -> DamageSpec {
        match self.angle {
            Some(a) => DamageSpec::freeze(&self.legs, FreezeMode::AtValue(a)),
            None => DamageSpec::freeze(&self.legs, FreezeMode::AtCurrent),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub mode: Mode,
    /// Defaults to 4 (heuristic) or 2 (unsupervised).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skill_dim: Option<usize>,
    pub output_dir: PathBuf,
    pub train: TrainSection,
    pub env: EnvParams,
    pub vae: VaeSection,
    pub ite: IteConfig,
    pub coverage: CoverageSection,
    pub export: ExportSection,
    pub damage: Vec<DamageScenario>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: None,
            mode: Mode::default(),
            skill_dim: None,
            output_dir: PathBuf::from("runs/default"),
            train: TrainSection::default(),
            env: EnvParams::default(),
            vae: VaeSection::default(),
            ite: IteConfig::default(),
            coverage: CoverageSection::default(),
            export: ExportSection::default(),
            damage: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ValidationIssue> {
        toml::from_str(text).map_err(|e| ValidationIssue::new("config", e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn skill_dim(&self) -> usize {
        self.skill_dim.unwrap_or(match self.mode {
            Mode::Heuristic => NUM_LEGS,
            Mode::Unsupervised => 2,
        })
    }

    pub fn validate(&self) -> Result<(), ValidationIssue> {
        if self.version != CONFIG_VERSION {
            return Err(ValidationIssue::new(
                "version",
                format!(
                    "unsupported config version {}, this build reads {CONFIG_VERSION}",
                    self.version
                ),
            ));
        }
        if self.seed.is_none() {
            return Err(ValidationIssue::new(
                "seed",
                "missing; every run must pin its seed",
            ));
        }
        if self.mode == Mode::Heuristic && self.skill_dim() != NUM_LEGS {
            return Err(ValidationIssue::new(
                "skill_dim",
                format!("heuristic features are {NUM_LEGS}-dimensional"),
            ));
        }
        if self.skill_dim() == 0 {
            return Err(ValidationIssue::new("skill_dim", "must be positive"));
        }
        if self.coverage.bins == 0 {
            return Err(ValidationIssue::new("coverage.bins", "must be positive"));
        }
        if !(self.coverage.lo < self.coverage.hi) {
            return Err(ValidationIssue::new(
                "coverage.lo",
                "grid bounds must satisfy lo < hi",
            ));
        }
        if self.coverage.rollout_steps == 0 {
            return Err(ValidationIssue::new("coverage.rollout_steps", "must be positive"));
        }
        if self.export.reward_window_steps == 0 {
            return Err(ValidationIssue::new("export.reward_window_steps", "must be positive"));
        }
        if self.ite.trials == 0 {
            return Err(ValidationIssue::new("ite.trials", "must be positive"));
        }
        if self.ite.map_size == 0 {
            return Err(ValidationIssue::new("ite.map_size", "must be positive"));
        }
        if !(self.ite.kappa >= 0.0) {
            return Err(ValidationIssue::new("ite.kappa", "must be non-negative"));
        }
        if !(self.ite.lengthscale > 0.0) {
            return Err(ValidationIssue::new("ite.lengthscale", "must be positive"));
        }
        if !(self.ite.noise_var > 0.0) {
            return Err(ValidationIssue::new("ite.noise_var", "must be positive"));
        }
        for (i, d) in self.damage.iter().enumerate() {
            if d.name.is_empty() {
                return Err(ValidationIssue::new(
                    &format!("damage[{i}].name"),
                    "must not be empty",
                ));
            }
            for &leg in &d.legs {
                if leg >= NUM_LEGS {
                    return Err(ValidationIssue::new(
                        &format!("damage[{i}].legs"),
                        format!("leg {leg} out of range, the crawler has {NUM_LEGS}"),
                    ));
                }
            }
        }
        // core-level checks (step arithmetic, rates, dual grid)
        self.train_config()?;
        Ok(())
    }

    /// Core training config for this experiment. Fails on the same issues
    /// as [`validate`](Self::validate) restricted to training fields.
    pub fn train_config(&self) -> Result<TrainConfig, ValidationIssue> {
        let seed = self
            .seed
            .ok_or_else(|| ValidationIssue::new("seed", "missing; every run must pin its seed"))?;
        let features = match self.mode {
            Mode::Heuristic => FeatureConfig::Heuristic,
            Mode::Unsupervised => FeatureConfig::Vae {
                latent_dim: self.skill_dim(),
                hidden: self.vae.hidden,
                learning_rate: self.vae.learning_rate,
                recon_scale: self.vae.recon_scale,
                batch_size: self.vae.batch_size,
                reencode_every: self.vae.reencode_every,
            },
        };
        let t = &self.train;
        let config = TrainConfig {
            seed,
            total_steps: t.total_steps,
            sampling_period: t.sampling_period,
            gamma: t.gamma,
            horizon: t.horizon,
            capacity: t.capacity,
            n_z: t.n_z,
            batch_size: t.batch_size,
            n_pairs: t.n_pairs,
            es_sigma: t.es_sigma,
            lr_policy: t.lr_policy,
            lr_dual: t.lr_dual,
            exploration_sigma: t.exploration_sigma,
            policy_hidden: t.policy_hidden,
            replay_capacity: t.replay_capacity,
            dual_grid_per_dim: t.dual_grid_per_dim,
            dual_grid_lo: t.dual_grid_lo,
            dual_grid_hi: t.dual_grid_hi,
            distance_constraint_enabled: t.distance_constraint_enabled,
            features,
            env: self.env,
        };
        config.validate()?;
        Ok(config)
    }
}
