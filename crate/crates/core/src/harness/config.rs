//! Experiment configuration: one structured document covering every preset,
//! loadable from TOML, with dotted-path command-line overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The built-in experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Online regression with bandit feedback across feature dimensions.
    OlrDimSweep,
    /// Contextual bandit where parameters vastly outnumber actions.
    BanditDvsP,
    /// Fixed-budget LQR cost comparison across horizon lengths.
    HorizonSweep,
    /// Samples to stationarity on LQR across process-noise levels.
    LqrNoiseSweep,
    /// Statistical property suite over all estimators and solvers.
    ValidateProperties,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::OlrDimSweep => "olr-dim-sweep",
            Preset::BanditDvsP => "bandit-dvsp",
            Preset::HorizonSweep => "horizon-sweep",
            Preset::LqrNoiseSweep => "lqr-noise-sweep",
            Preset::ValidateProperties => "validate-properties",
        }
    }

    pub fn parse(name: &str) -> Result<Preset> {
        match name {
            "olr-dim-sweep" => Ok(Preset::OlrDimSweep),
            "bandit-dvsp" => Ok(Preset::BanditDvsP),
            "horizon-sweep" => Ok(Preset::HorizonSweep),
            "lqr-noise-sweep" => Ok(Preset::LqrNoiseSweep),
            "validate-properties" => Ok(Preset::ValidateProperties),
            other => Err(Error::Config(format!(
                "unknown preset '{other}'; expected one of olr-dim-sweep, \
                 bandit-dvsp, horizon-sweep, lqr-noise-sweep, validate-properties"
            ))),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Whether online-regression runs use grid-tuned or closed-form schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    Tuned,
    Theory,
}

/// Parameters of the regression dimension sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OlrSweepParams {
    /// Feature dimensions scanned (bias slot included).
    pub dims: Vec<usize>,
    /// Rounds per run.
    pub rounds: usize,
    pub schedule: ScheduleMode,
    pub alpha_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    /// Cumulative-loss checkpoints emitted per run.
    pub checkpoints: usize,
}

impl Default for OlrSweepParams {
    fn default() -> Self {
        OlrSweepParams {
            dims: vec![10, 100, 1000],
            rounds: 100_000,
            schedule: ScheduleMode::Tuned,
            alpha_grid: vec![1e-6, 3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2],
            delta_grid: vec![0.03, 0.1, 0.3],
            checkpoints: 20,
        }
    }
}

/// Parameters of the contextual-bandit comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditParams {
    pub context_dim: usize,
    pub num_actions: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub max_samples: u64,
    /// Test accuracy defining the samples-to-target metric.
    pub target_accuracy: f64,
    pub reinforce_lr_grid: Vec<f64>,
    pub reinforce_batch: usize,
    pub reinforce_eval_every: usize,
    pub ars_alpha_grid: Vec<f64>,
    pub ars_delta_grid: Vec<f64>,
    pub ars_directions: usize,
    pub ars_top_directions: usize,
    pub ars_batch: usize,
    pub ars_eval_every: usize,
    /// Seed of the fixed dataset shared by every cell.
    pub system_seed: u64,
}

impl Default for BanditParams {
    fn default() -> Self {
        BanditParams {
            context_dim: 500,
            num_actions: 10,
            n_train: 4000,
            n_test: 2000,
            max_samples: 2_000_000,
            target_accuracy: 0.9,
            reinforce_lr_grid: vec![0.05, 0.1, 0.5],
            reinforce_batch: 512,
            reinforce_eval_every: 5,
            ars_alpha_grid: vec![0.005, 0.01, 0.02],
            ars_delta_grid: vec![0.05, 0.1, 0.2],
            ars_directions: 20,
            ars_top_directions: 20,
            ars_batch: 50,
            ars_eval_every: 20,
            system_seed: 42,
        }
    }
}

/// Parameters of the fixed-budget horizon sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonParams {
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizons: Vec<usize>,
    pub noise_std: f64,
    /// Training budget per cell is `steps_per_horizon * horizon`.
    pub steps_per_horizon: u64,
    pub alpha_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    /// Directions per iteration for the parameter-space method.
    pub param_directions: usize,
    /// Draws per iteration for the action-space method.
    pub action_directions: usize,
    /// Norm of the shared random starting gain.
    pub theta0_norm: f64,
    /// Seed of the fixed dynamics shared by every cell.
    pub system_seed: u64,
    /// Iterations between evaluation checkpoints.
    pub eval_every: usize,
}

impl Default for HorizonParams {
    fn default() -> Self {
        HorizonParams {
            state_dim: 50,
            action_dim: 1,
            horizons: vec![1, 2, 4, 8, 16, 24, 32, 40],
            noise_std: 0.1,
            steps_per_horizon: 10_000,
            alpha_grid: vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2],
            delta_grid: vec![0.05, 0.1, 0.3],
            param_directions: 8,
            action_directions: 1,
            theta0_norm: 0.3,
            system_seed: 71,
            eval_every: 25,
        }
    }
}

/// Parameters of the stochasticity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSweepParams {
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    /// Process-noise covariance levels; the per-step standard deviation is
    /// the square root of each entry.
    pub noise_grid: Vec<f64>,
    /// Squared-gradient-norm threshold declaring stationarity.
    pub threshold: f64,
    pub max_env_steps: u64,
    /// Covariance level used for hyperparameter tuning.
    pub tune_noise: f64,
    pub alpha_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub num_directions: usize,
    pub top_directions: usize,
    /// Norm of the per-seed random starting gain.
    pub theta0_norm: f64,
    /// Seed of the fixed dynamics shared by every cell.
    pub system_seed: u64,
}

impl Default for NoiseSweepParams {
    fn default() -> Self {
        NoiseSweepParams {
            state_dim: 20,
            action_dim: 1,
            horizon: 50,
            noise_grid: vec![1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 5e-1],
            threshold: 0.05,
            max_env_steps: 1_000_000,
            tune_noise: 1e-2,
            alpha_grid: vec![1e-4, 3e-4, 1e-3, 3e-3],
            delta_grid: vec![0.01, 0.05, 0.1],
            num_directions: 8,
            top_directions: 8,
            theta0_norm: 0.4,
            system_seed: 7,
        }
    }
}

/// Top-level experiment configuration. Every field has a default, so an
/// empty document is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    /// Evaluation seeds; one run per seed per cell.
    pub seeds: Vec<u64>,
    /// Seeds reserved for hyperparameter tuning; must not overlap `seeds`.
    pub tuning_seeds: Vec<u64>,
    /// Omit the timestamp header line from CSV output.
    pub suppress_timestamp: bool,
    pub olr: OlrSweepParams,
    pub bandit: BanditParams,
    pub horizon: HorizonParams,
    pub noise: NoiseSweepParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: Preset::ValidateProperties,
            seeds: (1..=10).collect(),
            tuning_seeds: vec![101, 102, 103],
            suppress_timestamp: false,
            olr: OlrSweepParams::default(),
            bandit: BanditParams::default(),
            horizon: HorizonParams::default(),
            noise: NoiseSweepParams::default(),
        }
    }
}

fn positive_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config(format!("{name} grid is empty")));
    }
    for &v in grid {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Config(format!(
                "{name} grid entry {v} must be positive and finite"
            )));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.tuning_seeds.is_empty() {
            return Err(Error::Config("tuning seed list is empty".into()));
        }
        for s in &self.tuning_seeds {
            if self.seeds.contains(s) {
                return Err(Error::Config(format!(
                    "seed {s} appears in both the evaluation and tuning sets"
                )));
            }
        }
        if self.olr.dims.is_empty() || self.olr.dims.iter().any(|&b| b < 2) {
            return Err(Error::Config(
                "regression sweep needs dimensions of at least 2".into(),
            ));
        }
        if self.olr.rounds == 0 || self.olr.checkpoints == 0 {
            return Err(Error::Config(
                "regression sweep needs positive rounds and checkpoints".into(),
            ));
        }
        positive_grid("olr.alpha", &self.olr.alpha_grid)?;
        positive_grid("olr.delta", &self.olr.delta_grid)?;
        if self.bandit.num_actions < 2 || self.bandit.context_dim == 0 {
            return Err(Error::Config(
                "bandit needs at least 2 actions and a positive context dimension".into(),
            ));
        }
        if self.bandit.max_samples == 0 {
            return Err(Error::Config("bandit sample budget is zero".into()));
        }
        if !(self.bandit.target_accuracy > 0.0 && self.bandit.target_accuracy <= 1.0) {
            return Err(Error::Config(format!(
                "target accuracy {} outside (0, 1]",
                self.bandit.target_accuracy
            )));
        }
        positive_grid("bandit.reinforce_lr", &self.bandit.reinforce_lr_grid)?;
        positive_grid("bandit.ars_alpha", &self.bandit.ars_alpha_grid)?;
        positive_grid("bandit.ars_delta", &self.bandit.ars_delta_grid)?;
        if self.horizon.horizons.is_empty() || self.horizon.horizons.contains(&0) {
            return Err(Error::Config("horizon list must be nonempty and positive".into()));
        }
        if self.horizon.steps_per_horizon == 0 {
            return Err(Error::Config("horizon budget rule is zero".into()));
        }
        positive_grid("horizon.alpha", &self.horizon.alpha_grid)?;
        positive_grid("horizon.delta", &self.horizon.delta_grid)?;
        positive_grid("noise.grid", &self.noise.noise_grid)?;
        positive_grid("noise.alpha", &self.noise.alpha_grid)?;
        positive_grid("noise.delta", &self.noise.delta_grid)?;
        if !(self.noise.threshold > 0.0) || self.noise.max_env_steps == 0 {
            return Err(Error::Config(
                "stationarity sweep needs a positive threshold and budget".into(),
            ));
        }
        Ok(())
    }

    /// Parse a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Apply `key.path=value` overrides on top of this config. Values are
    /// parsed as TOML (so arrays and strings work); bare words fall back to
    /// strings, letting `preset=olr-dim-sweep` pass unquoted.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            let cfg = self.clone();
            cfg.validate()?;
            return Ok(cfg);
        }
        let mut doc = toml::Value::try_from(self)
            .map_err(|e| Error::Config(format!("config serialize: {e}")))?;
        for item in overrides {
            let (path, raw) = item.split_once('=').ok_or_else(|| {
                Error::Config(format!("override '{item}' is not of the form key=value"))
            })?;
            let value = parse_override_value(raw)?;
            set_path(&mut doc, path.trim(), value)?;
        }
        let cfg: ExperimentConfig = doc
            .try_into()
            .map_err(|e| Error::Config(format!("override produced invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_override_value(raw: &str) -> Result<toml::Value> {
    let wrapped = format!("v = {}", raw.trim());
    if let Ok(table) = wrapped.parse::<toml::Table>() {
        if let Some(v) = table.get("v") {
            return Ok(v.clone());
        }
    }
    // Bare word: treat as a string (covers enum variants like "theory").
    Ok(toml::Value::String(raw.trim().to_string()))
}

fn set_path(doc: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override path '{path}' is malformed")));
    }
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        node = node
            .as_table_mut()
            .and_then(|t| t.get_mut(*part))
            .ok_or_else(|| Error::Config(format!("override path '{path}' not found")))?;
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("override path '{path}' not found")))?;
    let leaf = *parts.last().expect("nonempty path");
    if !table.contains_key(leaf) {
        return Err(Error::Config(format!("override path '{path}' not found")));
    }
    table.insert(leaf.to_string(), value);
    Ok(())
}
