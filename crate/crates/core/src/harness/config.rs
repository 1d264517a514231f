//! Campaign configuration files (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::AcquisitionConfig;
use crate::error::{Error, Result};
use crate::gp::NoiseMode;
use crate::optimizer::{OptimizerConfig, Variant};
use crate::tasks::{make_task, ClosedLoopTask, TaskId};

/// Absolute overrides of the per-task default budgets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetOverrides {
    pub k_init: Option<usize>,
    pub max_evals: Option<usize>,
    pub step_budget: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub tasks: Vec<TaskId>,
    pub variants: Vec<Variant>,
    /// Explicit seeds; takes precedence over `seed_count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Seeds `0..seed_count` when `seeds` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_count: Option<u64>,
    #[serde(default)]
    pub budget: BudgetOverrides,
    #[serde(default)]
    pub noise_mode: NoiseMode,
    /// Std of additive measurement noise on the controlled output.
    #[serde(default)]
    pub measurement_noise: f64,
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
    #[serde(default = "default_restarts")]
    pub fit_restarts: usize,
    #[serde(default = "default_max_iters")]
    pub fit_max_iters: usize,
}

fn default_restarts() -> usize {
    8
}

fn default_max_iters() -> usize {
    40
}

impl CampaignConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: CampaignConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn seeds(&self) -> Vec<u64> {
        match (&self.seeds, self.seed_count) {
            (Some(s), _) => s.clone(),
            (None, Some(n)) => (0..n).collect(),
            (None, None) => Vec::new(),
        }
    }

    /// Checks field-level constraints and every per-run optimizer config.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.tasks.is_empty() {
            return bad("field `tasks` must not be empty");
        }
        if self.variants.is_empty() {
            return bad("field `variants` must not be empty");
        }
        if self.seeds().is_empty() {
            return bad("one of `seeds` (non-empty) or `seed_count` (> 0) is required");
        }
        let mut seeds = self.seeds();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return bad("field `seeds` contains duplicates");
        }
        if !(self.measurement_noise >= 0.0 && self.measurement_noise.is_finite()) {
            return bad("field `measurement_noise` must be a finite non-negative number");
        }
        let a = &self.acquisition;
        if a.n_samples == 0 || a.grid_per_dim == 0 || a.candidates_per_dim == 0 || a.refine_top == 0
        {
            return bad("acquisition sizes must be positive");
        }
        for &t in &self.tasks {
            let task = self.task(t);
            let cfg = self.optimizer_config(&task, self.variants[0], 0);
            cfg.validate(&task)
                .map_err(|e| Error::Config(format!("task {t}: {e}")))?;
        }
        Ok(())
    }

    pub fn task(&self, id: TaskId) -> ClosedLoopTask {
        make_task(id).with_measurement_noise(self.measurement_noise)
    }

    pub fn optimizer_config(
        &self,
        task: &ClosedLoopTask,
        variant: Variant,
        seed: u64,
    ) -> OptimizerConfig {
        let mut cfg = OptimizerConfig::for_task(task, variant, seed);
        if let Some(v) = self.budget.k_init {
            cfg.k_init = v;
        }
        if let Some(v) = self.budget.max_evals {
            cfg.max_evals = v;
        }
        if let Some(v) = self.budget.step_budget {
            cfg.step_budget = v;
        }
        cfg.noise_mode = self.noise_mode;
        cfg.acquisition = self.acquisition.clone();
        cfg.fit_restarts = self.fit_restarts;
        cfg.fit_max_iters = self.fit_max_iters;
        cfg
    }

    /// SHA-256 of the canonical re-serialization, so formatting and comments
    /// in the source file do not matter.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
