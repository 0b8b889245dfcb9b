use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PriorKind;
use crate::posterior::{GridConfig, McmcConfig, XQuadScheme};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Mcmc,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolumeConfig {
    /// Compute a prior-volume profile and fit alongside a sweep.
    pub enabled: bool,
    pub n_prior_samples: usize,
    /// Decreasing `t` values; defaults to the median-scaled log grid.
    pub t_grid: Option<Vec<f64>>,
}

impl Default for VolumeConfig {
    fn default() -> Self {
        VolumeConfig {
            enabled: false,
            n_prior_samples: 100_000,
            t_grid: None,
        }
    }
}

fn default_xq_size() -> usize {
    10_000
}

fn default_retries() -> usize {
    1
}

/// One replicated experiment over a grid of `n` and `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: String,
    #[serde(default)]
    pub prior: PriorKind,
    /// True parameter for the linear family (defaults to 0).
    #[serde(default)]
    pub true_w: Option<Vec<f64>>,
    pub sigma: f64,
    pub betas: Vec<f64>,
    pub ns: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub mcmc: McmcConfig,
    /// Non-converged chains are rerun this many times with doubled burn-in
    /// and draws before the row is flagged.
    #[serde(default = "default_retries")]
    pub mcmc_retries: usize,
    #[serde(default = "default_xq_size")]
    pub xq_size: usize,
    #[serde(default)]
    pub xq_scheme: XQuadScheme,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default)]
    pub grid: GridConfig,
    /// Worker threads for replications; `None` uses available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub volume: VolumeConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// A config with defaults for everything but the experiment grid.
    pub fn new(model: &str, sigma: f64, betas: Vec<f64>, ns: Vec<usize>, replications: usize, master_seed: u64) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            model: model.to_string(),
            prior: PriorKind::Uniform,
            true_w: None,
            sigma,
            betas,
            ns,
            replications,
            master_seed,
            mcmc: McmcConfig::default(),
            mcmc_retries: default_retries(),
            xq_size: default_xq_size(),
            xq_scheme: XQuadScheme::Iid,
            backend: Backend::Mcmc,
            grid: GridConfig::default(),
            workers: None,
            volume: VolumeConfig::default(),
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.ns.is_empty() {
            return Err(Error::invalid("ns must not be empty"));
        }
        if let Some(n) = self.ns.iter().find(|n| **n < 10) {
            return Err(Error::invalid(format!("every n must be >= 10, got {n}")));
        }
        if self.betas.is_empty() {
            return Err(Error::invalid("betas must not be empty"));
        }
        if self.betas.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(Error::invalid("every beta must be finite and > 0"));
        }
        let mut seen = std::collections::HashSet::new();
        if !self.ns.iter().all(|n| seen.insert(*n)) {
            return Err(Error::invalid("ns must not repeat"));
        }
        let mut seen = std::collections::HashSet::new();
        if !self.betas.iter().all(|b| seen.insert(b.to_bits())) {
            return Err(Error::invalid("betas must not repeat"));
        }
        if self.replications < 1 {
            return Err(Error::invalid("replications must be >= 1"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("sigma must be finite and > 0"));
        }
        if self.xq_size == 0 {
            return Err(Error::invalid("xq_size must be >= 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("workers must be >= 1"));
        }
        self.mcmc.validate()?;
        if self.grid.points_per_axis < 16 {
            return Err(Error::invalid("grid.points_per_axis must be >= 16"));
        }
        if self.volume.n_prior_samples < crate::birational::MIN_PRIOR_SAMPLES {
            return Err(Error::invalid(format!(
                "volume.n_prior_samples must be >= {}",
                crate::birational::MIN_PRIOR_SAMPLES
            )));
        }
        crate::model::catalog::model_spec(&self.model, self.prior)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
