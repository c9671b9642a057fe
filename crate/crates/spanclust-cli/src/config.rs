//! The run configuration file (TOML) and its validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use spanclust::laplace::LaplaceOptions;
use spanclust::model::{ModelConfig, PriorSpec};
use spanclust::moves::MoveConfig;
use spanclust::sampler::ChainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub paths: Paths,
    pub model: ModelSection,
    pub sampler: SamplerSection,
    #[serde(default)]
    pub emit: EmitSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Paths {
    pub panel: PathBuf,
    pub edges: PathBuf,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSection {
    pub family: String,
    pub components: Vec<String>,
    #[serde(default)]
    pub seasonal_period: Option<usize>,
    #[serde(default)]
    pub monomial_degree: Option<usize>,
    /// `[k, degree]` for a B-spline covariate basis.
    #[serde(default)]
    pub bspline_basis: Option<(usize, usize)>,
    #[serde(default)]
    pub error_term: Option<bool>,
    #[serde(default)]
    pub sum_to_zero: Option<bool>,
    #[serde(default)]
    pub priors: BTreeMap<String, PriorSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerSection {
    pub iterations: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    #[serde(default = "default_c0")]
    pub c0: u32,
    #[serde(default)]
    pub seed: u64,
    /// `[r_birth, r_death, r_change, r_hyper]`.
    #[serde(default = "default_move_probs")]
    pub move_probs: [f64; 4],
    #[serde(default = "default_q")]
    pub geometric_q: f64,
    #[serde(default = "default_true")]
    pub include_partition_binomial: bool,
    #[serde(default)]
    pub freeze_weights: bool,
    #[serde(default)]
    pub grid_points_per_dim: Option<usize>,
    #[serde(default = "default_true")]
    pub tolerate_nonconverged: bool,
    #[serde(default)]
    pub cache_cap: Option<usize>,
    /// Posterior draws per cluster used by `summarize`.
    #[serde(default = "default_draws")]
    pub posterior_draws: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EmitSection {
    #[serde(default)]
    pub plots: bool,
    #[serde(default)]
    pub diagnostics: bool,
}

fn default_burn_in() -> f64 {
    0.5
}
fn default_c0() -> u32 {
    10
}
fn default_move_probs() -> [f64; 4] {
    [0.35, 0.35, 0.2, 0.1]
}
fn default_q() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_draws() -> usize {
    2000
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text).context("parsing config")?;
        config.validate(path.parent().unwrap_or(Path::new(".")))?;
        Ok(config)
    }

    /// Checks invariants and resolves relative paths against the config
    /// file location.
    pub fn validate(&self, base: &Path) -> Result<()> {
        if self.sampler.iterations < 1 {
            bail!("sampler.iterations must be at least 1");
        }
        if !(0.0..1.0).contains(&self.sampler.burn_in_fraction) {
            bail!("sampler.burn_in_fraction must lie in [0, 1)");
        }
        for path in [&self.paths.panel, &self.paths.edges] {
            let resolved = self.resolve(base, path);
            if !resolved.exists() {
                bail!("input file {} does not exist", resolved.display());
            }
        }
        Ok(())
    }

    pub fn resolve(&self, base: &Path, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            base.join(path)
        }
    }

    pub fn model_config(&self, t_len: usize) -> ModelConfig {
        ModelConfig {
            family: self.model.family.clone(),
            components: self.model.components.clone(),
            t_len,
            seasonal_period: self.model.seasonal_period,
            monomial_degree: self.model.monomial_degree,
            bspline_basis: self.model.bspline_basis,
            error_term: self.model.error_term,
            sum_to_zero: self.model.sum_to_zero,
            priors: self.model.priors.clone(),
        }
    }

    pub fn chain_config(&self, threads: usize) -> ChainConfig {
        ChainConfig {
            iterations: self.sampler.iterations,
            c0: self.sampler.c0,
            seed: self.sampler.seed,
            moves: MoveConfig {
                move_probs: self.sampler.move_probs,
                geometric_q: self.sampler.geometric_q,
                include_partition_binomial: self.sampler.include_partition_binomial,
                freeze_weights: self.sampler.freeze_weights,
            },
            laplace: LaplaceOptions {
                grid_points_per_dim: self.sampler.grid_points_per_dim,
                ..LaplaceOptions::default()
            },
            tolerate_nonconverged: self.sampler.tolerate_nonconverged,
            threads,
            cache_cap: self.sampler.cache_cap,
            initial_weights: None,
        }
    }

    /// Compact single-line JSON echo embedded in emitted files.
    pub fn echo_line(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
