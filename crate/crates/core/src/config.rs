//! JSON experiment configuration.
//!
//! Every section is optional and falls back to defaults; unknown keys are
//! rejected at any depth. The digest is the SHA-256 of the defaulted config
//! serialized with sorted keys, so it does not depend on key order or on
//! whether a default was spelled out.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmark::BenchmarkConfig;
use crate::data::{DatasetSchema, Dataset, TargetSpec, compute_targets};
use crate::dpp::KernelConfig;
use crate::error::{Error, Result};
use crate::gan::{GanConfig, Variant};
use crate::metrics::MetricsConfig;
use crate::nn::SurrogateConfig;

/// A scalar applied to every objective, or one value per objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerObjective {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerObjective {
    pub fn resolve(&self, t: usize) -> Result<Vec<f64>> {
        match self {
            PerObjective::Uniform(v) => Ok(vec![*v; t]),
            PerObjective::Each(v) if v.len() == t => Ok(v.clone()),
            PerObjective::Each(v) => Err(Error::Config(format!(
                "expected {t} per-objective values, got {}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetsConfig {
    pub percentile: f64,
    pub alpha: PerObjective,
    pub beta: PerObjective,
}

impl Default for TargetsConfig {
    fn default() -> Self {
        TargetsConfig {
            percentile: 75.0,
            alpha: PerObjective::Uniform(1.0),
            beta: PerObjective::Uniform(1.0),
        }
    }
}

impl TargetsConfig {
    pub fn compute(&self, data: &Dataset) -> Result<TargetSpec> {
        let t = data.objective_count();
        compute_targets(data, self.percentile, &self.alpha.resolve(t)?, &self.beta.resolve(t)?)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Column roles for user datasets; synthetic problems carry their own.
    pub schema: Option<DatasetSchema>,
    pub targets: TargetsConfig,
    pub surrogate: SurrogateConfig,
    /// Overrides the width-dependent default kernel.
    pub kernel: Option<KernelConfig>,
    pub gan: GanConfig,
    pub metrics: MetricsConfig,
    pub benchmark: BenchmarkConfig,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(schema) = &self.schema {
            schema.validate()?;
        }
        let p = self.targets.percentile;
        if !(p > 0.0 && p < 100.0) {
            return Err(Error::Config(format!("targets.percentile must lie in (0, 100), got {p}")));
        }
        for (name, v) in [("alpha", &self.targets.alpha), ("beta", &self.targets.beta)] {
            let values = match v {
                PerObjective::Uniform(x) => vec![*x],
                PerObjective::Each(xs) => xs.clone(),
            };
            if values.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(Error::Config(format!("targets.{name} entries must be finite and > 0")));
            }
        }
        self.surrogate.regressor.validate()?;
        self.surrogate.classifier.validate()?;
        if let Some(k) = &self.kernel {
            k.validate()?;
        }
        self.gan.validate()?;
        if !(0.0..=1.0).contains(&self.metrics.classifier_threshold) {
            return Err(Error::Config("metrics.classifier_threshold must lie in [0, 1]".into()));
        }
        self.benchmark.validate()?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical (sorted-key, defaulted) serialization.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config is always serializable");
        let canonical = serde_json::to_string(&value).expect("value is always serializable");
        format!("{:x}", Sha256::digest(canonical.as_bytes()))
    }

    /// GAN settings for one run, with the top-level kernel applied.
    pub fn gan_for(&self, variant: Variant, seed: u64) -> GanConfig {
        let mut gan = self.gan.clone();
        gan.variant = variant;
        gan.seed = seed;
        if self.kernel.is_some() {
            gan.kernel = self.kernel;
        }
        gan
    }

    /// Comment lines embedded at the top of every output file.
    pub fn preamble(&self, seed: u64) -> Vec<String> {
        vec![format!("config_digest={}", self.digest()), format!("seed={seed}")]
    }
}
