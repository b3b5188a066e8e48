//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dpkm::candidates::{CandidateConfig, LshProcedureConfig, DEFAULT_THRESHOLD_CONSTANT};
use dpkm::ldp::{LdpConfig, RandomnessMode};
use dpkm::mechanisms::AverageNoise;

use crate::error::{io_error, HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "one")]
    pub trials: usize,
    /// Trials run concurrently on up to this many threads.
    #[serde(default = "one")]
    pub workers: usize,
    pub k: usize,
    pub pipeline: PipelineKind,
    pub dataset: DatasetSpec,
    pub privacy: PrivacySpec,
    #[serde(default)]
    pub knobs: Knobs,
    #[serde(default)]
    pub thresholds: Vec<Threshold>,
    /// Output directory; falls back to `DPKM_OUT_DIR`, then `dpkm-out`.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineKind {
    Centralized,
    Ldp,
    CentralizedCoreset,
    LdpCoreset,
}

impl PipelineKind {
    pub fn name(self) -> &'static str {
        match self {
            PipelineKind::Centralized => "centralized",
            PipelineKind::Ldp => "ldp",
            PipelineKind::CentralizedCoreset => "centralized-coreset",
            PipelineKind::LdpCoreset => "ldp-coreset",
        }
    }

    pub fn is_local(self) -> bool {
        matches!(self, PipelineKind::Ldp | PipelineKind::LdpCoreset)
    }

    pub fn is_coreset(self) -> bool {
        matches!(self, PipelineKind::CentralizedCoreset | PipelineKind::LdpCoreset)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// A planted mixture with `k` clouds; see [`crate::data::generate_mixture`].
    Mixture {
        n: usize,
        d: usize,
        separation: f64,
        sigma: f64,
        lambda: f64,
        /// Seed for the data itself; trials share one dataset.
        #[serde(default)]
        data_seed: Option<u64>,
    },
    File {
        path: PathBuf,
        #[serde(default)]
        project: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacySpec {
    pub epsilon: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_beta() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Knobs {
    pub a: f64,
    pub b: f64,
    pub gamma: Option<f64>,
    pub t: Option<usize>,
    pub threshold_constant: f64,
    pub gaussian_averages: bool,
    pub bucket_threshold_scale: f64,
    pub average_threshold_scale: f64,
    pub delta_constant: f64,
    /// Degree of the k-wise independent public signs; full randomness when absent.
    pub kwise: Option<usize>,
    /// Random center sets per coreset check.
    pub coreset_trials: usize,
}

impl Default for Knobs {
    fn default() -> Self {
        let ldp = LdpConfig::default();
        Knobs {
            a: ldp.a,
            b: ldp.b,
            gamma: None,
            t: None,
            threshold_constant: DEFAULT_THRESHOLD_CONSTANT,
            gaussian_averages: false,
            bucket_threshold_scale: ldp.bucket_threshold_scale,
            average_threshold_scale: ldp.average_threshold_scale,
            delta_constant: ldp.delta_constant,
            kwise: None,
            coreset_trials: 100,
        }
    }
}

impl Knobs {
    pub fn candidate_config(&self) -> CandidateConfig {
        CandidateConfig {
            lsh: LshProcedureConfig {
                a: self.a,
                b: self.b,
                threshold_constant: self.threshold_constant,
                noise: if self.gaussian_averages {
                    AverageNoise::Gaussian
                } else {
                    AverageNoise::Laplace
                },
            },
            gamma: self.gamma,
            t: self.t,
        }
    }

    pub fn ldp_config(&self) -> LdpConfig {
        LdpConfig {
            a: self.a,
            b: self.b,
            bucket_threshold_scale: self.bucket_threshold_scale,
            average_threshold_scale: self.average_threshold_scale,
            delta_constant: self.delta_constant,
            randomness: match self.kwise {
                Some(k) => RandomnessMode::KWise(k),
                None => RandomnessMode::Full,
            },
        }
    }
}

/// A regression check on one metric's aggregate over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    pub metric: String,
    pub statistic: Statistic,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
    /// Where the bound came from.
    #[serde(default)]
    pub provenance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    Min,
    Median,
    Mean,
    Max,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(HarnessError::Config(m));
        let Knobs { a, b, .. } = self.knobs;
        if !(0.0 < b && b < a && a < 1.0) {
            return fail(format!("need 0 < b < a < 1, got a={a}, b={b}"));
        }
        let p = self.privacy;
        if !(p.epsilon > 0.0 && p.epsilon.is_finite()) {
            return fail(format!("epsilon must be positive, got {}", p.epsilon));
        }
        if !(0.0..1.0).contains(&p.delta) {
            return fail(format!("delta must lie in [0, 1), got {}", p.delta));
        }
        if !(p.beta > 0.0 && p.beta < 1.0) {
            return fail(format!("beta must lie in (0, 1), got {}", p.beta));
        }
        if !self.pipeline.is_local() && p.delta <= 0.0 {
            // Releasing only occupied buckets is approximate DP.
            return fail(format!("the {} pipeline needs delta > 0", self.pipeline.name()));
        }
        if self.k == 0 || self.trials == 0 || self.workers == 0 {
            return fail("k, trials and workers must be at least 1".into());
        }
        if self.knobs.coreset_trials == 0 {
            return fail("coreset_trials must be at least 1".into());
        }
        for t in &self.thresholds {
            if t.min.is_none() && t.max.is_none() {
                return fail(format!("threshold on {} sets neither min nor max", t.metric));
            }
        }
        Ok(())
    }

    /// The configured output directory, else `DPKM_OUT_DIR`, else `dpkm-out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(default_output_dir)
    }
}

pub fn default_output_dir() -> PathBuf {
    std::env::var_os("DPKM_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("dpkm-out"))
}
