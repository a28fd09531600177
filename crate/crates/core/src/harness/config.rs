use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{FlowConfig, PclConfig, TrainConfig, VaeConfig};
use crate::metrics::MetricName;
use crate::synthgen::SourceChainConfig;

/// Where the ground-truth pairs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    /// Synthetic sources with generalized-Laplace transitions.
    #[default]
    Sources,
    /// Standardized (cx, cy, area) pairs from a mask-track CSV.
    Tracks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MixingKind {
    Identity,
    /// Random orthogonal matrix.
    #[default]
    Orthogonal,
    /// Fixed 2-D rotation with minor/major axis ratio `kappa`.
    Kappa,
    /// `layers` orthogonal + smooth leaky-ReLU layers.
    Nonlinear,
    /// Two-layer map into `dim_out` >= source dim.
    Expanding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixingSpec {
    pub kind: MixingKind,
    pub layers: usize,
    pub slope: f64,
    pub kappa: f64,
    /// Output width for `expanding`; 0 means the source dimension.
    pub dim_out: usize,
}

impl Default for MixingSpec {
    fn default() -> Self {
        Self {
            kind: MixingKind::Orthogonal,
            layers: 1,
            slope: 0.2,
            kappa: 1.0,
            dim_out: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TracksSpec {
    pub path: Option<PathBuf>,
    pub max_frame_gap: u32,
}

impl Default for TracksSpec {
    fn default() -> Self {
        Self {
            path: None,
            max_frame_gap: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub sources: SourceChainConfig,
    pub tracks: TracksSpec,
    pub mixing: MixingSpec,
    /// Permute each factor's (prev, next) pairs independently before mixing.
    pub shuffle_per_factor: bool,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Sources,
            sources: SourceChainConfig::default(),
            tracks: TracksSpec::default(),
            mixing: MixingSpec::default(),
            shuffle_per_factor: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    #[default]
    Slowflow,
    Slowvae,
    Pmvae,
    Pcl,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Slowflow => "slowflow",
            EstimatorKind::Slowvae => "slowvae",
            EstimatorKind::Pmvae => "pmvae",
            EstimatorKind::Pcl => "pcl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// KL weight of the VAE objectives.
    pub gamma: f64,
    /// Laplace transition rate of the model prior.
    pub lambda: f64,
    pub bidirectional: bool,
    pub flow: FlowConfig,
    /// `latent_dim` 0 means "same as the source dimension".
    pub vae: VaeConfig,
    pub pcl: PclConfig,
    pub train: TrainConfig,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::Slowflow,
            gamma: 10.0,
            lambda: 6.0,
            bidirectional: true,
            flow: FlowConfig::default(),
            vae: VaeConfig {
                latent_dim: 0,
                ..Default::default()
            },
            pcl: PclConfig::default(),
            train: TrainConfig {
                steps: 3000,
                lr: 1e-2,
                log_every: 100,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSpec {
    pub name: MetricName,
    /// Rows of the training data used for evaluation (0 = all).
    pub samples: usize,
}

impl Default for MetricSpec {
    fn default() -> Self {
        Self {
            name: MetricName::Mcc,
            samples: 10_000,
        }
    }
}

/// Values swept by `slowlab sweep`; empty lists fall back to each sweep's
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SweepAxes {
    pub kappa: Vec<f64>,
    pub layers: Vec<usize>,
    pub alpha: Vec<f64>,
    pub dim_x: Vec<usize>,
    pub frame_gap: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    /// Seeds `base_seed .. base_seed + seeds`.
    pub seeds: usize,
    pub base_seed: u64,
    pub dataset: DatasetSpec,
    pub estimator: EstimatorSpec,
    pub metrics: Vec<MetricSpec>,
    pub sweep: SweepAxes,
    /// Worker threads for seeds; 0 picks the available parallelism.
    pub threads: usize,
    /// Also write a checkpoint per seed.
    pub save_models: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seeds: 10,
            base_seed: 0,
            dataset: DatasetSpec::default(),
            estimator: EstimatorSpec::default(),
            metrics: vec![MetricSpec::default()],
            sweep: SweepAxes::default(),
            threads: 0,
            save_models: false,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be >= 1".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("at least one metric is required".into()));
        }
        if self.dataset.kind == DatasetKind::Tracks && self.dataset.tracks.path.is_none() {
            return Err(Error::Config(
                "dataset.kind = tracks needs dataset.tracks.path".into(),
            ));
        }
        self.estimator
            .train
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.base_seed + i).collect()
    }

    /// SHA-256 of the canonical JSON encoding (struct field order, no
    /// whitespace).
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
