use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{EstimatorKind, EstimatorSpec, ExperimentConfig};
use super::data::build_dataset;
use super::stats::{aggregate, par_map, Aggregate};
use crate::error::{Error, Result};
use crate::estimators::{
    latent_stats, pcl_train, save_checkpoint, train_slowflow, train_slowvae, FlowObjective,
    LatentStats, TrainLog, TrainedModel, TransitionPrior, VaeObjective,
};
use crate::metrics::{evaluate, MetricInput};
use crate::rng::seeded;
use crate::synthgen::PairBatch;

pub const RECORD_SCHEMA_VERSION: u32 = 1;

/// Trains the estimator described by `spec` on `data` with `seed`.
pub fn fit_estimator(
    spec: &EstimatorSpec,
    data: &PairBatch,
    seed: u64,
) -> Result<(TrainedModel, TrainLog)> {
    match spec.kind {
        EstimatorKind::Slowflow => {
            let obj = FlowObjective {
                lambda: spec.lambda,
                bidirectional: spec.bidirectional,
            };
            let (m, log) = train_slowflow(data, &spec.flow, &obj, &spec.train, seed)?;
            Ok((TrainedModel::Flow(m), log))
        }
        EstimatorKind::Slowvae | EstimatorKind::Pmvae => {
            let mut cfg = spec.vae.clone();
            if cfg.latent_dim == 0 {
                cfg.latent_dim = data.dim();
            }
            let obj = VaeObjective {
                prior: if spec.kind == EstimatorKind::Pmvae {
                    TransitionPrior::PosteriorMatching
                } else {
                    TransitionPrior::Laplace
                },
                gamma: spec.gamma,
                lambda: spec.lambda,
                bidirectional: spec.bidirectional,
            };
            let (m, log) = train_slowvae(data, &cfg, &obj, &spec.train, seed)?;
            Ok((TrainedModel::Vae(m), log))
        }
        EstimatorKind::Pcl => {
            let (m, log) = pcl_train(data, &spec.pcl, &spec.train, seed)?;
            Ok((TrainedModel::Pcl(m), log))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub final_loss: Option<f64>,
    pub wall_clock_s: f64,
}

impl TrainSummary {
    pub fn from_log(log: &TrainLog) -> Self {
        Self {
            steps: log.entries.last().map_or(0, |e| e.step + 1),
            final_loss: log.final_loss(),
            wall_clock_s: log.wall_clock_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Metric name -> score; empty when the seed failed.
    pub scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSummary>,
    /// Per-latent posterior statistics (VAE estimators only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latents: Option<Vec<LatentStats>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub name: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedResult>,
    /// Over successful seeds only.
    pub aggregate: BTreeMap<String, Aggregate>,
    pub failed_seeds: usize,
    #[serde(default)]
    pub artifacts: Vec<PathBuf>,
}

impl ResultRecord {
    pub fn all_failed(&self) -> bool {
        self.failed_seeds == self.seeds.len()
    }

    pub fn scores(&self, metric: &str) -> Vec<f64> {
        self.seeds
            .iter()
            .filter_map(|s| s.scores.get(metric).copied())
            .collect()
    }

    /// One row per (seed, metric) plus `mean` and `sd` rows per metric.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["name", "config_hash", "seed", "metric", "value", "error"])?;
        for s in &self.seeds {
            if let Some(e) = &s.error {
                w.write_record([
                    &self.name,
                    &self.config_hash,
                    &s.seed.to_string(),
                    "",
                    "",
                    e,
                ])?;
            }
            for (m, v) in &s.scores {
                w.write_record([
                    &self.name,
                    &self.config_hash,
                    &s.seed.to_string(),
                    m,
                    &fmt_exact(*v),
                    "",
                ])?;
            }
        }
        for (m, a) in &self.aggregate {
            w.write_record([
                &self.name,
                &self.config_hash,
                "mean",
                m,
                &fmt_exact(a.mean),
                "",
            ])?;
            w.write_record([&self.name, &self.config_hash, "sd", m, &fmt_exact(a.sd), ""])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Shortest decimal that round-trips, so CSV and JSON carry the same numbers.
pub fn fmt_exact(v: f64) -> String {
    format!("{v:?}")
}

fn run_seed(config: &ExperimentConfig, seed: u64, out: Option<&Path>) -> Result<SeedResult> {
    let mut rng = seeded(seed);
    let data = build_dataset(&config.dataset, &mut rng)?;
    let (model, log) = fit_estimator(
        &config.estimator,
        &data.observations,
        seed.wrapping_add(100),
    )?;
    let mut scores = BTreeMap::new();
    for spec in &config.metrics {
        let n = data.latents.len();
        let take = if spec.samples == 0 {
            n
        } else {
            spec.samples.min(n)
        };
        let rows: Vec<usize> = (0..take).collect();
        let z = data.latents.prev.select_rows(&rows);
        let x = data.observations.prev.select_rows(&rows);
        let input = MetricInput::continuous(model.encode(&x)?, z)?;
        let report = evaluate(&input, spec.name, seed, false)?;
        scores.insert(report.metric_name, report.score);
    }
    let latents = match &model {
        TrainedModel::Vae(m) => Some(latent_stats(m, &data.observations.prev)?),
        _ => None,
    };
    let mut artifacts = Vec::new();
    if let (true, Some(dir)) = (config.save_models, out) {
        let ckpt = dir.join(format!("model_seed{seed}"));
        let steps = TrainSummary::from_log(&log).steps;
        save_checkpoint(&ckpt, &model, seed, steps)?;
        artifacts.push(ckpt);
    }
    Ok(SeedResult {
        seed,
        scores,
        error: None,
        train: Some(TrainSummary::from_log(&log)),
        latents,
        artifacts,
    })
}

/// Runs every seed (concurrently when threads allow) and aggregates. Seed
/// failures are recorded, not propagated. With `out` set, writes
/// `record.json` and `summary.csv` there.
pub fn run(config: &ExperimentConfig, out: Option<&Path>) -> Result<ResultRecord> {
    config.validate()?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let seeds = config.seed_list();
    let results = par_map(&seeds, config.threads, |&seed| {
        run_seed(config, seed, out).unwrap_or_else(|e| SeedResult {
            seed,
            scores: BTreeMap::new(),
            error: Some(e.to_string()),
            train: None,
            latents: None,
            artifacts: Vec::new(),
        })
    });
    let mut aggregate_map = BTreeMap::new();
    for spec in &config.metrics {
        let name = spec.name.as_str().to_string();
        let vals: Vec<f64> = results
            .iter()
            .filter_map(|s| s.scores.get(&name).copied())
            .collect();
        aggregate_map.insert(name, aggregate(&vals));
    }
    let mut record = ResultRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        name: config.name.clone(),
        config_hash: config.hash(),
        config: config.clone(),
        failed_seeds: results.iter().filter(|s| s.error.is_some()).count(),
        seeds: results,
        aggregate: aggregate_map,
        artifacts: Vec::new(),
    };
    if let Some(dir) = out {
        record.artifacts = vec![dir.join("record.json"), dir.join("summary.csv")];
        write_text(
            &record.artifacts[0],
            &serde_json::to_string_pretty(&record)?,
        )?;
        write_text(&record.artifacts[1], &record.to_csv()?)?;
    }
    Ok(record)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
