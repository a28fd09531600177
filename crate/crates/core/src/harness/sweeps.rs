//! Desk-scale experiment recipes. Each sweep config's defaults are the
//! recipe; every field can be overridden from JSON.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::config_hash;
use super::run::{fmt_exact, write_text};
use super::stats::{aggregate, par_map, ttest_ind, Aggregate, TTest};
use crate::dists::{Family, GenLaplaceParams};
use crate::error::{Error, Result};
use crate::estimators::{
    latent_stats, pcl_train, train_slowflow, train_slowvae, EncoderArch, FlowConfig, FlowKind,
    FlowObjective, LatentStats, PclConfig, TrainConfig, TransitionPrior, VaeConfig, VaeObjective,
};
use crate::metrics::{mcc_fraction, Correlation};
use crate::natstats::{compute_transitions, load_tracks, normalize_clip, stats_report};
use crate::rng::{seeded, stream};
use crate::synthgen::{
    expanding_decoder, lap_transition_sample, make_mixing_stack, mix, random_orthogonal,
    sample_ar_sources, sample_pairs, sequence_pairs, uni_transition_sample, ChainMode, FactorGrid,
    MixingStack, PairBatch, SourceChainConfig,
};

/// Offset between a run's data seed and its training seed.
pub const TRAIN_SEED_OFFSET: u64 = 100;

/// One trained model on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDetail {
    pub seed: u64,
    pub score: f64,
    pub final_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latents: Option<Vec<LatentStats>>,
    /// Some latent reverted to the prior (VAE estimators only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collapsed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis: String,
    pub value: f64,
    pub estimator: String,
    pub aggregate: Aggregate,
    pub runs: Vec<RunDetail>,
}

impl SweepPoint {
    fn new(axis: &str, value: f64, estimator: &str, runs: Vec<RunDetail>) -> Self {
        let scores: Vec<f64> = runs.iter().map(|r| r.score).collect();
        Self {
            axis: axis.into(),
            value,
            estimator: estimator.into(),
            aggregate: aggregate(&scores),
            runs,
        }
    }

    pub fn scores(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.score).collect()
    }

    pub fn mean(&self) -> f64 {
        self.aggregate.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub mean_difference: f64,
    pub ttest: Option<TTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    /// Scores are fractions in [0, 1].
    pub metric: String,
    pub points: Vec<SweepPoint>,
    pub comparisons: Vec<Comparison>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl SweepRecord {
    fn new<C: Serialize>(
        sweep: &str,
        config: &C,
        metric: &str,
        points: Vec<SweepPoint>,
    ) -> Result<Self> {
        Ok(Self {
            sweep: sweep.into(),
            config_hash: config_hash(config),
            config: serde_json::to_value(config)?,
            metric: metric.into(),
            points,
            comparisons: Vec::new(),
            notes: Vec::new(),
        })
    }

    pub fn point(&self, estimator: &str, value: f64) -> Option<&SweepPoint> {
        self.points
            .iter()
            .find(|p| p.estimator == estimator && p.value == value)
    }

    fn compare(&mut self, label: &str, a: &SweepPoint, b: &SweepPoint) {
        self.comparisons.push(Comparison {
            label: label.into(),
            mean_difference: a.mean() - b.mean(),
            ttest: ttest_ind(&a.scores(), &b.scores()),
        });
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "sweep",
            "axis",
            "value",
            "estimator",
            "seed",
            "metric",
            "score",
            "final_loss",
            "collapsed",
        ])?;
        for p in &self.points {
            for r in &p.runs {
                w.write_record([
                    self.sweep.clone(),
                    p.axis.clone(),
                    fmt_exact(p.value),
                    p.estimator.clone(),
                    r.seed.to_string(),
                    self.metric.clone(),
                    fmt_exact(r.score),
                    r.final_loss.map(fmt_exact).unwrap_or_default(),
                    r.collapsed.map(|c| c.to_string()).unwrap_or_default(),
                ])?;
            }
            for (label, v) in [("mean", p.aggregate.mean), ("sd", p.aggregate.sd)] {
                w.write_record([
                    self.sweep.clone(),
                    p.axis.clone(),
                    fmt_exact(p.value),
                    p.estimator.clone(),
                    label.into(),
                    self.metric.clone(),
                    fmt_exact(v),
                    String::new(),
                    String::new(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Writes `<sweep>.json` and `<sweep>.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let json = dir.join(format!("{}.json", self.sweep));
        let csv = dir.join(format!("{}.csv", self.sweep));
        write_text(&json, &serde_json::to_string_pretty(self)?)?;
        write_text(&csv, &self.to_csv()?)?;
        Ok(vec![json, csv])
    }
}

fn seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base + i).collect()
}

/// Runs `f` for every (point, seed) job and regroups the results per point.
fn grid<P: Sync + Clone>(
    points: &[P],
    seed_list: &[u64],
    threads: usize,
    f: impl Fn(&P, u64) -> Result<RunDetail> + Sync,
) -> Result<Vec<Vec<RunDetail>>> {
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| seed_list.iter().map(move |&s| (p, s)))
        .collect();
    let done = par_map(&jobs, threads, |&(p, s)| f(&points[p], s));
    let mut out: Vec<Vec<RunDetail>> = vec![Vec::new(); points.len()];
    for ((p, _), r) in jobs.iter().zip(done) {
        out[*p].push(r?);
    }
    Ok(out)
}

fn flow_run(
    data: &PairBatch,
    truth: &PairBatch,
    cfg: &FlowConfig,
    obj: &FlowObjective,
    train: &TrainConfig,
    seed: u64,
    corr: Correlation,
) -> Result<RunDetail> {
    let (m, log) = train_slowflow(data, cfg, obj, train, seed + TRAIN_SEED_OFFSET)?;
    Ok(RunDetail {
        seed,
        score: mcc_fraction(&m.encode(&data.prev)?, &truth.prev, corr)?,
        final_loss: log.final_loss(),
        latents: None,
        collapsed: None,
    })
}

fn vae_run(
    data: &PairBatch,
    truth: &PairBatch,
    cfg: &VaeConfig,
    obj: &VaeObjective,
    train: &TrainConfig,
    seed: u64,
) -> Result<RunDetail> {
    let (m, log) = train_slowvae(data, cfg, obj, train, seed + TRAIN_SEED_OFFSET)?;
    let stats = latent_stats(&m, &data.prev)?;
    Ok(RunDetail {
        seed,
        score: mcc_fraction(
            &m.encode_mean(&data.prev)?,
            &truth.prev,
            Correlation::Spearman,
        )?,
        final_loss: log.final_loss(),
        collapsed: Some(stats.iter().any(LatentStats::collapsed)),
        latents: Some(stats),
    })
}

// ---------------------------------------------------------------- depth sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Table4Sweep {
    pub dim: usize,
    pub layers: Vec<usize>,
    pub seeds: usize,
    pub base_seed: u64,
    pub pairs: usize,
    pub slope: f64,
    /// Innovation rate of the Laplace AR sources.
    pub source_rate: f64,
    pub flow: FlowConfig,
    pub objective: FlowObjective,
    pub train: TrainConfig,
    pub include_pcl: bool,
    pub pcl: PclConfig,
    pub pcl_train: TrainConfig,
    pub threads: usize,
}

impl Default for Table4Sweep {
    fn default() -> Self {
        Self {
            dim: 5,
            layers: vec![1, 2, 3, 4, 5],
            seeds: 5,
            base_seed: 0,
            pairs: 20_000,
            slope: 0.2,
            source_rate: 1.0,
            flow: FlowConfig {
                kind: FlowKind::Coupling,
                blocks: 6,
                hidden: 32,
                depth: 1,
                ..Default::default()
            },
            objective: FlowObjective {
                lambda: 10.0,
                bidirectional: true,
            },
            train: TrainConfig {
                steps: 6000,
                batch_size: 256,
                lr: 1e-2,
                log_every: 500,
                lr_final: 0.01,
            },
            include_pcl: true,
            pcl: PclConfig {
                hidden: 32,
                ..Default::default()
            },
            pcl_train: TrainConfig {
                steps: 10_000,
                batch_size: 256,
                lr: 3e-3,
                log_every: 500,
                lr_final: 0.1,
            },
            threads: 0,
        }
    }
}

/// AR(1) Laplace sources through `L` smooth-leaky-ReLU mixing layers.
pub fn table4_data(cfg: &Table4Sweep, layers: usize, seed: u64) -> Result<(PairBatch, PairBatch)> {
    let mut rng = seeded(seed);
    let lap = GenLaplaceParams::laplace(cfg.source_rate)?;
    let z = sequence_pairs(&sample_ar_sources(cfg.dim, cfg.pairs + 1, &lap, &mut rng)?)?;
    let stack = make_mixing_stack(cfg.dim, layers, cfg.slope, &mut rng)?;
    let x = mix(&z, &stack)?;
    Ok((z, x))
}

pub fn sweep_table4(cfg: &Table4Sweep) -> Result<SweepRecord> {
    let seed_list = seeds(cfg.base_seed, cfg.seeds);
    let mut kinds = vec!["slowflow"];
    if cfg.include_pcl {
        kinds.push("pcl");
    }
    let points: Vec<(usize, &str)> = cfg
        .layers
        .iter()
        .flat_map(|&l| kinds.iter().map(move |&k| (l, k)))
        .collect();
    let runs = grid(&points, &seed_list, cfg.threads, |&(l, kind), seed| {
        let (z, x) = table4_data(cfg, l, seed)?;
        if kind == "pcl" {
            let (m, log) = pcl_train(&x, &cfg.pcl, &cfg.pcl_train, seed + TRAIN_SEED_OFFSET)?;
            Ok(RunDetail {
                seed,
                score: mcc_fraction(&m.encode(&x.prev)?, &z.prev, Correlation::Pearson)?,
                final_loss: log.final_loss(),
                latents: None,
                collapsed: None,
            })
        } else {
            flow_run(
                &x,
                &z,
                &cfg.flow,
                &cfg.objective,
                &cfg.train,
                seed,
                Correlation::Pearson,
            )
        }
    })?;
    let pts = points
        .iter()
        .zip(runs)
        .map(|(&(l, k), r)| SweepPoint::new("layers", l as f64, k, r))
        .collect();
    let mut rec = SweepRecord::new("table4", cfg, "mcc-pearson", pts)?;
    if cfg.include_pcl {
        for &l in &cfg.layers {
            let (a, b) = (
                rec.point("slowflow", l as f64).unwrap().clone(),
                rec.point("pcl", l as f64).unwrap().clone(),
            );
            rec.compare(&format!("slowflow - pcl at L={l}"), &a, &b);
        }
    }
    Ok(rec)
}

// ---------------------------------------------------------------- kappa

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KappaSweep {
    pub kappas: Vec<f64>,
    pub seeds: usize,
    pub base_seed: u64,
    pub pairs: usize,
    /// Transition rate of the generated pairs.
    pub source_lambda: f64,
    pub vae: VaeConfig,
    pub vae_objective: VaeObjective,
    pub vae_train: TrainConfig,
    pub flow: FlowConfig,
    pub flow_objective: FlowObjective,
    pub flow_train: TrainConfig,
    pub threads: usize,
}

impl Default for KappaSweep {
    fn default() -> Self {
        Self {
            kappas: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            seeds: 10,
            base_seed: 0,
            pairs: 20_000,
            source_lambda: 1.0,
            vae: VaeConfig {
                latent_dim: 2,
                arch: EncoderArch::Linear,
                sigma_x: 0.5,
                ..Default::default()
            },
            vae_objective: VaeObjective {
                gamma: 10.0,
                lambda: 1.0,
                bidirectional: true,
                prior: TransitionPrior::Laplace,
            },
            vae_train: TrainConfig {
                steps: 10_000,
                batch_size: 256,
                lr: 3e-3,
                log_every: 500,
                lr_final: 0.1,
            },
            flow: FlowConfig::default(),
            flow_objective: FlowObjective {
                lambda: 1.0,
                bidirectional: false,
            },
            flow_train: TrainConfig {
                steps: 5000,
                batch_size: 256,
                lr: 2e-2,
                log_every: 500,
                lr_final: 0.01,
            },
            threads: 0,
        }
    }
}

pub fn kappa_data(cfg: &KappaSweep, kappa: f64, seed: u64) -> Result<(PairBatch, PairBatch)> {
    let mut rng = seeded(seed);
    let src = SourceChainConfig {
        dim: 2,
        alpha: 1.0,
        lambda: cfg.source_lambda,
        mode: ChainMode::Pair,
        count: cfg.pairs,
    };
    let z = sample_pairs(&src, &mut rng)?;
    let x = mix(&z, &MixingStack::kappa(kappa)?)?;
    Ok((z, x))
}

pub fn sweep_kappa(cfg: &KappaSweep) -> Result<SweepRecord> {
    let seed_list = seeds(cfg.base_seed, cfg.seeds);
    let points: Vec<(f64, &str)> = cfg
        .kappas
        .iter()
        .flat_map(|&k| [(k, "slowvae"), (k, "slowflow")])
        .collect();
    let runs = grid(&points, &seed_list, cfg.threads, |&(kappa, kind), seed| {
        let (z, x) = kappa_data(cfg, kappa, seed)?;
        if kind == "slowvae" {
            vae_run(&x, &z, &cfg.vae, &cfg.vae_objective, &cfg.vae_train, seed)
        } else {
            flow_run(
                &x,
                &z,
                &cfg.flow,
                &cfg.flow_objective,
                &cfg.flow_train,
                seed,
                Correlation::Spearman,
            )
        }
    })?;
    let pts = points
        .iter()
        .zip(runs)
        .map(|(&(k, e), r)| SweepPoint::new("kappa", k, e, r))
        .collect();
    let mut rec = SweepRecord::new("kappa", cfg, "mcc", pts)?;
    for &k in &cfg.kappas {
        let (a, b) = (
            rec.point("slowflow", k).unwrap().clone(),
            rec.point("slowvae", k).unwrap().clone(),
        );
        rec.compare(&format!("slowflow - slowvae at kappa={k}"), &a, &b);
    }
    rec.notes.push(
        "a latent counts as collapsed when its time-averaged sigma >= 0.9 and |mu| <= 0.1".into(),
    );
    Ok(rec)
}

// ---------------------------------------------------------------- alpha

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlphaSweep {
    pub alphas: Vec<f64>,
    pub seeds: usize,
    pub base_seed: u64,
    pub dim: usize,
    pub pairs: usize,
    pub source_lambda: f64,
    pub flow: FlowConfig,
    pub objective: FlowObjective,
    pub train: TrainConfig,
    pub threads: usize,
}

impl Default for AlphaSweep {
    fn default() -> Self {
        Self {
            alphas: vec![0.5, 1.0, 2.0],
            seeds: 10,
            base_seed: 0,
            dim: 4,
            pairs: 20_000,
            source_lambda: 6.0,
            flow: FlowConfig::default(),
            objective: FlowObjective {
                lambda: 6.0,
                bidirectional: false,
            },
            train: TrainConfig {
                steps: 2000,
                batch_size: 256,
                lr: 1e-2,
                log_every: 500,
                lr_final: 1.0,
            },
            threads: 0,
        }
    }
}

/// Gaussian marginal, generalized-Laplace step of shape `alpha`, random
/// orthogonal mixing.
pub fn alpha_data(cfg: &AlphaSweep, alpha: f64, seed: u64) -> Result<(PairBatch, PairBatch)> {
    let mut rng = seeded(seed);
    let src = SourceChainConfig {
        dim: cfg.dim,
        alpha,
        lambda: cfg.source_lambda,
        mode: ChainMode::Pair,
        count: cfg.pairs,
    };
    let z = sample_pairs(&src, &mut rng)?;
    let x = mix(
        &z,
        &MixingStack::linear(random_orthogonal(cfg.dim, &mut rng))?,
    )?;
    Ok((z, x))
}

pub fn sweep_alpha(cfg: &AlphaSweep) -> Result<SweepRecord> {
    let seed_list = seeds(cfg.base_seed, cfg.seeds);
    let runs = grid(&cfg.alphas, &seed_list, cfg.threads, |&alpha, seed| {
        let (z, x) = alpha_data(cfg, alpha, seed)?;
        flow_run(
            &x,
            &z,
            &cfg.flow,
            &cfg.objective,
            &cfg.train,
            seed,
            Correlation::Spearman,
        )
    })?;
    let pts = cfg
        .alphas
        .iter()
        .zip(runs)
        .map(|(&a, r)| SweepPoint::new("alpha", a, "slowflow", r))
        .collect();
    let mut rec = SweepRecord::new("alpha", cfg, "mcc", pts)?;
    for w in cfg.alphas.windows(2) {
        let (a, b) = (
            rec.point("slowflow", w[0]).unwrap().clone(),
            rec.point("slowflow", w[1]).unwrap().clone(),
        );
        rec.compare(&format!("alpha={} - alpha={}", w[0], w[1]), &a, &b);
    }
    Ok(rec)
}

// ---------------------------------------------------------------- dim(x)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct XdimSweep {
    pub dims: Vec<usize>,
    pub latent_dim: usize,
    pub seeds: usize,
    pub base_seed: u64,
    pub pairs: usize,
    pub source_lambda: f64,
    pub slope: f64,
    pub priors: Vec<TransitionPrior>,
    pub vae: VaeConfig,
    pub objective: VaeObjective,
    pub train: TrainConfig,
    pub threads: usize,
}

impl Default for XdimSweep {
    fn default() -> Self {
        Self {
            dims: vec![5, 10, 20, 50],
            latent_dim: 5,
            seeds: 5,
            base_seed: 0,
            pairs: 20_000,
            source_lambda: 1.0,
            slope: 0.2,
            priors: vec![TransitionPrior::Laplace],
            vae: VaeConfig {
                latent_dim: 5,
                arch: EncoderArch::Mlp,
                hidden: 32,
                sigma_x: 0.5,
                ..Default::default()
            },
            objective: VaeObjective {
                gamma: 10.0,
                lambda: 1.0,
                bidirectional: true,
                prior: TransitionPrior::Laplace,
            },
            train: TrainConfig {
                steps: 3000,
                batch_size: 256,
                lr: 1e-3,
                log_every: 500,
                lr_final: 0.1,
            },
            threads: 0,
        }
    }
}

impl XdimSweep {
    /// SlowVAE against PM-VAE at dim(x) = 50 over 10 seeds.
    pub fn pmvae() -> Self {
        Self {
            dims: vec![50],
            seeds: 10,
            priors: vec![TransitionPrior::Laplace, TransitionPrior::PosteriorMatching],
            ..Default::default()
        }
    }
}

pub fn xdim_data(cfg: &XdimSweep, dim_x: usize, seed: u64) -> Result<(PairBatch, PairBatch)> {
    let mut rng = seeded(seed);
    let src = SourceChainConfig {
        dim: cfg.latent_dim,
        alpha: 1.0,
        lambda: cfg.source_lambda,
        mode: ChainMode::Pair,
        count: cfg.pairs,
    };
    let z = sample_pairs(&src, &mut rng)?;
    let x = mix(
        &z,
        &expanding_decoder(cfg.latent_dim, dim_x, cfg.slope, &mut rng)?,
    )?;
    Ok((z, x))
}

fn prior_name(p: TransitionPrior) -> &'static str {
    match p {
        TransitionPrior::Laplace => "slowvae",
        TransitionPrior::PosteriorMatching => "pmvae",
    }
}

pub fn sweep_xdim(cfg: &XdimSweep, name: &str) -> Result<SweepRecord> {
    let seed_list = seeds(cfg.base_seed, cfg.seeds);
    let points: Vec<(usize, TransitionPrior)> = cfg
        .dims
        .iter()
        .flat_map(|&d| cfg.priors.iter().map(move |&p| (d, p)))
        .collect();
    let vae = VaeConfig {
        latent_dim: cfg.latent_dim,
        ..cfg.vae.clone()
    };
    let runs = grid(&points, &seed_list, cfg.threads, |&(d, prior), seed| {
        let (z, x) = xdim_data(cfg, d, seed)?;
        vae_run(
            &x,
            &z,
            &vae,
            &VaeObjective {
                prior,
                ..cfg.objective
            },
            &cfg.train,
            seed,
        )
    })?;
    let pts = points
        .iter()
        .zip(runs)
        .map(|(&(d, p), r)| SweepPoint::new("dim_x", d as f64, prior_name(p), r))
        .collect();
    let mut rec = SweepRecord::new(name, cfg, "mcc", pts)?;
    if cfg.priors.len() > 1 {
        for &d in &cfg.dims {
            let a = rec.point("slowvae", d as f64).unwrap().clone();
            let b = rec.point("pmvae", d as f64).unwrap().clone();
            rec.compare(&format!("slowvae - pmvae at dim_x={d}"), &a, &b);
        }
    }
    if let (Some(&lo), Some(&hi)) = (cfg.dims.iter().min(), cfg.dims.iter().max()) {
        if lo != hi && cfg.priors.contains(&TransitionPrior::Laplace) {
            let a = rec.point("slowvae", hi as f64).unwrap().clone();
            let b = rec.point("slowvae", lo as f64).unwrap().clone();
            rec.compare(&format!("slowvae dim_x={hi} - dim_x={lo}"), &a, &b);
        }
    }
    Ok(rec)
}

// ---------------------------------------------------------------- LAP histogram

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LapHistogramSweep {
    pub lambdas: Vec<f64>,
    pub sizes: Vec<usize>,
    pub count: usize,
    pub seed: u64,
    /// Also sample UNI pairs on the same grid for comparison.
    pub include_uni: bool,
}

impl Default for LapHistogramSweep {
    fn default() -> Self {
        Self {
            lambdas: vec![1.0],
            sizes: vec![10, 10, 10, 10, 10],
            count: 100_000,
            seed: 0,
            include_uni: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeHistogram {
    pub sampler: String,
    pub lambda: Option<f64>,
    /// Pairs with exactly `k` changed factors, `k = 0..=D`.
    pub counts: Vec<usize>,
    pub fractions: Vec<f64>,
    /// Fraction of pairs changing at least two factors.
    pub multi_change_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapHistogramRecord {
    pub sweep: String,
    pub config_hash: String,
    pub config: LapHistogramSweep,
    pub histograms: Vec<ChangeHistogram>,
}

impl LapHistogramRecord {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["sampler", "lambda", "changed", "count", "fraction"])?;
        for h in &self.histograms {
            for (k, (c, f)) in h.counts.iter().zip(&h.fractions).enumerate() {
                w.write_record([
                    h.sampler.clone(),
                    h.lambda.map(fmt_exact).unwrap_or_default(),
                    k.to_string(),
                    c.to_string(),
                    fmt_exact(*f),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let json = dir.join("lap-histogram.json");
        let csv = dir.join("lap-histogram.csv");
        write_text(&json, &serde_json::to_string_pretty(self)?)?;
        write_text(&csv, &self.to_csv()?)?;
        Ok(vec![json, csv])
    }
}

fn change_histogram(sampler: &str, lambda: Option<f64>, counts: Vec<usize>) -> ChangeHistogram {
    let total = counts.iter().sum::<usize>().max(1) as f64;
    let fractions: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let multi = fractions.iter().skip(2).sum();
    ChangeHistogram {
        sampler: sampler.into(),
        lambda,
        counts,
        fractions,
        multi_change_fraction: multi,
    }
}

pub fn sweep_lap_histogram(cfg: &LapHistogramSweep) -> Result<LapHistogramRecord> {
    let grid = FactorGrid::new(cfg.sizes.clone())?;
    let mut histograms = Vec::new();
    for (i, &lambda) in cfg.lambdas.iter().enumerate() {
        let pairs = lap_transition_sample(
            &grid,
            lambda,
            false,
            cfg.count,
            &mut stream(cfg.seed, i as u64),
        )?;
        histograms.push(change_histogram(
            "lap",
            Some(lambda),
            pairs.changed_histogram(),
        ));
    }
    if cfg.include_uni {
        let pairs = uni_transition_sample(
            &grid,
            cfg.count,
            &mut stream(cfg.seed, cfg.lambdas.len() as u64),
        )?;
        histograms.push(change_histogram("uni", None, pairs.changed_histogram()));
    }
    Ok(LapHistogramRecord {
        sweep: "lap-histogram".into(),
        config_hash: config_hash(cfg),
        config: cfg.clone(),
        histograms,
    })
}

// ---------------------------------------------------------------- frame gaps

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GapSweep {
    pub input: Option<PathBuf>,
    pub gaps: Vec<u32>,
}

impl Default for GapSweep {
    fn default() -> Self {
        Self {
            input: None,
            gaps: vec![1, 2, 3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub max_frame_gap: u32,
    pub transitions: usize,
    pub mean_dt: Option<f64>,
    /// Column name -> fitted gen-Laplace shape.
    pub alpha: BTreeMap<String, f64>,
    pub kurtosis: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub sweep: String,
    pub config_hash: String,
    pub config: GapSweep,
    pub rows: Vec<GapRow>,
}

impl GapRecord {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "max_frame_gap",
            "transitions",
            "mean_dt",
            "column",
            "alpha",
            "kurtosis",
        ])?;
        for r in &self.rows {
            for (col, a) in &r.alpha {
                w.write_record([
                    r.max_frame_gap.to_string(),
                    r.transitions.to_string(),
                    r.mean_dt.map(fmt_exact).unwrap_or_default(),
                    col.clone(),
                    fmt_exact(*a),
                    fmt_exact(r.kurtosis[col]),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let json = dir.join("gaps.json");
        let csv = dir.join("gaps.csv");
        write_text(&json, &serde_json::to_string_pretty(self)?)?;
        write_text(&csv, &self.to_csv()?)?;
        Ok(vec![json, csv])
    }
}

/// Shape fits of the transition statistics as the frame gap (and so the
/// mean Δt) grows.
pub fn sweep_gaps(cfg: &GapSweep) -> Result<GapRecord> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("gap sweep needs an input track CSV".into()))?;
    let tracks = load_tracks(path)?;
    let mut rows = Vec::new();
    for &gap in &cfg.gaps {
        let table = normalize_clip(&compute_transitions(&tracks, gap)?)?;
        let report = stats_report(&table)?;
        let mut alpha = BTreeMap::new();
        let mut kurt = BTreeMap::new();
        for c in &report.columns {
            alpha.insert(
                c.column.clone(),
                c.fit(Family::GenLaplace).map_or(f64::NAN, |f| f.params[0]),
            );
            kurt.insert(c.column.clone(), c.kurtosis);
        }
        rows.push(GapRow {
            max_frame_gap: gap,
            transitions: report.transitions,
            mean_dt: report.mean_dt,
            alpha,
            kurtosis: kurt,
        });
    }
    Ok(GapRecord {
        sweep: "gaps".into(),
        config_hash: config_hash(cfg),
        config: cfg.clone(),
        rows,
    })
}
