//! Metrics that need a sampler able to hold one factor fixed.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::logistic::{SoftmaxClassifier, SoftmaxConfig};
use crate::error::{Error, Result};
use crate::gradcore::Tensor;
use crate::synthgen::FactorGrid;

/// Maps flat row-major grid indices (`n x D`) to latent codes (`n x D'`).
pub type GridEncoder<'a> = dyn FnMut(&[usize]) -> Result<Tensor> + 'a;

fn column_variances(z: &Tensor) -> Vec<f64> {
    let n = z.rows() as f64;
    (0..z.cols())
        .map(|c| {
            let col = z.column(c);
            let m = col.iter().sum::<f64>() / n;
            col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorVaeConfig {
    pub variance_threshold: f64,
    pub big_batch: usize,
    pub small_batch: usize,
    /// Training votes; held-out votes are half as many.
    pub votes: usize,
}

impl Default for FactorVaeConfig {
    fn default() -> Self {
        Self {
            variance_threshold: 0.05,
            big_batch: 10_000,
            small_batch: 64,
            votes: 800,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorVaeReport {
    pub score: f64,
    pub train_accuracy: f64,
    pub active_latents: Vec<usize>,
    /// votes[latent][factor] on the training votes.
    pub votes: Vec<Vec<usize>>,
}

pub fn factorvae_score<R: Rng + ?Sized>(
    grid: &FactorGrid,
    encoder: &mut GridEncoder<'_>,
    config: &FactorVaeConfig,
    rng: &mut R,
) -> Result<FactorVaeReport> {
    grid.validate()?;
    if config.small_batch < 2 || config.big_batch < 2 || config.votes < 2 {
        return Err(Error::invalid("FactorVAE batches and votes must be >= 2"));
    }
    let d = grid.num_factors();
    let global = column_variances(&encoder(&grid.sample_uniform(config.big_batch, rng))?);
    let active: Vec<usize> = (0..global.len())
        .filter(|&i| global[i] >= config.variance_threshold)
        .collect();
    if active.is_empty() {
        return Err(Error::Degenerate(
            "all latents pruned by the variance threshold".into(),
        ));
    }
    let mut vote = |rng: &mut R| -> Result<(usize, usize)> {
        let k = rng.random_range(0..d);
        let z = encoder(&grid.sample_with_fixed(config.small_batch, k, rng))?;
        let v = column_variances(&z);
        let best = *active
            .iter()
            .min_by(|&&a, &&b| (v[a] / global[a]).total_cmp(&(v[b] / global[b])))
            .unwrap();
        Ok((best, k))
    };
    let mut votes = vec![vec![0usize; d]; global.len()];
    for _ in 0..config.votes {
        let (l, k) = vote(rng)?;
        votes[l][k] += 1;
    }
    let majority: Vec<usize> = votes
        .iter()
        .map(|row| {
            (0..d)
                .max_by_key(|&k| (row[k], std::cmp::Reverse(k)))
                .unwrap()
        })
        .collect();
    let train_correct: usize = votes.iter().zip(&majority).map(|(row, &m)| row[m]).sum();
    let eval = (config.votes / 2).max(1);
    let mut correct = 0;
    for _ in 0..eval {
        let (l, k) = vote(rng)?;
        if majority[l] == k {
            correct += 1;
        }
    }
    Ok(FactorVaeReport {
        score: correct as f64 / eval as f64,
        train_accuracy: train_correct as f64 / config.votes as f64,
        active_latents: active,
        votes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BetaVaeConfig {
    pub batch_size: usize,
    pub num_train: usize,
    pub num_eval: usize,
    pub classifier_steps: usize,
    pub l2: f64,
    /// Null control: permute the training labels.
    pub shuffle_labels: bool,
}

impl Default for BetaVaeConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            num_train: 1000,
            num_eval: 500,
            classifier_steps: 2000,
            l2: 1e-3,
            shuffle_labels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaVaeReport {
    pub score: f64,
    pub train_accuracy: f64,
}

fn beta_points<R: Rng + ?Sized>(
    grid: &FactorGrid,
    encoder: &mut GridEncoder<'_>,
    count: usize,
    batch: usize,
    rng: &mut R,
) -> Result<(Tensor, Vec<usize>)> {
    let d = grid.num_factors();
    let mut rows = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let k = rng.random_range(0..d);
        let a = grid.sample_uniform(batch, rng);
        let mut b = grid.sample_uniform(batch, rng);
        for r in 0..batch {
            b[r * d + k] = a[r * d + k];
        }
        let (za, zb) = (encoder(&a)?, encoder(&b)?);
        let mut diff = vec![0.0; za.cols()];
        for (x, y) in za.data().chunks(za.cols()).zip(zb.data().chunks(zb.cols())) {
            for c in 0..diff.len() {
                diff[c] += (x[c] - y[c]).abs() / batch as f64;
            }
        }
        rows.push(diff);
        labels.push(k);
    }
    Ok((Tensor::from_rows(&rows)?, labels))
}

pub fn betavae_score<R: Rng + ?Sized>(
    grid: &FactorGrid,
    encoder: &mut GridEncoder<'_>,
    config: &BetaVaeConfig,
    rng: &mut R,
) -> Result<BetaVaeReport> {
    grid.validate()?;
    if config.batch_size == 0 || config.num_train < 2 || config.num_eval == 0 {
        return Err(Error::invalid("BetaVAE batch/train/eval sizes too small"));
    }
    let (xtr, mut ytr) = beta_points(grid, encoder, config.num_train, config.batch_size, rng)?;
    let (xte, yte) = beta_points(grid, encoder, config.num_eval, config.batch_size, rng)?;
    if config.shuffle_labels {
        ytr.shuffle(rng);
    }
    let cfg = SoftmaxConfig {
        steps: config.classifier_steps,
        lr: 0.05,
        l2: config.l2,
    };
    let clf = SoftmaxClassifier::fit(&xtr, &ytr, grid.num_factors(), &cfg)?;
    Ok(BetaVaeReport {
        score: clf.accuracy(&xte, &yte),
        train_accuracy: clf.accuracy(&xtr, &ytr),
    })
}
