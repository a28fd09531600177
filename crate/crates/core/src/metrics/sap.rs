use serde::{Deserialize, Serialize};

use super::info::level_codes;
use super::logistic::{SoftmaxClassifier, SoftmaxConfig};
use super::mcc::{FactorKind, MetricInput};
use crate::error::{Error, Result};
use crate::gradcore::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SapOptions {
    /// Leading fraction of rows used for fitting; the rest is held out.
    pub train_fraction: f64,
    pub classifier_steps: usize,
    pub classifier_lr: f64,
}

impl Default for SapOptions {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            classifier_steps: 300,
            classifier_lr: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SapReport {
    /// D' x D held-out scores (accuracy for categorical, R^2 for continuous).
    pub scores: Vec<Vec<f64>>,
    pub per_factor: Vec<f64>,
    pub score: f64,
    pub note: &'static str,
}

pub fn sap(input: &MetricInput, options: &SapOptions) -> Result<SapReport> {
    let n = input.n();
    let n_train = ((n as f64) * options.train_fraction).round() as usize;
    if n_train < 2 || n - n_train < 2 {
        return Err(Error::invalid(
            "SAP needs at least two train and two test rows",
        ));
    }
    let latents = input.latents.columns();
    let factors = input.factors.columns();
    let mut scores = vec![vec![0.0; factors.len()]; latents.len()];
    for (j, f) in factors.iter().enumerate() {
        let categorical = input.factor_kinds[j] == FactorKind::Categorical;
        let codes = if categorical {
            Some(level_codes(f))
        } else {
            None
        };
        for (i, z) in latents.iter().enumerate() {
            let s = match &codes {
                Some(c) => classify_1d(z, c, n_train, options)?,
                None => stump_r2(z, f, n_train),
            };
            scores[i][j] = s.clamp(0.0, 1.0);
        }
    }
    let per_factor: Vec<f64> = (0..factors.len())
        .map(|j| {
            let mut col: Vec<f64> = scores.iter().map(|r| r[j]).collect();
            col.sort_by(|a, b| b.total_cmp(a));
            col[0] - col.get(1).copied().unwrap_or(0.0)
        })
        .collect();
    let score = per_factor.iter().sum::<f64>() / per_factor.len() as f64;
    Ok(SapReport {
        scores,
        per_factor,
        score,
        note: "single-feature logistic / threshold predictors replace the linear SVC; values are not directly comparable to DisLib SAP",
    })
}

fn classify_1d(z: &[f64], codes: &[usize], n_train: usize, o: &SapOptions) -> Result<f64> {
    let classes = codes.iter().max().map_or(1, |m| m + 1);
    let xtr = Tensor::matrix(n_train, 1, z[..n_train].to_vec())?;
    let xte = Tensor::matrix(z.len() - n_train, 1, z[n_train..].to_vec())?;
    let cfg = SoftmaxConfig {
        steps: o.classifier_steps,
        lr: o.classifier_lr,
        l2: 0.0,
    };
    let clf = SoftmaxClassifier::fit(&xtr, &codes[..n_train], classes, &cfg)?;
    Ok(clf.accuracy(&xte, &codes[n_train..]))
}

/// Held-out R^2 of the best single-split step function of `z` predicting `y`.
fn stump_r2(z: &[f64], y: &[f64], n_train: usize) -> f64 {
    let mut idx: Vec<usize> = (0..n_train).collect();
    idx.sort_by(|&a, &b| z[a].total_cmp(&z[b]));
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let (mut best_sse, mut best) = (f64::INFINITY, None);
    let mut left = 0.0;
    let mut left_sq = 0.0;
    let total_sq: f64 = idx.iter().map(|&i| y[i] * y[i]).sum();
    for k in 1..n_train {
        let v = y[idx[k - 1]];
        left += v;
        left_sq += v * v;
        if z[idx[k - 1]] == z[idx[k]] {
            continue;
        }
        let (nl, nr) = (k as f64, (n_train - k) as f64);
        let right = total - left;
        let sse = (left_sq - left * left / nl) + (total_sq - left_sq - right * right / nr);
        if sse < best_sse {
            best_sse = sse;
            best = Some((0.5 * (z[idx[k - 1]] + z[idx[k]]), left / nl, right / nr));
        }
    }
    let Some((thr, lo, hi)) = best else {
        return 0.0;
    };
    let test = &y[n_train..];
    let mean = test.iter().sum::<f64>() / test.len() as f64;
    let ss_tot: f64 = test.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return 0.0;
    }
    let ss_res: f64 = z[n_train..]
        .iter()
        .zip(test)
        .map(|(&zz, &v)| {
            let p = if zz <= thr { lo } else { hi };
            (v - p).powi(2)
        })
        .sum();
    1.0 - ss_res / ss_tot
}
