use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcore::AdamConfig;
use crate::synthgen::PairBatch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Record one log entry every `log_every` steps (and at the last step).
    pub log_every: usize,
    /// Final learning rate as a fraction of `lr`, reached by cosine decay.
    /// 1 keeps the rate constant.
    pub lr_final: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            batch_size: 256,
            lr: 1e-3,
            log_every: 100,
            lr_final: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::invalid("batch_size and log_every must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and > 0"));
        }
        if !(self.lr_final > 0.0 && self.lr_final <= 1.0) {
            return Err(Error::invalid("lr_final must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Adam settings for `step`.
    pub fn adam(&self, step: usize) -> AdamConfig {
        let progress = if self.steps > 1 {
            step as f64 / (self.steps - 1) as f64
        } else {
            0.0
        };
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        let scale = self.lr_final + (1.0 - self.lr_final) * cosine;
        AdamConfig {
            lr: self.lr * scale,
            ..Default::default()
        }
    }
}

/// Loss decomposition of one training step. For flows and PCL only `loss` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LossTerms {
    pub loss: f64,
    pub reconstruction: f64,
    pub kl_marginal: f64,
    /// Unweighted transition KL; `loss = reconstruction + kl_marginal + gamma * kl_transition`.
    pub kl_transition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    #[serde(flatten)]
    pub terms: LossTerms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainLog {
    pub seed: u64,
    pub gamma: f64,
    pub entries: Vec<LogEntry>,
    pub wall_clock_s: f64,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.entries.last().map(|e| e.terms.loss)
    }
}

pub(crate) fn sample_batch<R: Rng + ?Sized>(
    data: &PairBatch,
    size: usize,
    rng: &mut R,
) -> PairBatch {
    let n = data.len();
    if size >= n {
        return data.clone();
    }
    let idx: Vec<usize> = (0..size).map(|_| rng.random_range(0..n)).collect();
    data.select(&idx)
}

/// Shared minibatch Adam loop. `step_fn` records the loss on a fresh graph,
/// runs backward, stores gradients and returns the loss terms.
pub(crate) fn run_loop<R, F>(
    data: &PairBatch,
    cfg: &TrainConfig,
    seed: u64,
    gamma: f64,
    rng: &mut R,
    mut step_fn: F,
) -> Result<TrainLog>
where
    R: Rng + ?Sized,
    F: FnMut(&PairBatch, &AdamConfig, &mut R) -> Result<LossTerms>,
{
    cfg.validate()?;
    let start = Instant::now();
    let mut log = TrainLog {
        seed,
        gamma,
        ..Default::default()
    };
    for step in 0..cfg.steps {
        let batch = sample_batch(data, cfg.batch_size, rng);
        let terms = match step_fn(&batch, &cfg.adam(step), rng) {
            Ok(t) => t,
            Err(Error::NonFinite { .. }) | Err(Error::NonFiniteGradient(_)) => {
                return Err(Error::Diverged {
                    step,
                    loss: f64::NAN,
                })
            }
            Err(e) => return Err(e),
        };
        if !terms.loss.is_finite() {
            return Err(Error::Diverged {
                step,
                loss: terms.loss,
            });
        }
        if step % cfg.log_every == 0 || step + 1 == cfg.steps {
            log.entries.push(LogEntry { step, terms });
        }
    }
    log.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(log)
}
