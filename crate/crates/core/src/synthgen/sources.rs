use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::PairBatch;
use crate::dists::{genlap_fill, GenLaplaceParams};
use crate::error::{Error, Result};
use crate::gradcore::Tensor;

/// Autoregressive coefficient of the AR source process.
pub const AR_COEFFICIENT: f64 = 0.7;
/// Steps discarded before recording an AR sequence.
pub const AR_BURN_IN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainMode {
    /// Gaussian marginal plus one generalized-Laplace step.
    Pair,
    /// AR(1) sequence with coefficient 0.7; consecutive steps form the pairs.
    Ar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceChainConfig {
    pub dim: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub mode: ChainMode,
    pub count: usize,
}

impl Default for SourceChainConfig {
    fn default() -> Self {
        Self {
            dim: 5,
            alpha: 1.0,
            lambda: 6.0,
            mode: ChainMode::Pair,
            count: 10_000,
        }
    }
}

impl SourceChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("source dim must be >= 1"));
        }
        if self.count == 0 {
            return Err(Error::invalid("source count must be >= 1"));
        }
        self.innovation().map(|_| ())
    }

    pub fn innovation(&self) -> Result<GenLaplaceParams> {
        GenLaplaceParams::new(self.alpha, self.lambda, 0.0)
    }
}

/// z_prev ~ N(0, I), z_next = z_prev + eps with generalized-Laplace eps.
pub fn sample_pairs<R: Rng + ?Sized>(config: &SourceChainConfig, rng: &mut R) -> Result<PairBatch> {
    config.validate()?;
    if config.mode != ChainMode::Pair {
        return Err(Error::invalid("sample_pairs needs mode = pair"));
    }
    let n = config.count * config.dim;
    let prev: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut next = Vec::with_capacity(n);
    let innovation = config.innovation()?;
    genlap_fill(&innovation, rng, n, |eps| {
        let i = next.len();
        next.push(prev[i] + eps)
    });
    PairBatch::new(
        Tensor::matrix(config.count, config.dim, prev)?,
        Tensor::matrix(config.count, config.dim, next)?,
    )
}

/// s(t) = 0.7 s(t-1) + eps(t), started from zero and burned in for 100 steps.
pub fn sample_ar_sources<R: Rng + ?Sized>(
    dim: usize,
    length: usize,
    innovation: &GenLaplaceParams,
    rng: &mut R,
) -> Result<Tensor> {
    innovation.validate()?;
    if dim == 0 {
        return Err(Error::invalid("AR dim must be >= 1"));
    }
    if length < 2 {
        return Err(Error::invalid("AR length must be >= 2"));
    }
    let total = (AR_BURN_IN + length) * dim;
    let mut eps = Vec::with_capacity(total);
    genlap_fill(innovation, rng, total, |e| eps.push(e));
    let mut state = vec![0.0; dim];
    let mut out = Vec::with_capacity(length * dim);
    for (t, step) in eps.chunks_exact(dim).enumerate() {
        for (s, e) in state.iter_mut().zip(step) {
            *s = AR_COEFFICIENT * *s + e;
        }
        if t >= AR_BURN_IN {
            out.extend_from_slice(&state);
        }
    }
    Tensor::matrix(length, dim, out)
}

/// Consecutive rows of a sequence as (t-1, t) pairs.
pub fn sequence_pairs(seq: &Tensor) -> Result<PairBatch> {
    let n = seq.rows();
    if n < 2 {
        return Err(Error::invalid("sequence needs at least two steps"));
    }
    let prev: Vec<usize> = (0..n - 1).collect();
    let next: Vec<usize> = (1..n).collect();
    PairBatch::new(seq.select_rows(&prev), seq.select_rows(&next))
}

/// Dispatches on `config.mode`; AR mode yields `count` pairs from `count + 1` steps.
pub fn sample_chain<R: Rng + ?Sized>(config: &SourceChainConfig, rng: &mut R) -> Result<PairBatch> {
    config.validate()?;
    match config.mode {
        ChainMode::Pair => sample_pairs(config, rng),
        ChainMode::Ar => {
            let seq = sample_ar_sources(config.dim, config.count + 1, &config.innovation()?, rng)?;
            sequence_pairs(&seq)
        }
    }
}
