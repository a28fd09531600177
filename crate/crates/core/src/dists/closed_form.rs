//! Closed-form Gaussian / Laplace terms of the slow-transition ELBO.

use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI};

use super::special::normal_cdf;
use crate::error::{Error, Result};

/// Mean and standard deviation of a 1-D Gaussian posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianMoments {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        if !mu.is_finite() {
            return Err(Error::invalid("mu must be finite"));
        }
        Ok(Self { mu, sigma })
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("sigma must be > 0, got {sigma}")))
    }
}

fn check_rate(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("lambda must be > 0, got {lambda}")))
    }
}

/// KL(N(mu, sigma²) ‖ N(0, 1)).
pub fn gaussian_kl_std(m: GaussianMoments) -> Result<f64> {
    check_sigma(m.sigma)?;
    Ok(-m.sigma.ln() + 0.5 * (m.mu * m.mu + m.sigma * m.sigma - 1.0))
}

/// KL(N(q.mu, q.sigma²) ‖ N(p.mu, p.sigma²)).
pub fn gaussian_kl(q: GaussianMoments, p: GaussianMoments) -> Result<f64> {
    check_sigma(q.sigma)?;
    check_sigma(p.sigma)?;
    let d = q.mu - p.mu;
    Ok((p.sigma / q.sigma).ln() + (q.sigma * q.sigma + d * d) / (2.0 * p.sigma * p.sigma) - 0.5)
}

pub fn gaussian_entropy(sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok((sigma * (2.0 * PI * E).sqrt()).ln())
}

/// E|X| for X ~ N(mu, sigma²).
pub fn folded_normal_mean(m: GaussianMoments) -> Result<f64> {
    check_sigma(m.sigma)?;
    Ok(folded_mean_unchecked(m.mu, m.sigma))
}

#[inline]
pub(crate) fn folded_mean_unchecked(mu: f64, sigma: f64) -> f64 {
    let r = mu / sigma;
    sigma * (2.0 / PI).sqrt() * (-0.5 * r * r).exp() - mu * (1.0 - 2.0 * normal_cdf(r))
}

/// Cross-entropy H(q(z_t), Laplace(z_prev, 1/lambda)).
pub fn laplace_cross_entropy(post: GaussianMoments, z_prev: f64, lambda: f64) -> Result<f64> {
    check_rate(lambda)?;
    check_sigma(post.sigma)?;
    Ok(-(lambda / 2.0).ln() + lambda * folded_mean_unchecked(post.mu - z_prev, post.sigma))
}

/// The two KL blocks of the pair objective, summed over dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairKl {
    pub kl_marginal: f64,
    pub kl_transition: f64,
}

/// Marginal KL of the previous posterior to N(0, I) plus the transition KL of
/// the current posterior to the Laplace prior centered at the previous mean.
pub fn slowvae_kl_pair(
    post_prev: &[GaussianMoments],
    post_t: &[GaussianMoments],
    lambda: f64,
) -> Result<PairKl> {
    if post_prev.len() != post_t.len() {
        return Err(Error::shape(format!(
            "posterior dims differ: {} vs {}",
            post_prev.len(),
            post_t.len()
        )));
    }
    check_rate(lambda)?;
    let mut kl_marginal = 0.0;
    let mut kl_transition = 0.0;
    for (prev, cur) in post_prev.iter().zip(post_t) {
        kl_marginal += gaussian_kl_std(*prev)?;
        kl_transition +=
            -gaussian_entropy(cur.sigma)? + laplace_cross_entropy(*cur, prev.mu, lambda)?;
    }
    Ok(PairKl {
        kl_marginal,
        kl_transition,
    })
}
