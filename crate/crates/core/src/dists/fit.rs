//! Maximum-likelihood fits of the three transition families.

use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use super::genlap::GenLaplaceParams;
use super::simplex::{nelder_mead, SimplexOptions};
use super::special::ln_gamma;
use crate::error::{Error, Result};

pub const MIN_FIT_SAMPLES: usize = 100;

/// Shape starts for the multi-start simplex.
const ALPHA_STARTS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    GenLaplace,
    Gaussian,
    Laplace,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::GenLaplace => "gen-laplace",
            Family::Gaussian => "gaussian",
            Family::Laplace => "laplace",
        }
    }
}

/// One fitted family.
///
/// `params` layout: gen-laplace `[alpha, rate, location]`, gaussian
/// `[mean, std]`, laplace `[location, scale]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReportEntry {
    pub family: Family,
    pub params: Vec<f64>,
    pub loglik: f64,
    pub kurtosis: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenLapFit {
    pub params: GenLaplaceParams,
    pub loglik: f64,
}

/// Pearson (non-excess) kurtosis m4 / m2².
pub fn kurtosis(data: &[f64]) -> Result<f64> {
    if data.len() < 4 {
        return Err(Error::Degenerate(format!(
            "kurtosis needs >= 4 samples, got {}",
            data.len()
        )));
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in data {
        let d = (x - mean) * (x - mean);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    if m2 <= 0.0 {
        return Err(Error::Degenerate("kurtosis of constant data".into()));
    }
    Ok(m4 / (m2 * m2))
}

fn check_fit_input(data: &[f64]) -> Result<()> {
    if data.len() < MIN_FIT_SAMPLES {
        return Err(Error::Degenerate(format!(
            "fitting needs >= {MIN_FIT_SAMPLES} samples, got {}",
            data.len()
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("fit data contains non-finite values"));
    }
    let first = data[0];
    if data.iter().all(|&x| x == first) {
        return Err(Error::Degenerate("fit data is constant".into()));
    }
    Ok(())
}

fn median(data: &[f64]) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct ClosedForms {
    mean: f64,
    std: f64,
    median: f64,
    mad: f64,
}

impl ClosedForms {
    fn new(data: &[f64]) -> Self {
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let std = (data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let median = median(data);
        let mad = data.iter().map(|x| (x - median).abs()).sum::<f64>() / n;
        Self {
            mean,
            std,
            median,
            mad,
        }
    }

    fn gaussian_loglik(&self, n: f64) -> f64 {
        -0.5 * n * ((2.0 * PI * self.std * self.std).ln() + 1.0)
    }

    fn laplace_loglik(&self, n: f64) -> f64 {
        -n * ((2.0 * self.mad).ln() + 1.0)
    }
}

/// Log-likelihood with the rate profiled out: for fixed shape and location
/// the rate MLE is `(N / (alpha Σ|x-loc|^alpha))^(1/alpha)`.
fn profile(data: &[f64], alpha: f64, loc: f64) -> (f64, f64) {
    let n = data.len() as f64;
    let s: f64 = data.iter().map(|x| (x - loc).abs().powf(alpha)).sum();
    if !(s > 0.0) || !alpha.is_finite() || alpha <= 0.0 {
        return (f64::NEG_INFINITY, f64::NAN);
    }
    let rate = (n / (alpha * s)).powf(1.0 / alpha);
    let ll = n * (alpha.ln() + rate.ln() - LN_2 - ln_gamma(1.0 / alpha) - 1.0 / alpha);
    (ll, rate)
}

/// Full generalized-Laplace MLE over (alpha, rate, location).
pub fn genlap_fit_mle(data: &[f64]) -> Result<GenLapFit> {
    check_fit_input(data)?;
    let cf = ClosedForms::new(data);
    let n = data.len() as f64;
    let loc_step = 0.1 * cf.std.max(f64::MIN_POSITIVE);

    let objective = |x: &[f64]| -profile(data, x[0].exp(), x[1]).0;
    let mut starts: Vec<(f64, f64)> = ALPHA_STARTS.iter().map(|&a| (a, cf.median)).collect();
    starts.push((2.0, cf.mean));

    let coarse = SimplexOptions {
        max_evals: 150,
        f_tol: 1e-8,
        x_tol: 1e-6,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (alpha, loc) in starts {
        let r = nelder_mead(objective, &[alpha.ln(), loc], &[0.3, loc_step], coarse);
        if best.as_ref().is_none_or(|(_, v)| r.value < *v) {
            best = Some((r.x, r.value));
        }
    }
    let (x0, _) = best.expect("at least one start");
    let fine = nelder_mead(
        objective,
        &x0,
        &[0.05, 0.1 * loc_step],
        SimplexOptions {
            max_evals: 800,
            f_tol: 1e-13,
            x_tol: 1e-10,
        },
    );
    let (alpha, loc) = (fine.x[0].exp(), fine.x[1]);
    let (mut loglik, rate) = profile(data, alpha, loc);
    let mut params = GenLaplaceParams {
        alpha,
        rate,
        location: loc,
    };

    // The family nests both closed-form fits; never report less than either.
    let lap = (cf.laplace_loglik(n), 1.0, 1.0 / cf.mad, cf.median);
    let gau = (
        cf.gaussian_loglik(n),
        2.0,
        1.0 / (cf.std * std::f64::consts::SQRT_2),
        cf.mean,
    );
    for (ll, a, r, l) in [lap, gau] {
        if ll > loglik && r.is_finite() {
            loglik = ll;
            params = GenLaplaceParams {
                alpha: a,
                rate: r,
                location: l,
            };
        }
    }
    params.validate()?;
    Ok(GenLapFit { params, loglik })
}

/// Fits gen-laplace (simplex), gaussian and laplace (closed form).
pub fn fit_all_families(data: &[f64]) -> Result<Vec<FitReportEntry>> {
    check_fit_input(data)?;
    let cf = ClosedForms::new(data);
    let n = data.len() as f64;
    let kurt = kurtosis(data)?;
    let gl = genlap_fit_mle(data)?;
    Ok(vec![
        FitReportEntry {
            family: Family::GenLaplace,
            params: vec![gl.params.alpha, gl.params.rate, gl.params.location],
            loglik: gl.loglik,
            kurtosis: kurt,
        },
        FitReportEntry {
            family: Family::Gaussian,
            params: vec![cf.mean, cf.std],
            loglik: cf.gaussian_loglik(n),
            kurtosis: kurt,
        },
        FitReportEntry {
            family: Family::Laplace,
            params: vec![cf.median, cf.mad],
            loglik: cf.laplace_loglik(n),
            kurtosis: kurt,
        },
    ])
}
