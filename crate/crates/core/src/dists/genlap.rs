use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::special::ln_gamma;
use crate::error::{Error, Result};

/// Generalized Laplace (generalized normal) parameters.
///
/// Density: `alpha * rate / (2 Γ(1/alpha)) * exp(-(rate * |x - location|)^alpha)`.
/// `alpha = 1` is a Laplace with scale `1/rate`; `alpha = 2` is a Gaussian
/// with variance `1 / (2 rate²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenLaplaceParams {
    pub alpha: f64,
    pub rate: f64,
    pub location: f64,
}

impl GenLaplaceParams {
    pub fn new(alpha: f64, rate: f64, location: f64) -> Result<Self> {
        let p = Self {
            alpha,
            rate,
            location,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn laplace(rate: f64) -> Result<Self> {
        Self::new(1.0, rate, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::invalid(format!(
                "rate must be > 0, got {}",
                self.rate
            )));
        }
        if !self.location.is_finite() {
            return Err(Error::invalid("location must be finite"));
        }
        Ok(())
    }

    /// Log of the normalizer `alpha * rate / (2 Γ(1/alpha))`.
    pub fn log_normalizer(&self) -> f64 {
        self.alpha.ln() + self.rate.ln() - std::f64::consts::LN_2 - ln_gamma(1.0 / self.alpha)
    }

    /// Variance `Γ(3/alpha) / (Γ(1/alpha) rate²)`.
    pub fn variance(&self) -> f64 {
        (ln_gamma(3.0 / self.alpha) - ln_gamma(1.0 / self.alpha)).exp() / (self.rate * self.rate)
    }

    /// Differential entropy `1/alpha - log normalizer`.
    pub fn entropy(&self) -> f64 {
        1.0 / self.alpha - self.log_normalizer()
    }

    /// Unchecked log density, for hot loops over validated parameters.
    #[inline]
    pub(crate) fn logpdf_unchecked(&self, x: f64) -> f64 {
        self.log_normalizer() - (self.rate * (x - self.location).abs()).powf(self.alpha)
    }
}

pub fn genlap_logpdf(params: &GenLaplaceParams, x: f64) -> Result<f64> {
    params.validate()?;
    if !x.is_finite() {
        return Err(Error::invalid(format!("x must be finite, got {x}")));
    }
    Ok(params.logpdf_unchecked(x))
}

/// Draws `n` i.i.d. samples as `location ± G^(1/alpha) / rate`, `G ~ Gamma(1/alpha, 1)`.
pub fn genlap_sample<R: Rng + ?Sized>(
    params: &GenLaplaceParams,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    params.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    let mut out = Vec::with_capacity(n);
    genlap_fill(params, rng, n, |v| out.push(v));
    Ok(out)
}

pub(crate) fn genlap_fill<R: Rng + ?Sized>(
    params: &GenLaplaceParams,
    rng: &mut R,
    n: usize,
    mut sink: impl FnMut(f64),
) {
    let inv_alpha = 1.0 / params.alpha;
    let gamma = Gamma::new(inv_alpha, 1.0).expect("validated shape");
    for _ in 0..n {
        let g: f64 = gamma.sample(rng);
        let magnitude = g.powf(inv_alpha) / params.rate;
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        sink(params.location + sign * magnitude);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn laplace_mode_value() {
        let p = GenLaplaceParams::new(1.0, 1.0, 0.0).unwrap();
        assert!((genlap_logpdf(&p, 0.0).unwrap() - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_reduction_at_one() {
        let p = GenLaplaceParams::new(2.0, std::f64::consts::FRAC_1_SQRT_2, 0.0).unwrap();
        let std_normal = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5;
        assert!((genlap_logpdf(&p, 1.0).unwrap() - std_normal).abs() < 1e-12);
        assert!((std_normal + 1.4189385332).abs() < 1e-9);
    }

    #[test]
    fn normalizer_matches_quadrature() {
        // exp(-(2|x-0.3|)^0.5) normalized numerically; split at the cusp.
        let (alpha, rate, loc) = (0.5, 2.0, 0.3);
        let p = GenLaplaceParams::new(alpha, rate, loc).unwrap();
        let kernel = |x: f64| (-(rate * (x - loc).abs()).powf(alpha)).exp();
        // substitute x = loc ± u², removes the sqrt cusp at u = 0
        let half = simpson(|u| 2.0 * u * kernel(loc + u * u), 0.0, 40.0, 400_000);
        let z = 2.0 * half;
        let expected = kernel(1.1).ln() - z.ln();
        let got = genlap_logpdf(&p, 1.1).unwrap();
        assert!(
            ((got - expected) / expected).abs() < 1e-8,
            "{got} vs {expected}"
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(GenLaplaceParams::new(0.0, 1.0, 0.0).is_err());
        assert!(GenLaplaceParams::new(1.0, -1.0, 0.0).is_err());
        let p = GenLaplaceParams::laplace(1.0).unwrap();
        assert!(genlap_logpdf(&p, f64::NAN).is_err());
        assert!(genlap_sample(&p, 0, &mut seeded(1)).is_err());
    }

    #[test]
    fn sample_single_draw_is_repeatable() {
        let p = GenLaplaceParams::new(0.7, 2.0, -1.0).unwrap();
        let a = genlap_sample(&p, 1, &mut seeded(42)).unwrap();
        let b = genlap_sample(&p, 1, &mut seeded(42)).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn gaussian_reduction_variance() {
        let p = GenLaplaceParams::new(2.0, std::f64::consts::FRAC_1_SQRT_2, 0.0).unwrap();
        let xs = genlap_sample(&p, 1_000_000, &mut seeded(7)).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((var - 1.0).abs() < 0.01, "var {var}");
        assert!((p.variance() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laplace_mean_abs_deviation() {
        let p = GenLaplaceParams::new(1.0, 3.0, 0.0).unwrap();
        let xs = genlap_sample(&p, 1_000_000, &mut seeded(8)).unwrap();
        let mad = xs.iter().map(|x| x.abs()).sum::<f64>() / xs.len() as f64;
        assert!((mad * 3.0 - 1.0).abs() < 0.01, "mad {mad}");
    }
}
