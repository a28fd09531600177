//! Scalar special functions shared by the closed-form terms.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal CDF through the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}
