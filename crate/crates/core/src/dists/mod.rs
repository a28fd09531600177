//! Generalized Laplace / Gaussian primitives, likelihood fitting and the
//! closed-form KL terms of the slow-transition objective.

mod closed_form;
mod fit;
mod genlap;
pub mod simplex;
pub mod special;

pub(crate) use closed_form::folded_mean_unchecked;
pub use closed_form::{
    folded_normal_mean, gaussian_entropy, gaussian_kl, gaussian_kl_std, laplace_cross_entropy,
    slowvae_kl_pair, GaussianMoments, PairKl,
};
pub use fit::{
    fit_all_families, genlap_fit_mle, kurtosis, Family, FitReportEntry, GenLapFit, MIN_FIT_SAMPLES,
};
pub(crate) use genlap::genlap_fill;
pub use genlap::{genlap_logpdf, genlap_sample, GenLaplaceParams};
