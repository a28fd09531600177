//! Disentanglement metrics: MCC, MIG, Modularity, SAP, FactorVAE and BetaVAE.

mod assign;
mod corr;
mod info;
mod logistic;
mod mcc;
mod report;
mod sampled;
mod sap;

pub use assign::{hungarian_max, hungarian_min};
pub use corr::{correlate, pearson, ranks, spearman, Correlation};
pub use info::{
    bin_equal_width, bin_quantile, discrete_mi, discretize, entropy_codes, level_codes, mi_matrix,
    mig, modularity, modularity_from_mi, mutual_info_codes, MigReport, ModularityReport,
    DEFAULT_BINS,
};
pub use logistic::{SoftmaxClassifier, SoftmaxConfig};
pub use mcc::{mcc, FactorKind, MccOptions, MccReport, MetricInput};
pub use report::{evaluate, MetricName, MetricReport};
pub use sampled::{
    betavae_score, factorvae_score, BetaVaeConfig, BetaVaeReport, FactorVaeConfig, FactorVaeReport,
    GridEncoder,
};
pub use sap::{sap, SapOptions, SapReport};

/// Convenience: MCC score as a fraction in [0, 1].
pub fn mcc_fraction(
    latents: &crate::gradcore::Tensor,
    factors: &crate::gradcore::Tensor,
    correlation: Correlation,
) -> crate::Result<f64> {
    let input = MetricInput::continuous(latents.clone(), factors.clone())?;
    let opts = MccOptions {
        correlation,
        ..Default::default()
    };
    Ok(mcc(&input, &opts)?.score / 100.0)
}

#[cfg(test)]
mod tests;
