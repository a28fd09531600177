use super::corr::ranks;
use super::mcc::{FactorKind, MetricInput};
use crate::error::Result;

pub const DEFAULT_BINS: usize = 20;

/// Equal-width histogram codes between min and max.
pub fn bin_equal_width(x: &[f64], bins: usize) -> Vec<usize> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    x.iter()
        .map(|&v| {
            if width > 0.0 {
                (((v - lo) / width) as usize).min(bins - 1)
            } else {
                0
            }
        })
        .collect()
}

/// Equal-mass codes from fractional ranks; ties always share a code.
pub fn bin_quantile(x: &[f64], bins: usize) -> Vec<usize> {
    let n = x.len() as f64;
    ranks(x)
        .into_iter()
        .map(|r| (((r - 1.0) / n * bins as f64) as usize).min(bins - 1))
        .collect()
}

/// Dense codes 0..k for the distinct values of `x`, in sorted order.
pub fn level_codes(x: &[f64]) -> Vec<usize> {
    let mut levels = x.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    x.iter()
        .map(|v| levels.partition_point(|l| l < v))
        .collect()
}

fn is_integer_coded(x: &[f64]) -> bool {
    x.iter().all(|v| v.fract() == 0.0)
}

/// Integer-valued inputs are used as categories; anything else is binned.
pub fn discretize(x: &[f64], bins: usize) -> Vec<usize> {
    if is_integer_coded(x) {
        level_codes(x)
    } else {
        bin_equal_width(x, bins)
    }
}

/// Entropy (nats) of a count table; terms are summed in sorted count order so
/// the result does not depend on how the cells were enumerated.
fn entropy_counts(mut counts: Vec<usize>) -> f64 {
    counts.retain(|&c| c > 0);
    counts.sort_unstable();
    let n: usize = counts.iter().sum();
    let n = n as f64;
    counts
        .into_iter()
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn code_counts(a: &[usize]) -> Vec<usize> {
    let k = a.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    for &v in a {
        counts[v] += 1;
    }
    counts
}

pub fn entropy_codes(a: &[usize]) -> f64 {
    entropy_counts(code_counts(a))
}

/// Plug-in mutual information (nats), H(a) + H(b) - H(a, b).
/// Symmetric exactly, and `mutual_info_codes(a, a) == entropy_codes(a)`.
pub fn mutual_info_codes(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "MI inputs differ in length");
    let kb = b.iter().copied().max().map_or(0, |m| m + 1);
    let ka = a.iter().copied().max().map_or(0, |m| m + 1);
    let mut joint = vec![0usize; ka * kb];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * kb + y] += 1;
    }
    let (ha, hb) = (entropy_codes(a), entropy_codes(b));
    let hab = entropy_counts(joint);
    if a == b {
        return ha;
    }
    (ha + hb - hab).max(0.0)
}

pub fn discrete_mi(a: &[f64], b: &[f64], bins: usize) -> f64 {
    mutual_info_codes(&discretize(a, bins), &discretize(b, bins))
}

pub(crate) fn factor_codes(input: &MetricInput, bins: usize) -> Vec<Vec<usize>> {
    input
        .factors
        .columns()
        .iter()
        .zip(&input.factor_kinds)
        .map(|(col, kind)| match kind {
            FactorKind::Categorical => level_codes(col),
            FactorKind::Continuous | FactorKind::Circular => {
                let codes = level_codes(col);
                if codes.iter().all(|&c| c < bins) {
                    codes
                } else {
                    bin_quantile(col, bins)
                }
            }
        })
        .collect()
}

/// D' x D matrix of MI between binned latents and coded factors.
pub fn mi_matrix(input: &MetricInput, bins: usize) -> Vec<Vec<f64>> {
    let factors = factor_codes(input, bins);
    input
        .latents
        .columns()
        .iter()
        .map(|col| {
            let z = bin_equal_width(col, bins);
            factors.iter().map(|f| mutual_info_codes(&z, f)).collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MigReport {
    pub score: f64,
    pub per_factor: Vec<f64>,
    pub mi: Vec<Vec<f64>>,
    pub entropies: Vec<f64>,
}

pub fn mig(input: &MetricInput) -> Result<MigReport> {
    let mi = mi_matrix(input, DEFAULT_BINS);
    let entropies: Vec<f64> = factor_codes(input, DEFAULT_BINS)
        .iter()
        .map(|c| entropy_codes(c))
        .collect();
    let d = input.factors.cols();
    let per_factor: Vec<f64> = (0..d)
        .map(|j| {
            let mut col: Vec<f64> = mi.iter().map(|r| r[j]).collect();
            col.sort_by(|a, b| b.total_cmp(a));
            let gap = col[0] - col.get(1).copied().unwrap_or(0.0);
            if entropies[j] > 0.0 {
                (gap / entropies[j]).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    let score = per_factor.iter().sum::<f64>() / d as f64;
    Ok(MigReport {
        score,
        per_factor,
        mi,
        entropies,
    })
}

/// Modularity of an MI matrix (rows = latents, cols = factors).
pub fn modularity_from_mi(mi: &[Vec<f64>]) -> f64 {
    let total: f64 = mi
        .iter()
        .map(|row| {
            let sq: Vec<f64> = row.iter().map(|m| m * m).collect();
            let max = sq.iter().copied().fold(0.0, f64::max);
            if max == 0.0 {
                return 0.0;
            }
            if sq.len() < 2 {
                return 1.0;
            }
            let dev = (sq.iter().sum::<f64>() - max) / (max * (sq.len() - 1) as f64);
            1.0 - dev
        })
        .sum();
    total / mi.len() as f64
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ModularityReport {
    pub score: f64,
    pub mi: Vec<Vec<f64>>,
}

pub fn modularity(input: &MetricInput) -> Result<ModularityReport> {
    let mi = mi_matrix(input, DEFAULT_BINS);
    Ok(ModularityReport {
        score: modularity_from_mi(&mi),
        mi,
    })
}
