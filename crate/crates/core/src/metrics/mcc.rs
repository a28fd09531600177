use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::assign::hungarian_max;
use super::corr::{pearson, ranks, Correlation};
use crate::error::{Error, Result};
use crate::gradcore::Tensor;
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FactorKind {
    #[default]
    Continuous,
    Categorical,
    Circular,
}

/// Encoder means paired with ground-truth factors on the same samples.
#[derive(Debug, Clone)]
pub struct MetricInput {
    /// N x D'
    pub latents: Tensor,
    /// N x D
    pub factors: Tensor,
    pub factor_kinds: Vec<FactorKind>,
}

impl MetricInput {
    pub fn new(latents: Tensor, factors: Tensor, factor_kinds: Vec<FactorKind>) -> Result<Self> {
        if latents.shape().len() != 2 || factors.shape().len() != 2 {
            return Err(Error::shape("latents and factors must be matrices"));
        }
        if latents.rows() != factors.rows() {
            return Err(Error::shape(format!(
                "{} latent rows vs {} factor rows",
                latents.rows(),
                factors.rows()
            )));
        }
        if factor_kinds.len() != factors.cols() {
            return Err(Error::shape("one factor kind per factor column"));
        }
        if latents.rows() < 2 {
            return Err(Error::invalid("metrics need at least two samples"));
        }
        if !latents.is_finite() || !factors.is_finite() {
            return Err(Error::invalid("metric input contains non-finite values"));
        }
        Ok(Self {
            latents,
            factors,
            factor_kinds,
        })
    }

    pub fn continuous(latents: Tensor, factors: Tensor) -> Result<Self> {
        let d = factors.cols();
        Self::new(latents, factors, vec![FactorKind::Continuous; d])
    }

    pub fn n(&self) -> usize {
        self.latents.rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MccOptions {
    pub correlation: Correlation,
    /// Seed for the Gaussian padding channels.
    pub noise_seed: u64,
    /// For categorical factors with <= 8 classes, take the best correlation
    /// over all relabelings of the category codes.
    pub categorical_relabel: bool,
}

impl Default for MccOptions {
    fn default() -> Self {
        Self {
            correlation: Correlation::Spearman,
            noise_seed: 0,
            categorical_relabel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MccReport {
    /// |corr|, D' rows (latents) x D columns (factors).
    pub correlations: Vec<Vec<f64>>,
    /// assignment[j] = latent matched to factor j.
    pub assignment: Vec<usize>,
    pub matched: Vec<f64>,
    /// 100 x mean matched |corr|, in [0, 100].
    pub score: f64,
    pub warnings: Vec<String>,
}

const MAX_RELABEL_CLASSES: usize = 8;

pub fn mcc(input: &MetricInput, options: &MccOptions) -> Result<MccReport> {
    let (n, dp, d) = (input.n(), input.latents.cols(), input.factors.cols());
    if dp < d {
        return Err(Error::invalid(format!("need D' >= D, got {dp} < {d}")));
    }
    let mut warnings = Vec::new();
    let prep = |v: Vec<f64>| match options.correlation {
        Correlation::Spearman => ranks(&v),
        Correlation::Pearson => v,
    };
    let latents: Vec<Vec<f64>> = input.latents.columns().into_iter().map(prep).collect();
    for (i, col) in latents.iter().enumerate() {
        if col.iter().all(|v| *v == col[0]) {
            warnings.push(format!(
                "latent {i} is constant; its correlations are set to 0"
            ));
        }
    }
    let raw_factors = input.factors.columns();
    let mut rng = seeded(options.noise_seed);
    let mut targets: Vec<Vec<f64>> = raw_factors.iter().cloned().map(prep).collect();
    for _ in d..dp {
        let noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        targets.push(prep(noise));
    }

    let mut full = vec![vec![0.0; dp]; dp];
    for (i, lat) in latents.iter().enumerate() {
        for (j, tgt) in targets.iter().enumerate() {
            full[i][j] = pearson(lat, tgt).abs();
        }
    }
    if options.categorical_relabel {
        for j in 0..d {
            if input.factor_kinds[j] != FactorKind::Categorical {
                continue;
            }
            match relabel_best(&raw_factors[j], &latents, options.correlation) {
                Some(best) => {
                    for (i, b) in best.into_iter().enumerate() {
                        full[i][j] = full[i][j].max(b);
                    }
                }
                None => warnings.push(format!(
                    "factor {j} has more than {MAX_RELABEL_CLASSES} categories; relabeling skipped"
                )),
            }
        }
    }
    if input.factor_kinds.contains(&FactorKind::Categorical) {
        warnings.push("MCC is not invariant to relabeling unordered categorical factors".into());
    }

    // rows = padded factors, cols = latents
    let by_factor: Vec<Vec<f64>> = (0..dp)
        .map(|j| (0..dp).map(|i| full[i][j]).collect())
        .collect();
    let matchup = hungarian_max(&by_factor);
    let assignment: Vec<usize> = matchup[..d].to_vec();
    let matched: Vec<f64> = (0..d).map(|j| full[assignment[j]][j]).collect();
    let score = 100.0 * matched.iter().sum::<f64>() / d as f64;
    Ok(MccReport {
        correlations: full.into_iter().map(|r| r[..d].to_vec()).collect(),
        assignment,
        matched,
        score,
        warnings,
    })
}

/// Best |corr| per latent over relabelings of the categories of `factor`.
fn relabel_best(factor: &[f64], latents: &[Vec<f64>], kind: Correlation) -> Option<Vec<f64>> {
    let mut levels: Vec<f64> = factor.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let k = levels.len();
    if k > MAX_RELABEL_CLASSES {
        return None;
    }
    let code: Vec<usize> = factor
        .iter()
        .map(|v| levels.partition_point(|l| l < v))
        .collect();
    let n = factor.len() as f64;
    let mut counts = vec![0.0; k];
    for &c in &code {
        counts[c] += 1.0;
    }
    let mut best = vec![0.0; latents.len()];
    let mut perm: Vec<usize> = (0..k).collect();
    let stats: Vec<(Vec<f64>, f64, f64)> = latents
        .iter()
        .map(|y| {
            let mut sums = vec![0.0; k];
            for (&c, v) in code.iter().zip(y) {
                sums[c] += v;
            }
            let my = y.iter().sum::<f64>() / n;
            let vy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
            (sums, my, vy)
        })
        .collect();
    for_each_permutation(&mut perm, &mut |p| {
        // label of category c is its position p[c] in the new order
        let labels: Vec<f64> = match kind {
            Correlation::Pearson => p.iter().map(|&pos| levels[pos]).collect(),
            Correlation::Spearman => {
                let mut order = vec![0; k];
                for (c, &pos) in p.iter().enumerate() {
                    order[pos] = c;
                }
                let mut lab = vec![0.0; k];
                let mut before = 0.0;
                for &c in &order {
                    lab[c] = before + (counts[c] + 1.0) / 2.0;
                    before += counts[c];
                }
                lab
            }
        };
        let mf = (0..k).map(|c| counts[c] * labels[c]).sum::<f64>() / n;
        let vf = (0..k)
            .map(|c| counts[c] * labels[c] * labels[c])
            .sum::<f64>()
            / n
            - mf * mf;
        if vf <= 0.0 {
            return;
        }
        for (b, (sums, my, vy)) in best.iter_mut().zip(&stats) {
            if *vy <= 0.0 {
                continue;
            }
            let cov = (0..k).map(|c| labels[c] * sums[c]).sum::<f64>() / n - mf * my;
            *b = f64::max(*b, (cov / (vf * vy).sqrt()).abs().min(1.0));
        }
    });
    Some(best)
}

fn for_each_permutation(items: &mut [usize], f: &mut impl FnMut(&[usize])) {
    // Heap's algorithm, iterative
    let n = items.len();
    let mut c = vec![0; n];
    f(items);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            f(items);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}
