use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::transitions::{TransitionTable, CLIP_BOUND, DELTA_COLUMNS};
use crate::dists::{fit_all_families, kurtosis, FitReportEntry};
use crate::error::{Error, Result};
use crate::metrics::pearson;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub column: String,
    pub n: usize,
    pub kurtosis: f64,
    pub fits: Vec<FitReportEntry>,
}

impl ColumnStats {
    pub fn fit(&self, family: crate::dists::Family) -> Option<&FitReportEntry> {
        self.fits.iter().find(|f| f.family == family)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub note: String,
    pub max_frame_gap: u32,
    pub transitions: usize,
    pub mean_dt: Option<f64>,
    pub columns: Vec<ColumnStats>,
}

/// Kurtosis and the three family fits for every transition column.
///
/// Fits run on the scaled but unclipped values: clipping is a training-input
/// safeguard and would truncate exactly the tails the shape fit measures.
pub fn stats_report(table: &TransitionTable) -> Result<StatsReport> {
    let (scale, note) = match &table.normalization {
        Some(n) => (
            n.std,
            "columns scaled to unit standard deviation over the pooled table (all tracks and sequences); fits use unclipped values".to_string(),
        ),
        None => ([1.0; 3], "raw, unnormalized columns".to_string()),
    };
    let mut columns = Vec::with_capacity(3);
    for k in 0..3 {
        let data: Vec<f64> = table.raw[k].iter().map(|v| v / scale[k]).collect();
        columns.push(ColumnStats {
            column: DELTA_COLUMNS[k].to_string(),
            n: data.len(),
            kurtosis: kurtosis(&data)?,
            fits: fit_all_families(&data)?,
        });
    }
    Ok(StatsReport {
        note,
        max_frame_gap: table.max_frame_gap,
        transitions: table.len(),
        mean_dt: table.mean_dt(),
        columns,
    })
}

impl StatsReport {
    /// Two aligned tables: kurtosis per column, then fitted parameters and
    /// log-likelihood per family.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.note);
        let _ = writeln!(
            s,
            "# transitions: {}  max frame gap: {}  mean dt: {}",
            self.transitions,
            self.max_frame_gap,
            self.mean_dt.map_or("n/a".into(), |d| format!("{d:.6} s"))
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<8} {:>10} {:>12}", "column", "n", "kurtosis");
        for c in &self.columns {
            let _ = writeln!(s, "{:<8} {:>10} {:>12.4}", c.column, c.n, c.kurtosis);
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<8} {:<13} {:<40} {:>16}",
            "column", "family", "parameters", "log-likelihood"
        );
        for c in &self.columns {
            for f in &c.fits {
                let labels: &[&str] = match f.family {
                    crate::dists::Family::GenLaplace => &["alpha", "rate", "loc"],
                    crate::dists::Family::Gaussian => &["mean", "std"],
                    crate::dists::Family::Laplace => &["loc", "scale"],
                };
                let params = labels
                    .iter()
                    .zip(&f.params)
                    .map(|(l, v)| format!("{l}={v:.4}"))
                    .collect::<Vec<_>>()
                    .join(" ");
                let _ = writeln!(
                    s,
                    "{:<8} {:<13} {:<40} {:>16.3}",
                    c.column,
                    f.family.name(),
                    params,
                    f.loglik
                );
            }
        }
        s
    }
}

pub const HIST_BINS: usize = 50;

/// Counts on a fixed 50×50 grid over [-5, 5]²; row index follows the first
/// column of the pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub x: String,
    pub y: String,
    pub edges: Vec<f64>,
    pub counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceReport {
    pub columns: Vec<String>,
    pub paired: Vec<Histogram2d>,
    pub shuffled: Vec<Histogram2d>,
    /// Pearson correlations of |Δ| between columns, before shuffling.
    pub abs_corr_paired: [[f64; 3]; 3],
    /// The same after shuffling each column independently.
    pub abs_corr_shuffled: [[f64; 3]; 3],
}

fn bin(v: f64) -> Option<usize> {
    if !(-CLIP_BOUND..=CLIP_BOUND).contains(&v) {
        return None;
    }
    let w = 2.0 * CLIP_BOUND / HIST_BINS as f64;
    Some((((v + CLIP_BOUND) / w) as usize).min(HIST_BINS - 1))
}

fn histogram(x: &[f64], y: &[f64], names: (&str, &str)) -> Histogram2d {
    let mut counts = vec![vec![0u64; HIST_BINS]; HIST_BINS];
    for (&a, &b) in x.iter().zip(y) {
        if let (Some(i), Some(j)) = (bin(a), bin(b)) {
            counts[i][j] += 1;
        }
    }
    let w = 2.0 * CLIP_BOUND / HIST_BINS as f64;
    Histogram2d {
        x: names.0.into(),
        y: names.1.into(),
        edges: (0..=HIST_BINS)
            .map(|i| -CLIP_BOUND + i as f64 * w)
            .collect(),
        counts,
    }
}

fn abs_corr(cols: &[Vec<f64>; 3]) -> [[f64; 3]; 3] {
    let abs: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| c.iter().map(|v| v.abs()).collect())
        .collect();
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = if i == j {
                1.0
            } else {
                pearson(&abs[i], &abs[j])
            };
        }
    }
    m
}

/// Joint histograms of column pairs against a per-column permutation that
/// keeps every marginal and destroys any dependence.
pub fn dependence_diagnostic<R: Rng + ?Sized>(
    table: &TransitionTable,
    rng: &mut R,
) -> Result<DependenceReport> {
    if table.len() < 2 {
        return Err(Error::Degenerate(
            "dependence diagnostic needs at least two transitions".into(),
        ));
    }
    let cols = table.columns().clone();
    let mut shuffled = cols.clone();
    for c in shuffled.iter_mut() {
        c.shuffle(rng);
    }
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let hist = |src: &[Vec<f64>; 3]| {
        pairs
            .iter()
            .map(|&(a, b)| histogram(&src[a], &src[b], (DELTA_COLUMNS[a], DELTA_COLUMNS[b])))
            .collect::<Vec<_>>()
    };
    Ok(DependenceReport {
        columns: DELTA_COLUMNS.iter().map(|s| s.to_string()).collect(),
        paired: hist(&cols),
        shuffled: hist(&shuffled),
        abs_corr_paired: abs_corr(&cols),
        abs_corr_shuffled: abs_corr(&shuffled),
    })
}
