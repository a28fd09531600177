use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PairBatch;
use crate::error::{Error, Result};
use crate::gradcore::Tensor;

/// Discrete factor grid, e.g. dSprites-like `[3, 6, 40, 32, 32]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorGrid {
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub circular: Vec<bool>,
}

impl FactorGrid {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        let circular = vec![false; sizes.len()];
        Self::with_circular(sizes, circular)
    }

    pub fn with_circular(sizes: Vec<usize>, circular: Vec<bool>) -> Result<Self> {
        let grid = Self { sizes, circular };
        grid.validate()?;
        Ok(grid)
    }

    pub fn dsprites_like() -> Self {
        Self::new(vec![3, 6, 40, 32, 32]).unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::invalid("factor grid needs at least one factor"));
        }
        if self.sizes.contains(&0) {
            return Err(Error::invalid("factor sizes must be >= 1"));
        }
        if !self.circular.is_empty() && self.circular.len() != self.sizes.len() {
            return Err(Error::shape("circular flags must match factor count"));
        }
        Ok(())
    }

    pub fn num_factors(&self) -> usize {
        self.sizes.len()
    }

    fn is_circular(&self, f: usize) -> bool {
        self.circular.get(f).copied().unwrap_or(false)
    }

    /// `n` uniform grid points as a flat row-major index vector.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(n * self.sizes.len());
        for _ in 0..n {
            out.extend(self.sizes.iter().map(|&s| rng.random_range(0..s)));
        }
        out
    }

    /// Like `sample_uniform` but factor `fixed` shares one random value across rows.
    pub fn sample_with_fixed<R: Rng + ?Sized>(
        &self,
        n: usize,
        fixed: usize,
        rng: &mut R,
    ) -> Vec<usize> {
        let d = self.sizes.len();
        let value = rng.random_range(0..self.sizes[fixed]);
        let mut out = self.sample_uniform(n, rng);
        for r in 0..n {
            out[r * d + fixed] = value;
        }
        out
    }

    /// Index-coded rows as a real matrix (index divided by `size - 1`, so values lie in [0, 1]).
    pub fn to_values(&self, idx: &[usize]) -> Tensor {
        let d = self.sizes.len();
        let data = idx
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let s = self.sizes[k % d];
                if s > 1 {
                    v as f64 / (s - 1) as f64
                } else {
                    0.0
                }
            })
            .collect();
        Tensor::matrix(idx.len() / d, d, data).unwrap()
    }
}

/// Pairs of grid indices, flat row-major `count x dims`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorPairs {
    pub dims: usize,
    pub prev: Vec<usize>,
    pub next: Vec<usize>,
}

impl FactorPairs {
    pub fn len(&self) -> usize {
        self.prev.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.prev.is_empty()
    }

    pub fn changed(&self, row: usize) -> usize {
        let r = row * self.dims..(row + 1) * self.dims;
        self.prev[r.clone()]
            .iter()
            .zip(&self.next[r])
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Histogram over the number of changed factors, indices `0..=dims`.
    pub fn changed_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.dims + 1];
        for r in 0..self.len() {
            h[self.changed(r)] += 1;
        }
        h
    }

    pub fn to_pair_batch(&self, grid: &FactorGrid) -> Result<PairBatch> {
        PairBatch::new(grid.to_values(&self.prev), grid.to_values(&self.next))
    }
}

fn lap_distance(grid: &FactorGrid, f: usize, i: usize, j: usize) -> f64 {
    let s = grid.sizes[f];
    let mut d = i.abs_diff(j);
    if grid.is_circular(f) {
        d = d.min(s - d);
    }
    if s > 1 {
        d as f64 / (s - 1) as f64
    } else {
        0.0
    }
}

/// Exact conditional law of the next index given `first`, renormalized over
/// in-range values.
pub fn lap_conditional(grid: &FactorGrid, factor: usize, first: usize, lambda: f64) -> Vec<f64> {
    let s = grid.sizes[factor];
    let w: Vec<f64> = (0..s)
        .map(|j| (-lambda * lap_distance(grid, factor, first, j)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

struct LapTables {
    // cdf[f][first][j]
    cdf: Vec<Vec<Vec<f64>>>,
}

impl LapTables {
    fn new(grid: &FactorGrid, lambda: f64) -> Self {
        let cdf = (0..grid.sizes.len())
            .map(|f| {
                (0..grid.sizes[f])
                    .map(|i| {
                        let mut acc = 0.0;
                        lap_conditional(grid, f, i, lambda)
                            .into_iter()
                            .map(|p| {
                                acc += p;
                                acc
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { cdf }
    }

    fn draw<R: Rng + ?Sized>(&self, f: usize, first: usize, rng: &mut R) -> usize {
        let table = &self.cdf[f][first];
        let u: f64 = rng.random::<f64>() * table[table.len() - 1];
        table.partition_point(|&c| c <= u).min(table.len() - 1)
    }
}

/// Next index for one factor given its first value.
pub fn lap_next_index<R: Rng + ?Sized>(
    grid: &FactorGrid,
    factor: usize,
    first: usize,
    lambda: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    grid.validate()?;
    if !(lambda > 0.0) {
        return Err(Error::invalid("LAP lambda must be > 0"));
    }
    if factor >= grid.sizes.len() || first >= grid.sizes[factor] {
        return Err(Error::invalid("factor or first index out of range"));
    }
    let tables = LapTables::new(grid, lambda);
    Ok((0..count)
        .map(|_| tables.draw(factor, first, rng))
        .collect())
}

/// LAP pairs: uniform first point, Laplace-weighted nearby second point per factor.
pub fn lap_transition_sample<R: Rng + ?Sized>(
    grid: &FactorGrid,
    lambda: f64,
    reject_static: bool,
    count: usize,
    rng: &mut R,
) -> Result<FactorPairs> {
    grid.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("LAP lambda must be finite and > 0"));
    }
    if reject_static && grid.sizes.iter().all(|&s| s == 1) {
        return Err(Error::invalid(
            "no factor can change; static pairs cannot be rejected",
        ));
    }
    let d = grid.sizes.len();
    let tables = LapTables::new(grid, lambda);
    let (mut prev, mut next) = (Vec::with_capacity(count * d), Vec::with_capacity(count * d));
    let mut a = vec![0; d];
    let mut b = vec![0; d];
    for _ in 0..count {
        loop {
            for f in 0..d {
                a[f] = rng.random_range(0..grid.sizes[f]);
                b[f] = tables.draw(f, a[f], rng);
            }
            if !reject_static || a != b {
                break;
            }
        }
        prev.extend_from_slice(&a);
        next.extend_from_slice(&b);
    }
    Ok(FactorPairs {
        dims: d,
        prev,
        next,
    })
}

/// UNI pairs: k ~ U{1..D-1} factors re-drawn uniformly among the other values.
pub fn uni_transition_sample<R: Rng + ?Sized>(
    grid: &FactorGrid,
    count: usize,
    rng: &mut R,
) -> Result<FactorPairs> {
    grid.validate()?;
    let d = grid.sizes.len();
    if d < 2 {
        return Err(Error::invalid("UNI sampling needs at least two factors"));
    }
    if grid.sizes.iter().any(|&s| s < 2) {
        return Err(Error::invalid(
            "UNI sampling needs every factor to have >= 2 values",
        ));
    }
    let prev = grid.sample_uniform(count, rng);
    let mut next = prev.clone();
    for r in 0..count {
        let k = rng.random_range(1..d);
        for f in sample_indices(rng, d, k) {
            let first = prev[r * d + f];
            let v = rng.random_range(0..grid.sizes[f] - 1);
            next[r * d + f] = if v >= first { v + 1 } else { v };
        }
    }
    Ok(FactorPairs {
        dims: d,
        prev,
        next,
    })
}

/// Independently permutes the rows of each factor column, keeping every
/// (prev, next) pair of that factor together.
pub fn shuffle_per_factor<R: Rng + ?Sized>(batch: &PairBatch, rng: &mut R) -> PairBatch {
    use rand::seq::SliceRandom;
    let (n, d) = (batch.len(), batch.dim());
    let mut prev = batch.prev.clone();
    let mut next = batch.next.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for c in 0..d {
        perm.shuffle(rng);
        for (r, &src) in perm.iter().enumerate() {
            prev.set(r, c, batch.prev.get(src, c));
            next.set(r, c, batch.next.get(src, c));
        }
    }
    PairBatch { prev, next }
}
