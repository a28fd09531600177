//! Reverse-mode tape over a fixed set of tensor ops.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::store::ParamStore;
use super::tensor::{matmul_nt_into, matmul_tn_into, Tensor};
use crate::dists::folded_mean_unchecked;
use crate::dists::special::normal_cdf;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(String),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    SmoothAbs(Var, f64),
    Square(Var),
    Tanh(Var),
    Relu(Var),
    Softplus(Var),
    SmoothLeakyRelu(Var, f64),
    Sum(Var),
    SumRows(Var),
    SumCols(Var),
    SliceCols(Var, usize),
    ConcatCols(Var, Var),
    PermuteRows(Var, Vec<usize>),
    LogAbsDet(Var, Tensor),
    FoldedNormalMean(Var, Var),
    LogSumExpRows(Var),
    PickPerRow(Var, Vec<usize>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Abs(_) => "abs",
            Op::SmoothAbs(..) => "smooth_abs",
            Op::Square(_) => "square",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Softplus(_) => "softplus",
            Op::SmoothLeakyRelu(..) => "smooth_leaky_relu",
            Op::Sum(_) => "sum",
            Op::SumRows(_) => "sum_rows",
            Op::SumCols(_) => "sum_cols",
            Op::SliceCols(..) => "slice_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::PermuteRows(..) => "permute_rows",
            Op::LogAbsDet(..) => "log_abs_det",
            Op::FoldedNormalMean(..) => "folded_normal_mean",
            Op::LogSumExpRows(_) => "log_sum_exp_rows",
            Op::PickPerRow(..) => "pick_per_row",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// A single forward computation recorded for differentiation.
///
/// Shape errors are programming errors and panic; non-finite forward values
/// are recorded and surface as [`Error::NonFinite`] from [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    nonfinite: Option<(usize, &'static str)>,
    kink_margin: f64,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "elementwise shapes differ");
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn row_broadcast(a: &Tensor, row: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (n, m) = (a.rows(), a.cols());
    assert_eq!(
        row.len(),
        m,
        "row operand has {} values for {m} columns",
        row.len()
    );
    let r = row.data();
    let mut out = a.data().to_vec();
    for i in 0..n {
        for j in 0..m {
            out[i * m + j] = f(out[i * m + j], r[j]);
        }
    }
    Tensor::new(vec![n, m], out).expect("same shape")
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            nonfinite: None,
            kink_margin: f64::INFINITY,
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let idx = self.nodes.len();
        if self.nonfinite.is_none() && !value.is_finite() {
            self.nonfinite = Some((idx, op.name()));
        }
        self.nodes.push(Node { value, op });
        Var(idx)
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.val(v)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.val(v).item()
    }

    /// Smallest |input| seen by any kinked op (abs, relu).
    pub fn kink_margin(&self) -> f64 {
        self.kink_margin
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.nonfinite {
            Some((node, op)) => Err(Error::NonFinite { node, op }),
            None => Ok(()),
        }
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn scalar_constant(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    /// Copies parameter `name` from the store onto the tape.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Var {
        let value = store
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
            .clone();
        self.push(value, Op::Param(name.to_string()))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.val(a).matmul(self.val(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.val(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = zip_map(self.val(a), self.val(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = zip_map(self.val(a), self.val(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = zip_map(self.val(a), self.val(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// `[n,m] + [1,m]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = row_broadcast(self.val(a), self.val(row), |x, y| x + y);
        self.push(v, Op::AddRow(a, row))
    }

    /// `[n,m] * [1,m]` broadcast over rows.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let v = row_broadcast(self.val(a), self.val(row), |x, y| x * y);
        self.push(v, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.val(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.val(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.val(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.val(a).map(f64::ln);
        self.push(v, Op::Log(a))
    }

    /// |x| with subgradient 0 at exactly zero.
    pub fn abs(&mut self, a: Var) -> Var {
        let x = self.val(a);
        let margin = x.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let v = x.map(f64::abs);
        self.kink_margin = self.kink_margin.min(margin);
        self.push(v, Op::Abs(a))
    }

    /// `sqrt(x² + δ²) - δ`, a smooth stand-in for |x|.
    pub fn smooth_abs(&mut self, a: Var, delta: f64) -> Var {
        let v = self.val(a).map(|x| (x * x + delta * delta).sqrt() - delta);
        self.push(v, Op::SmoothAbs(a, delta))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.val(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.val(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let x = self.val(a);
        let margin = x.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let v = x.map(|x| x.max(0.0));
        self.kink_margin = self.kink_margin.min(margin);
        self.push(v, Op::Relu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.val(a).map(softplus);
        self.push(v, Op::Softplus(a))
    }

    /// `slope·x + (1 - slope)·log(1 + eˣ)`.
    pub fn smooth_leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.val(a).map(|x| slope * x + (1.0 - slope) * softplus(x));
        self.push(v, Op::SmoothLeakyRelu(a, slope))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.val(a).data().iter().sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.val(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Sum over rows: `[n,m] -> [1,m]`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let x = self.val(a);
        let (n, m) = (x.rows(), x.cols());
        let mut out = vec![0.0; m];
        for i in 0..n {
            for (o, v) in out.iter_mut().zip(x.row(i)) {
                *o += v;
            }
        }
        self.push(Tensor::matrix(1, m, out).unwrap(), Op::SumRows(a))
    }

    /// Sum over columns: `[n,m] -> [n,1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let x = self.val(a);
        let n = x.rows();
        let out = (0..n).map(|i| x.row(i).iter().sum()).collect();
        self.push(Tensor::matrix(n, 1, out).unwrap(), Op::SumCols(a))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = self.val(a);
        assert!(
            start <= end && end <= x.cols(),
            "slice {start}..{end} of {:?}",
            x.shape()
        );
        let idx: Vec<usize> = (start..end).collect();
        let v = x.select_columns(&idx);
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.val(a), self.val(b));
        assert_eq!(x.rows(), y.rows(), "concat row counts differ");
        let n = x.rows();
        let m = x.cols() + y.cols();
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            out.extend_from_slice(x.row(i));
            out.extend_from_slice(y.row(i));
        }
        self.push(Tensor::matrix(n, m, out).unwrap(), Op::ConcatCols(a, b))
    }

    /// Row `i` of the output is row `perm[i]` of the input.
    pub fn permute_rows(&mut self, a: Var, perm: Vec<usize>) -> Var {
        let v = self.val(a).select_rows(&perm);
        self.push(v, Op::PermuteRows(a, perm))
    }

    /// log|det A| of a square matrix.
    pub fn log_abs_det(&mut self, a: Var) -> Var {
        let x = self.val(a);
        let n = x.rows();
        assert_eq!(n, x.cols(), "log_abs_det needs a square matrix");
        let m = nalgebra::DMatrix::from_row_slice(n, n, x.data());
        let lu = m.clone().lu();
        let det = lu.determinant();
        let inv = lu
            .try_inverse()
            .map(|inv| {
                let mut data = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        data.push(inv[(i, j)]);
                    }
                }
                Tensor::matrix(n, n, data).unwrap()
            })
            .unwrap_or_else(|| Tensor::filled(&[n, n], f64::NAN));
        self.push(Tensor::scalar(det.abs().ln()), Op::LogAbsDet(a, inv))
    }

    /// Elementwise E|X| for X ~ N(mu, sigma²).
    pub fn folded_normal_mean(&mut self, mu: Var, sigma: Var) -> Var {
        let v = zip_map(self.val(mu), self.val(sigma), folded_mean_unchecked);
        self.push(v, Op::FoldedNormalMean(mu, sigma))
    }

    /// Row-wise log-sum-exp: `[n,m] -> [n,1]`.
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Var {
        let x = self.val(a);
        let n = x.rows();
        let out = (0..n)
            .map(|i| {
                let row = x.row(i);
                let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
            })
            .collect();
        self.push(Tensor::matrix(n, 1, out).unwrap(), Op::LogSumExpRows(a))
    }

    /// `out[i] = a[i, idx[i]]`: `[n,m] -> [n,1]`.
    pub fn pick_per_row(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let x = self.val(a);
        assert_eq!(idx.len(), x.rows());
        let out = idx.iter().enumerate().map(|(i, &j)| x.get(i, j)).collect();
        let n = idx.len();
        self.push(Tensor::matrix(n, 1, out).unwrap(), Op::PickPerRow(a, idx))
    }

    /// `x · w + b` with `x: [n,k]`, `w: [k,m]`, `b: [1,m]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check_finite()?;
        let lv = self.val(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].clone() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            match &node.op {
                Op::Leaf | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.val(*a), self.val(*b));
                    let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                    let mut ga = vec![0.0; n * k];
                    matmul_nt_into(g.data(), bv.data(), &mut ga, n, m, k);
                    let mut gb = vec![0.0; k * m];
                    matmul_tn_into(av.data(), g.data(), &mut gb, n, k, m);
                    accumulate(&mut grads, *a, Tensor::matrix(n, k, ga).unwrap());
                    accumulate(&mut grads, *b, Tensor::matrix(k, m, gb).unwrap());
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|v| -v));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = zip_map(&g, self.val(*b), |x, y| x * y);
                    let gb = zip_map(&g, self.val(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, r) => {
                    let rv = self.val(*r);
                    let gr = column_sums(&g).reshape(rv.shape());
                    accumulate(&mut grads, *r, gr);
                    accumulate(&mut grads, *a, g);
                }
                Op::MulRow(a, r) => {
                    let (av, rv) = (self.val(*a), self.val(*r));
                    let ga = row_broadcast(&g, rv, |x, y| x * y);
                    let prod = zip_map(&g, av, |x, y| x * y);
                    let gr = column_sums(&prod).reshape(rv.shape());
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *r, gr);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g.map(|v| v * c)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::Exp(a) => accumulate(&mut grads, *a, zip_map(&g, y, |g, y| g * y)),
                Op::Log(a) => accumulate(&mut grads, *a, zip_map(&g, self.val(*a), |g, x| g / x)),
                Op::Abs(a) => accumulate(
                    &mut grads,
                    *a,
                    zip_map(&g, self.val(*a), |g, x| g * sign(x)),
                ),
                Op::SmoothAbs(a, d) => {
                    let d = *d;
                    let ga = zip_map(&g, self.val(*a), |g, x| g * x / (x * x + d * d).sqrt());
                    accumulate(&mut grads, *a, ga)
                }
                Op::Square(a) => accumulate(
                    &mut grads,
                    *a,
                    zip_map(&g, self.val(*a), |g, x| 2.0 * g * x),
                ),
                Op::Tanh(a) => accumulate(&mut grads, *a, zip_map(&g, y, |g, y| g * (1.0 - y * y))),
                Op::Relu(a) => accumulate(
                    &mut grads,
                    *a,
                    zip_map(&g, self.val(*a), |g, x| if x > 0.0 { g } else { 0.0 }),
                ),
                Op::Softplus(a) => accumulate(
                    &mut grads,
                    *a,
                    zip_map(&g, self.val(*a), |g, x| g * sigmoid(x)),
                ),
                Op::SmoothLeakyRelu(a, s) => {
                    let s = *s;
                    let ga = zip_map(&g, self.val(*a), |g, x| g * (s + (1.0 - s) * sigmoid(x)));
                    accumulate(&mut grads, *a, ga)
                }
                Op::Sum(a) => {
                    let av = self.val(*a);
                    accumulate(&mut grads, *a, Tensor::filled(av.shape(), g.item()))
                }
                Op::SumRows(a) => {
                    let av = self.val(*a);
                    let (n, m) = (av.rows(), av.cols());
                    let mut out = Vec::with_capacity(n * m);
                    for _ in 0..n {
                        out.extend_from_slice(g.data());
                    }
                    accumulate(&mut grads, *a, Tensor::matrix(n, m, out).unwrap())
                }
                Op::SumCols(a) => {
                    let av = self.val(*a);
                    let (n, m) = (av.rows(), av.cols());
                    let mut out = Vec::with_capacity(n * m);
                    for i in 0..n {
                        out.extend(std::iter::repeat_n(g.data()[i], m));
                    }
                    accumulate(&mut grads, *a, Tensor::matrix(n, m, out).unwrap())
                }
                Op::SliceCols(a, start) => {
                    let av = self.val(*a);
                    let (n, m) = (av.rows(), av.cols());
                    let w = g.cols();
                    let mut out = Tensor::zeros(&[n, m]);
                    for i in 0..n {
                        out.row_mut(i)[*start..*start + w].copy_from_slice(g.row(i));
                    }
                    accumulate(&mut grads, *a, out)
                }
                Op::ConcatCols(a, b) => {
                    let (ca, cb) = (self.val(*a).cols(), self.val(*b).cols());
                    let n = g.rows();
                    let (mut ga, mut gb) = (Vec::with_capacity(n * ca), Vec::with_capacity(n * cb));
                    for i in 0..n {
                        let row = g.row(i);
                        ga.extend_from_slice(&row[..ca]);
                        gb.extend_from_slice(&row[ca..]);
                    }
                    accumulate(&mut grads, *a, Tensor::matrix(n, ca, ga).unwrap());
                    accumulate(&mut grads, *b, Tensor::matrix(n, cb, gb).unwrap());
                }
                Op::PermuteRows(a, perm) => {
                    let av = self.val(*a);
                    let mut out = Tensor::zeros(av.shape());
                    for (i, &src) in perm.iter().enumerate() {
                        for (o, v) in out.row_mut(src).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *a, out)
                }
                Op::LogAbsDet(a, inv) => {
                    let s = g.item();
                    accumulate(&mut grads, *a, inv.transpose().map(|v| v * s))
                }
                Op::FoldedNormalMean(mu, sigma) => {
                    let (mv, sv) = (self.val(*mu), self.val(*sigma));
                    let gm = {
                        let d = zip_map(mv, sv, |m, s| 2.0 * normal_cdf(m / s) - 1.0);
                        zip_map(&g, &d, |g, d| g * d)
                    };
                    let gs = {
                        let d = zip_map(mv, sv, |m, s| {
                            let r = m / s;
                            (2.0 / PI).sqrt() * (-0.5 * r * r).exp()
                        });
                        zip_map(&g, &d, |g, d| g * d)
                    };
                    accumulate(&mut grads, *mu, gm);
                    accumulate(&mut grads, *sigma, gs);
                }
                Op::LogSumExpRows(a) => {
                    let av = self.val(*a);
                    let (n, m) = (av.rows(), av.cols());
                    let mut out = Vec::with_capacity(n * m);
                    for i in 0..n {
                        let lse = y.data()[i];
                        let gi = g.data()[i];
                        out.extend(av.row(i).iter().map(|v| gi * (v - lse).exp()));
                    }
                    accumulate(&mut grads, *a, Tensor::matrix(n, m, out).unwrap())
                }
                Op::PickPerRow(a, idx) => {
                    let av = self.val(*a);
                    let mut out = Tensor::zeros(av.shape());
                    for (i, &j) in idx.iter().enumerate() {
                        let cur = out.get(i, j);
                        out.set(i, j, cur + g.data()[i]);
                    }
                    accumulate(&mut grads, *a, out)
                }
            }
        }

        let mut by_param: BTreeMap<String, Tensor> = BTreeMap::new();
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let Op::Param(name) = &node.op {
                let g = grads[i]
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                match by_param.get_mut(name) {
                    Some(acc) => {
                        for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                            *a += v;
                        }
                    }
                    None => {
                        by_param.insert(name.clone(), g);
                    }
                }
            }
        }
        Ok(Gradients {
            by_param,
            by_node: grads,
        })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => {
            assert_eq!(acc.shape(), g.shape(), "gradient shape mismatch");
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let (n, m) = (g.rows(), g.cols());
    let mut out = vec![0.0; m];
    for i in 0..n {
        for (o, v) in out.iter_mut().zip(g.row(i)) {
            *o += v;
        }
    }
    Tensor::matrix(1, m, out).unwrap()
}

/// Gradients from one reverse sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    by_param: BTreeMap<String, Tensor>,
    by_node: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.by_param.get(name)
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.by_param.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Gradient with respect to any node, including constants.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.by_node.get(v.0).and_then(Option::as_ref)
    }
}
