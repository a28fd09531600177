use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::PairBatch;
use crate::error::{Error, Result};
use crate::gradcore::{softplus, Tensor};

/// a*x + (1-a)*log(1+e^x); strictly increasing with slope in (a, 1).
pub fn smooth_leaky_relu(x: f64, a: f64) -> f64 {
    a * x + (1.0 - a) * softplus(x)
}

pub fn smooth_leaky_relu_deriv(x: f64, a: f64) -> f64 {
    let sig = 1.0 / (1.0 + (-x).exp());
    a + (1.0 - a) * sig
}

/// Newton inverse. The map is convex and increasing, so starting right of the
/// root (at y for y > 0, at y/a otherwise) gives monotone convergence.
pub fn smooth_leaky_relu_inv(y: f64, a: f64) -> f64 {
    if a == 1.0 {
        return y;
    }
    let mut x = if y > 0.0 { y } else { y / a };
    for _ in 0..200 {
        let step = (smooth_leaky_relu(x, a) - y) / smooth_leaky_relu_deriv(x, a);
        x -= step;
        if step.abs() <= 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixLayer {
    /// out x in; applied to column vectors as `W z`.
    pub weight: Tensor,
    /// Smooth leaky-ReLU slope applied after the linear map.
    pub slope: Option<f64>,
}

/// Invertible mixing `x = g(z)`: linear maps interleaved with smooth leaky-ReLUs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingStack {
    pub layers: Vec<MixLayer>,
}

const MIN_ABS_DET: f64 = 1e-8;

impl MixingStack {
    pub fn new(layers: Vec<MixLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("mixing stack needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            let (out, inp) = (l.weight.rows(), l.weight.cols());
            if i > 0 && inp != layers[i - 1].weight.rows() {
                return Err(Error::shape(format!("layer {i} expects input {inp}")));
            }
            if out < inp {
                return Err(Error::invalid(format!(
                    "layer {i} is not injective ({out} < {inp})"
                )));
            }
            if out == inp {
                let det = to_na(&l.weight).determinant();
                if !(det.abs() > MIN_ABS_DET) {
                    return Err(Error::invalid(format!(
                        "layer {i} is singular (|det| = {det:e})"
                    )));
                }
            }
            if let Some(a) = l.slope {
                if !(a > 0.0 && a <= 1.0) {
                    return Err(Error::invalid(format!("slope must lie in (0, 1], got {a}")));
                }
            }
        }
        Ok(Self { layers })
    }

    pub fn identity(dim: usize) -> Self {
        Self::linear(Tensor::identity(dim)).unwrap()
    }

    pub fn linear(weight: Tensor) -> Result<Self> {
        Self::new(vec![MixLayer {
            weight,
            slope: None,
        }])
    }

    /// `diag(1, kappa)`: the anisotropic two-source mixing.
    pub fn kappa(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::invalid("kappa must be > 0"));
        }
        Self::linear(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, kappa])?)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.rows()
    }

    /// Maps rows of `z` (n x input_dim) to rows of x (n x output_dim).
    pub fn apply(&self, z: &Tensor) -> Result<Tensor> {
        if z.shape().len() != 2 || z.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "mixing expects {} columns, got {:?}",
                self.input_dim(),
                z.shape()
            )));
        }
        let mut h = z.clone();
        for l in &self.layers {
            h = h.matmul(&l.weight.transpose());
            if let Some(a) = l.slope {
                h = h.map(|v| smooth_leaky_relu(v, a));
            }
        }
        Ok(h)
    }

    /// Left inverse on the range: Newton per nonlinearity, LU or least squares per matrix.
    pub fn invert(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || x.cols() != self.output_dim() {
            return Err(Error::shape(format!(
                "inverse expects {} columns, got {:?}",
                self.output_dim(),
                x.shape()
            )));
        }
        let mut h = x.clone();
        for l in self.layers.iter().rev() {
            if let Some(a) = l.slope {
                h = h.map(|v| smooth_leaky_relu_inv(v, a));
            }
            let w = to_na(&l.weight);
            let left_inv = if w.is_square() {
                w.try_inverse()
            } else {
                (w.transpose() * &w)
                    .try_inverse()
                    .map(|g| g * w.transpose())
            }
            .ok_or_else(|| Error::Degenerate("mixing layer not invertible".into()))?;
            h = h.matmul(&from_na(&left_inv).transpose());
        }
        Ok(h)
    }
}

pub(crate) fn to_na(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Tensor {
    let mut data = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        data.extend(m.row(r).iter());
    }
    Tensor::matrix(m.nrows(), m.ncols(), data).unwrap()
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Tensor {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    from_na(&q)
}

/// `layers` blocks of (orthogonal, smooth leaky-ReLU) followed by an orthogonal linear map.
pub fn make_mixing_stack<R: Rng + ?Sized>(
    dim: usize,
    layers: usize,
    slope: f64,
    rng: &mut R,
) -> Result<MixingStack> {
    if dim == 0 {
        return Err(Error::invalid("mixing dim must be >= 1"));
    }
    if layers == 0 {
        return Err(Error::invalid("mixing needs L >= 1"));
    }
    let mut out: Vec<MixLayer> = (0..layers)
        .map(|_| MixLayer {
            weight: random_orthogonal(dim, rng),
            slope: Some(slope),
        })
        .collect();
    out.push(MixLayer {
        weight: random_orthogonal(dim, rng),
        slope: None,
    });
    MixingStack::new(out)
}

/// Two-layer injective decoder into `dim_out` dimensions. The final matrix is
/// orthogonal when square and Gaussian with variance 1/dim_in otherwise.
pub fn expanding_decoder<R: Rng + ?Sized>(
    dim_in: usize,
    dim_out: usize,
    slope: f64,
    rng: &mut R,
) -> Result<MixingStack> {
    if dim_in == 0 || dim_out < dim_in {
        return Err(Error::invalid(format!(
            "expanding decoder needs 1 <= dim_in <= dim_out, got {dim_in} -> {dim_out}"
        )));
    }
    let first = MixLayer {
        weight: random_orthogonal(dim_in, rng),
        slope: Some(slope),
    };
    let last = if dim_out == dim_in {
        random_orthogonal(dim_in, rng)
    } else {
        let scale = 1.0 / (dim_in as f64).sqrt();
        loop {
            let data = (0..dim_out * dim_in)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let w = Tensor::matrix(dim_out, dim_in, data)?;
            if min_singular_value(&w) > 1e-3 {
                break w;
            }
        }
    };
    MixingStack::new(vec![
        first,
        MixLayer {
            weight: last,
            slope: None,
        },
    ])
}

pub fn singular_values(t: &Tensor) -> Vec<f64> {
    to_na(t).singular_values().iter().copied().collect()
}

fn min_singular_value(t: &Tensor) -> f64 {
    singular_values(t).into_iter().fold(f64::INFINITY, f64::min)
}

/// Applies the same stack to both time slices.
pub fn mix(batch: &PairBatch, stack: &MixingStack) -> Result<PairBatch> {
    PairBatch::new(stack.apply(&batch.prev)?, stack.apply(&batch.next)?)
}
