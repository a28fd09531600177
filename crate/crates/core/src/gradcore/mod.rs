//! Dense tensors, a reverse-mode tape, finite-difference checking and Adam.

mod check;
mod graph;
mod store;
mod tensor;

pub use check::{grad_check, GradCheckReport};
pub(crate) use graph::softplus;
pub use graph::{Gradients, Graph, Var};
pub use store::{adam_step, AdamConfig, ParamStore};
pub use tensor::Tensor;

use rand::Rng;
use rand_distr::StandardNormal;

/// Matrix of i.i.d. N(0, scale²) entries.
pub fn randn<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}
