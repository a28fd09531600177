use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gradcore::{randn, Graph, ParamStore, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

/// Fully connected network whose parameters live in a shared store under
/// `{name}.w{l}` / `{name}.b{l}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub name: String,
    pub sizes: Vec<usize>,
    pub activation: Activation,
}

impl Mlp {
    pub fn new(name: impl Into<String>, sizes: Vec<usize>, activation: Activation) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self {
            name: name.into(),
            sizes,
            activation,
        }
    }

    pub fn weight_name(&self, l: usize) -> String {
        format!("{}.w{l}", self.name)
    }

    pub fn bias_name(&self, l: usize) -> String {
        format!("{}.b{l}", self.name)
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Glorot-scaled Gaussian weights; the output layer is scaled by `last_scale`
    /// (0 makes the network start as the zero map).
    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, last_scale: f64, rng: &mut R) {
        for l in 0..self.layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let mut scale = (2.0 / (i + o) as f64).sqrt();
            if l + 1 == self.layers() {
                scale *= last_scale;
            }
            store.insert(self.weight_name(l), randn(i, o, scale, rng));
            store.insert(self.bias_name(l), Tensor::zeros(&[1, o]));
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let mut h = x;
        for l in 0..self.layers() {
            let w = g.param(store, &self.weight_name(l));
            let b = g.param(store, &self.bias_name(l));
            h = g.affine(h, w, b);
            if l + 1 < self.layers() {
                h = match self.activation {
                    Activation::Tanh => g.tanh(h),
                    Activation::Relu => g.relu(h),
                };
            }
        }
        h
    }
}
