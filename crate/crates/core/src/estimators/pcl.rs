use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp};
use super::train::{run_loop, LossTerms, TrainConfig, TrainLog};
use super::vae::EncoderArch;
use crate::error::{Error, Result};
use crate::gradcore::{adam_step, Graph, ParamStore, Tensor, Var};
use crate::rng::seeded;
use crate::synthgen::PairBatch;

pub const PCL_MIN_PAIRS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PclConfig {
    pub arch: EncoderArch,
    pub hidden: usize,
    pub activation: Activation,
    /// Smoothing width of the absolute-value feature.
    pub smooth_delta: f64,
}

impl Default for PclConfig {
    fn default() -> Self {
        Self {
            arch: EncoderArch::Mlp,
            hidden: 64,
            activation: Activation::Tanh,
            smooth_delta: 1e-2,
        }
    }
}

/// Shared encoder `f` plus the per-dimension discriminator
/// `B_i(u, v) = w_i |v - c_i u|_δ + a_i u² + b_i v²`, summed with a bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PclModel {
    pub config: PclConfig,
    pub dim: usize,
    pub store: ParamStore,
}

const DISC: [&str; 4] = ["pcl.w", "pcl.c", "pcl.a", "pcl.b"];

impl PclModel {
    /// The discriminator starts at zero, so every logit is 0 before training.
    pub fn new<R: Rng + ?Sized>(dim: usize, config: PclConfig, rng: &mut R) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("PCL dim must be >= 1"));
        }
        let mut model = Self {
            config,
            dim,
            store: ParamStore::new(),
        };
        model.encoder().init(&mut model.store, 1.0, rng);
        for name in DISC {
            let init = if name == "pcl.c" { 1.0 } else { 0.0 };
            model.store.insert(name, Tensor::filled(&[1, dim], init));
        }
        model.store.insert("pcl.bias", Tensor::zeros(&[1, 1]));
        Ok(model)
    }

    fn encoder(&self) -> Mlp {
        let sizes = match self.config.arch {
            EncoderArch::Linear => vec![self.dim, self.dim],
            EncoderArch::Mlp => vec![self.dim, self.config.hidden, self.config.hidden, self.dim],
        };
        Mlp::new("f", sizes, self.config.activation)
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let z = self.encoder().forward(&mut g, &self.store, xv);
        g.check_finite()?;
        Ok(g.value(z).clone())
    }

    fn logits(&self, g: &mut Graph, store: &ParamStore, u: Var, v: Var) -> Var {
        let [w, c, a, b] = DISC.map(|n| g.param(store, n));
        let cu = g.mul_row(u, c);
        let diff = g.sub(v, cu);
        let sa = g.smooth_abs(diff, self.config.smooth_delta);
        let t1 = g.mul_row(sa, w);
        let u2 = g.square(u);
        let t2 = g.mul_row(u2, a);
        let v2 = g.square(v);
        let t3 = g.mul_row(v2, b);
        let s = g.add(t1, t2);
        let s = g.add(s, t3);
        let s = g.sum_cols(s);
        let bias = g.param(store, "pcl.bias");
        g.add_row(s, bias)
    }
}

/// Logistic loss of true pairs against pairs whose `next` rows are permuted
/// within the batch. Returns `(loss, accuracy)`.
pub fn pcl_loss(
    g: &mut Graph,
    model: &PclModel,
    store: &ParamStore,
    batch: &PairBatch,
    perm: &[usize],
) -> Result<(Var, f64)> {
    if batch.len() < 2 || perm.len() != batch.len() {
        return Err(Error::invalid(
            "PCL needs a batch of at least two pairs and a matching permutation",
        ));
    }
    let enc = model.encoder();
    let xp = g.constant(batch.prev.clone());
    let xn = g.constant(batch.next.clone());
    let u = enc.forward(g, store, xp);
    let v = enc.forward(g, store, xn);
    let vp = g.permute_rows(v, perm.to_vec());
    let pos = model.logits(g, store, u, v);
    let neg = model.logits(g, store, u, vp);
    let npos = g.neg(pos);
    let lp = g.softplus(npos);
    let ln = g.softplus(neg);
    let lp = g.mean(lp);
    let ln = g.mean(ln);
    let both = g.add(lp, ln);
    let loss = g.scale(both, 0.5);
    let correct = g.value(pos).data().iter().filter(|&&l| l > 0.0).count()
        + g.value(neg).data().iter().filter(|&&l| l <= 0.0).count();
    Ok((loss, correct as f64 / (2 * batch.len()) as f64))
}

pub fn random_perm<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Held-out discrimination accuracy of true versus permuted pairs.
pub fn pcl_accuracy<R: Rng + ?Sized>(
    model: &PclModel,
    data: &PairBatch,
    rng: &mut R,
) -> Result<f64> {
    let perm = random_perm(data.len(), rng);
    let mut g = Graph::new();
    let (_, acc) = pcl_loss(&mut g, model, &model.store, data, &perm)?;
    Ok(acc)
}

pub fn pcl_train(
    data: &PairBatch,
    config: &PclConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<(PclModel, TrainLog)> {
    if data.len() < PCL_MIN_PAIRS {
        return Err(Error::invalid(format!(
            "PCL needs >= {PCL_MIN_PAIRS} pairs, got {}",
            data.len()
        )));
    }
    if train.batch_size < 2 {
        return Err(Error::invalid(
            "PCL batch must hold at least two pairs to permute",
        ));
    }
    let mut rng = seeded(seed);
    let mut model = PclModel::new(data.dim(), config.clone(), &mut rng)?;
    let log = run_loop(data, train, seed, 0.0, &mut rng, |batch, adam, rng| {
        let perm = random_perm(batch.len(), rng);
        let mut g = Graph::new();
        let (loss, _) = pcl_loss(&mut g, &model, &model.store, batch, &perm)?;
        let grads = g.backward(loss)?;
        model.store.set_grads(&grads);
        adam_step(&mut model.store, adam)?;
        Ok(LossTerms {
            loss: g.scalar(loss),
            ..Default::default()
        })
    })?;
    Ok((model, log))
}
