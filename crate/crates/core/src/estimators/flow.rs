use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp};
use super::train::{run_loop, LossTerms, TrainConfig, TrainLog};
use crate::dists::GenLaplaceParams;
use crate::error::{Error, Result};
use crate::gradcore::{adam_step, Graph, ParamStore, Tensor, Var};
use crate::rng::seeded;
use crate::synthgen::{random_orthogonal, PairBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FlowKind {
    /// A single square demixing matrix.
    #[default]
    Linear,
    /// Learnable square matrix followed by additive coupling blocks.
    Coupling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub kind: FlowKind,
    pub blocks: usize,
    pub hidden: usize,
    /// Hidden layers per coupling network.
    pub depth: usize,
    /// Zero-sum log-scales on top of the additive shift; each block keeps
    /// log|det J| = 0.
    pub scale: bool,
    pub activation: Activation,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            kind: FlowKind::Linear,
            blocks: 6,
            hidden: 64,
            depth: 1,
            scale: false,
            activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowObjective {
    /// Laplace transition rate.
    pub lambda: f64,
    /// Average the pair likelihood over both time orders.
    pub bidirectional: bool,
}

impl Default for FlowObjective {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            bidirectional: false,
        }
    }
}

/// Invertible demixer `z = f(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowModel {
    pub config: FlowConfig,
    pub dim: usize,
    pub store: ParamStore,
}

const W: &str = "W";

impl FlowModel {
    /// Orthogonal `W`; coupling output layers start at zero so the initial
    /// flow is exactly linear.
    pub fn new<R: Rng + ?Sized>(dim: usize, config: FlowConfig, rng: &mut R) -> Result<Self> {
        Self::with_last_scale(dim, config, 0.0, rng)
    }

    pub fn with_last_scale<R: Rng + ?Sized>(
        dim: usize,
        config: FlowConfig,
        last_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("flow dim must be >= 1"));
        }
        if config.kind == FlowKind::Coupling
            && (dim < 2 || config.blocks == 0 || config.hidden == 0 || config.depth == 0)
        {
            return Err(Error::invalid(
                "coupling flows need dim >= 2 and blocks, hidden, depth >= 1",
            ));
        }
        let mut store = ParamStore::new();
        store.insert(W, random_orthogonal(dim, rng));
        let mut model = Self { config, dim, store };
        for k in 0..model.coupling_count() {
            let mlp = model.block_mlp(k);
            mlp.init(&mut model.store, last_scale, rng);
        }
        Ok(model)
    }

    pub fn from_weight(weight: Tensor) -> Result<Self> {
        if weight.shape().len() != 2 || weight.rows() != weight.cols() {
            return Err(Error::shape("linear flow needs a square matrix"));
        }
        let mut store = ParamStore::new();
        let dim = weight.rows();
        store.insert(W, weight);
        Ok(Self {
            config: FlowConfig::default(),
            dim,
            store,
        })
    }

    fn coupling_count(&self) -> usize {
        match self.config.kind {
            FlowKind::Linear => 0,
            FlowKind::Coupling => self.config.blocks,
        }
    }

    fn split(&self) -> usize {
        self.dim / 2
    }

    /// Block `k` updates one half conditioned on the other, alternating.
    fn block_mlp(&self, k: usize) -> Mlp {
        let h = self.split();
        let (cond, upd) = if k % 2 == 0 {
            (h, self.dim - h)
        } else {
            (self.dim - h, h)
        };
        let mut sizes = vec![cond];
        sizes.extend(std::iter::repeat_n(self.config.hidden, self.config.depth));
        sizes.push(if self.config.scale { 2 * upd } else { upd });
        Mlp::new(format!("c{k}"), sizes, self.config.activation)
    }

    /// Returns `(z, log|det J|)`; the log-determinant is a scalar shared by all rows.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<(Var, Var)> {
        let cols = g.value(x).cols();
        if cols != self.dim {
            return Err(Error::shape(format!(
                "flow expects {} columns, got {cols}",
                self.dim
            )));
        }
        let w = g.param(store, W);
        let logdet = g.log_abs_det(w);
        let mut z = g.matmul(x, w);
        let h = self.split();
        for k in 0..self.coupling_count() {
            let a = g.slice_cols(z, 0, h);
            let b = g.slice_cols(z, h, self.dim);
            let mlp = self.block_mlp(k);
            let (cond, upd) = if k % 2 == 0 { (a, b) } else { (b, a) };
            let out = mlp.forward(g, store, cond);
            let m = g.value(upd).cols();
            let updated = if self.config.scale {
                let raw = g.slice_cols(out, 0, m);
                let shift = g.slice_cols(out, m, 2 * m);
                let center = g.constant(centering(m));
                let log_s = g.matmul(raw, center);
                let s = g.exp(log_s);
                let scaled = g.mul(upd, s);
                g.add(scaled, shift)
            } else {
                g.add(upd, out)
            };
            z = if k % 2 == 0 {
                g.concat_cols(a, updated)
            } else {
                g.concat_cols(updated, b)
            };
        }
        Ok((z, logdet))
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let (z, _) = self.forward(&mut g, &self.store, xv)?;
        g.check_finite()?;
        Ok(g.value(z).clone())
    }

    pub fn log_abs_det(&self) -> f64 {
        let mut g = Graph::new();
        let w = g.param(&self.store, W);
        let v = g.log_abs_det(w);
        g.scalar(v)
    }
}

/// `I - 11ᵀ/m`: removes the row mean.
fn centering(m: usize) -> Tensor {
    let mut c = Tensor::filled(&[m, m], -1.0 / m as f64);
    for i in 0..m {
        c.set(i, i, 1.0 - 1.0 / m as f64);
    }
    c
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda must be finite and > 0"));
    }
    Ok(())
}

/// Mean negative log-likelihood of the pairs under a Gaussian marginal and a
/// Laplace transition (`alpha = 1`), as a graph node.
pub fn slowflow_nll(
    g: &mut Graph,
    model: &FlowModel,
    store: &ParamStore,
    batch: &PairBatch,
    objective: &FlowObjective,
) -> Result<Var> {
    check_lambda(objective.lambda)?;
    let (n, d) = (batch.len() as f64, model.dim as f64);
    let xp = g.constant(batch.prev.clone());
    let xn = g.constant(batch.next.clone());
    let (zp, logdet) = model.forward(g, store, xp)?;
    let (zn, _) = model.forward(g, store, xn)?;
    let lam = objective.lambda;
    let konst = 0.5 * d * (2.0 * std::f64::consts::PI).ln() - d * (lam / 2.0).ln();

    let sq_p = g.square(zp);
    let mut marg = g.sum(sq_p);
    if objective.bidirectional {
        let sq_n = g.square(zn);
        let sn = g.sum(sq_n);
        let both = g.add(marg, sn);
        marg = g.scale(both, 0.5);
    }
    let delta = g.sub(zn, zp);
    let ad = g.abs(delta);
    let trans = g.sum(ad);
    let marg = g.scale(marg, 0.5 / n);
    let trans = g.scale(trans, lam / n);
    let data = g.add(marg, trans);
    let vol = g.scale(logdet, -2.0);
    let total = g.add(data, vol);
    Ok(g.add_scalar(total, konst))
}

/// Value of the pair NLL for any transition shape `alpha` (evaluation only).
pub fn slowflow_nll_value(
    model: &FlowModel,
    batch: &PairBatch,
    lambda: f64,
    alpha: f64,
) -> Result<f64> {
    let trans = GenLaplaceParams::new(alpha, lambda, 0.0)?;
    let zp = model.encode(&batch.prev)?;
    let zn = model.encode(&batch.next)?;
    let logdet = model.log_abs_det();
    let d = model.dim as f64;
    let lognorm = -0.5 * d * (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    for r in 0..batch.len() {
        let mut ll = lognorm + 2.0 * logdet;
        for (a, b) in zp.row(r).iter().zip(zn.row(r)) {
            ll += -0.5 * a * a + trans.logpdf_unchecked(b - a);
        }
        total -= ll;
    }
    Ok(total / batch.len() as f64)
}

pub fn train_slowflow(
    data: &PairBatch,
    config: &FlowConfig,
    objective: &FlowObjective,
    train: &TrainConfig,
    seed: u64,
) -> Result<(FlowModel, TrainLog)> {
    check_lambda(objective.lambda)?;
    let mut rng = seeded(seed);
    let mut model = FlowModel::new(data.dim(), config.clone(), &mut rng)?;
    let log = run_loop(data, train, seed, 0.0, &mut rng, |batch, adam, _| {
        let mut g = Graph::new();
        let loss = slowflow_nll(&mut g, &model, &model.store, batch, objective)?;
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
