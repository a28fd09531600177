use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp};
use super::train::{run_loop, LossTerms, TrainConfig, TrainLog};
use crate::error::{Error, Result};
use crate::gradcore::{adam_step, randn, Graph, ParamStore, Tensor, Var};
use crate::rng::seeded;
use crate::synthgen::PairBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderArch {
    /// Single affine map.
    #[default]
    Linear,
    /// Two hidden layers.
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub arch: EncoderArch,
    pub hidden: usize,
    pub activation: Activation,
    /// Fixed observation noise of the Gaussian likelihood.
    pub sigma_x: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 2,
            arch: EncoderArch::Linear,
            hidden: 64,
            activation: Activation::Tanh,
            sigma_x: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionPrior {
    /// Laplace transition prior conditioned on the previous posterior mean.
    #[default]
    Laplace,
    /// Gaussian posterior matching: KL to the previous step's posterior.
    PosteriorMatching,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeObjective {
    pub prior: TransitionPrior,
    pub gamma: f64,
    pub lambda: f64,
    pub bidirectional: bool,
}

impl Default for VaeObjective {
    fn default() -> Self {
        Self {
            prior: TransitionPrior::Laplace,
            gamma: 10.0,
            lambda: 6.0,
            bidirectional: true,
        }
    }
}

impl VaeObjective {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma must be finite and > 0"));
        }
        if self.prior == TransitionPrior::Laplace && !(self.lambda > 0.0 && self.lambda.is_finite())
        {
            return Err(Error::invalid("lambda must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    pub config: VaeConfig,
    pub obs_dim: usize,
    pub store: ParamStore,
}

/// Reparameterization noise for both time slices.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeNoise {
    pub prev: Tensor,
    pub next: Tensor,
}

impl VaeNoise {
    pub fn sample<R: Rng + ?Sized>(rows: usize, latent: usize, rng: &mut R) -> Self {
        Self {
            prev: randn(rows, latent, 1.0, rng),
            next: randn(rows, latent, 1.0, rng),
        }
    }
}

/// Graph nodes of the objective; `total = rec + kl_m + gamma * kl_t`.
#[derive(Debug, Clone, Copy)]
pub struct VaeTerms {
    pub total: Var,
    pub reconstruction: Var,
    pub kl_marginal: Var,
    pub kl_transition: Var,
}

/// Keeps `log σ` finite when the softplus underflows.
const SIGMA_FLOOR: f64 = 1e-6;

struct Posterior {
    mu: Var,
    log_sigma: Var,
    sigma: Var,
}

impl VaeModel {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, config: VaeConfig, rng: &mut R) -> Result<Self> {
        if obs_dim == 0 || config.latent_dim == 0 {
            return Err(Error::invalid("VAE dimensions must be >= 1"));
        }
        if !(config.sigma_x > 0.0) {
            return Err(Error::invalid("sigma_x must be > 0"));
        }
        let mut model = Self {
            config,
            obs_dim,
            store: ParamStore::new(),
        };
        let (enc, dec) = (model.encoder(), model.decoder());
        enc.init(&mut model.store, 1.0, rng);
        dec.init(&mut model.store, 1.0, rng);
        Ok(model)
    }

    fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        match self.config.arch {
            EncoderArch::Linear => vec![input, output],
            EncoderArch::Mlp => vec![input, self.config.hidden, self.config.hidden, output],
        }
    }

    fn encoder(&self) -> Mlp {
        Mlp::new(
            "enc",
            self.sizes(self.obs_dim, 2 * self.config.latent_dim),
            self.config.activation,
        )
    }

    fn decoder(&self) -> Mlp {
        Mlp::new(
            "dec",
            self.sizes(self.config.latent_dim, self.obs_dim),
            self.config.activation,
        )
    }

    fn posterior(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Posterior {
        let d = self.config.latent_dim;
        let h = self.encoder().forward(g, store, x);
        let mu = g.slice_cols(h, 0, d);
        let raw = g.slice_cols(h, d, 2 * d);
        let sigma = g.softplus(raw);
        let sigma = g.add_scalar(sigma, SIGMA_FLOOR);
        let log_sigma = g.log(sigma);
        Posterior {
            mu,
            log_sigma,
            sigma,
        }
    }

    /// Posterior means and standard deviations.
    pub fn encode(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        if x.cols() != self.obs_dim {
            return Err(Error::shape(format!(
                "VAE expects {} columns, got {}",
                self.obs_dim,
                x.cols()
            )));
        }
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let p = self.posterior(&mut g, &self.store, xv);
        g.check_finite()?;
        Ok((g.value(p.mu).clone(), g.value(p.sigma).clone()))
    }

    pub fn encode_mean(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.encode(x)?.0)
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let out = self.decoder().forward(&mut g, &self.store, zv);
        g.check_finite()?;
        Ok(g.value(out).clone())
    }
}

const HALF_LOG_2PI_E: f64 = 1.418_938_533_204_672_7;

/// Mean over pairs of `sum_i KL(q_i || N(0, 1))`.
fn kl_marginal(g: &mut Graph, p: &Posterior, n: f64) -> Var {
    let mu2 = g.square(p.mu);
    let s2 = g.square(p.sigma);
    let quad = g.add(mu2, s2);
    let quad = g.scale(quad, 0.5);
    let quad = g.add_scalar(quad, -0.5);
    let per = g.sub(quad, p.log_sigma);
    let s = g.sum(per);
    g.scale(s, 1.0 / n)
}

/// Mean over pairs of the transition KL from `prev` to `cur`.
fn kl_transition(
    g: &mut Graph,
    obj: &VaeObjective,
    prev: &Posterior,
    cur: &Posterior,
    n: f64,
) -> Var {
    let per = match obj.prior {
        TransitionPrior::Laplace => {
            // -H(q_t) + H(q_t, Laplace(mu_prev, 1/lambda))
            let shift = g.sub(cur.mu, prev.mu);
            let fnm = g.folded_normal_mean(shift, cur.sigma);
            let cross = g.scale(fnm, obj.lambda);
            let neg_ent = g.neg(cur.log_sigma);
            let per = g.add(cross, neg_ent);
            g.add_scalar(per, -HALF_LOG_2PI_E - (obj.lambda / 2.0).ln())
        }
        TransitionPrior::PosteriorMatching => {
            // KL(N(mu_t, s_t^2) || N(mu_p, s_p^2))
            let log_ratio = g.sub(prev.log_sigma, cur.log_sigma);
            let two = g.scale(log_ratio, -2.0);
            let var_ratio = g.exp(two);
            let shift = g.sub(cur.mu, prev.mu);
            let shift2 = g.square(shift);
            let neg2 = g.scale(prev.log_sigma, -2.0);
            let inv_vp = g.exp(neg2);
            let mahal = g.mul(shift2, inv_vp);
            let quad = g.add(var_ratio, mahal);
            let quad = g.scale(quad, 0.5);
            let per = g.add(log_ratio, quad);
            g.add_scalar(per, -0.5)
        }
    };
    let s = g.sum(per);
    g.scale(s, 1.0 / n)
}

/// Negative ELBO of the slow-transition model on a pair batch, with explicit
/// reparameterization noise.
pub fn slowvae_loss(
    g: &mut Graph,
    model: &VaeModel,
    store: &ParamStore,
    batch: &PairBatch,
    objective: &VaeObjective,
    noise: &VaeNoise,
) -> Result<VaeTerms> {
    objective.validate()?;
    if batch.dim() != model.obs_dim {
        return Err(Error::shape(format!(
            "VAE expects {} columns, got {}",
            model.obs_dim,
            batch.dim()
        )));
    }
    let want = [batch.len(), model.config.latent_dim];
    if noise.prev.shape() != want || noise.next.shape() != want {
        return Err(Error::shape("reparameterization noise has the wrong shape"));
    }
    let n = batch.len() as f64;
    let sx = model.config.sigma_x;
    let dec = model.decoder();

    let mut rec_parts = Vec::with_capacity(2);
    let mut posts = Vec::with_capacity(2);
    for (x, eps) in [(&batch.prev, &noise.prev), (&batch.next, &noise.next)] {
        let xv = g.constant(x.clone());
        let p = model.posterior(g, store, xv);
        let e = g.constant(eps.clone());
        let se = g.mul(p.sigma, e);
        let z = g.add(p.mu, se);
        let xhat = dec.forward(g, store, z);
        let diff = g.sub(xv, xhat);
        let sq = g.square(diff);
        rec_parts.push(g.sum(sq));
        posts.push(p);
    }
    let rec = g.add(rec_parts[0], rec_parts[1]);
    let rec = g.scale(rec, 1.0 / (2.0 * sx * sx * n));
    let konst = model.obs_dim as f64 * (2.0 * std::f64::consts::PI * sx * sx).ln();
    let rec = g.add_scalar(rec, konst);

    let (pp, pn) = (&posts[0], &posts[1]);
    let (klm, klt) = if objective.bidirectional {
        let m1 = kl_marginal(g, pp, n);
        let m2 = kl_marginal(g, pn, n);
        let t1 = kl_transition(g, objective, pp, pn, n);
        let t2 = kl_transition(g, objective, pn, pp, n);
        let m = g.add(m1, m2);
        let t = g.add(t1, t2);
        (g.scale(m, 0.5), g.scale(t, 0.5))
    } else {
        (
            kl_marginal(g, pp, n),
            kl_transition(g, objective, pp, pn, n),
        )
    };
    let weighted = g.scale(klt, objective.gamma);
    let total = g.add(rec, klm);
    let total = g.add(total, weighted);
    Ok(VaeTerms {
        total,
        reconstruction: rec,
        kl_marginal: klm,
        kl_transition: klt,
    })
}

/// Posterior-matching ablation: the transition prior is the previous posterior.
pub fn pmvae_loss(
    g: &mut Graph,
    model: &VaeModel,
    store: &ParamStore,
    batch: &PairBatch,
    gamma: f64,
    bidirectional: bool,
    noise: &VaeNoise,
) -> Result<VaeTerms> {
    let obj = VaeObjective {
        prior: TransitionPrior::PosteriorMatching,
        gamma,
        lambda: 1.0,
        bidirectional,
    };
    slowvae_loss(g, model, store, batch, &obj, noise)
}

pub fn train_slowvae(
    data: &PairBatch,
    config: &VaeConfig,
    objective: &VaeObjective,
    train: &TrainConfig,
    seed: u64,
) -> Result<(VaeModel, TrainLog)> {
    objective.validate()?;
    let mut rng = seeded(seed);
    let mut model = VaeModel::new(data.dim(), config.clone(), &mut rng)?;
    let latent = config.latent_dim;
    let log = run_loop(
        data,
        train,
        seed,
        objective.gamma,
        &mut rng,
        |batch, adam, rng| {
            let noise = VaeNoise::sample(batch.len(), latent, rng);
            let mut g = Graph::new();
            let t = slowvae_loss(&mut g, &model, &model.store, batch, objective, &noise)?;
            let grads = g.backward(t.total)?;
            model.store.set_grads(&grads);
            adam_step(&mut model.store, adam)?;
            Ok(LossTerms {
                loss: g.scalar(t.total),
                reconstruction: g.scalar(t.reconstruction),
                kl_marginal: g.scalar(t.kl_marginal),
                kl_transition: g.scalar(t.kl_transition),
            })
        },
    )?;
    Ok((model, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentStats {
    /// Dataset average of the posterior standard deviation.
    pub mean_sigma: f64,
    /// Dataset average of |posterior mean|.
    pub mean_abs_mu: f64,
}

impl LatentStats {
    /// The posterior has reverted to the N(0, 1) prior.
    pub fn collapsed(&self) -> bool {
        self.mean_sigma >= 0.9 && self.mean_abs_mu <= 0.1
    }
}

pub fn latent_stats(model: &VaeModel, x: &Tensor) -> Result<Vec<LatentStats>> {
    let (mu, sigma) = model.encode(x)?;
    let n = x.rows() as f64;
    Ok((0..mu.cols())
        .map(|c| LatentStats {
            mean_sigma: sigma.column(c).iter().sum::<f64>() / n,
            mean_abs_mu: mu.column(c).iter().map(|v| v.abs()).sum::<f64>() / n,
        })
        .collect())
}
