use super::*;
use crate::dists::{slowvae_kl_pair, GaussianMoments};
use crate::gradcore::{grad_check, Graph, ParamStore, Tensor};
use crate::rng::seeded;
use crate::synthgen::{
    mix, random_orthogonal, sample_pairs, ChainMode, MixingStack, PairBatch, SourceChainConfig,
};
use rand::Rng;
use rand_distr::StandardNormal;

const TOL: f64 = 1e-4;

fn pairs(dim: usize, count: usize, lambda: f64, seed: u64) -> PairBatch {
    let cfg = SourceChainConfig {
        dim,
        alpha: 1.0,
        lambda,
        mode: ChainMode::Pair,
        count,
    };
    sample_pairs(&cfg, &mut seeded(seed)).unwrap()
}

fn short(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 32,
        lr: 1e-2,
        log_every: 1,
        lr_final: 1.0,
    }
}

fn small_coupling() -> FlowConfig {
    FlowConfig {
        kind: FlowKind::Coupling,
        blocks: 2,
        hidden: 6,
        ..Default::default()
    }
}

fn check_flow(model: &FlowModel, batch: &PairBatch) -> f64 {
    let obj = FlowObjective {
        lambda: 2.0,
        bidirectional: true,
    };
    // The |Δz| kink needs a narrow probe band.
    grad_check(&model.store, 5e-6, |s| {
        let mut g = Graph::new();
        let l = slowflow_nll(&mut g, model, s, batch, &obj)?;
        Ok((g, l))
    })
    .unwrap()
    .max_rel_error
}

#[test]
fn slowflow_gradients_at_init_and_after_training() {
    let batch = pairs(4, 12, 2.0, 1);
    for config in [
        FlowConfig::default(),
        small_coupling(),
        FlowConfig {
            scale: true,
            ..small_coupling()
        },
    ] {
        let init = FlowModel::with_last_scale(4, config.clone(), 0.5, &mut seeded(2)).unwrap();
        assert!(check_flow(&init, &batch) <= TOL);
        let data = pairs(4, 500, 2.0, 3);
        let (trained, _) =
            train_slowflow(&data, &config, &FlowObjective::default(), &short(100), 4).unwrap();
        assert!(check_flow(&trained, &batch) <= TOL);
    }
}

fn check_vae(model: &VaeModel, batch: &PairBatch, obj: &VaeObjective, seed: u64) -> f64 {
    let noise = VaeNoise::sample(batch.len(), model.config.latent_dim, &mut seeded(seed));
    grad_check(&model.store, 1e-4, |s| {
        let mut g = Graph::new();
        let t = slowvae_loss(&mut g, model, s, batch, obj, &noise)?;
        Ok((g, t.total))
    })
    .unwrap()
    .max_rel_error
}

#[test]
fn vae_gradients_at_init_and_after_training() {
    let batch = pairs(3, 10, 6.0, 5);
    let data = pairs(3, 500, 6.0, 6);
    for arch in [EncoderArch::Linear, EncoderArch::Mlp] {
        let config = VaeConfig {
            latent_dim: 3,
            arch,
            hidden: 5,
            ..Default::default()
        };
        for prior in [TransitionPrior::Laplace, TransitionPrior::PosteriorMatching] {
            for bidirectional in [false, true] {
                let obj = VaeObjective {
                    prior,
                    bidirectional,
                    ..Default::default()
                };
                let init = VaeModel::new(3, config.clone(), &mut seeded(7)).unwrap();
                assert!(
                    check_vae(&init, &batch, &obj, 8) <= TOL,
                    "{arch:?} {prior:?} init"
                );
                let train = TrainConfig {
                    lr: 3e-3,
                    ..short(100)
                };
                let (trained, _) = train_slowvae(&data, &config, &obj, &train, 9).unwrap();
                assert!(
                    check_vae(&trained, &batch, &obj, 10) <= TOL,
                    "{arch:?} {prior:?} trained"
                );
            }
        }
    }
}

#[test]
fn pcl_gradients_at_init_and_after_training() {
    let batch = pairs(3, 10, 6.0, 11);
    let perm = random_perm(10, &mut seeded(12));
    let config = PclConfig {
        hidden: 5,
        smooth_delta: 0.1,
        ..Default::default()
    };
    let check = |m: &PclModel| {
        grad_check(&m.store, 1e-4, |s| {
            let mut g = Graph::new();
            let (l, _) = pcl_loss(&mut g, m, s, &batch, &perm)?;
            Ok((g, l))
        })
        .unwrap()
        .max_rel_error
    };
    let mut init = PclModel::new(3, config.clone(), &mut seeded(13)).unwrap();
    // Move the discriminator off zero so every parameter gets a gradient.
    for name in ["pcl.w", "pcl.a", "pcl.b"] {
        init.store.insert(name, Tensor::filled(&[1, 3], -0.3));
    }
    assert!(check(&init) <= TOL);
    let data = pairs(3, PCL_MIN_PAIRS, 6.0, 14);
    let (trained, _) = pcl_train(&data, &config, &short(100), 15).unwrap();
    assert!(check(&trained) <= TOL);
}

fn laplace_logpdf(x: f64, lambda: f64) -> f64 {
    (lambda / 2.0).ln() - lambda * x.abs()
}

fn std_normal_logpdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn identity_flow_loss_matches_pair_entropy() {
    let (d, lambda) = (3, 2.5);
    let batch = pairs(d, 50_000, lambda, 16);
    let model = FlowModel::from_weight(Tensor::identity(d)).unwrap();
    let mut g = Graph::new();
    let l = slowflow_nll(
        &mut g,
        &model,
        &model.store,
        &batch,
        &FlowObjective {
            lambda,
            bidirectional: false,
        },
    )
    .unwrap();
    let loss = g.scalar(l);

    let per_pair: Vec<f64> = (0..batch.len())
        .map(|r| {
            let (p, n) = (batch.prev.row(r), batch.next.row(r));
            -(0..d)
                .map(|i| std_normal_logpdf(p[i]) + laplace_logpdf(n[i] - p[i], lambda))
                .sum::<f64>()
        })
        .collect();
    let (_, se) = mean_se(&per_pair);
    // Differential entropy of N(0, I) times a Laplace(1/lambda) transition.
    let entropy = d as f64
        * (0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()
            + 1.0
            + (2.0 / lambda).ln());
    assert!(
        (loss - entropy).abs() <= 3.0 * se,
        "loss {loss} entropy {entropy} se {se}"
    );
    let value = slowflow_nll_value(&model, &batch, lambda, 1.0).unwrap();
    assert!((value - loss).abs() < 1e-10);
}

#[test]
fn orthogonal_unmixing_is_volume_preserving() {
    let d = 4;
    let z = pairs(d, 300, 3.0, 17);
    let q = random_orthogonal(d, &mut seeded(18));
    // x = z Qᵀ, so x Q recovers z exactly.
    let x = mix(&z, &MixingStack::linear(q.clone()).unwrap()).unwrap();
    let obj = FlowObjective {
        lambda: 3.0,
        bidirectional: false,
    };
    let eval = |m: &FlowModel, b: &PairBatch| {
        let mut g = Graph::new();
        let l = slowflow_nll(&mut g, m, &m.store, b, &obj).unwrap();
        g.scalar(l)
    };
    let mixed = eval(&FlowModel::from_weight(q).unwrap(), &x);
    let clean = eval(&FlowModel::from_weight(Tensor::identity(d)).unwrap(), &z);
    assert!((mixed - clean).abs() < 1e-10);
}

#[test]
fn coupling_blocks_preserve_volume() {
    // With W = I the Jacobian of the whole flow is the coupling stack alone.
    let d = 4;
    for scale in [false, true] {
        let config = FlowConfig {
            scale,
            ..small_coupling()
        };
        let mut model = FlowModel::with_last_scale(d, config, 0.7, &mut seeded(46)).unwrap();
        model.store.insert("W", Tensor::identity(d));
        let x = Tensor::matrix(1, d, vec![0.3, -1.2, 0.8, 0.1]).unwrap();
        let h = 1e-6;
        let mut jac = vec![vec![0.0; d]; d];
        for j in 0..d {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.set(0, j, x.get(0, j) + h);
            xm.set(0, j, x.get(0, j) - h);
            let (zp, zm) = (model.encode(&xp).unwrap(), model.encode(&xm).unwrap());
            for i in 0..d {
                jac[i][j] = (zp.get(0, i) - zm.get(0, i)) / (2.0 * h);
            }
        }
        let m = nalgebra::DMatrix::from_fn(d, d, |i, j| jac[i][j]);
        assert!(
            (m.determinant() - 1.0).abs() < 1e-6,
            "scale {scale}: det {}",
            m.determinant()
        );
        assert_eq!(model.log_abs_det(), 0.0);
    }
}

#[test]
fn linear_flow_rejects_wrong_width() {
    let model = FlowModel::from_weight(Tensor::identity(3)).unwrap();
    let mut g = Graph::new();
    let batch = pairs(4, 5, 1.0, 19);
    assert!(slowflow_nll(
        &mut g,
        &model,
        &model.store,
        &batch,
        &FlowObjective::default()
    )
    .is_err());
    assert!(FlowModel::from_weight(Tensor::zeros(&[2, 3])).is_err());
}

/// Identity decoder and encoder with unit posterior scale.
fn identity_vae(d: usize) -> VaeModel {
    let mut model = VaeModel::new(
        d,
        VaeConfig {
            latent_dim: d,
            ..Default::default()
        },
        &mut seeded(20),
    )
    .unwrap();
    let mut enc = Tensor::zeros(&[d, 2 * d]);
    for i in 0..d {
        enc.set(i, i, 1.0);
    }
    model.store.insert("enc.w0", enc);
    // softplus(b) + 1e-6 = 1
    let unit = ((1.0f64 - 1e-6).exp() - 1.0).ln();
    let mut bias = Tensor::zeros(&[1, 2 * d]);
    for i in d..2 * d {
        bias.set(0, i, unit);
    }
    model.store.insert("enc.b0", bias);
    model.store.insert("dec.w0", Tensor::identity(d));
    model.store.insert("dec.b0", Tensor::zeros(&[1, d]));
    model
}

#[test]
fn slowvae_loss_matches_closed_form_assembly() {
    let (d, lambda, sx) = (2, 6.0, 0.1);
    let batch = pairs(d, 7, lambda, 21);
    let model = identity_vae(d);
    let noise = VaeNoise::sample(batch.len(), d, &mut seeded(22));
    let obj = VaeObjective {
        gamma: 1.0,
        lambda,
        bidirectional: false,
        ..Default::default()
    };
    let mut g = Graph::new();
    let t = slowvae_loss(&mut g, &model, &model.store, &batch, &obj, &noise).unwrap();

    let n = batch.len() as f64;
    let mut rec = 0.0;
    let mut klm = 0.0;
    let mut klt = 0.0;
    for r in 0..batch.len() {
        let post = |t: &Tensor| -> Vec<GaussianMoments> {
            t.row(r)
                .iter()
                .map(|&m| GaussianMoments::new(m, 1.0).unwrap())
                .collect()
        };
        let kl = slowvae_kl_pair(&post(&batch.prev), &post(&batch.next), lambda).unwrap();
        klm += kl.kl_marginal;
        klt += kl.kl_transition;
        for i in 0..d {
            // x̂ = μ + σ ε with μ = x and σ = 1
            rec += noise.prev.get(r, i).powi(2) + noise.next.get(r, i).powi(2);
        }
    }
    let rec = rec / (2.0 * sx * sx * n) + d as f64 * (2.0 * std::f64::consts::PI * sx * sx).ln();
    let (klm, klt) = (klm / n, klt / n);
    assert!((g.scalar(t.reconstruction) - rec).abs() < 1e-9);
    assert!((g.scalar(t.kl_marginal) - klm).abs() < 1e-10);
    assert!((g.scalar(t.kl_transition) - klt).abs() < 1e-10);
    assert!((g.scalar(t.total) - (rec + klm + klt)).abs() < 1e-9);
}

fn gauss_logpdf(z: f64, mu: f64, sigma: f64) -> f64 {
    std_normal_logpdf((z - mu) / sigma) - sigma.ln()
}

#[test]
fn slowvae_loss_matches_monte_carlo_elbo() {
    let (d, lambda, gamma) = (2, 6.0, 3.0);
    let config = VaeConfig {
        latent_dim: d,
        arch: EncoderArch::Mlp,
        hidden: 4,
        sigma_x: 0.5,
        ..Default::default()
    };
    let model = VaeModel::new(d, config, &mut seeded(23)).unwrap();
    let batch = pairs(d, 1, lambda, 24);
    let obj = VaeObjective {
        gamma,
        lambda,
        bidirectional: false,
        ..Default::default()
    };
    let draws = 100_000;
    let mut rng = seeded(25);

    // Estimator: the loss itself, averaged over its own noise.
    let est: Vec<f64> = (0..draws / 100)
        .map(|_| {
            let noise = VaeNoise::sample(1, d, &mut rng);
            let mut g = Graph::new();
            let t = slowvae_loss(&mut g, &model, &model.store, &batch, &obj, &noise).unwrap();
            g.scalar(t.total)
        })
        .collect();

    // Oracle: fully sampled negative ELBO, KL terms included.
    let (mp, sp) = model.encode(&batch.prev).unwrap();
    let (mn, sn) = model.encode(&batch.next).unwrap();
    let mut zp = Tensor::zeros(&[draws, d]);
    let mut zn = Tensor::zeros(&[draws, d]);
    for r in 0..draws {
        for i in 0..d {
            let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            zp.set(r, i, mp.get(0, i) + sp.get(0, i) * a);
            zn.set(r, i, mn.get(0, i) + sn.get(0, i) * b);
        }
    }
    let (xp, xn) = (model.decode(&zp).unwrap(), model.decode(&zn).unwrap());
    let sx = 0.5;
    let oracle: Vec<f64> = (0..draws)
        .map(|r| {
            let mut v = 0.0;
            for i in 0..d {
                v -= gauss_logpdf(batch.prev.get(0, i), xp.get(r, i), sx);
                v -= gauss_logpdf(batch.next.get(0, i), xn.get(r, i), sx);
                let (a, b) = (zp.get(r, i), zn.get(r, i));
                v += gauss_logpdf(a, mp.get(0, i), sp.get(0, i)) - std_normal_logpdf(a);
                v += gamma
                    * (gauss_logpdf(b, mn.get(0, i), sn.get(0, i))
                        - laplace_logpdf(b - mp.get(0, i), lambda));
            }
            v
        })
        .collect();
    let (m1, s1) = mean_se(&est);
    let (m2, s2) = mean_se(&oracle);
    let se = (s1 * s1 + s2 * s2).sqrt();
    assert!(
        (m1 - m2).abs() <= 3.0 * se,
        "estimator {m1} oracle {m2} se {se}"
    );
}

#[test]
fn posterior_matching_vanishes_for_identical_frames() {
    let d = 3;
    let mut batch = pairs(d, 20, 6.0, 26);
    batch.next = batch.prev.clone();
    let config = VaeConfig {
        latent_dim: d,
        arch: EncoderArch::Mlp,
        hidden: 4,
        ..Default::default()
    };
    let model = VaeModel::new(d, config, &mut seeded(27)).unwrap();
    let noise = VaeNoise::sample(20, d, &mut seeded(28));
    for bidirectional in [false, true] {
        let mut g = Graph::new();
        let t = pmvae_loss(
            &mut g,
            &model,
            &model.store,
            &batch,
            10.0,
            bidirectional,
            &noise,
        )
        .unwrap();
        assert!(g.scalar(t.kl_transition).abs() < 1e-12);
    }
}

#[test]
fn posterior_matching_matches_monte_carlo_kl() {
    let d = 2;
    let batch = pairs(d, 1, 1.0, 29);
    let config = VaeConfig {
        latent_dim: d,
        arch: EncoderArch::Mlp,
        hidden: 4,
        ..Default::default()
    };
    let model = VaeModel::new(d, config, &mut seeded(30)).unwrap();
    let noise = VaeNoise::sample(1, d, &mut seeded(31));
    let mut g = Graph::new();
    let t = pmvae_loss(&mut g, &model, &model.store, &batch, 1.0, false, &noise).unwrap();
    let closed = g.scalar(t.kl_transition);

    let (mp, sp) = model.encode(&batch.prev).unwrap();
    let (mn, sn) = model.encode(&batch.next).unwrap();
    let mut rng = seeded(32);
    let samples: Vec<f64> = (0..100_000)
        .map(|_| {
            (0..d)
                .map(|i| {
                    let e: f64 = rng.sample(StandardNormal);
                    let z = mn.get(0, i) + sn.get(0, i) * e;
                    gauss_logpdf(z, mn.get(0, i), sn.get(0, i))
                        - gauss_logpdf(z, mp.get(0, i), sp.get(0, i))
                })
                .sum()
        })
        .collect();
    let (m, se) = mean_se(&samples);
    assert!(
        (closed - m).abs() <= 3.0 * se,
        "closed {closed} mc {m} se {se}"
    );
}

#[test]
fn train_log_terms_sum_to_total() {
    let data = pairs(3, 400, 6.0, 33);
    let obj = VaeObjective::default();
    let config = VaeConfig {
        latent_dim: 3,
        ..Default::default()
    };
    let (_, log) = train_slowvae(&data, &config, &obj, &short(30), 34).unwrap();
    assert_eq!(log.entries.len(), 30);
    for (k, e) in log.entries.iter().enumerate() {
        assert_eq!(e.step, k);
        let t = e.terms;
        let sum = t.reconstruction + t.kl_marginal + obj.gamma * t.kl_transition;
        assert!(
            (sum - t.loss).abs() <= 1e-10 * t.loss.abs().max(1.0),
            "step {k}"
        );
    }
}

#[test]
fn vae_rejects_bad_objective() {
    let data = pairs(2, 50, 6.0, 35);
    let bad = VaeObjective {
        gamma: 0.0,
        ..Default::default()
    };
    assert!(train_slowvae(&data, &VaeConfig::default(), &bad, &short(2), 0).is_err());
    let bad = VaeObjective {
        lambda: f64::NAN,
        ..Default::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn pcl_oracle_discriminator_reaches_bayes_rate() {
    let (d, lambda) = (5, 6.0);
    let data = pairs(d, 5000, lambda, 36);
    let config = PclConfig {
        arch: EncoderArch::Linear,
        smooth_delta: 1e-6,
        ..Default::default()
    };
    let mut model = PclModel::new(d, config, &mut seeded(37)).unwrap();
    model.store.insert("f.w0", Tensor::identity(d));
    model.store.insert("f.b0", Tensor::zeros(&[1, d]));
    // log p(v | u) - log p(v) with p(v) approximated by N(0, 1 + 2/λ²).
    let var = 1.0 + 2.0 / (lambda * lambda);
    model
        .store
        .insert("pcl.w", Tensor::filled(&[1, d], -lambda));
    model
        .store
        .insert("pcl.b", Tensor::filled(&[1, d], 0.5 / var));
    let bias = d as f64 * ((lambda / 2.0).ln() + 0.5 * (2.0 * std::f64::consts::PI * var).ln());
    model
        .store
        .insert("pcl.bias", Tensor::filled(&[1, 1], bias));
    let acc = pcl_accuracy(&model, &data, &mut seeded(38)).unwrap();
    assert!(acc >= 0.99, "accuracy {acc}");
}

#[test]
fn untrained_pcl_is_at_chance() {
    let data = pairs(4, 4000, 6.0, 39);
    let model = PclModel::new(4, PclConfig::default(), &mut seeded(40)).unwrap();
    let acc = pcl_accuracy(&model, &data, &mut seeded(41)).unwrap();
    assert!((acc - 0.5).abs() <= 0.02);
}

#[test]
fn pcl_input_validation() {
    let data = pairs(2, PCL_MIN_PAIRS - 1, 6.0, 42);
    assert!(pcl_train(&data, &PclConfig::default(), &short(1), 0).is_err());
    let data = pairs(2, PCL_MIN_PAIRS, 6.0, 42);
    let tiny = TrainConfig {
        batch_size: 1,
        ..short(1)
    };
    assert!(pcl_train(&data, &PclConfig::default(), &tiny, 0).is_err());
}

#[test]
fn checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = pairs(3, PCL_MIN_PAIRS, 6.0, 43);
    let (flow, _) = train_slowflow(
        &data,
        &small_coupling(),
        &FlowObjective::default(),
        &short(5),
        1,
    )
    .unwrap();
    let vc = VaeConfig {
        latent_dim: 3,
        arch: EncoderArch::Mlp,
        hidden: 4,
        ..Default::default()
    };
    let (vae, _) = train_slowvae(&data, &vc, &VaeObjective::default(), &short(5), 2).unwrap();
    let (pcl, _) = pcl_train(
        &data,
        &PclConfig {
            hidden: 4,
            ..Default::default()
        },
        &short(5),
        3,
    )
    .unwrap();
    for (k, model) in [
        TrainedModel::Flow(flow),
        TrainedModel::Vae(vae),
        TrainedModel::Pcl(pcl),
    ]
    .into_iter()
    .enumerate()
    {
        let path = dir.path().join(format!("m{k}"));
        let manifest = save_checkpoint(&path, &model, 7, 5).unwrap();
        let (back, m2) = load_checkpoint(&path).unwrap();
        assert_eq!(manifest, m2);
        assert_eq!(m2.kind, model.kind());
        assert_eq!((m2.seed, m2.step), (7, 5));
        let names: Vec<&str> = model.store().names().collect();
        assert_eq!(back.store().names().collect::<Vec<_>>(), names);
        for name in names {
            assert_eq!(back.store().get(name), model.store().get(name));
        }
        assert_eq!(
            back.encode(&data.prev).unwrap(),
            model.encode(&data.prev).unwrap()
        );
    }
}

#[test]
fn tensor_archive_rejects_corruption() {
    let t = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let bytes = encode_tensors([("a", &t)]);
    assert_eq!(&bytes[..4], TENSOR_MAGIC);
    assert_eq!(decode_tensors(&bytes).unwrap(), vec![("a".to_string(), t)]);
    assert!(decode_tensors(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_tensors(&bad).is_err());
}

#[test]
fn divergence_reports_the_step() {
    let huge = Tensor::filled(&[8, 2], 1e200);
    let data = PairBatch::new(huge.clone(), huge).unwrap();
    let err = train_slowflow(
        &data,
        &FlowConfig::default(),
        &FlowObjective::default(),
        &short(3),
        0,
    )
    .unwrap_err();
    assert!(
        matches!(err, crate::Error::Diverged { step: 0, .. }),
        "{err:?}"
    );
}

#[test]
fn training_is_deterministic() {
    let data = pairs(3, 500, 6.0, 44);
    let run = || {
        train_slowflow(
            &data,
            &small_coupling(),
            &FlowObjective::default(),
            &short(20),
            9,
        )
        .unwrap()
    };
    let ((a, la), (b, lb)) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(la.entries, lb.entries);
}

#[test]
fn mlp_zero_last_layer_is_zero_map() {
    let mlp = Mlp::new("m", vec![3, 4, 2], Activation::Tanh);
    let mut store = ParamStore::new();
    mlp.init(&mut store, 0.0, &mut seeded(45));
    let mut g = Graph::new();
    let x = g.constant(Tensor::filled(&[5, 3], 0.7));
    let y = mlp.forward(&mut g, &store, x);
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
}
