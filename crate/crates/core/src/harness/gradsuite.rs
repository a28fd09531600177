use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimators::{
    pcl_loss, pcl_train, random_perm, slowflow_nll, slowvae_loss, train_slowflow, train_slowvae,
    EncoderArch, FlowConfig, FlowKind, FlowModel, FlowObjective, PclConfig, PclModel, TrainConfig,
    TransitionPrior, VaeConfig, VaeModel, VaeNoise, VaeObjective, PCL_MIN_PAIRS,
};
use crate::gradcore::{grad_check, Graph, Tensor};
use crate::rng::seeded;
use crate::synthgen::{sample_pairs, ChainMode, PairBatch, SourceChainConfig};

pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub loss: String,
    /// `init` or `trained` (after 100 Adam steps).
    pub stage: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

fn pairs(dim: usize, count: usize, lambda: f64, seed: u64) -> Result<PairBatch> {
    let cfg = SourceChainConfig {
        dim,
        alpha: 1.0,
        lambda,
        mode: ChainMode::Pair,
        count,
    };
    sample_pairs(&cfg, &mut seeded(seed))
}

fn short() -> TrainConfig {
    TrainConfig {
        steps: 100,
        batch_size: 32,
        lr: 1e-2,
        log_every: 100,
        lr_final: 1.0,
    }
}

fn entry(loss: String, stage: &str, r: crate::gradcore::GradCheckReport) -> GradCheckEntry {
    GradCheckEntry {
        loss,
        stage: stage.into(),
        coordinates: r.coordinates,
        max_rel_error: r.max_rel_error,
        passed: r.max_rel_error <= GRAD_TOLERANCE,
    }
}

/// Finite-difference checks of every estimator loss at initialization and
/// after 100 training steps, on instances with d <= 5.
pub fn gradcheck_suite() -> Result<Vec<GradCheckEntry>> {
    let mut out = Vec::new();

    let batch = pairs(4, 12, 2.0, 1)?;
    let data = pairs(4, 500, 2.0, 3)?;
    let small = FlowConfig {
        kind: FlowKind::Coupling,
        blocks: 2,
        hidden: 6,
        ..Default::default()
    };
    let flows = [
        ("slowflow/linear", FlowConfig::default()),
        ("slowflow/coupling", small.clone()),
        (
            "slowflow/coupling-scale",
            FlowConfig {
                scale: true,
                ..small
            },
        ),
    ];
    let obj = FlowObjective {
        lambda: 2.0,
        bidirectional: true,
    };
    for (name, config) in flows {
        let init = FlowModel::with_last_scale(4, config.clone(), 0.5, &mut seeded(2))?;
        let (trained, _) = train_slowflow(&data, &config, &FlowObjective::default(), &short(), 4)?;
        for (stage, m) in [("init", &init), ("trained", &trained)] {
            // The |Δz| kink needs a narrow probe band.
            let r = grad_check(&m.store, 5e-6, |s| {
                let mut g = Graph::new();
                let l = slowflow_nll(&mut g, m, s, &batch, &obj)?;
                Ok((g, l))
            })?;
            out.push(entry(name.into(), stage, r));
        }
    }

    let batch = pairs(3, 10, 6.0, 5)?;
    let data = pairs(3, 500, 6.0, 6)?;
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
                let init = VaeModel::new(3, config.clone(), &mut seeded(7))?;
                let train = TrainConfig {
                    lr: 3e-3,
                    ..short()
                };
                let (trained, _) = train_slowvae(&data, &config, &obj, &train, 9)?;
                let name = format!(
                    "{}/{}{}",
                    if prior == TransitionPrior::Laplace {
                        "slowvae"
                    } else {
                        "pmvae"
                    },
                    if arch == EncoderArch::Linear {
                        "linear"
                    } else {
                        "mlp"
                    },
                    if bidirectional { "/bidirectional" } else { "" }
                );
                let noise = VaeNoise::sample(batch.len(), 3, &mut seeded(8));
                for (stage, m) in [("init", &init), ("trained", &trained)] {
                    let r = grad_check(&m.store, 1e-4, |s| {
                        let mut g = Graph::new();
                        let t = slowvae_loss(&mut g, m, s, &batch, &obj, &noise)?;
                        Ok((g, t.total))
                    })?;
                    out.push(entry(name.clone(), stage, r));
                }
            }
        }
    }

    let batch = pairs(3, 10, 6.0, 11)?;
    let perm = random_perm(10, &mut seeded(12));
    let config = PclConfig {
        hidden: 5,
        smooth_delta: 0.1,
        ..Default::default()
    };
    let mut init = PclModel::new(3, config.clone(), &mut seeded(13))?;
    // Move the discriminator off zero so every parameter gets a gradient.
    for name in ["pcl.w", "pcl.a", "pcl.b"] {
        init.store.insert(name, Tensor::filled(&[1, 3], -0.3));
    }
    let (trained, _) = pcl_train(&pairs(3, PCL_MIN_PAIRS, 6.0, 14)?, &config, &short(), 15)?;
    for (stage, m) in [("init", &init), ("trained", &trained)] {
        let r = grad_check(&m.store, 1e-4, |s| {
            let mut g = Graph::new();
            let (l, _) = pcl_loss(&mut g, m, s, &batch, &perm)?;
            Ok((g, l))
        })?;
        out.push(entry("pcl".into(), stage, r));
    }
    Ok(out)
}
