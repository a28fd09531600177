use rand::Rng;

use super::config::{DatasetKind, DatasetSpec, MixingKind};
use crate::error::{Error, Result};
use crate::gradcore::Tensor;
use crate::natstats::{load_tracks, MaskTrack};
use crate::synthgen::{
    expanding_decoder, make_mixing_stack, mix, random_orthogonal, sample_chain, shuffle_per_factor,
    MixingStack, PairBatch,
};

/// Ground-truth pairs and their observations.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub latents: PairBatch,
    pub observations: PairBatch,
    pub mixing: MixingStack,
}

pub fn build_mixing<R: Rng + ?Sized>(
    spec: &super::config::MixingSpec,
    dim: usize,
    rng: &mut R,
) -> Result<MixingStack> {
    match spec.kind {
        MixingKind::Identity => Ok(MixingStack::identity(dim)),
        MixingKind::Orthogonal => MixingStack::linear(random_orthogonal(dim, rng)),
        MixingKind::Kappa => {
            if dim != 2 {
                return Err(Error::Config(format!(
                    "kappa mixing needs 2 sources, got {dim}"
                )));
            }
            MixingStack::kappa(spec.kappa)
        }
        MixingKind::Nonlinear => make_mixing_stack(dim, spec.layers, spec.slope, rng),
        MixingKind::Expanding => {
            let out = if spec.dim_out == 0 { dim } else { spec.dim_out };
            expanding_decoder(dim, out, spec.slope, rng)
        }
    }
}

/// Pairs of (cx, cy, area) samples within the frame gap, each column
/// standardized over the pooled pairs.
pub fn track_pairs(tracks: &[MaskTrack], max_frame_gap: u32) -> Result<PairBatch> {
    let (mut prev, mut next) = (Vec::new(), Vec::new());
    for t in tracks {
        let s = &t.samples;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                if s[j].frame - s[i].frame > max_frame_gap as i64 {
                    break;
                }
                prev.extend_from_slice(&[s[i].cx, s[i].cy, s[i].area]);
                next.extend_from_slice(&[s[j].cx, s[j].cy, s[j].area]);
            }
        }
    }
    let n = prev.len() / 3;
    if n < 2 {
        return Err(Error::Degenerate(
            "track file yields fewer than two pairs".into(),
        ));
    }
    for c in 0..3 {
        let vals: Vec<f64> = (0..n)
            .flat_map(|r| [prev[3 * r + c], next[3 * r + c]])
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        if !(sd > 0.0) {
            return Err(Error::Degenerate(format!("track column {c} is constant")));
        }
        for r in 0..n {
            prev[3 * r + c] = (prev[3 * r + c] - mean) / sd;
            next[3 * r + c] = (next[3 * r + c] - mean) / sd;
        }
    }
    PairBatch::new(Tensor::matrix(n, 3, prev)?, Tensor::matrix(n, 3, next)?)
}

/// Samples the latent pairs, then the mixing, from one stream.
pub fn build_dataset<R: Rng + ?Sized>(spec: &DatasetSpec, rng: &mut R) -> Result<Dataset> {
    let mut latents = match spec.kind {
        DatasetKind::Sources => sample_chain(&spec.sources, rng)?,
        DatasetKind::Tracks => {
            let path = spec
                .tracks
                .path
                .as_ref()
                .ok_or_else(|| Error::Config("tracks dataset needs a path".into()))?;
            track_pairs(&load_tracks(path)?, spec.tracks.max_frame_gap)?
        }
    };
    if spec.shuffle_per_factor {
        latents = shuffle_per_factor(&latents, rng);
    }
    let mixing = build_mixing(&spec.mixing, latents.dim(), rng)?;
    let observations = mix(&latents, &mixing)?;
    Ok(Dataset {
        latents,
        observations,
        mixing,
    })
}
