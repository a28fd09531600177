use serde::{Deserialize, Serialize};

use super::tracks::MaskTrack;
use crate::error::{Error, Result};

pub const DELTA_COLUMNS: [&str; 3] = ["dx", "dy", "darea"];
pub const CLIP_BOUND: f64 = 5.0;

/// Scaling applied by [`normalize_clip`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// Standard deviation of each raw column (population convention).
    pub std: [f64; 3],
    /// Values clipped to ±5 after scaling, per column.
    pub clipped: [usize; 3],
    pub note: String,
}

/// Temporal differences of mask measurements, one row per within-track pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub max_frame_gap: u32,
    pub track: Vec<String>,
    pub frame_gap: Vec<u32>,
    pub dt: Vec<f64>,
    /// `dx`, `dy`, `darea` before normalization.
    pub raw: [Vec<f64>; 3],
    pub normalized: Option<[Vec<f64>; 3]>,
    pub normalization: Option<Normalization>,
}

impl TransitionTable {
    pub fn len(&self) -> usize {
        self.dt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dt.is_empty()
    }

    pub fn mean_dt(&self) -> Option<f64> {
        (!self.dt.is_empty()).then(|| self.dt.iter().sum::<f64>() / self.dt.len() as f64)
    }

    /// Normalized columns when available, raw otherwise.
    pub fn columns(&self) -> &[Vec<f64>; 3] {
        self.normalized.as_ref().unwrap_or(&self.raw)
    }

    /// A table with the given raw columns and no track bookkeeping.
    pub fn from_columns(raw: [Vec<f64>; 3]) -> Result<Self> {
        let n = raw[0].len();
        if raw.iter().any(|c| c.len() != n) {
            return Err(Error::shape("transition columns differ in length"));
        }
        Ok(Self {
            max_frame_gap: 1,
            track: vec![String::new(); n],
            frame_gap: vec![1; n],
            dt: vec![0.0; n],
            raw,
            normalized: None,
            normalization: None,
        })
    }
}

/// Every ordered pair `(i, j)`, `i < j`, inside one track whose frame gap is at
/// most `max_frame_gap`.
pub fn compute_transitions(tracks: &[MaskTrack], max_frame_gap: u32) -> Result<TransitionTable> {
    if max_frame_gap == 0 {
        return Err(Error::invalid("max_frame_gap must be >= 1"));
    }
    let mut table = TransitionTable {
        max_frame_gap,
        track: Vec::new(),
        frame_gap: Vec::new(),
        dt: Vec::new(),
        raw: [Vec::new(), Vec::new(), Vec::new()],
        normalized: None,
        normalization: None,
    };
    for t in tracks {
        let id = t.id();
        let s = &t.samples;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                let gap = s[j].frame - s[i].frame;
                if gap <= 0 {
                    return Err(Error::invalid(format!("track {id} is not sorted by frame")));
                }
                if gap > max_frame_gap as i64 {
                    break;
                }
                table.track.push(id.clone());
                table.frame_gap.push(gap as u32);
                table.dt.push(s[j].time_s - s[i].time_s);
                table.raw[0].push(s[j].cx - s[i].cx);
                table.raw[1].push(s[j].cy - s[i].cy);
                table.raw[2].push(s[j].area - s[i].area);
            }
        }
    }
    Ok(table)
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Scales each raw column to unit standard deviation over the pooled table,
/// then clips to ±5.
pub fn normalize_clip(table: &TransitionTable) -> Result<TransitionTable> {
    if table.len() < 2 {
        return Err(Error::Degenerate(
            "normalization needs at least two transitions".into(),
        ));
    }
    let mut out = table.clone();
    let mut cols: [Vec<f64>; 3] = Default::default();
    let mut std = [0.0; 3];
    let mut clipped = [0; 3];
    for k in 0..3 {
        let s = population_std(&table.raw[k]);
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Degenerate(format!(
                "column {} has zero or non-finite spread",
                DELTA_COLUMNS[k]
            )));
        }
        std[k] = s;
        cols[k] = table.raw[k]
            .iter()
            .map(|&v| {
                let y = v / s;
                if y.abs() > CLIP_BOUND {
                    clipped[k] += 1;
                    y.clamp(-CLIP_BOUND, CLIP_BOUND)
                } else {
                    y
                }
            })
            .collect();
    }
    out.normalized = Some(cols);
    out.normalization = Some(Normalization {
        std,
        clipped,
        note: "columns scaled by the pooled standard deviation over all tracks, then clipped to [-5, 5]".into(),
    });
    Ok(out)
}
