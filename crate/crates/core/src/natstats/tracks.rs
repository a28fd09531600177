use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dists::{genlap_sample, GenLaplaceParams};
use crate::error::{Error, Result};

pub const TRACK_COLUMNS: [&str; 7] = [
    "sequence_id",
    "object_id",
    "frame",
    "time_s",
    "cx",
    "cy",
    "area",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSample {
    pub frame: i64,
    pub time_s: f64,
    pub cx: f64,
    pub cy: f64,
    pub area: f64,
}

/// Measurements of one object mask across frames, sorted by frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskTrack {
    pub sequence_id: String,
    pub object_id: String,
    pub samples: Vec<MaskSample>,
}

impl MaskTrack {
    pub fn id(&self) -> String {
        format!("{}/{}", self.sequence_id, self.object_id)
    }
}

/// A problem with one input row. `line` is 1-based and counts the header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Tracks parsed from a CSV, together with the rows that were rejected.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedTracks {
    pub tracks: Vec<MaskTrack>,
    pub errors: Vec<RowError>,
}

struct Row {
    line: u64,
    key: (String, String),
    sample: MaskSample,
}

fn parse_row(
    rec: &csv::StringRecord,
    idx: &[usize; 7],
    line: u64,
) -> std::result::Result<Row, String> {
    let field = |k: usize| rec.get(idx[k]).map(str::trim).unwrap_or("");
    let text = |k: usize| -> std::result::Result<String, String> {
        let v = field(k);
        if v.is_empty() {
            Err(format!("empty {}", TRACK_COLUMNS[k]))
        } else {
            Ok(v.to_string())
        }
    };
    let num = |k: usize| -> std::result::Result<f64, String> {
        let v = field(k);
        let x: f64 = v
            .parse()
            .map_err(|_| format!("{} is not a number: {v:?}", TRACK_COLUMNS[k]))?;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(format!("{} is not finite", TRACK_COLUMNS[k]))
        }
    };
    let frame: i64 = field(2)
        .parse()
        .map_err(|_| format!("frame is not an integer: {:?}", field(2)))?;
    let area = num(6)?;
    if area <= 0.0 {
        return Err(format!("area must be > 0, got {area}"));
    }
    Ok(Row {
        line,
        key: (text(0)?, text(1)?),
        sample: MaskSample {
            frame,
            time_s: num(3)?,
            cx: num(4)?,
            cy: num(5)?,
            area,
        },
    })
}

/// Parses track CSV from any reader. A missing header column is fatal; bad
/// rows are collected, and a track with a repeated frame is rejected whole.
pub fn parse_tracks<R: Read>(reader: R) -> Result<ParsedTracks> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 7];
    for (k, name) in TRACK_COLUMNS.iter().enumerate() {
        idx[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| Error::Format(format!("missing column `{name}`")))?;
    }

    let mut errors = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<Row>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        match parse_row(&rec, &idx, line) {
            Ok(row) => groups.entry(row.key.clone()).or_default().push(row),
            Err(message) => errors.push(RowError { line, message }),
        }
    }

    let mut tracks = Vec::with_capacity(groups.len());
    for ((sequence_id, object_id), mut rows) in groups {
        rows.sort_by_key(|r| (r.sample.frame, r.line));
        if let Some(w) = rows
            .windows(2)
            .find(|w| w[0].sample.frame == w[1].sample.frame)
        {
            errors.push(RowError {
                line: w[1].line,
                message: format!(
                    "frame {} repeated in track {sequence_id}/{object_id} (also line {}); track dropped",
                    w[1].sample.frame, w[0].line
                ),
            });
            continue;
        }
        tracks.push(MaskTrack {
            sequence_id,
            object_id,
            samples: rows.into_iter().map(|r| r.sample).collect(),
        });
    }
    errors.sort_by_key(|e| e.line);
    Ok(ParsedTracks { tracks, errors })
}

/// Reads a track CSV. Any rejected row makes the load fail with a summary;
/// use [`load_tracks_lenient`] to keep the valid rows.
pub fn load_tracks(path: &Path) -> Result<Vec<MaskTrack>> {
    let parsed = load_tracks_lenient(path)?;
    match parsed.errors.first() {
        None => Ok(parsed.tracks),
        Some(first) => Err(Error::Rows {
            path: path.to_path_buf(),
            count: parsed.errors.len(),
            first: first.to_string(),
        }),
    }
}

pub fn load_tracks_lenient(path: &Path) -> Result<ParsedTracks> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_tracks(std::io::BufReader::new(file))
}

pub fn write_tracks_csv<W: Write>(tracks: &[MaskTrack], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACK_COLUMNS)?;
    for t in tracks {
        for s in &t.samples {
            w.write_record([
                t.sequence_id.clone(),
                t.object_id.clone(),
                s.frame.to_string(),
                s.time_s.to_string(),
                s.cx.to_string(),
                s.cy.to_string(),
                s.area.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Synthetic track generator with known transition statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixtureConfig {
    pub tracks: usize,
    pub frames_per_track: usize,
    /// Shape of the generalized Laplace increments of cx, cy and area.
    pub alpha: f64,
    pub rate: f64,
    /// Constant per-frame drift added to cx and cy.
    pub velocity: (f64, f64),
    /// When set, every increment is exactly the drift (no noise).
    pub deterministic: bool,
    pub fps: f64,
    pub tracks_per_sequence: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            tracks: 1000,
            frames_per_track: 10,
            alpha: 0.5,
            rate: 1.0,
            velocity: (0.0, 0.0),
            deterministic: false,
            fps: 30.0,
            tracks_per_sequence: 10,
        }
    }
}

/// Large enough that heavy-tailed area increments never reach zero in practice.
const FIXTURE_BASE_AREA: f64 = 1e7;

pub fn synth_tracks<R: Rng + ?Sized>(
    config: &FixtureConfig,
    rng: &mut R,
) -> Result<Vec<MaskTrack>> {
    if config.tracks == 0 || config.frames_per_track == 0 || config.tracks_per_sequence == 0 {
        return Err(Error::invalid(
            "fixture needs tracks, frames and tracks_per_sequence >= 1",
        ));
    }
    if !(config.fps > 0.0) {
        return Err(Error::invalid("fps must be > 0"));
    }
    let law = GenLaplaceParams::new(config.alpha, config.rate, 0.0)?;
    let steps = config.frames_per_track - 1;
    let mut out = Vec::with_capacity(config.tracks);
    for t in 0..config.tracks {
        let noise = if config.deterministic {
            vec![0.0; 3 * steps]
        } else {
            genlap_sample(&law, 3 * steps, rng)?
        };
        let (mut cx, mut cy, mut area) = (100.0, 100.0, FIXTURE_BASE_AREA);
        let mut samples = Vec::with_capacity(config.frames_per_track);
        for f in 0..config.frames_per_track {
            if f > 0 {
                let k = 3 * (f - 1);
                cx += config.velocity.0 + noise[k];
                cy += config.velocity.1 + noise[k + 1];
                area += noise[k + 2];
            }
            if area <= 0.0 {
                return Err(Error::Degenerate(
                    "fixture area reached zero; lower the increment scale".into(),
                ));
            }
            samples.push(MaskSample {
                frame: f as i64,
                time_s: f as f64 / config.fps,
                cx,
                cy,
                area,
            });
        }
        out.push(MaskTrack {
            sequence_id: format!("seq{:04}", t / config.tracks_per_sequence),
            object_id: format!("obj{:02}", t % config.tracks_per_sequence),
            samples,
        });
    }
    Ok(out)
}
