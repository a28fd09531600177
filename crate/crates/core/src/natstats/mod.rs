//! Transition statistics of object-mask measurements: parsing, pairing,
//! normalization, family fits and dependence diagnostics.

mod report;
mod tracks;
mod transitions;

pub use report::{
    dependence_diagnostic, stats_report, ColumnStats, DependenceReport, Histogram2d, StatsReport,
    HIST_BINS,
};
pub use tracks::{
    load_tracks, load_tracks_lenient, parse_tracks, synth_tracks, write_tracks_csv, FixtureConfig,
    MaskSample, MaskTrack, ParsedTracks, RowError, TRACK_COLUMNS,
};
pub use transitions::{
    compute_transitions, normalize_clip, Normalization, TransitionTable, CLIP_BOUND, DELTA_COLUMNS,
};
