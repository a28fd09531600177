//! Config-driven experiments: datasets, training, evaluation, sweeps and
//! result records.

mod config;
mod data;
mod gradsuite;
mod run;
mod stats;
pub mod sweeps;

pub use config::{
    config_hash, DatasetKind, DatasetSpec, EstimatorKind, EstimatorSpec, ExperimentConfig,
    MetricSpec, MixingKind, MixingSpec, SweepAxes, TracksSpec,
};
pub use data::{build_dataset, build_mixing, track_pairs, Dataset};
pub use gradsuite::{gradcheck_suite, GradCheckEntry, GRAD_TOLERANCE};
pub use run::{
    fit_estimator, fmt_exact, run, write_text, ResultRecord, SeedResult, TrainSummary,
    RECORD_SCHEMA_VERSION,
};
pub use stats::{aggregate, par_map, ttest_ind, Aggregate, TTest};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SLOWLAB_OUT";
