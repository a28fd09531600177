use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use slowlab::error::{Error, Result};
use slowlab::estimators::{load_checkpoint, save_checkpoint};
use slowlab::gradcore::Tensor;
use slowlab::harness::sweeps::{self, SweepRecord};
use slowlab::harness::{
    self, fit_estimator, fmt_exact, run, write_text, DatasetKind, DatasetSpec, EstimatorKind,
    EstimatorSpec, ExperimentConfig, MixingKind, TrainSummary, OUT_DIR_ENV,
};
use slowlab::metrics::{evaluate, MetricInput, MetricName};
use slowlab::natstats::{
    compute_transitions, dependence_diagnostic, load_tracks, load_tracks_lenient, normalize_clip,
    stats_report, synth_tracks, write_tracks_csv, FixtureConfig,
};
use slowlab::rng::{seeded, stream};
use slowlab::synthgen::{
    lap_transition_sample, uni_transition_sample, ChainMode, FactorGrid, PairBatch,
};

#[derive(Parser)]
#[command(
    name = "slowlab",
    version,
    about = "Sparse temporal transitions: data, estimators, metrics and statistics"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Seed for data generation and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "slowlab-out")]
    out: PathBuf,
    /// JSON config for the subcommand (experiment, dataset, estimator or sweep).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Format of the summary printed to stdout.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic data files.
    GenData(GenDataArgs),
    /// Transition statistics of a mask-track CSV.
    FitStats(FitStatsArgs),
    /// Train one estimator on a pair file and save a checkpoint.
    Train(TrainArgs),
    /// Evaluate metrics on stored latents and factors.
    Eval(EvalArgs),
    /// Run a full experiment config over its seeds.
    Run,
    /// Run a named ablation sweep.
    Sweep(SweepArgs),
    /// Finite-difference checks of every estimator loss.
    Gradcheck,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DataKind {
    /// Continuous sources plus mixed observations.
    Sources,
    /// LAP factor pairs on a discrete grid.
    Lap,
    /// UNI factor pairs on a discrete grid.
    Uni,
    /// Synthetic mask tracks (CSV fixture).
    Tracks,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_enum, default_value = "sources")]
    kind: DataKind,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// `pair` or `ar`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    /// identity | orthogonal | kappa | nonlinear | expanding
    #[arg(long)]
    mixing: Option<String>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    dim_out: Option<usize>,
    /// Grid sizes for lap/uni, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "3,6,40,32,32")]
    sizes: Vec<usize>,
    /// Number of tracks for the track fixture.
    #[arg(long, default_value_t = 1000)]
    tracks: usize,
    #[arg(long, default_value_t = 10)]
    frames: usize,
    /// Also write the binary pair format.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct FitStatsArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1)]
    gap: u32,
    /// Keep valid rows when some rows are rejected.
    #[arg(long)]
    lenient: bool,
    /// Skip the shuffled-marginal dependence diagnostic.
    #[arg(long)]
    no_diagnostic: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Pair CSV (prev_i/next_i columns) or binary pair file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Slowflow,
    Slowvae,
    Pmvae,
    Pcl,
}

#[derive(Args)]
struct EvalArgs {
    /// Latent CSV; a pair CSV contributes its prev columns.
    #[arg(long, conflicts_with = "model")]
    latents: Option<PathBuf>,
    /// Checkpoint directory; encodes `--data` instead of reading latents.
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    factors: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "mcc")]
    metric: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepName {
    Table4,
    Kappa,
    Alpha,
    LapHistogram,
    Xdim,
    Pmvae,
    Gaps,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(value_enum)]
    name: SweepName,
    #[arg(long)]
    seeds: Option<usize>,
    /// Two seeds, for a quick end-to-end pass.
    #[arg(long)]
    smoke: bool,
    /// LAP rate for lap-histogram.
    #[arg(long)]
    lambda: Option<f64>,
    /// Track CSV for the gap sweep.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidParameter(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let g = &cli.global;
    match &cli.command {
        Command::GenData(a) => gen_data(g, a),
        Command::FitStats(a) => fit_stats(g, a),
        Command::Train(a) => train(g, a),
        Command::Eval(a) => eval(g, a),
        Command::Run => run_cmd(g),
        Command::Sweep(a) => sweep(g, a),
        Command::Gradcheck => gradcheck(g),
    }
}

fn load_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::Config(format!("unknown {what} `{s}`")))
}

/// Prints `value` as JSON (default) or `csv` when the CSV format is chosen.
fn emit<T: Serialize>(g: &Global, value: &T, csv: impl FnOnce() -> Result<String>) -> Result<()> {
    match g.format {
        Some(Format::Csv) => out(&csv()?),
        _ => out(&(serde_json::to_string_pretty(value)? + "\n")),
    }
}

/// Writes to stdout; a reader that closed the pipe early is not an error.
fn out(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(Error::io(Path::new("<stdout>"), e))
        }
        _ => Ok(()),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn read_pairs(path: &Path) -> Result<PairBatch> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        PairBatch::read_csv(path)
    } else {
        PairBatch::read_binary(path)
    }
}

/// Numeric CSV with a header. Pair files (`prev_i`, `next_i`) yield their
/// prev half.
fn read_matrix(path: &Path) -> Result<Tensor> {
    let mut rdr =
        csv::Reader::from_reader(std::fs::File::open(path).map_err(|e| Error::io(path, e))?);
    let header = rdr.headers()?.clone();
    if header.get(0) == Some("prev_0") {
        return Ok(PairBatch::read_csv(path)?.prev);
    }
    let cols = header.len();
    let mut data = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for f in rec.iter() {
            data.push(f.trim().parse::<f64>().map_err(|_| {
                Error::Format(format!(
                    "{} row {}: bad number `{f}`",
                    path.display(),
                    i + 2
                ))
            })?);
        }
    }
    Tensor::matrix(data.len() / cols.max(1), cols, data)
}

fn write_matrix(path: &Path, t: &Tensor, prefix: &str) -> Result<()> {
    let mut w =
        csv::Writer::from_writer(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    w.write_record((0..t.cols()).map(|i| format!("{prefix}{i}")))?;
    for r in 0..t.rows() {
        w.write_record(t.row(r).iter().map(|v| format!("{v:e}")))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn gen_data(g: &Global, a: &GenDataArgs) -> Result<ExitCode> {
    let seed = g.seed.unwrap_or(0);
    ensure_dir(&g.out)?;
    let mut files = Vec::new();
    match a.kind {
        DataKind::Sources => {
            let mut spec: DatasetSpec = load_json(g.config.as_deref())?;
            if spec.kind == DatasetKind::Tracks {
                return Err(Error::Config(
                    "gen-data writes synthetic sources; use fit-stats for track files".into(),
                ));
            }
            let s = &mut spec.sources;
            s.dim = a.dim.unwrap_or(s.dim);
            s.alpha = a.alpha.unwrap_or(s.alpha);
            s.lambda = a.lambda.unwrap_or(s.lambda);
            s.count = a.count.unwrap_or(s.count);
            if let Some(m) = &a.mode {
                s.mode = parse_enum::<ChainMode>("mode", m)?;
            }
            let m = &mut spec.mixing;
            if let Some(k) = &a.mixing {
                m.kind = parse_enum::<MixingKind>("mixing", k)?;
            }
            m.layers = a.layers.unwrap_or(m.layers);
            m.kappa = a.kappa.unwrap_or(m.kappa);
            m.dim_out = a.dim_out.unwrap_or(m.dim_out);
            let ds = harness::build_dataset(&spec, &mut seeded(seed))?;
            for (name, batch) in [("latents", &ds.latents), ("observations", &ds.observations)] {
                let p = g.out.join(format!("{name}.csv"));
                batch.write_csv(&p)?;
                files.push(p);
                if a.binary {
                    let p = g.out.join(format!("{name}.pairs"));
                    batch.write_binary(&p)?;
                    files.push(p);
                }
            }
            let p = g.out.join("dataset.json");
            write_text(
                &p,
                &serde_json::to_string_pretty(
                    &serde_json::json!({ "seed": seed, "dataset": spec }),
                )?,
            )?;
            files.push(p);
        }
        DataKind::Lap | DataKind::Uni => {
            let grid = FactorGrid::new(a.sizes.clone())?;
            let count = a.count.unwrap_or(10_000);
            let mut rng = stream(seed, 0);
            let pairs = if a.kind == DataKind::Lap {
                lap_transition_sample(&grid, a.lambda.unwrap_or(1.0), false, count, &mut rng)?
            } else {
                uni_transition_sample(&grid, count, &mut rng)?
            };
            let p = g.out.join("factors.csv");
            pairs.to_pair_batch(&grid)?.write_csv(&p)?;
            files.push(p);
            let p = g.out.join("changed_histogram.json");
            write_text(
                &p,
                &serde_json::to_string_pretty(
                    &serde_json::json!({ "counts": pairs.changed_histogram() }),
                )?,
            )?;
            files.push(p);
        }
        DataKind::Tracks => {
            let mut cfg: FixtureConfig = load_json(g.config.as_deref())?;
            cfg.tracks = a.tracks;
            cfg.frames_per_track = a.frames;
            cfg.alpha = a.alpha.unwrap_or(cfg.alpha);
            cfg.rate = a.lambda.unwrap_or(cfg.rate);
            let tracks = synth_tracks(&cfg, &mut seeded(seed))?;
            let p = g.out.join("tracks.csv");
            let f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
            write_tracks_csv(&tracks, f)?;
            files.push(p);
        }
    }
    emit(g, &serde_json::json!({ "files": files }), || {
        Ok(files.iter().map(|f| format!("{}\n", f.display())).collect())
    })?;
    Ok(ExitCode::SUCCESS)
}

fn fit_stats(g: &Global, a: &FitStatsArgs) -> Result<ExitCode> {
    let tracks = if a.lenient {
        let parsed = load_tracks_lenient(&a.input)?;
        for e in &parsed.errors {
            eprintln!("warning: {}: {e}", a.input.display());
        }
        parsed.tracks
    } else {
        load_tracks(&a.input)?
    };
    let table = normalize_clip(&compute_transitions(&tracks, a.gap)?)?;
    let report = stats_report(&table)?;
    ensure_dir(&g.out)?;
    write_text(
        &g.out.join("stats.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;
    write_text(&g.out.join("stats.txt"), &report.to_text())?;
    write_text(
        &g.out.join("normalization.json"),
        &serde_json::to_string_pretty(&table.normalization)?,
    )?;
    if !a.no_diagnostic {
        let dep = dependence_diagnostic(&table, &mut seeded(g.seed.unwrap_or(0)))?;
        write_text(
            &g.out.join("dependence.json"),
            &serde_json::to_string_pretty(&dep)?,
        )?;
    }
    match g.format {
        None => out(&report.to_text())?,
        Some(_) => emit(g, &report, || {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["column", "n", "kurtosis", "family", "params", "loglik"])?;
            for c in &report.columns {
                for f in &c.fits {
                    let params = f
                        .params
                        .iter()
                        .map(|v| fmt_exact(*v))
                        .collect::<Vec<_>>()
                        .join(";");
                    w.write_record([
                        c.column.clone(),
                        c.n.to_string(),
                        fmt_exact(c.kurtosis),
                        f.family.name().into(),
                        params,
                        fmt_exact(f.loglik),
                    ])?;
                }
            }
            Ok(
                String::from_utf8(w.into_inner().map_err(|e| Error::Format(e.to_string()))?)
                    .expect("utf-8"),
            )
        })?,
    }
    Ok(ExitCode::SUCCESS)
}

fn train(g: &Global, a: &TrainArgs) -> Result<ExitCode> {
    let mut spec: EstimatorSpec = load_json(g.config.as_deref())?;
    if let Some(e) = a.estimator {
        spec.kind = match e {
            EstimatorArg::Slowflow => EstimatorKind::Slowflow,
            EstimatorArg::Slowvae => EstimatorKind::Slowvae,
            EstimatorArg::Pmvae => EstimatorKind::Pmvae,
            EstimatorArg::Pcl => EstimatorKind::Pcl,
        };
    }
    spec.train.steps = a.steps.unwrap_or(spec.train.steps);
    spec.train.lr = a.lr.unwrap_or(spec.train.lr);
    spec.lambda = a.lambda.unwrap_or(spec.lambda);
    spec.gamma = a.gamma.unwrap_or(spec.gamma);
    spec.train
        .validate()
        .map_err(|e| Error::Config(e.to_string()))?;
    let data = read_pairs(&a.data)?;
    let seed = g.seed.unwrap_or(0);
    let (model, log) = fit_estimator(&spec, &data, seed)?;
    let dir = g.out.join("model");
    let summary = TrainSummary::from_log(&log);
    save_checkpoint(&dir, &model, seed, summary.steps)?;
    write_text(
        &g.out.join("train_log.json"),
        &serde_json::to_string_pretty(&log)?,
    )?;
    let latents = model.encode(&data.prev)?;
    write_matrix(&g.out.join("latents.csv"), &latents, "z")?;
    let out = serde_json::json!({
        "estimator": spec.kind.as_str(),
        "checkpoint": dir,
        "train": summary,
    });
    emit(g, &out, || {
        Ok(format!(
            "estimator,steps,final_loss,wall_clock_s\n{},{},{},{}\n",
            spec.kind.as_str(),
            summary.steps,
            summary.final_loss.map(fmt_exact).unwrap_or_default(),
            fmt_exact(summary.wall_clock_s)
        ))
    })?;
    Ok(ExitCode::SUCCESS)
}

fn eval(g: &Global, a: &EvalArgs) -> Result<ExitCode> {
    let latents = match (&a.latents, &a.model) {
        (Some(p), _) => read_matrix(p)?,
        (None, Some(dir)) => {
            let (model, _) = load_checkpoint(dir)?;
            let data = a.data.as_ref().expect("clap enforces --data");
            let x = if data.extension().is_some_and(|e| e == "csv") {
                read_matrix(data)?
            } else {
                read_pairs(data)?.prev
            };
            model.encode(&x)?
        }
        (None, None) => {
            return Err(Error::Config(
                "eval needs --latents or --model with --data".into(),
            ))
        }
    };
    let factors = read_matrix(&a.factors)?;
    let input = MetricInput::continuous(latents, factors)?;
    let seed = g.seed.unwrap_or(0);
    let mut reports = Vec::new();
    for m in &a.metric {
        reports.push(evaluate(&input, MetricName::parse(m)?, seed, true)?);
    }
    ensure_dir(&g.out)?;
    write_text(
        &g.out.join("metrics.json"),
        &serde_json::to_string_pretty(&reports)?,
    )?;
    emit(g, &reports, || {
        let mut s = String::from("metric_name,score,seed,n_samples\n");
        for r in &reports {
            s += &format!(
                "{},{},{},{}\n",
                r.metric_name,
                fmt_exact(r.score),
                r.seed,
                r.n_samples
            );
        }
        Ok(s)
    })?;
    Ok(ExitCode::SUCCESS)
}

fn run_cmd(g: &Global) -> Result<ExitCode> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("run needs --config <path>".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = g.seed {
        cfg.base_seed = s;
    }
    let out = cfg.output_dir.clone().unwrap_or_else(|| g.out.clone());
    let record = run(&cfg, Some(&out))?;
    for s in record.seeds.iter().filter(|s| s.error.is_some()) {
        eprintln!(
            "seed {} failed: {}",
            s.seed,
            s.error.as_deref().unwrap_or("")
        );
    }
    emit(g, &record, || record.to_csv())?;
    Ok(if record.all_failed() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn apply_common(seeds: &mut usize, base: &mut u64, threads: &mut usize, g: &Global, a: &SweepArgs) {
    if a.smoke {
        *seeds = 2;
    }
    if let Some(n) = a.seeds {
        *seeds = n;
    }
    if let Some(s) = g.seed {
        *base = s;
    }
    if let Some(t) = a.threads {
        *threads = t;
    }
}

fn finish_sweep(g: &Global, rec: &SweepRecord) -> Result<ExitCode> {
    rec.write(&g.out)?;
    emit(g, rec, || rec.to_csv())?;
    Ok(ExitCode::SUCCESS)
}

fn sweep(g: &Global, a: &SweepArgs) -> Result<ExitCode> {
    let cfg_path = g.config.as_deref();
    match a.name {
        SweepName::Table4 => {
            let mut c: sweeps::Table4Sweep = load_json(cfg_path)?;
            apply_common(&mut c.seeds, &mut c.base_seed, &mut c.threads, g, a);
            finish_sweep(g, &sweeps::sweep_table4(&c)?)
        }
        SweepName::Kappa => {
            let mut c: sweeps::KappaSweep = load_json(cfg_path)?;
            apply_common(&mut c.seeds, &mut c.base_seed, &mut c.threads, g, a);
            finish_sweep(g, &sweeps::sweep_kappa(&c)?)
        }
        SweepName::Alpha => {
            let mut c: sweeps::AlphaSweep = load_json(cfg_path)?;
            apply_common(&mut c.seeds, &mut c.base_seed, &mut c.threads, g, a);
            finish_sweep(g, &sweeps::sweep_alpha(&c)?)
        }
        SweepName::Xdim | SweepName::Pmvae => {
            let mut c: sweeps::XdimSweep = match (cfg_path, a.name) {
                (None, SweepName::Pmvae) => sweeps::XdimSweep::pmvae(),
                _ => load_json(cfg_path)?,
            };
            apply_common(&mut c.seeds, &mut c.base_seed, &mut c.threads, g, a);
            let name = if a.name == SweepName::Pmvae {
                "pmvae"
            } else {
                "xdim"
            };
            finish_sweep(g, &sweeps::sweep_xdim(&c, name)?)
        }
        SweepName::LapHistogram => {
            let mut c: sweeps::LapHistogramSweep = load_json(cfg_path)?;
            if let Some(l) = a.lambda {
                c.lambdas = vec![l];
            }
            if let Some(s) = g.seed {
                c.seed = s;
            }
            let rec = sweeps::sweep_lap_histogram(&c)?;
            rec.write(&g.out)?;
            emit(g, &rec, || rec.to_csv())?;
            Ok(ExitCode::SUCCESS)
        }
        SweepName::Gaps => {
            let mut c: sweeps::GapSweep = load_json(cfg_path)?;
            if let Some(p) = &a.input {
                c.input = Some(p.clone());
            }
            let rec = sweeps::sweep_gaps(&c)?;
            rec.write(&g.out)?;
            emit(g, &rec, || rec.to_csv())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn gradcheck(g: &Global) -> Result<ExitCode> {
    let entries = harness::gradcheck_suite()?;
    emit(g, &entries, || {
        let mut s = String::from("loss,stage,coordinates,max_rel_error,passed\n");
        for e in &entries {
            s += &format!(
                "{},{},{},{:e},{}\n",
                e.loss, e.stage, e.coordinates, e.max_rel_error, e.passed
            );
        }
        Ok(s)
    })?;
    Ok(if entries.iter().all(|e| e.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
