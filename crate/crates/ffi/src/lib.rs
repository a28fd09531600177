//! C interface to slowlab.
//!
//! Conventions: every fallible call returns an [`SlStatus`]; on failure the
//! message is kept per thread and read with [`sl_last_error_message`].
//! Handles are opaque, created by `*_new`/`*_generate`/`sl_train_*`/
//! `sl_model_load` and released with the matching `*_free`. Matrices are
//! row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use slowlab::dists::genlap_fit_mle;
use slowlab::error::Error;
use slowlab::estimators::{
    load_checkpoint, save_checkpoint, train_slowflow, train_slowvae, FlowConfig, FlowObjective,
    TrainConfig, TrainedModel, VaeConfig, VaeObjective,
};
use slowlab::gradcore::Tensor;
use slowlab::metrics::{mcc, Correlation, MccOptions, MetricInput};
use slowlab::rng::seeded;
use slowlab::synthgen::{
    mix, random_orthogonal, sample_pairs, ChainMode, MixingStack, PairBatch, SourceChainConfig,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Degenerate = 4,
    Numerical = 5,
    Io = 6,
    Format = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Time-paired samples (`prev`, `next`), each `len x dim`.
pub struct SlPairs {
    inner: PairBatch,
}

/// A trained estimator.
pub struct SlModel {
    inner: TrainedModel,
    latent_dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(err: &Error) -> SlStatus {
    match err {
        Error::InvalidParameter(_) | Error::Config(_) => SlStatus::InvalidArgument,
        Error::ShapeMismatch(_) => SlStatus::ShapeMismatch,
        Error::Degenerate(_) => SlStatus::Degenerate,
        Error::NonFinite { .. }
        | Error::NonFiniteGradient(_)
        | Error::NonScalarLoss(_)
        | Error::KinkTooClose { .. }
        | Error::Diverged { .. } => SlStatus::Numerical,
        Error::Io { .. } => SlStatus::Io,
        Error::Rows { .. } | Error::Format(_) | Error::Json(_) | Error::Csv(_) => SlStatus::Format,
    }
}

struct Fail(SlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SlStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SlStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            SlStatus::Panic
        }
    }
}

unsafe fn matrix_in(
    data: *const f64,
    rows: usize,
    cols: usize,
    what: &str,
) -> Result<Tensor, Fail> {
    if data.is_null() {
        return Err(null(what));
    }
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Fail(SlStatus::InvalidArgument, "size overflow".into()))?;
    let slice = std::slice::from_raw_parts(data, n);
    Ok(Tensor::matrix(rows, cols, slice.to_vec())?)
}

unsafe fn copy_out(t: &Tensor, out: *mut f64, capacity: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if capacity < t.len() {
        return Err(Fail(
            SlStatus::BufferTooSmall,
            format!("need {} values, buffer holds {capacity}", t.len()),
        ));
    }
    ptr::copy_nonoverlapping(t.data().as_ptr(), out, t.len());
    Ok(())
}

unsafe fn path_in(path: *const c_char) -> Result<PathBuf, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Fail(SlStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `capacity > 0`). Returns the full message
/// length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for `capacity` bytes.
#[no_mangle]
pub unsafe extern "C" fn sl_last_error_message(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Samples `count` source pairs: `prev ~ N(0, I)`, `next = prev + eps` with
/// generalized-Laplace `eps` of shape `alpha` and rate `lambda`.
///
/// # Safety
/// `out` must be a valid pointer to writable handle storage.
#[no_mangle]
pub unsafe extern "C" fn sl_pairs_generate(
    dim: usize,
    alpha: f64,
    lambda: f64,
    count: usize,
    seed: u64,
    out: *mut *mut SlPairs,
) -> SlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = SourceChainConfig {
            dim,
            alpha,
            lambda,
            mode: ChainMode::Pair,
            count,
        };
        let inner = sample_pairs(&cfg, &mut seeded(seed))?;
        *out = Box::into_raw(Box::new(SlPairs { inner }));
        Ok(())
    })
}

/// Builds pairs from two `rows x cols` buffers (copied).
///
/// # Safety
/// `prev` and `next` must hold `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_pairs_new(
    prev: *const f64,
    next: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut SlPairs,
) -> SlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = PairBatch::new(
            matrix_in(prev, rows, cols, "prev")?,
            matrix_in(next, rows, cols, "next")?,
        )?;
        *out = Box::into_raw(Box::new(SlPairs { inner }));
        Ok(())
    })
}

/// Applies a random orthogonal mixing (drawn from `seed`) to both slices.
///
/// # Safety
/// `pairs` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_pairs_mix_orthogonal(
    pairs: *const SlPairs,
    seed: u64,
    out: *mut *mut SlPairs,
) -> SlStatus {
    guard(|| {
        let p = pairs.as_ref().ok_or_else(|| null("pairs"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let stack = MixingStack::linear(random_orthogonal(p.inner.dim(), &mut seeded(seed)))?;
        let inner = mix(&p.inner, &stack)?;
        *out = Box::into_raw(Box::new(SlPairs { inner }));
        Ok(())
    })
}

/// Number of pairs, or 0 for a null handle.
///
/// # Safety
/// `pairs` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sl_pairs_len(pairs: *const SlPairs) -> usize {
    pairs.as_ref().map_or(0, |p| p.inner.len())
}

/// Columns per sample, or 0 for a null handle.
///
/// # Safety
/// `pairs` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sl_pairs_dim(pairs: *const SlPairs) -> usize {
    pairs.as_ref().map_or(0, |p| p.inner.dim())
}

/// Copies `prev` and `next` into caller buffers of `capacity` doubles each.
///
/// # Safety
/// `pairs` must be a live handle; the buffers must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn sl_pairs_copy(
    pairs: *const SlPairs,
    prev_out: *mut f64,
    next_out: *mut f64,
    capacity: usize,
) -> SlStatus {
    guard(|| {
        let p = pairs.as_ref().ok_or_else(|| null("pairs"))?;
        copy_out(&p.inner.prev, prev_out, capacity)?;
        copy_out(&p.inner.next, next_out, capacity)
    })
}

/// Releases a pairs handle; null is ignored.
///
/// # Safety
/// `pairs` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sl_pairs_free(pairs: *mut SlPairs) {
    if !pairs.is_null() {
        drop(Box::from_raw(pairs));
    }
}

fn train_config(steps: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        steps,
        lr,
        ..Default::default()
    }
}

/// Trains a linear SlowFlow with Laplace transition rate `lambda`.
///
/// # Safety
/// `pairs` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_train_slowflow(
    pairs: *const SlPairs,
    lambda: f64,
    steps: usize,
    lr: f64,
    seed: u64,
    out: *mut *mut SlModel,
) -> SlStatus {
    guard(|| {
        let p = pairs.as_ref().ok_or_else(|| null("pairs"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let obj = FlowObjective {
            lambda,
            bidirectional: false,
        };
        let (m, _) = train_slowflow(
            &p.inner,
            &FlowConfig::default(),
            &obj,
            &train_config(steps, lr),
            seed,
        )?;
        let latent_dim = m.dim;
        *out = Box::into_raw(Box::new(SlModel {
            inner: TrainedModel::Flow(m),
            latent_dim,
        }));
        Ok(())
    })
}

/// Trains a linear SlowVAE with KL weight `gamma` and transition rate `lambda`.
///
/// # Safety
/// `pairs` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_train_slowvae(
    pairs: *const SlPairs,
    latent_dim: usize,
    gamma: f64,
    lambda: f64,
    steps: usize,
    lr: f64,
    seed: u64,
    out: *mut *mut SlModel,
) -> SlStatus {
    guard(|| {
        let p = pairs.as_ref().ok_or_else(|| null("pairs"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = VaeConfig {
            latent_dim,
            ..Default::default()
        };
        let obj = VaeObjective {
            gamma,
            lambda,
            ..Default::default()
        };
        let (m, _) = train_slowvae(&p.inner, &cfg, &obj, &train_config(steps, lr), seed)?;
        *out = Box::into_raw(Box::new(SlModel {
            inner: TrainedModel::Vae(m),
            latent_dim,
        }));
        Ok(())
    })
}

/// Width of the model's latent codes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sl_model_latent_dim(model: *const SlModel) -> usize {
    model.as_ref().map_or(0, |m| m.latent_dim)
}

/// Encodes `rows x cols` observations into `rows x latent_dim` codes
/// (posterior means for the VAE).
///
/// # Safety
/// `x` must hold `rows * cols` doubles and `out` `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn sl_model_encode(
    model: *const SlModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
    capacity: usize,
) -> SlStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let z = m.inner.encode(&matrix_in(x, rows, cols, "x")?)?;
        copy_out(&z, out, capacity)
    })
}

/// Writes a checkpoint directory.
///
/// # Safety
/// `model` must be a live handle and `dir` a NUL-terminated UTF-8 path.
#[no_mangle]
pub unsafe extern "C" fn sl_model_save(
    model: *const SlModel,
    dir: *const c_char,
    seed: u64,
) -> SlStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        save_checkpoint(&path_in(dir)?, &m.inner, seed, 0)?;
        Ok(())
    })
}

/// Loads a checkpoint directory written by `sl_model_save` or the CLI.
///
/// # Safety
/// `dir` must be a NUL-terminated UTF-8 path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_model_load(dir: *const c_char, out: *mut *mut SlModel) -> SlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (inner, manifest) = load_checkpoint(&path_in(dir)?)?;
        let latent_dim = match &inner {
            TrainedModel::Vae(v) => v.config.latent_dim,
            _ => manifest.dim,
        };
        *out = Box::into_raw(Box::new(SlModel { inner, latent_dim }));
        Ok(())
    })
}

/// Releases a model handle; null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sl_model_free(model: *mut SlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Mean correlation coefficient (0..100) between `rows x latent_cols`
/// latents and `rows x factor_cols` factors; Spearman unless `pearson`.
///
/// # Safety
/// The buffers must hold the stated number of doubles; `score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_mcc(
    latents: *const f64,
    factors: *const f64,
    rows: usize,
    latent_cols: usize,
    factor_cols: usize,
    pearson: bool,
    score: *mut f64,
) -> SlStatus {
    guard(|| {
        if score.is_null() {
            return Err(null("score"));
        }
        let input = MetricInput::continuous(
            matrix_in(latents, rows, latent_cols, "latents")?,
            matrix_in(factors, rows, factor_cols, "factors")?,
        )?;
        let opts = MccOptions {
            correlation: if pearson {
                Correlation::Pearson
            } else {
                Correlation::Spearman
            },
            ..Default::default()
        };
        *score = mcc(&input, &opts)?.score;
        Ok(())
    })
}

/// Maximum-likelihood generalized-Laplace fit of `n` samples.
///
/// # Safety
/// `data` must hold `n` doubles; every output pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_genlap_fit(
    data: *const f64,
    n: usize,
    alpha: *mut f64,
    rate: *mut f64,
    location: *mut f64,
    loglik: *mut f64,
) -> SlStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if alpha.is_null() || rate.is_null() || location.is_null() || loglik.is_null() {
            return Err(null("output"));
        }
        let fit = genlap_fit_mle(std::slice::from_raw_parts(data, n))?;
        *alpha = fit.params.alpha;
        *rate = fit.params.rate;
        *location = fit.params.location;
        *loglik = fit.loglik;
        Ok(())
    })
}
