//! C ABI over the prefrank engine.
//!
//! Handles are opaque pointers created by `pr_*_new` / `pr_*_load` and
//! released with the matching `pr_*_free`. Fallible calls return a
//! [`PrStatus`] and write results through out-pointers; on failure the
//! message is available from [`pr_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use prefrank::eval::{kendall, normalized_mse, spearman};
use prefrank::reward::{pair_loss, pair_loss_deterministic, preference_prob_deterministic, preference_prob_uncertain};
use prefrank::{EmbeddingVector, Error, QuadratureRule, RewardHead, ScoreDistribution, Side};

/// Result codes shared by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    DimensionMismatch = 5,
    Degenerate = 6,
    Panic = 7,
}

/// A loaded reward head.
pub struct PrHead(RewardHead);

/// A quadrature rule of fixed order.
pub struct PrQuadrature(QuadratureRule);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> PrStatus {
    match err {
        Error::Io { .. } => PrStatus::Io,
        Error::Format { .. } | Error::Parse { .. } => PrStatus::Format,
        Error::DimensionMismatch { .. } => PrStatus::DimensionMismatch,
        Error::DegenerateRanking(_) => PrStatus::Degenerate,
        _ => PrStatus::InvalidArgument,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (PrStatus, String)>) -> PrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PrStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PrStatus::Panic
        }
    }
}

fn fail(err: Error) -> (PrStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (PrStatus, String) {
    (PrStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], (PrStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn embedding(ptr: *const f32, len: usize, what: &str) -> Result<EmbeddingVector, (PrStatus, String)> {
    let values = slice(ptr, len, what)?;
    EmbeddingVector::new(values.to_vec()).map_err(fail)
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), (PrStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = value;
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn pr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a `PRNH` checkpoint.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pr_head_load(path: *const c_char, out: *mut *mut PrHead) -> PrStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (PrStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let head = prefrank::io::read_checkpoint(Path::new(path)).map_err(fail)?;
        write(out, Box::into_raw(Box::new(PrHead(head))))
    })
}

/// Embedding dimension the head expects; 0 for a null handle.
///
/// # Safety
/// `head` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pr_head_input_dim(head: *const PrHead) -> usize {
    head.as_ref().map_or(0, |h| h.0.input_dim())
}

/// Scores one embedding.
///
/// # Safety
/// `head` must be a live handle, `embedding` must hold `len` floats, and
/// `mu` / `sigma` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pr_head_forward(
    head: *const PrHead,
    embedding_ptr: *const f32,
    len: usize,
    mu: *mut f64,
    sigma: *mut f64,
) -> PrStatus {
    guard(|| {
        let head = head.as_ref().ok_or_else(|| null("head"))?;
        let e = embedding(embedding_ptr, len, "embedding")?;
        let d = head.0.forward(&e).map_err(fail)?;
        write(mu, d.mu)?;
        write(sigma, d.sigma)
    })
}

/// # Safety
/// `head` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pr_head_free(head: *mut PrHead) {
    if !head.is_null() {
        drop(Box::from_raw(head));
    }
}

/// Builds a quadrature rule of the given order (1 to 200).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pr_quadrature_new(order: usize, out: *mut *mut PrQuadrature) -> PrStatus {
    guard(|| {
        let rule = QuadratureRule::new(order).map_err(fail)?;
        write(out, Box::into_raw(Box::new(PrQuadrature(rule))))
    })
}

/// # Safety
/// `rule` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pr_quadrature_free(rule: *mut PrQuadrature) {
    if !rule.is_null() {
        drop(Box::from_raw(rule));
    }
}

/// `sigmoid(r1 - r2)`.
#[no_mangle]
pub extern "C" fn pr_preference_prob_deterministic(r1: f64, r2: f64) -> f64 {
    preference_prob_deterministic(r1, r2)
}

/// Probability that a score `N(mu1, sigma1)` beats `N(mu2, sigma2)`.
///
/// # Safety
/// `rule` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pr_preference_prob(
    mu1: f64,
    sigma1: f64,
    mu2: f64,
    sigma2: f64,
    rule: *const PrQuadrature,
    out: *mut f64,
) -> PrStatus {
    guard(|| {
        let rule = rule.as_ref().ok_or_else(|| null("rule"))?;
        let d1 = ScoreDistribution::new(mu1, sigma1).map_err(fail)?;
        let d2 = ScoreDistribution::new(mu2, sigma2).map_err(fail)?;
        write(out, preference_prob_uncertain(&d1, &d2, &rule.0))
    })
}

/// Negative log-probability of the observed winner (0 = a, 1 = b). A null
/// `rule` selects the deterministic logistic loss.
///
/// # Safety
/// `head` must be a live handle, `a` and `b` must hold `len` floats each,
/// `rule` must be null or live, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pr_pair_loss(
    head: *const PrHead,
    a: *const f32,
    b: *const f32,
    len: usize,
    winner: u32,
    rule: *const PrQuadrature,
    out: *mut f64,
) -> PrStatus {
    guard(|| {
        let head = head.as_ref().ok_or_else(|| null("head"))?;
        let (ea, eb) = (embedding(a, len, "a")?, embedding(b, len, "b")?);
        let side = match winner {
            0 => Side::A,
            1 => Side::B,
            w => return Err((PrStatus::InvalidArgument, format!("winner must be 0 or 1, got {w}"))),
        };
        let loss = match rule.as_ref() {
            Some(r) => pair_loss(&head.0, &ea, &eb, side, &r.0),
            None => pair_loss_deterministic(&head.0, &ea, &eb, side),
        }
        .map_err(fail)?;
        write(out, loss)
    })
}

type Metric = fn(&[f64], &[f64]) -> prefrank::Result<f64>;

unsafe fn metric(f: Metric, x: *const f64, y: *const f64, n: usize, out: *mut f64) -> PrStatus {
    guard(|| {
        let (x, y) = (slice(x, n, "x")?, slice(y, n, "y")?);
        write(out, f(x, y).map_err(fail)?)
    })
}

/// Spearman's rho with average ranks for ties.
///
/// # Safety
/// `x` and `y` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pr_spearman(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> PrStatus {
    metric(spearman, x, y, n, out)
}

/// Kendall's tau-b.
///
/// # Safety
/// As [`pr_spearman`].
#[no_mangle]
pub unsafe extern "C" fn pr_kendall(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> PrStatus {
    metric(kendall, x, y, n, out)
}

/// Mean squared difference after min-max scaling each side to `[0, 1]`.
///
/// # Safety
/// As [`pr_spearman`].
#[no_mangle]
pub unsafe extern "C" fn pr_normalized_mse(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> PrStatus {
    metric(normalized_mse, x, y, n, out)
}

/// Majority fraction of a vote split.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pr_agreement(votes_a: u32, votes_b: u32, out: *mut f64) -> PrStatus {
    guard(|| {
        let record = prefrank::PreferenceRecord::new("ffi", "ffi", "a", "b", votes_a, votes_b);
        write(out, prefrank::agreement(&record).map_err(fail)?)
    })
}
