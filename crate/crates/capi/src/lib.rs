//! C bindings for the statistical kernels and the score matrix container.
//!
//! Every function is exported with C linkage; the build script runs
//! cbindgen and writes the matching declarations to `include/rubric.h`.
//! Calls never unwind across the boundary: panics are caught and reported
//! as [`RubricStatus::Internal`]. Fallible functions return a status code
//! and leave a human-readable message in thread-local storage, readable
//! through [`rubric_last_error`] until the next call on the same thread.
//!
//! Array arguments are borrowed for the duration of the call only. A null
//! data pointer is accepted when its length is zero and rejected with
//! [`RubricStatus::NullArgument`] otherwise.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use nalgebra::DMatrix;
use rubric_core::scores::ScoreMatrix;
use rubric_core::stats::{
    auroc, bootstrap_kappa_ci, delong_ci, delong_paired, fit_poisson_glmm, rate_ratio_table,
    spearman_rho, weighted_kappa, GlmmOptions,
};
use rubric_core::{Error, ErrorCategory};

/// Result of a C API call. The numeric values match the CLI exit codes
/// where a counterpart exists.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RubricStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Invalid configuration or parameters.
    Config = 2,
    /// Invalid or malformed input data.
    Data = 3,
    /// A model backend failed.
    Backend = 4,
    /// The requested statistic is undefined on this input.
    Degenerate = 5,
    /// An internal invariant failed; the library state is still sound.
    Internal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::default());
}

fn fail(status: RubricStatus, message: &str) -> RubricStatus {
    set_error(message);
    status
}

fn fail_with(e: &Error) -> RubricStatus {
    let status = match e.category() {
        ErrorCategory::Config => RubricStatus::Config,
        ErrorCategory::Data => RubricStatus::Data,
        ErrorCategory::Backend => RubricStatus::Backend,
        ErrorCategory::Degenerate => RubricStatus::Degenerate,
    };
    fail(status, &e.to_string())
}

/// Runs a closure, translating panics into [`RubricStatus::Internal`] so
/// they never unwind into the caller.
fn guarded(f: impl FnOnce() -> RubricStatus) -> RubricStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(RubricStatus::Internal, "internal panic; see stderr for details"),
    }
}

/// Borrows `len` elements at `ptr`, or an empty slice when `len` is zero.
/// Returns None for a null pointer with nonzero length.
unsafe fn borrow<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        return Some(&[]);
    }
    if ptr.is_null() {
        return None;
    }
    Some(std::slice::from_raw_parts(ptr, len))
}

/// Writes through an out pointer, or reports which argument was null.
unsafe fn write_out<T>(ptr: *mut T, value: T, name: &str) -> Result<(), RubricStatus> {
    if ptr.is_null() {
        return Err(fail(RubricStatus::NullArgument, &format!("{name} is null")));
    }
    ptr.write(value);
    Ok(())
}

macro_rules! try_borrow {
    ($ptr:expr, $len:expr, $name:literal) => {
        match borrow($ptr, $len) {
            Some(slice) => slice,
            None => return fail(RubricStatus::NullArgument, concat!($name, " is null")),
        }
    };
}

/// The library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rubric_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The message from the most recent failed call on this thread, or an
/// empty string after a success. The pointer stays valid until the next
/// call into the library from the same thread.
#[no_mangle]
pub extern "C" fn rubric_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Spearman rank correlation of two equal-length samples.
///
/// # Safety
/// `x` and `y` must point to `len` readable doubles; `out` must be a valid
/// destination for one double.
#[no_mangle]
pub unsafe extern "C" fn rubric_spearman(
    x: *const f64,
    y: *const f64,
    len: usize,
    out: *mut f64,
) -> RubricStatus {
    guarded(|| {
        clear_error();
        let x = try_borrow!(x, len, "x");
        let y = try_borrow!(y, len, "y");
        match spearman_rho(x, y) {
            Ok(rho) => match write_out(out, rho, "out") {
                Ok(()) => RubricStatus::Ok,
                Err(status) => status,
            },
            Err(e) => fail_with(&e),
        }
    })
}

/// Quadratic-weighted kappa between two raters scoring on `1..=levels`.
///
/// # Safety
/// `r1` and `r2` must point to `len` readable bytes; `out` must be a valid
/// destination for one double.
#[no_mangle]
pub unsafe extern "C" fn rubric_weighted_kappa(
    r1: *const u8,
    r2: *const u8,
    len: usize,
    levels: u8,
    out: *mut f64,
) -> RubricStatus {
    guarded(|| {
        clear_error();
        let r1 = try_borrow!(r1, len, "r1");
        let r2 = try_borrow!(r2, len, "r2");
        match weighted_kappa(r1, r2, levels) {
            Ok(kappa) => match write_out(out, kappa, "out") {
                Ok(()) => RubricStatus::Ok,
                Err(status) => status,
            },
            Err(e) => fail_with(&e),
        }
    })
}

/// Quadratic-weighted kappa with a seeded item-bootstrap 95% interval.
///
/// # Safety
/// `r1` and `r2` must point to `len` readable bytes; the three out
/// pointers must each be a valid destination for one double.
#[no_mangle]
pub unsafe extern "C" fn rubric_kappa_ci(
    r1: *const u8,
    r2: *const u8,
    len: usize,
    levels: u8,
    resamples: usize,
    seed: u64,
    out_kappa: *mut f64,
    out_low: *mut f64,
    out_high: *mut f64,
) -> RubricStatus {
    guarded(|| {
        clear_error();
        let r1 = try_borrow!(r1, len, "r1");
        let r2 = try_borrow!(r2, len, "r2");
        match bootstrap_kappa_ci(r1, r2, levels, resamples, seed) {
            Ok(estimate) => {
                let writes = unsafe {
                    write_out(out_kappa, estimate.kappa, "out_kappa")
                        .and_then(|()| write_out(out_low, estimate.ci_low, "out_low"))
                        .and_then(|()| write_out(out_high, estimate.ci_high, "out_high"))
                };
                match writes {
                    Ok(()) => RubricStatus::Ok,
                    Err(status) => status,
                }
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// AUROC of `scores` against binary `labels` (0 or 1), ties counted half.
///
/// # Safety
/// `scores` must point to `len` readable doubles and `labels` to `len`
/// readable bytes; `out` must be a valid destination for one double.
#[no_mangle]
pub unsafe extern "C" fn rubric_auroc(
    scores: *const f64,
    labels: *const u8,
    len: usize,
    out: *mut f64,
) -> RubricStatus {
    guarded(|| {
        clear_error();
        let scores = try_borrow!(scores, len, "scores");
        let labels = try_borrow!(labels, len, "labels");
        match auroc(scores, labels) {
            Ok(value) => match write_out(out, value, "out") {
                Ok(()) => RubricStatus::Ok,
                Err(status) => status,
            },
            Err(e) => fail_with(&e),
        }
    })
}

/// AUROC with a DeLong confidence interval at the given `level`
/// (for example 0.95).
///
/// # Safety
/// `scores` must point to `len` readable doubles and `labels` to `len`
/// readable bytes; the three out pointers must each be a valid
/// destination for one double.
#[no_mangle]
pub unsafe extern "C" fn rubric_auroc_ci(
    scores: *const f64,
    labels: *const u8,
    len: usize,
    level: f64,
    out_auroc: *mut f64,
    out_low: *mut f64,
    out_high: *mut f64,
) -> RubricStatus {
    guarded(|| {
        clear_error();
        let scores = try_borrow!(scores, len, "scores");
        let labels = try_borrow!(labels, len, "labels");
        match delong_ci(scores, labels, level) {
            Ok(estimate) => {
                let writes = unsafe {
                    write_out(out_auroc, estimate.auroc, "out_auroc")
                        .and_then(|()| write_out(out_low, estimate.ci_low, "out_low"))
                        .and_then(|()| write_out(out_high, estimate.ci_high, "out_high"))
                };
                match writes {
                    Ok(()) => RubricStatus::Ok,
                    Err(status) => status,
                }
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// DeLong test for the AUROC difference of two score vectors over the
/// same labels. Writes the difference (a minus b), its 95% interval, and
/// the two-sided p-value.
///
/// # Safety
/// `scores_a` and `scores_b` must point to `len` readable doubles and
/// `labels` to `len` readable bytes; the four out pointers must each be a
/// valid destination for one double.
#[no_mangle]
pub unsafe extern "C" fn rubric_delong_paired(
    scores_a: *const f64,
    scores_b: *const f64,
    labels: *const u8,
    len: usize,
    out_delta: *mut f64,
    out_low: *mut f64,
    out_high: *mut f64,
    out_p: *mut f64,
) -> RubricStatus {
    guarded(|| {
        clear_error();
        let scores_a = try_borrow!(scores_a, len, "scores_a");
        let scores_b = try_borrow!(scores_b, len, "scores_b");
        let labels = try_borrow!(labels, len, "labels");
        match delong_paired(scores_a, scores_b, labels) {
            Ok(delta) => {
                let writes = unsafe {
                    write_out(out_delta, delta.delta, "out_delta")
                        .and_then(|()| write_out(out_low, delta.ci_low, "out_low"))
                        .and_then(|()| write_out(out_high, delta.ci_high, "out_high"))
                        .and_then(|()| write_out(out_p, delta.p_value, "out_p"))
                };
                match writes {
                    Ok(()) => RubricStatus::Ok,
                    Err(status) => status,
                }
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Rate ratios with 95% intervals from a Poisson mixed model with one
/// random intercept per group.
///
/// `outcome` holds `n_rows` nonnegative counts, `features` is row-major
/// `n_rows` by `n_features`, and `groups` assigns each row to a group.
/// The three output arrays receive one value per feature. With
/// `standardize`, features are scaled first and ratios are per standard
/// deviation rather than per raw unit.
///
/// # Safety
/// Input pointers must cover the stated extents; the out pointers must
/// each be valid destinations for `n_features` doubles.
#[no_mangle]
pub unsafe extern "C" fn rubric_rate_ratios(
    outcome: *const f64,
    features: *const f64,
    groups: *const usize,
    n_rows: usize,
    n_features: usize,
    standardize: bool,
    out_ratio: *mut f64,
    out_low: *mut f64,
    out_high: *mut f64,
) -> RubricStatus {
    guarded(|| {
        clear_error();
        let outcome = try_borrow!(outcome, n_rows, "outcome");
        let features = try_borrow!(features, n_rows.saturating_mul(n_features), "features");
        let groups = try_borrow!(groups, n_rows, "groups");
        if out_ratio.is_null() || out_low.is_null() || out_high.is_null() {
            return fail(RubricStatus::NullArgument, "an output array is null");
        }
        let design = DMatrix::from_fn(n_rows, n_features, |i, j| features[i * n_features + j]);
        let options = GlmmOptions { standardize, ..GlmmOptions::default() };
        let fit = match fit_poisson_glmm(outcome, &design, groups, &options) {
            Ok(fit) => fit,
            Err(e) => return fail_with(&e),
        };
        let names: Vec<String> = (0..n_features).map(|j| format!("feature{j}")).collect();
        match rate_ratio_table(&fit, &names) {
            Ok(rows) => {
                for (j, row) in rows.iter().enumerate() {
                    unsafe {
                        out_ratio.add(j).write(row.rate_ratio);
                        out_low.add(j).write(row.ci_low);
                        out_high.add(j).write(row.ci_high);
                    }
                }
                RubricStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Opaque handle to a loaded score matrix. Owned by the caller through
/// [`rubric_score_matrix_read_csv`] and released with
/// [`rubric_score_matrix_free`].
pub struct RubricScoreMatrix {
    matrix: ScoreMatrix,
    instance_ids: Vec<CString>,
    dimension_ids: Vec<CString>,
}

/// Loads a score matrix from the CSV layout written by the pipeline (the
/// mask sidecar next to it is honored). On success, writes a heap handle
/// to `out`; release it with [`rubric_score_matrix_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid
/// destination for one pointer.
#[no_mangle]
pub unsafe extern "C" fn rubric_score_matrix_read_csv(
    path: *const c_char,
    out: *mut *mut RubricScoreMatrix,
) -> RubricStatus {
    guarded(|| {
        clear_error();
        if path.is_null() {
            return fail(RubricStatus::NullArgument, "path is null");
        }
        if out.is_null() {
            return fail(RubricStatus::NullArgument, "out is null");
        }
        let Ok(path) = unsafe { CStr::from_ptr(path) }.to_str() else {
            return fail(RubricStatus::Data, "path is not valid UTF-8");
        };
        match ScoreMatrix::read_csv(Path::new(path)) {
            Ok(matrix) => {
                let to_cstrings = |ids: &[String]| {
                    ids.iter()
                        .map(|id| CString::new(id.replace('\0', " ")).unwrap_or_default())
                        .collect()
                };
                let handle = Box::new(RubricScoreMatrix {
                    instance_ids: to_cstrings(matrix.instance_ids()),
                    dimension_ids: to_cstrings(matrix.dimension_ids()),
                    matrix,
                });
                unsafe { out.write(Box::into_raw(handle)) };
                RubricStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Releases a handle from [`rubric_score_matrix_read_csv`]. Null is a
/// no-op.
///
/// # Safety
/// `matrix` must be a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn rubric_score_matrix_free(matrix: *mut RubricScoreMatrix) {
    if !matrix.is_null() {
        drop(unsafe { Box::from_raw(matrix) });
    }
}

/// Number of instance rows, or 0 for a null handle.
///
/// # Safety
/// `matrix` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn rubric_score_matrix_instances(
    matrix: *const RubricScoreMatrix,
) -> usize {
    unsafe { matrix.as_ref() }.map_or(0, |m| m.matrix.n_instances())
}

/// Number of rubric dimension columns, or 0 for a null handle.
///
/// # Safety
/// `matrix` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn rubric_score_matrix_dimensions(
    matrix: *const RubricScoreMatrix,
) -> usize {
    unsafe { matrix.as_ref() }.map_or(0, |m| m.matrix.n_dimensions())
}

/// The score at (`row`, `col`): 1 through 5 when present, 0 when masked,
/// -1 when the handle is null or the position is out of range.
///
/// # Safety
/// `matrix` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn rubric_score_matrix_get(
    matrix: *const RubricScoreMatrix,
    row: usize,
    col: usize,
) -> i32 {
    let Some(handle) = (unsafe { matrix.as_ref() }) else {
        return -1;
    };
    if row >= handle.matrix.n_instances() || col >= handle.matrix.n_dimensions() {
        return -1;
    }
    handle.matrix.get(row, col).map_or(0, i32::from)
}

/// The instance id for a row, or null when out of range. The pointer is
/// owned by the handle and stays valid until the handle is freed.
///
/// # Safety
/// `matrix` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn rubric_score_matrix_instance_id(
    matrix: *const RubricScoreMatrix,
    row: usize,
) -> *const c_char {
    unsafe { matrix.as_ref() }
        .and_then(|m| m.instance_ids.get(row))
        .map_or(std::ptr::null(), |id| id.as_ptr())
}

/// The dimension name for a column, or null when out of range. The
/// pointer is owned by the handle and stays valid until the handle is
/// freed.
///
/// # Safety
/// `matrix` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn rubric_score_matrix_dimension(
    matrix: *const RubricScoreMatrix,
    col: usize,
) -> *const c_char {
    unsafe { matrix.as_ref() }
        .and_then(|m| m.dimension_ids.get(col))
        .map_or(std::ptr::null(), |id| id.as_ptr())
}
