//! C ABI over the termcov estimators.
//!
//! Every fallible function returns a [`TcStatus`]; on failure the message is
//! kept per thread and can be read with [`tc_last_error_message`]. Objects are
//! opaque handles released with their `_free` function. Matrices cross the
//! boundary row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use termcov::covariation::{truncated_covariation, CovariationResult};
use termcov::curve_panel::{difference_returns, yields_to_log_prices, DifferenceReturnPanel, GridSpec, LogBondPanel, YieldPanel};
use termcov::kernel_space::{eigendecompose, explained_dimension, hs_norm, relative_error, StepKernel};
use termcov::truncation::{build_rule, RuleOptions, TruncationSpec};
use termcov::Error;

/// Status codes; 2, 3 and 4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Data = 3,
    Numerical = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Which part of a covariation result to extract.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcKernelPart {
    /// All increments.
    Total = 0,
    /// Increments below the threshold.
    Truncated = 1,
    /// Flagged increments.
    Jumps = 2,
}

/// Difference-return panel.
pub struct TcPanel {
    inner: DifferenceReturnPanel,
}

/// Truncation rule.
pub struct TcRule {
    inner: TruncationSpec,
}

/// Result of a truncated covariation.
pub struct TcCovariation {
    inner: CovariationResult,
}

/// Piecewise-constant covariance kernel.
pub struct TcKernel {
    inner: StepKernel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TcStatus {
    match e.exit_code() {
        2 => TcStatus::Config,
        4 => TcStatus::Numerical,
        _ => TcStatus::Data,
    }
}

fn guard<F>(f: F) -> TcStatus
where
    F: FnOnce() -> Result<(), TcStatus>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TcStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".to_string());
            TcStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, TcStatus>;
}

impl<T> OrStatus<T> for termcov::Result<T> {
    fn or_status(self) -> Result<T, TcStatus> {
        self.map_err(|e| {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        })
    }
}

fn null_error(what: &str) -> TcStatus {
    set_error(format!("null pointer: {what}"));
    TcStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, TcStatus> {
    p.as_ref().ok_or_else(|| null_error(what))
}

unsafe fn read_matrix(values: *const f64, rows: usize, cols: usize) -> Result<DMatrix<f64>, TcStatus> {
    if values.is_null() {
        return Err(null_error("values"));
    }
    let len = rows.checked_mul(cols).ok_or_else(|| {
        set_error("matrix size overflows".into());
        TcStatus::Config
    })?;
    let slice = std::slice::from_raw_parts(values, len);
    Ok(DMatrix::from_row_slice(rows, cols, slice))
}

fn store<T>(out: *mut *mut T, value: T) -> Result<(), TcStatus> {
    if out.is_null() {
        return Err(null_error("out"));
    }
    // SAFETY: checked non-null; the caller provides a writable slot.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

unsafe fn write_slice(src: &[f64], out: *mut f64, capacity: usize) -> Result<(), TcStatus> {
    if out.is_null() {
        return Err(null_error("out"));
    }
    if capacity < src.len() {
        set_error(format!("buffer holds {capacity} values, need {}", src.len()));
        return Err(TcStatus::BufferTooSmall);
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

unsafe fn write_scalar<T>(out: *mut T, v: T) -> Result<(), TcStatus> {
    if out.is_null() {
        return Err(null_error("out"));
    }
    *out = v;
    Ok(())
}

fn grid_for(rows: usize, cols: usize, delta_n: f64) -> termcov::Result<GridSpec> {
    let m = cols.saturating_sub(1) as f64;
    let t = rows.saturating_sub(1) as f64;
    GridSpec::new(delta_n, m * delta_n, t * delta_n)
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL, or
/// 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Difference returns of a `n_dates × n_maturities` row-major panel of log
/// bond prices on the maturities `0, Δn, …`.
///
/// # Safety
/// `log_prices` must point to `n_dates * n_maturities` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_panel_from_log_prices(
    log_prices: *const f64,
    n_dates: usize,
    n_maturities: usize,
    delta_n: f64,
    out: *mut *mut TcPanel,
) -> TcStatus {
    guard(|| {
        let m = read_matrix(log_prices, n_dates, n_maturities)?;
        let grid = grid_for(n_dates, n_maturities, delta_n).or_status()?;
        let p = LogBondPanel::new(grid, m).or_status()?;
        let d = difference_returns(&p).or_status()?;
        store(out, TcPanel { inner: d })
    })
}

/// As [`tc_panel_from_log_prices`] for continuously compounded yields.
///
/// # Safety
/// `yields` must point to `n_dates * n_maturities` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_panel_from_yields(
    yields: *const f64,
    n_dates: usize,
    n_maturities: usize,
    delta_n: f64,
    out: *mut *mut TcPanel,
) -> TcStatus {
    guard(|| {
        let m = read_matrix(yields, n_dates, n_maturities)?;
        let grid = grid_for(n_dates, n_maturities, delta_n).or_status()?;
        let y = YieldPanel::new(grid, m).or_status()?;
        let p = yields_to_log_prices(&y).or_status()?;
        let d = difference_returns(&p).or_status()?;
        store(out, TcPanel { inner: d })
    })
}

/// # Safety
/// `panel` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tc_panel_free(panel: *mut TcPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Number of difference-return rows, 0 for a null handle.
///
/// # Safety
/// `panel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tc_panel_rows(panel: *const TcPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.inner.n_rows())
}

/// Number of maturity cells per row, 0 for a null handle.
///
/// # Safety
/// `panel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tc_panel_cols(panel: *const TcPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.inner.n_cols())
}

/// Data-driven truncation rule with multiplier `l` and default options
/// (`l = INFINITY` disables truncation but still reports the calibration).
///
/// # Safety
/// `panel` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_rule_build(panel: *const TcPanel, l: f64, out: *mut *mut TcRule) -> TcStatus {
    guard(|| {
        let p = deref(panel, "panel")?;
        let spec = build_rule(&p.inner, l, RuleOptions::default()).or_status()?;
        store(out, TcRule { inner: spec })
    })
}

/// Rule with the plain `l²` truncation function and threshold `u_n`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_rule_l2(u_n: f64, out: *mut *mut TcRule) -> TcStatus {
    guard(|| {
        let spec = TruncationSpec::l2(u_n);
        spec.validate().or_status()?;
        store(out, TcRule { inner: spec })
    })
}

/// # Safety
/// `rule` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tc_rule_free(rule: *mut TcRule) {
    if !rule.is_null() {
        drop(Box::from_raw(rule));
    }
}

/// Threshold `u_n`, NaN for a null handle.
///
/// # Safety
/// `rule` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tc_rule_threshold(rule: *const TcRule) -> f64 {
    rule.as_ref().map_or(f64::NAN, |r| r.inner.u_n)
}

/// Dimension of the Mahalanobis functional, 0 for the `l²` functional or a null handle.
///
/// # Safety
/// `rule` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tc_rule_dimension(rule: *const TcRule) -> usize {
    rule.as_ref()
        .and_then(|r| match &r.inner.g_kind {
            termcov::truncation::GKind::Mahalanobis(m) => Some(m.d),
            termcov::truncation::GKind::L2Norm => None,
        })
        .unwrap_or(0)
}

/// Truncated covariation over all rows; a null `rule` disables truncation.
///
/// # Safety
/// `panel` must be a live handle, `rule` null or live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tc_covariation(
    panel: *const TcPanel,
    rule: *const TcRule,
    out: *mut *mut TcCovariation,
) -> TcStatus {
    guard(|| {
        let p = deref(panel, "panel")?;
        let spec = match rule.as_ref() {
            Some(r) => r.inner.clone(),
            None => TruncationSpec::no_truncation(),
        };
        let res = truncated_covariation(&p.inner, &spec, 0..p.inner.n_rows()).or_status()?;
        store(out, TcCovariation { inner: res })
    })
}

/// # Safety
/// `cov` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tc_covariation_free(cov: *mut TcCovariation) {
    if !cov.is_null() {
        drop(Box::from_raw(cov));
    }
}

/// Number of flagged increments, 0 for a null handle.
///
/// # Safety
/// `cov` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tc_covariation_flag_count(cov: *const TcCovariation) -> usize {
    cov.as_ref().map_or(0, |c| c.inner.flagged_increments.len())
}

/// Writes the flagged row indices into `out` (capacity `len`).
///
/// # Safety
/// `cov` must be a live handle; `out` must point to `len` writable `size_t`s.
#[no_mangle]
pub unsafe extern "C" fn tc_covariation_flags(cov: *const TcCovariation, out: *mut usize, len: usize) -> TcStatus {
    guard(|| {
        let c = deref(cov, "covariation")?;
        let flags = &c.inner.flagged_increments;
        if out.is_null() {
            return Err(null_error("out"));
        }
        if len < flags.len() {
            set_error(format!("buffer holds {len} indices, need {}", flags.len()));
            return Err(TcStatus::BufferTooSmall);
        }
        ptr::copy_nonoverlapping(flags.as_ptr(), out, flags.len());
        Ok(())
    })
}

/// `‖q̂⁻‖ / ‖q̂‖`, NaN for a null handle.
///
/// # Safety
/// `cov` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tc_covariation_norm_ratio(cov: *const TcCovariation) -> f64 {
    cov.as_ref().map_or(f64::NAN, |c| c.inner.norm_ratio())
}

/// Copies one kernel of the result into a new handle.
///
/// # Safety
/// `cov` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_covariation_kernel(
    cov: *const TcCovariation,
    part: TcKernelPart,
    out: *mut *mut TcKernel,
) -> TcStatus {
    guard(|| {
        let c = deref(cov, "covariation")?;
        let k = match part {
            TcKernelPart::Total => &c.inner.kernel,
            TcKernelPart::Truncated => &c.inner.truncated_kernel,
            TcKernelPart::Jumps => &c.inner.jump_kernel,
        };
        store(out, TcKernel { inner: k.clone() })
    })
}

/// Kernel from a symmetric `m_cells × m_cells` row-major value matrix.
///
/// # Safety
/// `values` must point to `m_cells²` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_kernel_new(
    values: *const f64,
    m_cells: usize,
    delta_n: f64,
    out: *mut *mut TcKernel,
) -> TcStatus {
    guard(|| {
        let m = read_matrix(values, m_cells, m_cells)?;
        let k = StepKernel::new(delta_n, m).or_status()?;
        store(out, TcKernel { inner: k })
    })
}

/// # Safety
/// `kernel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tc_kernel_free(kernel: *mut TcKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Number of maturity cells, 0 for a null handle.
///
/// # Safety
/// `kernel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tc_kernel_cells(kernel: *const TcKernel) -> usize {
    kernel.as_ref().map_or(0, |k| k.inner.m_cells())
}

/// Copies the row-major value matrix into `out` (capacity `len`).
///
/// # Safety
/// `kernel` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tc_kernel_values(kernel: *const TcKernel, out: *mut f64, len: usize) -> TcStatus {
    guard(|| {
        let k = deref(kernel, "kernel")?;
        let v = k.inner.values().transpose();
        write_slice(v.as_slice(), out, len)
    })
}

/// Hilbert–Schmidt norm, NaN for a null handle.
///
/// # Safety
/// `kernel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tc_kernel_hs_norm(kernel: *const TcKernel) -> f64 {
    kernel.as_ref().map_or(f64::NAN, |k| hs_norm(&k.inner))
}

/// Descending operator eigenvalues, `m_cells` of them.
///
/// # Safety
/// `kernel` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tc_kernel_eigenvalues(kernel: *const TcKernel, out: *mut f64, len: usize) -> TcStatus {
    guard(|| {
        let k = deref(kernel, "kernel")?;
        write_slice(&eigendecompose(&k.inner).eigenvalues, out, len)
    })
}

/// Smallest number of eigenfunctions explaining more than a fraction `p` of the trace.
///
/// # Safety
/// `kernel` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_kernel_explained_dimension(kernel: *const TcKernel, p: f64, out: *mut usize) -> TcStatus {
    guard(|| {
        let k = deref(kernel, "kernel")?;
        let d = explained_dimension(&k.inner, None, p).or_status()?;
        write_scalar(out, d)
    })
}

/// `‖k1 − k2‖ / ‖k2‖`.
///
/// # Safety
/// Both kernels must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_kernel_relative_error(k1: *const TcKernel, k2: *const TcKernel, out: *mut f64) -> TcStatus {
    guard(|| {
        let a = deref(k1, "k1")?;
        let b = deref(k2, "k2")?;
        let r = relative_error(&a.inner, &b.inner).or_status()?;
        write_scalar(out, r)
    })
}
