//! C ABI for `hm-galerkin`.
//!
//! Every function returns an [`HmStatus`]; on failure a message is kept per
//! thread and can be fetched with [`hm_last_error_message`]. Objects are
//! handed out as opaque pointers and must be released with the matching
//! `*_free` function.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use hm_galerkin::experiments::{simulate, RunResult};
use hm_galerkin::yudovich::{osgood_test, phi_theta, GrowthFunction, OsgoodVerdict};
use hm_galerkin::{bessel, build_basis, BasisSet, Geometry, HmError, RunConfig};

/// Result codes shared by all entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    Domain = 4,
    Numeric = 5,
    Config = 6,
    Io = 7,
    Format = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmGeometryKind {
    Disk = 0,
    Square = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmGrowthKind {
    /// `θ ≡ 1`.
    Constant = 0,
    /// `θ(p) = ln(1 + p)`.
    Log = 1,
    /// `θ(p) = p^β`.
    Power = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmVerdict {
    Divergent = 0,
    Convergent = 1,
    Inconclusive = 2,
}

/// Opaque eigenbasis handle.
pub struct HmBasis {
    inner: Arc<BasisSet>,
}

/// Opaque handle to a finished run.
pub struct HmRun {
    inner: RunResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &HmError) -> HmStatus {
    match e {
        HmError::Range(_) => HmStatus::OutOfRange,
        HmError::Domain(_) => HmStatus::Domain,
        HmError::Usage(_) => HmStatus::InvalidArgument,
        HmError::Numeric(_) => HmStatus::Numeric,
        HmError::Config(_) => HmStatus::Config,
        HmError::Format { .. } | HmError::Json(_) => HmStatus::Format,
        HmError::Io { .. } => HmStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), HmStatus>) -> HmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HmStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            HmStatus::Panic
        }
    }
}

fn fail(e: HmError) -> HmStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> HmStatus {
    set_error(format!("{what} is null"));
    HmStatus::NullPointer
}

fn growth(kind: HmGrowthKind, beta: f64) -> Result<GrowthFunction, HmStatus> {
    let g = match kind {
        HmGrowthKind::Constant => GrowthFunction::constant(),
        HmGrowthKind::Log => GrowthFunction::Log,
        HmGrowthKind::Power => GrowthFunction::power(beta),
    };
    g.validate().map_err(fail)?;
    Ok(g)
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length
/// without the terminator, or 0 when there is no error.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null (with `len == 0`).
#[no_mangle]
pub unsafe extern "C" fn hm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            // SAFETY: caller guarantees `buf` holds `len` bytes and n < len.
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hm_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// `k`-th positive zero of `J_m` (`k` is 1-based).
///
/// # Safety
/// `out` must point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn hm_bessel_zero(m: u32, k: u32, out: *mut f64) -> HmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let z = bessel::bessel_zero(m, k).map_err(fail)?;
        // SAFETY: checked non-null; caller guarantees validity.
        unsafe { *out = z };
        Ok(())
    })
}

/// Builds the first `n` Dirichlet eigenfunctions on a disk of radius
/// `size` or a square of side `size`.
///
/// # Safety
/// `out` must point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn hm_basis_new(kind: HmGeometryKind, size: f64, n: usize, out: *mut *mut HmBasis) -> HmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let geometry = match kind {
            HmGeometryKind::Disk => Geometry::disk(size),
            HmGeometryKind::Square => Geometry::square(size),
        }
        .map_err(fail)?;
        let basis = build_basis(geometry, n).map_err(fail)?;
        let handle = Box::new(HmBasis { inner: Arc::new(basis) });
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(handle) };
        Ok(())
    })
}

/// Number of modes, 0 for a null handle.
///
/// # Safety
/// `basis` must be null or a live handle from [`hm_basis_new`].
#[no_mangle]
pub unsafe extern "C" fn hm_basis_len(basis: *const HmBasis) -> usize {
    // SAFETY: caller contract.
    unsafe { basis.as_ref() }.map(|b| b.inner.len()).unwrap_or(0)
}

/// Copies the Dirichlet eigenvalues `μ_i` into `out[0..len]`.
///
/// # Safety
/// `basis` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hm_basis_eigenvalues(basis: *const HmBasis, out: *mut f64, len: usize) -> HmStatus {
    guard(|| {
        // SAFETY: caller contract.
        let Some(b) = (unsafe { basis.as_ref() }) else {
            return Err(null("basis"));
        };
        if out.is_null() {
            return Err(null("out"));
        }
        let n = b.inner.len();
        if len < n {
            set_error(format!("buffer holds {len} values, {n} needed"));
            return Err(HmStatus::BufferTooSmall);
        }
        // SAFETY: out holds at least n doubles.
        let dst = unsafe { std::slice::from_raw_parts_mut(out, n) };
        for (d, m) in dst.iter_mut().zip(&b.inner.modes) {
            *d = m.mu;
        }
        Ok(())
    })
}

/// Releases a basis handle; null is ignored.
///
/// # Safety
/// `basis` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hm_basis_free(basis: *mut HmBasis) {
    if !basis.is_null() {
        // SAFETY: handle came from Box::into_raw.
        drop(unsafe { Box::from_raw(basis) });
    }
}

/// `Φ_θ(r)`; `beta` is used by [`HmGrowthKind::Power`] only.
///
/// # Safety
/// `out` must point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn hm_phi_theta(kind: HmGrowthKind, beta: f64, r: f64, out: *mut f64) -> HmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !(r >= 0.0) {
            set_error(format!("r must be non-negative, got {r}"));
            return Err(HmStatus::InvalidArgument);
        }
        let g = growth(kind, beta)?;
        // SAFETY: checked non-null.
        unsafe { *out = phi_theta(&g, r) };
        Ok(())
    })
}

/// Osgood divergence verdict for a growth function.
///
/// # Safety
/// `out` must point to writable memory for one [`HmVerdict`].
#[no_mangle]
pub unsafe extern "C" fn hm_osgood_verdict(kind: HmGrowthKind, beta: f64, out: *mut HmVerdict) -> HmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let report = osgood_test(&growth(kind, beta)?).map_err(fail)?;
        let v = match report.verdict {
            OsgoodVerdict::Divergent => HmVerdict::Divergent,
            OsgoodVerdict::Convergent => HmVerdict::Convergent,
            OsgoodVerdict::Inconclusive => HmVerdict::Inconclusive,
        };
        // SAFETY: checked non-null.
        unsafe { *out = v };
        Ok(())
    })
}

/// Runs the configuration file at `config_path` in memory (no output
/// files are written).
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` must point to
/// writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn hm_run_config_file(config_path: *const c_char, out: *mut *mut HmRun) -> HmStatus {
    guard(|| {
        if config_path.is_null() {
            return Err(null("config_path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: caller guarantees a NUL-terminated string.
        let path = unsafe { CStr::from_ptr(config_path) }.to_str().map_err(|_| {
            set_error("config path is not UTF-8".into());
            HmStatus::InvalidArgument
        })?;
        let cfg = RunConfig::from_file(Path::new(path)).map_err(fail)?;
        let result = simulate(&cfg).map_err(fail)?;
        if let Some(msg) = &result.trajectory.aborted {
            set_error(msg.clone());
            return Err(HmStatus::Numeric);
        }
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(HmRun { inner: result })) };
        Ok(())
    })
}

/// Number of modes of a run, 0 for null.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hm_run_len(run: *const HmRun) -> usize {
    // SAFETY: caller contract.
    unsafe { run.as_ref() }.map(|r| r.inner.terminal().len()).unwrap_or(0)
}

/// Terminal time and coefficients of a run; `coeffs` must hold
/// [`hm_run_len`] doubles.
///
/// # Safety
/// `run` must be a live handle; `time` one double; `coeffs` `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hm_run_terminal_state(
    run: *const HmRun,
    time: *mut f64,
    coeffs: *mut f64,
    len: usize,
) -> HmStatus {
    guard(|| {
        // SAFETY: caller contract.
        let Some(r) = (unsafe { run.as_ref() }) else {
            return Err(null("run"));
        };
        if time.is_null() || coeffs.is_null() {
            return Err(null("output buffer"));
        }
        let s = r.inner.terminal();
        if len < s.len() {
            set_error(format!("buffer holds {len} values, {} needed", s.len()));
            return Err(HmStatus::BufferTooSmall);
        }
        // SAFETY: checked sizes and non-null pointers.
        unsafe {
            *time = s.time;
            ptr::copy_nonoverlapping(s.coeffs.as_ptr(), coeffs, s.len());
        }
        Ok(())
    })
}

/// `‖φ‖_V²` of the terminal state.
///
/// # Safety
/// `run` must be a live handle; `out` one double.
#[no_mangle]
pub unsafe extern "C" fn hm_run_terminal_norm_v2(run: *const HmRun, out: *mut f64) -> HmStatus {
    guard(|| {
        // SAFETY: caller contract.
        let Some(r) = (unsafe { run.as_ref() }) else {
            return Err(null("run"));
        };
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: checked non-null.
        unsafe { *out = r.inner.terminal().norm_v2() };
        Ok(())
    })
}

/// Releases a run handle; null is ignored.
///
/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hm_run_free(run: *mut HmRun) {
    if !run.is_null() {
        // SAFETY: handle came from Box::into_raw.
        drop(unsafe { Box::from_raw(run) });
    }
}
