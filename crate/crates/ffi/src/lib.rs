//! C ABI for the marginal toolkit. Handles are opaque pointers owned by the
//! caller and released with the matching `_free`; every function returns a
//! status code and writes results through out-pointers. String messages for
//! the most recent failure on the calling thread are available through
//! `mrg_last_error`.

use marginal::disorder::{DisorderField, DisorderLaw, EtaParams, FieldMode};
use marginal::kernels::{
    beta_schedule, block_boundaries, build_kernel, overlap_table, triple_norm_zeta,
    LatticeKernel, ModelKind, OverlapTable, SpaceTime,
};
use marginal::limits::{cov_limit, sigma_sq};
use marginal::partition::{cross_moment_exact, pinning_z_all_starts, second_moment_exact};
use marginal::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrgStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    Sizing = 4,
    Truncation = 5,
    Infeasible = 6,
    BlowUp = 7,
    Unsupported = 8,
    Io = 9,
    BufferTooSmall = 10,
    Internal = 11,
}

/// Opaque kernel table handle.
pub struct MrgKernel {
    inner: LatticeKernel,
}

/// Opaque overlap table handle.
pub struct MrgOverlap {
    inner: OverlapTable,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn remember(msg: String) {
    let c = CString::new(msg).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn fail(e: &Error) -> MrgStatus {
    remember(e.to_string());
    match e {
        Error::Sizing { .. } => MrgStatus::Sizing,
        Error::Truncation { .. } => MrgStatus::Truncation,
        Error::Range { .. } => MrgStatus::OutOfRange,
        Error::InfeasiblePartition { .. } => MrgStatus::Infeasible,
        Error::L2BlowUp { .. } => MrgStatus::BlowUp,
        Error::Unsupported(_) => MrgStatus::Unsupported,
        Error::Io(_) | Error::Cache(_) => MrgStatus::Io,
        Error::Domain(_) | Error::Config(_) => MrgStatus::InvalidArgument,
        _ => MrgStatus::Internal,
    }
}

fn guarded(body: impl FnOnce() -> MrgStatus + std::panic::UnwindSafe) -> MrgStatus {
    match catch_unwind(body) {
        Ok(status) => status,
        Err(_) => {
            remember("internal panic".into());
            MrgStatus::Internal
        }
    }
}

/// Version of the library, as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mrg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the most recent error message on this thread into `buf` (truncated
/// to `cap` bytes including the terminator). Returns the full message
/// length, not counting the terminator.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null (length query).
#[no_mangle]
pub unsafe extern "C" fn mrg_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len() - 1
    })
}

fn model_from_tag(tag: u8) -> Option<ModelKind> {
    ModelKind::from_tag(tag)
}

/// Build a kernel table. Model tags: 0 = 2d simple walk, 1 = long-range
/// walk on Z, 2 = renewal (pinning).
///
/// # Safety
/// `out` must be a valid pointer; on `Ok` it receives an owned handle that
/// must be released with `mrg_kernel_free`.
#[no_mangle]
pub unsafe extern "C" fn mrg_kernel_build(
    model_tag: u8,
    n_max: u64,
    tail_tol: f64,
    out: *mut *mut MrgKernel,
) -> MrgStatus {
    if out.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(|| {
        let Some(model) = model_from_tag(model_tag) else {
            remember(format!("unknown model tag {model_tag}"));
            return MrgStatus::InvalidArgument;
        };
        match build_kernel(model, n_max as usize, tail_tol) {
            Ok(k) => {
                *out = Box::into_raw(Box::new(MrgKernel { inner: k }));
                MrgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    }))
}

/// Load a kernel from its binary cache file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` as in `mrg_kernel_build`.
#[no_mangle]
pub unsafe extern "C" fn mrg_kernel_load(path: *const c_char, out: *mut *mut MrgKernel) -> MrgStatus {
    if path.is_null() || out.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(|| {
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            remember("path is not valid UTF-8".into());
            return MrgStatus::InvalidArgument;
        };
        match LatticeKernel::read_cache(&PathBuf::from(path)) {
            Ok(k) => {
                *out = Box::into_raw(Box::new(MrgKernel { inner: k }));
                MrgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    }))
}

/// Write a kernel to its binary cache file.
///
/// # Safety
/// `kernel` must be a live handle, `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mrg_kernel_save(
    kernel: *const MrgKernel,
    path: *const c_char,
) -> MrgStatus {
    if kernel.is_null() || path.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(|| {
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            remember("path is not valid UTF-8".into());
            return MrgStatus::InvalidArgument;
        };
        match (*kernel).inner.write_cache(&PathBuf::from(path)) {
            Ok(()) => MrgStatus::Ok,
            Err(e) => fail(&e),
        }
    }))
}

/// # Safety
/// `kernel` must be a handle from this library, or null (no-op).
#[no_mangle]
pub unsafe extern "C" fn mrg_kernel_free(kernel: *mut MrgKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// # Safety
/// `kernel` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mrg_kernel_n_max(kernel: *const MrgKernel) -> u64 {
    if kernel.is_null() {
        return 0;
    }
    (*kernel).inner.n_max() as u64
}

/// n-step mass q_n(x); for the renewal model the coordinates are ignored.
///
/// # Safety
/// `kernel` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrg_kernel_mass(
    kernel: *const MrgKernel,
    n: u64,
    x0: i64,
    x1: i64,
    out: *mut f64,
) -> MrgStatus {
    if kernel.is_null() || out.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(|| {
        let k = &(*kernel).inner;
        if n as usize > k.n_max() {
            remember(format!("n = {n} beyond horizon {}", k.n_max()));
            return MrgStatus::OutOfRange;
        }
        *out = k.mass(n as usize, [x0, x1]);
        MrgStatus::Ok
    }))
}

/// Mass outside the retained window at step n.
///
/// # Safety
/// `kernel` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrg_kernel_tail_mass(
    kernel: *const MrgKernel,
    n: u64,
    out: *mut f64,
) -> MrgStatus {
    if kernel.is_null() || out.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(|| {
        let k = &(*kernel).inner;
        if n as usize > k.n_max() {
            return MrgStatus::OutOfRange;
        }
        *out = k.tail_mass(n as usize);
        MrgStatus::Ok
    }))
}

/// Build the replica-overlap table of a kernel.
///
/// # Safety
/// `kernel` must be a live handle; `out` receives an owned handle to free
/// with `mrg_overlap_free`.
#[no_mangle]
pub unsafe extern "C" fn mrg_overlap_build(
    kernel: *const MrgKernel,
    out: *mut *mut MrgOverlap,
) -> MrgStatus {
    if kernel.is_null() || out.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(|| {
        let table = overlap_table(&(*kernel).inner);
        *out = Box::into_raw(Box::new(MrgOverlap { inner: table }));
        MrgStatus::Ok
    }))
}

/// # Safety
/// `overlap` must be a handle from this library, or null (no-op).
#[no_mangle]
pub unsafe extern "C" fn mrg_overlap_free(overlap: *mut MrgOverlap) {
    if !overlap.is_null() {
        drop(Box::from_raw(overlap));
    }
}

/// Per-step overlap r_n.
///
/// # Safety
/// `overlap` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrg_overlap_r(
    overlap: *const MrgOverlap,
    n: u64,
    out: *mut f64,
) -> MrgStatus {
    if overlap.is_null() || out.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(|| {
        let t = &(*overlap).inner;
        if n as usize > t.n_max() || n == 0 {
            return MrgStatus::OutOfRange;
        }
        *out = t.r(n as usize);
        MrgStatus::Ok
    }))
}

/// Prefix sum R_n.
///
/// # Safety
/// `overlap` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrg_overlap_total(
    overlap: *const MrgOverlap,
    n: u64,
    out: *mut f64,
) -> MrgStatus {
    if overlap.is_null() || out.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(|| match (*overlap).inner.total(n as usize) {
        Ok(v) => {
            *out = v;
            MrgStatus::Ok
        }
        Err(e) => fail(&e),
    }))
}

/// beta_N = beta_hat / sqrt(R_N).
///
/// # Safety
/// `overlap` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrg_beta_schedule(
    overlap: *const MrgOverlap,
    n: u64,
    beta_hat: f64,
    out: *mut f64,
) -> MrgStatus {
    if overlap.is_null() || out.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(
        || match beta_schedule(&(*overlap).inner, n as usize, beta_hat) {
            Ok(v) => {
                *out = v;
                MrgStatus::Ok
            }
            Err(e) => fail(&e),
        },
    ))
}

/// Equal-overlap block boundaries t_0 = 0 < t_1 <= ... <= t_M = N, written
/// as M + 1 values into `out`.
///
/// # Safety
/// `overlap` must be a live handle; `out` must point to `out_len` writable
/// u64 slots.
#[no_mangle]
pub unsafe extern "C" fn mrg_block_boundaries(
    overlap: *const MrgOverlap,
    n: u64,
    m: u64,
    out: *mut u64,
    out_len: usize,
) -> MrgStatus {
    if overlap.is_null() || out.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(|| {
        if out_len < (m as usize) + 1 {
            remember(format!("need {} slots, got {out_len}", m + 1));
            return MrgStatus::BufferTooSmall;
        }
        match block_boundaries(&(*overlap).inner, n as usize, m as usize) {
            Ok(p) => {
                for (i, b) in p.boundaries.iter().enumerate() {
                    *out.add(i) = *b as u64;
                }
                MrgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    }))
}

/// Scale separation of two space-time points: |||X - X'||| and the overlap
/// fraction zeta = R_{|||X - X'|||} / R_N.
///
/// # Safety
/// `overlap` must be a live handle; `out_norm` and `out_zeta` valid pointers.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn mrg_triple_norm_zeta(
    overlap: *const MrgOverlap,
    n: u64,
    ax0: i64,
    ax1: i64,
    at: u64,
    bx0: i64,
    bx1: i64,
    bt: u64,
    out_norm: *mut u64,
    out_zeta: *mut f64,
) -> MrgStatus {
    if overlap.is_null() || out_norm.is_null() || out_zeta.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(|| {
        let a = SpaceTime {
            x: [ax0, ax1],
            t: at as usize,
        };
        let b = SpaceTime {
            x: [bx0, bx1],
            t: bt as usize,
        };
        match triple_norm_zeta(&(*overlap).inner, n as usize, a, b) {
            Ok((norm, zeta)) => {
                *out_norm = norm as u64;
                *out_zeta = zeta;
                MrgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    }))
}

/// Exact E[Z^2] from the overlap-chain recursion, with disorder strength
/// `beta` and eta-variance `var_eta` (pass 1 for the unit normalization).
///
/// # Safety
/// `overlap` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrg_second_moment_exact(
    overlap: *const MrgOverlap,
    beta: f64,
    var_eta: f64,
    n: u64,
    out: *mut f64,
) -> MrgStatus {
    if overlap.is_null() || out.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(|| {
        let eta = EtaParams {
            beta,
            lambda_beta: 0.0,
            var_eta,
        };
        match second_moment_exact(&(*overlap).inner, &eta, n as usize) {
            Ok(v) => {
                *out = v;
                MrgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    }))
}

/// Exact E[Z(X) Z(X')] for two starting points.
///
/// # Safety
/// `kernel` and `overlap` must be live handles over the same model; `out`
/// must be a valid pointer.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn mrg_cross_moment_exact(
    kernel: *const MrgKernel,
    overlap: *const MrgOverlap,
    beta: f64,
    var_eta: f64,
    n: u64,
    ax0: i64,
    ax1: i64,
    at: u64,
    bx0: i64,
    bx1: i64,
    bt: u64,
    out: *mut f64,
) -> MrgStatus {
    if kernel.is_null() || overlap.is_null() || out.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(|| {
        let eta = EtaParams {
            beta,
            lambda_beta: 0.0,
            var_eta,
        };
        let a = SpaceTime {
            x: [ax0, ax1],
            t: at as usize,
        };
        let b = SpaceTime {
            x: [bx0, bx1],
            t: bt as usize,
        };
        match cross_moment_exact(&(*kernel).inner, &(*overlap).inner, &eta, n as usize, a, b) {
            Ok(v) => {
                *out = v;
                MrgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    }))
}

/// sigma^2 of the weak-disorder log-normal limit.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrg_sigma_sq(beta_hat: f64, out: *mut f64) -> MrgStatus {
    if out.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(|| match sigma_sq(beta_hat) {
        Ok(v) => {
            *out = v;
            MrgStatus::Ok
        }
        Err(e) => fail(&e),
    }))
}

/// Limiting covariance of log partition functions at scale separation zeta.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrg_cov_limit(beta_hat: f64, zeta: f64, out: *mut f64) -> MrgStatus {
    if out.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(|| match cov_limit(beta_hat, zeta) {
        Ok(v) => {
            *out = v;
            MrgStatus::Ok
        }
        Err(e) => fail(&e),
    }))
}

/// Noise-strength schedule beta_eps of the regularized 2d heat equation.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrg_beta_eps(eps: f64, beta_hat: f64, out: *mut f64) -> MrgStatus {
    if out.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(|| match marginal::she::beta_eps(eps, beta_hat) {
        Ok(v) => {
            *out = v;
            MrgStatus::Ok
        }
        Err(e) => fail(&e),
    }))
}

/// One pinning partition function Z(start) under the seeded disorder field
/// (law tags: 0 Gaussian, 1 Rademacher, 2 direct standard-Gaussian eta).
///
/// # Safety
/// `kernel` must be a live renewal-model handle and `out` a valid pointer.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn mrg_pinning_partition(
    kernel: *const MrgKernel,
    n: u64,
    beta: f64,
    seed: u64,
    realization: u64,
    law_tag: u8,
    start: u64,
    out: *mut f64,
) -> MrgStatus {
    if kernel.is_null() || out.is_null() {
        return MrgStatus::NullArgument;
    }
    guarded(AssertUnwindSafe(|| {
        let (mode, eta) = match law_tag {
            0 => (
                FieldMode::Omega(DisorderLaw::Gaussian),
                EtaParams::for_law(DisorderLaw::Gaussian, beta),
            ),
            1 => (
                FieldMode::Omega(DisorderLaw::Rademacher),
                EtaParams::for_law(DisorderLaw::Rademacher, beta),
            ),
            2 => (FieldMode::DirectEta, EtaParams::direct(beta)),
            other => {
                remember(format!("unknown law tag {other}"));
                return MrgStatus::InvalidArgument;
            }
        };
        let field = DisorderField::new(seed, realization, mode);
        match pinning_z_all_starts(&(*kernel).inner, &field, &eta, n as usize) {
            Ok(surface) => {
                if start as usize > n as usize {
                    return MrgStatus::OutOfRange;
                }
                *out = surface.scalar()[start as usize];
                MrgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    }))
}
