//! C ABI over the disclab core: status codes, an opaque matrix handle and
//! scalar entry points. Every function returns a `DisclabStatus`; results go
//! through out-pointers. The message of the last failure on the calling
//! thread is available from `disclab_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use disclab::matrix::{eigenvalues, op_norm, sample_goe, SymMatrix};
use disclab::moments::{exact_instance, laplace_sum};
use disclab::phase::{classify, rate_opnorm, tau1, tau2, tau_f, Margin, Region};
use disclab::rng::RngStream;
use disclab::spectra::rho_kappa;
use disclab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisclabStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Convergence = 3,
    Budget = 4,
    ZeroHit = 5,
    ChainNonConvergence = 6,
    NotFinite = 7,
    DimensionMismatch = 8,
    BufferTooSmall = 9,
    Internal = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisclabRegion {
    Unsat = 0,
    Unknown = 1,
    Sat = 2,
}

/// Opaque symmetric matrix handle.
pub struct DisclabSymMatrix {
    inner: SymMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> DisclabStatus {
    match e {
        Error::Domain(_) | Error::Bracket(_) | Error::Fixture(_) | Error::Io(_) => DisclabStatus::Domain,
        Error::Convergence { .. } => DisclabStatus::Convergence,
        Error::DimensionMismatch { .. } => DisclabStatus::DimensionMismatch,
        Error::Budget { .. } => DisclabStatus::Budget,
        Error::ZeroHit(_) => DisclabStatus::ZeroHit,
        Error::ChainNonConvergence(_) => DisclabStatus::ChainNonConvergence,
        Error::NotFinite(_) => DisclabStatus::NotFinite,
        Error::Internal(_) => DisclabStatus::Internal,
    }
}

enum Fail {
    Null,
    Small,
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> DisclabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            DisclabStatus::Ok
        }
        Ok(Err(Fail::Null)) => {
            set_error("null pointer argument".into());
            DisclabStatus::NullPointer
        }
        Ok(Err(Fail::Small)) => {
            set_error("output buffer too small".into());
            DisclabStatus::BufferTooSmall
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("panic inside disclab".into());
            DisclabStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null)
}

unsafe fn handle<'a>(p: *const DisclabSymMatrix) -> Result<&'a SymMatrix, Fail> {
    p.as_ref().map(|h| &h.inner).ok_or(Fail::Null)
}

fn boxed(m: SymMatrix) -> *mut DisclabSymMatrix {
    Box::into_raw(Box::new(DisclabSymMatrix { inner: m }))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn disclab_status_str(status: DisclabStatus) -> *const c_char {
    let s: &'static CStr = match status {
        DisclabStatus::Ok => c"ok",
        DisclabStatus::NullPointer => c"null pointer",
        DisclabStatus::Domain => c"argument outside the domain",
        DisclabStatus::Convergence => c"eigensolver did not converge",
        DisclabStatus::Budget => c"enumeration budget exceeded",
        DisclabStatus::ZeroHit => c"no hits",
        DisclabStatus::ChainNonConvergence => c"chain did not converge",
        DisclabStatus::NotFinite => c"non-finite value",
        DisclabStatus::DimensionMismatch => c"dimension mismatch",
        DisclabStatus::BufferTooSmall => c"buffer too small",
        DisclabStatus::Internal => c"internal error",
        DisclabStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn disclab_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a matrix from its upper triangle in row-major order
/// (`len` = d(d+1)/2).
///
/// # Safety
/// `upper` must be valid for `len` reads; `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn disclab_sym_matrix_from_upper(
    d: usize,
    upper: *const f64,
    len: usize,
    result: *mut *mut DisclabSymMatrix,
) -> DisclabStatus {
    guard(|| {
        let slot = out(result)?;
        if upper.is_null() {
            return Err(Fail::Null);
        }
        let values = std::slice::from_raw_parts(upper, len);
        *slot = boxed(SymMatrix::from_upper(d, values)?);
        Ok(())
    })
}

/// Samples GOE(d) from the stream (seed, index).
///
/// # Safety
/// `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn disclab_sym_matrix_goe(
    d: usize,
    seed: u64,
    index: u64,
    result: *mut *mut DisclabSymMatrix,
) -> DisclabStatus {
    guard(|| {
        let slot = out(result)?;
        *slot = boxed(sample_goe(d, RngStream::new(seed, index))?);
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn disclab_sym_matrix_free(m: *mut DisclabSymMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle; `dim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn disclab_sym_matrix_dim(m: *const DisclabSymMatrix, dim: *mut usize) -> DisclabStatus {
    guard(|| {
        *out(dim)? = handle(m)?.dim();
        Ok(())
    })
}

/// # Safety
/// `m` must be a live handle; `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn disclab_op_norm(m: *const DisclabSymMatrix, result: *mut f64) -> DisclabStatus {
    guard(|| {
        *out(result)? = op_norm(handle(m)?)?;
        Ok(())
    })
}

/// Ascending eigenvalues into `values` (capacity `len` ≥ d).
///
/// # Safety
/// `m` must be a live handle; `values` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn disclab_eigenvalues(
    m: *const DisclabSymMatrix,
    values: *mut f64,
    len: usize,
) -> DisclabStatus {
    guard(|| {
        let m = handle(m)?;
        if values.is_null() {
            return Err(Fail::Null);
        }
        if len < m.dim() {
            return Err(Fail::Small);
        }
        let ev = eigenvalues(m)?;
        std::slice::from_raw_parts_mut(values, ev.len()).copy_from_slice(&ev);
        Ok(())
    })
}

/// Exact Z_κ and discrepancy for an instance of `n` handles.
///
/// # Safety
/// `ms` must point to `n` live handles; `z` and `disc` must be writable.
#[no_mangle]
pub unsafe extern "C" fn disclab_exact_count(
    ms: *const *const DisclabSymMatrix,
    n: usize,
    kappa: f64,
    z: *mut u64,
    disc: *mut f64,
) -> DisclabStatus {
    guard(|| {
        let (z, disc) = (out(z)?, out(disc)?);
        if ms.is_null() {
            return Err(Fail::Null);
        }
        let ws =
            std::slice::from_raw_parts(ms, n).iter().map(|p| handle(*p).cloned()).collect::<Result<Vec<_>, _>>()?;
        let r = exact_instance(&ws, &[kappa])?;
        *z = r.z_counts[0];
        *disc = r.disc;
        Ok(())
    })
}

/// First-moment threshold τ₁(κ), κ ∈ (0, 2].
///
/// # Safety
/// `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn disclab_tau1(kappa: f64, result: *mut f64) -> DisclabStatus {
    guard(|| {
        *out(result)? = tau1(Margin::new(kappa)?);
        Ok(())
    })
}

/// Second-moment threshold τ₂(κ).
///
/// # Safety
/// `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn disclab_tau2(kappa: f64, result: *mut f64) -> DisclabStatus {
    guard(|| {
        *out(result)? = tau2(Margin::new(kappa)?)?;
        Ok(())
    })
}

/// Second-moment failure curve τ_f(κ).
///
/// # Safety
/// `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn disclab_tau_f(kappa: f64, result: *mut f64) -> DisclabStatus {
    guard(|| {
        *out(result)? = tau_f(Margin::new(kappa)?);
        Ok(())
    })
}

/// Large-deviation rate of P[‖W‖_op ≤ κ] at scale d².
///
/// # Safety
/// `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn disclab_rate_opnorm(kappa: f64, result: *mut f64) -> DisclabStatus {
    guard(|| {
        *out(result)? = rate_opnorm(kappa)?;
        Ok(())
    })
}

/// Density ρ_κ(x) for |x| < κ.
///
/// # Safety
/// `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn disclab_rho_kappa(kappa: f64, x: f64, result: *mut f64) -> DisclabStatus {
    guard(|| {
        *out(result)? = rho_kappa(kappa, x)?;
        Ok(())
    })
}

/// 2⁻ⁿ Σ_l C(n,l) exp(n c q_l²/2).
///
/// # Safety
/// `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn disclab_laplace_quadratic(c: f64, n: usize, result: *mut f64) -> DisclabStatus {
    guard(|| {
        *out(result)? = laplace_sum(|q| 0.5 * c * q * q, n)?;
        Ok(())
    })
}

/// Phase-diagram region of (κ, τ) and whether τ < τ_f(κ).
///
/// # Safety
/// `region` and `second_moment_fails` must be writable.
#[no_mangle]
pub unsafe extern "C" fn disclab_classify(
    kappa: f64,
    tau: f64,
    region: *mut DisclabRegion,
    second_moment_fails: *mut bool,
) -> DisclabStatus {
    guard(|| {
        let (region, fails) = (out(region)?, out(second_moment_fails)?);
        let c = classify(Margin::new(kappa)?, tau)?;
        *region = match c.region {
            Region::Unsat => DisclabRegion::Unsat,
            Region::Unknown => DisclabRegion::Unknown,
            Region::Sat => DisclabRegion::Sat,
        };
        *fails = c.second_moment_fails;
        Ok(())
    })
}
