//! C ABI for the beamsplit estimator.
//!
//! Complex matrices cross the boundary as interleaved (re, im) doubles in
//! row-major order. Every call returns a `BsStatus`; on failure a message is
//! available from `bs_last_error` on the same thread. Pointers must be valid for
//! the stated lengths and handles must come from the matching constructor.

#![allow(clippy::missing_safety_doc, clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use beamsplit::array::{build_dictionary, steering_far, ArrayConfig, Dictionary, SubcarrierGrid};
use beamsplit::channel::PilotObservation;
use beamsplit::crb::{crb, CrbOptions, ParamVector};
use beamsplit::linalg::CMat;
use beamsplit::sbce::{run_sbce, SbceConfig, SbceResult};
use beamsplit::Error;
use num_complex::Complex64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Singular = 3,
    Io = 4,
    Parse = 5,
    Panic = 6,
}

/// Array, subcarrier grid, dictionary and solver settings.
pub struct BsEstimator {
    array: ArrayConfig,
    grid: SubcarrierGrid,
    dictionary: Dictionary,
    config: SbceConfig,
}

/// Output of one estimation call.
pub struct BsResult {
    inner: SbceResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> BsStatus {
    match e {
        Error::SingularCovariance { .. } | Error::SingularFim | Error::NotPositiveSemidefinite => BsStatus::Singular,
        Error::Io(_) => BsStatus::Io,
        Error::Json(_) => BsStatus::Parse,
        _ => BsStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), BsStatus>) -> BsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            BsStatus::Panic
        }
    }
}

fn fail(e: Error) -> BsStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn invalid(msg: &str) -> BsStatus {
    set_error(msg);
    BsStatus::InvalidArgument
}

fn null() -> BsStatus {
    set_error("null pointer argument");
    BsStatus::NullPointer
}

unsafe fn read_matrix(data: *const f64, rows: usize, cols: usize) -> Result<CMat, BsStatus> {
    if data.is_null() {
        return Err(null());
    }
    let s = std::slice::from_raw_parts(data, 2 * rows * cols);
    Ok(CMat::from_fn(rows, cols, |r, c| {
        let k = 2 * (r * cols + c);
        Complex64::new(s[k], s[k + 1])
    }))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf`, truncating to
/// `len - 1` bytes. Returns the full message length.
#[no_mangle]
pub unsafe extern "C" fn bs_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Creates an estimator for a half-wavelength array and a centered subcarrier grid.
#[no_mangle]
pub unsafe extern "C" fn bs_estimator_new(
    n_antennas: usize,
    carrier_hz: f64,
    bandwidth_hz: f64,
    n_subcarriers: usize,
    grid_size: usize,
    out: *mut *mut BsEstimator,
) -> BsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        let array = ArrayConfig::half_wavelength(n_antennas, carrier_hz).map_err(fail)?;
        let grid = SubcarrierGrid::new(n_subcarriers, bandwidth_hz, carrier_hz).map_err(fail)?;
        let dictionary = build_dictionary(&array, grid_size).map_err(fail)?;
        let est = BsEstimator {
            array,
            grid,
            dictionary,
            config: SbceConfig::default(),
        };
        *out = Box::into_raw(Box::new(est));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bs_estimator_free(est: *mut BsEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Sets the iteration cap and relative convergence tolerance.
#[no_mangle]
pub unsafe extern "C" fn bs_estimator_set_iterations(est: *mut BsEstimator, max_iters: usize, tol: f64) -> BsStatus {
    guard(|| {
        let est = est.as_mut().ok_or_else(null)?;
        if max_iters == 0 || !(tol > 0.0) {
            return Err(invalid("max_iters and tol must be positive"));
        }
        est.config.max_iters = max_iters;
        est.config.convergence_tol = tol;
        Ok(())
    })
}

/// Runs the estimator. `beamformer` is `n_pilots x n_antennas`, `received` is
/// `n_pilots x n_subcarriers`.
#[no_mangle]
pub unsafe extern "C" fn bs_estimate(
    est: *const BsEstimator,
    beamformer: *const f64,
    received: *const f64,
    n_pilots: usize,
    out: *mut *mut BsResult,
) -> BsStatus {
    guard(|| {
        let est = est.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        if n_pilots == 0 {
            return Err(invalid("n_pilots must be positive"));
        }
        let b = read_matrix(beamformer, n_pilots, est.array.n_antennas)?;
        let y = read_matrix(received, n_pilots, est.grid.n_subcarriers)?;
        if b.iter().chain(y.iter()).any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(invalid("inputs must be finite"));
        }
        let obs = PilotObservation {
            beamformer: b,
            received: y,
            noise_var: 0.0,
            seed: 0,
        };
        let r = run_sbce(&obs, &est.dictionary, &est.config, &est.grid).map_err(fail)?;
        *out = Box::into_raw(Box::new(BsResult { inner: r }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bs_result_free(res: *mut BsResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Estimated direction in sine space.
#[no_mangle]
pub unsafe extern "C" fn bs_result_direction(res: *const BsResult, out: *mut f64) -> BsStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(null)?;
        let out = out.as_mut().ok_or_else(null)?;
        *out = res.inner.est_direction_sine;
        Ok(())
    })
}

/// Maximum iteration count over subcarriers and whether all of them converged.
#[no_mangle]
pub unsafe extern "C" fn bs_result_iterations(
    res: *const BsResult,
    iterations: *mut usize,
    converged: *mut bool,
) -> BsStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(null)?;
        *iterations.as_mut().ok_or_else(null)? = res.inner.iterations;
        *converged.as_mut().ok_or_else(null)? = res.inner.converged;
        Ok(())
    })
}

/// Writes one split per subcarrier into `out[0..len]`.
#[no_mangle]
pub unsafe extern "C" fn bs_result_splits(res: *const BsResult, out: *mut f64, len: usize) -> BsStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(null)?;
        let v = &res.inner.est_beam_split;
        if len != v.len() {
            return Err(invalid("length must equal the number of subcarriers"));
        }
        if out.is_null() {
            return Err(null());
        }
        ptr::copy_nonoverlapping(v.as_ptr(), out, len);
        Ok(())
    })
}

/// Writes the `n_antennas x n_subcarriers` channel estimate, interleaved, into
/// `out[0..len]` with `len = 2 * n_antennas * n_subcarriers`.
#[no_mangle]
pub unsafe extern "C" fn bs_result_channel(res: *const BsResult, out: *mut f64, len: usize) -> BsStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(null)?;
        let h = &res.inner.est_channel;
        if len != 2 * h.len() {
            return Err(invalid("length must be 2 * n_antennas * n_subcarriers"));
        }
        if out.is_null() {
            return Err(null());
        }
        let s = std::slice::from_raw_parts_mut(out, len);
        for r in 0..h.nrows() {
            for c in 0..h.ncols() {
                let k = 2 * (r * h.ncols() + c);
                s[k] = h[(r, c)].re;
                s[k + 1] = h[(r, c)].im;
            }
        }
        Ok(())
    })
}

/// Far-field steering vector at `freq_hz` for sine-space direction `sine`,
/// interleaved into `out[0..2 * n_antennas]`.
#[no_mangle]
pub unsafe extern "C" fn bs_steering_far(
    est: *const BsEstimator,
    sine: f64,
    freq_hz: f64,
    out: *mut f64,
    len: usize,
) -> BsStatus {
    guard(|| {
        let est = est.as_ref().ok_or_else(null)?;
        if len != 2 * est.array.n_antennas {
            return Err(invalid("length must be 2 * n_antennas"));
        }
        if out.is_null() {
            return Err(null());
        }
        let a = steering_far(&est.array, sine, freq_hz).map_err(fail)?;
        let s = std::slice::from_raw_parts_mut(out, len);
        for (i, v) in a.iter().enumerate() {
            s[2 * i] = v.re;
            s[2 * i + 1] = v.im;
        }
        Ok(())
    })
}

/// Single-path far-field bound at `freq_hz`: direction variance in rad^2 and
/// split variance in sine space.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn bs_crb_far(
    est: *const BsEstimator,
    beamformer: *const f64,
    n_pilots: usize,
    angle_rad: f64,
    split: f64,
    power: f64,
    noise_var: f64,
    freq_hz: f64,
    out_direction: *mut f64,
    out_split: *mut f64,
) -> BsStatus {
    guard(|| {
        let est = est.as_ref().ok_or_else(null)?;
        if n_pilots == 0 {
            return Err(invalid("n_pilots must be positive"));
        }
        let b = read_matrix(beamformer, n_pilots, est.array.n_antennas)?;
        let od = out_direction.as_mut().ok_or_else(null)?;
        let os = out_split.as_mut().ok_or_else(null)?;
        let params = ParamVector::far(vec![angle_rad], vec![split]);
        let rep = crb(
            &est.array,
            &params,
            &b,
            &[power],
            noise_var,
            freq_hz,
            0,
            CrbOptions::default(),
        )
        .map_err(fail)?;
        *od = rep.direction(0);
        *os = rep.split(0, 1);
        Ok(())
    })
}
