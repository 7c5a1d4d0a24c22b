use std::ffi::{c_char, CStr};
use std::ptr;

use beamsplit::array::{grid_point, steering_far, ArrayConfig};
use beamsplit::channel::gen_pilot_matrix;
use beamsplit_ffi::*;

fn interleave(m: &beamsplit::linalg::CMat) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 * m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            v.push(m[(r, c)].re);
            v.push(m[(r, c)].im);
        }
    }
    v
}

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe { bs_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn estimate_round_trip() {
    let (nt, m, p, n) = (16usize, 4usize, 16usize, 64usize);
    let mut est = ptr::null_mut();
    assert_eq!(
        unsafe { bs_estimator_new(nt, 300e9, 0.0, m, n, &mut est) },
        BsStatus::Ok
    );

    let array = ArrayConfig::half_wavelength(nt, 300e9).unwrap();
    let b = gen_pilot_matrix(&array, p, 9).unwrap();
    let s = grid_point(n, 40);
    let a = steering_far(&array, s, 300e9).unwrap();
    let h = beamsplit::linalg::CMat::from_fn(nt, m, |i, _| a[i] * 3.0);
    let y = &b * &h;

    let mut res = ptr::null_mut();
    let st = unsafe { bs_estimate(est, interleave(&b).as_ptr(), interleave(&y).as_ptr(), p, &mut res) };
    assert_eq!(st, BsStatus::Ok, "{}", last_error());

    let mut dir = 0.0;
    assert_eq!(unsafe { bs_result_direction(res, &mut dir) }, BsStatus::Ok);
    assert!((dir - s).abs() < 1.0 / n as f64, "{dir} vs {s}");

    let mut iters = 0usize;
    let mut conv = false;
    assert_eq!(
        unsafe { bs_result_iterations(res, &mut iters, &mut conv) },
        BsStatus::Ok
    );
    assert!(iters >= 1);

    let mut splits = vec![1.0; m];
    assert_eq!(unsafe { bs_result_splits(res, splits.as_mut_ptr(), m) }, BsStatus::Ok);
    assert!(splits.iter().all(|d| d.abs() < 1e-12));

    let mut hh = vec![0.0; 2 * nt * m];
    assert_eq!(
        unsafe { bs_result_channel(res, hh.as_mut_ptr(), hh.len()) },
        BsStatus::Ok
    );
    let want = interleave(&h);
    let err: f64 = hh.iter().zip(&want).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = want.iter().map(|x| x * x).sum();
    assert!(err / den < 1e-6, "{}", err / den);

    unsafe {
        bs_result_free(res);
        bs_estimator_free(est);
    }
}

#[test]
fn steering_and_bound() {
    let mut est = ptr::null_mut();
    assert_eq!(
        unsafe { bs_estimator_new(8, 300e9, 30e9, 2, 32, &mut est) },
        BsStatus::Ok
    );
    let mut v = vec![0.0; 16];
    assert_eq!(
        unsafe { bs_steering_far(est, 0.3, 310e9, v.as_mut_ptr(), 16) },
        BsStatus::Ok
    );
    let n2: f64 = v.iter().map(|x| x * x).sum();
    assert!((n2 - 1.0).abs() < 1e-12);

    let array = ArrayConfig::half_wavelength(8, 300e9).unwrap();
    let b = interleave(&gen_pilot_matrix(&array, 4, 1).unwrap());
    let (mut d1, mut s1, mut d2, mut s2) = (0.0, 0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(
            bs_crb_far(est, b.as_ptr(), 4, 0.4, 0.01, 1.0, 0.1, 310e9, &mut d1, &mut s1),
            BsStatus::Ok
        );
        assert_eq!(
            bs_crb_far(est, b.as_ptr(), 4, 0.4, 0.01, 1.0, 0.01, 310e9, &mut d2, &mut s2),
            BsStatus::Ok
        );
        bs_estimator_free(est);
    }
    assert!(d2 < d1 && s2 < s1 && d2 > 0.0);
}

#[test]
fn error_paths() {
    let mut est = ptr::null_mut();
    assert_eq!(
        unsafe { bs_estimator_new(8, 300e9, 0.0, 2, 4, &mut est) },
        BsStatus::InvalidArgument
    );
    assert!(est.is_null());
    assert!(last_error().contains("grid"), "{}", last_error());
    assert_eq!(
        unsafe { bs_estimator_new(8, 300e9, 0.0, 2, 32, ptr::null_mut()) },
        BsStatus::NullPointer
    );

    assert_eq!(
        unsafe { bs_estimator_new(8, 300e9, 0.0, 2, 32, &mut est) },
        BsStatus::Ok
    );
    let mut res = ptr::null_mut();
    assert_eq!(
        unsafe { bs_estimate(est, ptr::null(), ptr::null(), 4, &mut res) },
        BsStatus::NullPointer
    );
    let b = vec![f64::NAN; 2 * 4 * 8];
    let y = [0.0; 2 * 4 * 2];
    assert_eq!(
        unsafe { bs_estimate(est, b.as_ptr(), y.as_ptr(), 4, &mut res) },
        BsStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { bs_estimator_set_iterations(est, 0, 1e-3) },
        BsStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { bs_steering_far(est, 1.5, 300e9, vec![0.0; 16].as_mut_ptr(), 16) },
        BsStatus::InvalidArgument
    );
    let mut d = 0.0;
    assert_eq!(
        unsafe { bs_result_direction(ptr::null(), &mut d) },
        BsStatus::NullPointer
    );
    unsafe {
        bs_estimator_free(est);
        bs_estimator_free(ptr::null_mut());
        bs_result_free(ptr::null_mut());
    }
}

#[test]
fn version_and_truncation() {
    let v = unsafe { CStr::from_ptr(bs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    let mut est = ptr::null_mut();
    unsafe { bs_estimator_new(1, 300e9, 0.0, 2, 32, &mut est) };
    let mut small = [0 as c_char; 4];
    let full = unsafe { bs_last_error(small.as_mut_ptr(), small.len()) };
    assert!(full > 3);
    assert_eq!(unsafe { CStr::from_ptr(small.as_ptr()) }.to_bytes().len(), 3);
}
