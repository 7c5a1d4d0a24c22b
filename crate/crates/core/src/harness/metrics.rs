//! Error metrics in the units the sweep tables report.

use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Mean over all columns of ||h - h_est||^2 / ||h||^2.
pub fn nmse(truth: &[CMat], estimate: &[CMat]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            what: "channel count",
            expected: truth.len(),
            found: estimate.len(),
        });
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for (h, e) in truth.iter().zip(estimate) {
        if h.shape() != e.shape() {
            return Err(Error::DimensionMismatch {
                what: "channel shape",
                expected: h.len(),
                found: e.len(),
            });
        }
        for m in 0..h.ncols() {
            let den = h.column(m).norm_squared();
            if den == 0.0 {
                return Err(Error::ZeroNormTruth);
            }
            acc += (h.column(m) - e.column(m)).norm_squared() / den;
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { acc / count as f64 })
}

/// Root mean square of paired differences; inputs already in degrees.
pub fn rmse_deg(truth: &[f64], estimate: &[f64]) -> f64 {
    let n = truth.len().min(estimate.len());
    if n == 0 {
        return f64::NAN;
    }
    let s: f64 = truth.iter().zip(estimate).map(|(a, b)| (a - b) * (a - b)).sum();
    (s / n as f64).sqrt()
}

/// Physical angle of a sine-space direction, in degrees.
pub fn sine_to_deg(sine: f64) -> f64 {
    sine.clamp(-1.0, 1.0).asin().to_degrees()
}

/// Angular width of a sine-space split at `sine`, in degrees.
pub fn split_to_deg(sine: f64, split: f64) -> f64 {
    sine_to_deg(sine + split) - sine_to_deg(sine)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().cloned().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
