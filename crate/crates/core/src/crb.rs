//! Stochastic Cramer-Rao bounds for direction, beam split and range.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{ArrayConfig, C0};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    /// Physical angles in radians.
    pub directions: Vec<f64>,
    pub splits: Vec<f64>,
    pub ranges: Option<Vec<f64>>,
}

impl ParamVector {
    pub fn far(directions: Vec<f64>, splits: Vec<f64>) -> Self {
        Self {
            directions,
            splits,
            ranges: None,
        }
    }

    pub fn near(directions: Vec<f64>, splits: Vec<f64>, ranges: Vec<f64>) -> Self {
        Self {
            directions,
            splits,
            ranges: Some(ranges),
        }
    }

    pub fn n_paths(&self) -> usize {
        self.directions.len()
    }

    /// Number of real unknowns: 2L far, 3L near. Order is directions, splits, ranges.
    pub fn len(&self) -> usize {
        self.directions.len() * if self.ranges.is_some() { 3 } else { 2 }
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let l = self.directions.len();
        if self.splits.len() != l {
            return Err(Error::DimensionMismatch {
                what: "split count",
                expected: l,
                found: self.splits.len(),
            });
        }
        if let Some(r) = &self.ranges {
            if r.len() != l {
                return Err(Error::DimensionMismatch {
                    what: "range count",
                    expected: l,
                    found: r.len(),
                });
            }
            if let Some(&bad) = r.iter().find(|&&v| !(v > 0.0)) {
                return Err(Error::InvalidRange(bad));
            }
        }
        if l == 0 {
            return Err(Error::Config("need at least one path".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aperture {
    /// Bound on the beamformed observation B h.
    #[default]
    Observed,
    /// Bound with every antenna observed directly.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Inversion {
    /// 1 / F_ii for every parameter.
    #[default]
    PerEntry,
    /// Diagonal of the FIM inverse.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalModel {
    /// Random Gaussian path gains with known power.
    #[default]
    Stochastic,
    /// Limit of the stochastic bound as the noise vanishes.
    HighSnr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CrbOptions {
    pub aperture: Aperture,
    pub inversion: Inversion,
    pub signal_model: SignalModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    pub fim: DMatrix<f64>,
    pub crb_diag: Vec<f64>,
    pub snr_db: f64,
    pub subcarrier_index: usize,
}

impl CrbReport {
    pub fn direction(&self, l: usize) -> f64 {
        self.crb_diag[l]
    }

    pub fn split(&self, l: usize, n_paths: usize) -> f64 {
        self.crb_diag[n_paths + l]
    }

    pub fn range(&self, l: usize, n_paths: usize) -> Option<f64> {
        self.crb_diag.get(2 * n_paths + l).copied()
    }
}

fn ramp(n: usize, phase_of: impl Fn(f64) -> f64) -> CVec {
    let g = 1.0 / (n as f64).sqrt();
    CVec::from_fn(n, |i, _| Complex64::from_polar(g, PI * phase_of(i as f64)))
}

fn scaled(a: &CVec, f: impl Fn(f64) -> f64) -> CVec {
    CVec::from_fn(a.len(), |i, _| a[i] * Complex64::new(0.0, PI * f(i as f64)))
}

/// Perturbed far-field steering exp(j pi i (sin + split)) / sqrt(N_T).
pub fn perturbed_steering_far(config: &ArrayConfig, angle: f64, split: f64) -> CVec {
    let s = angle.sin() + split;
    ramp(config.n_antennas, |i| i * s)
}

fn near_term(config: &ArrayConfig, angle: f64, range: f64, freq: f64, i: f64) -> f64 {
    let eta = freq / config.carrier_freq_hz;
    eta * C0 * i * angle.cos().powi(2) / (4.0 * config.carrier_freq_hz * range)
}

/// Perturbed near-field steering with the range-dependent phase curvature.
pub fn perturbed_steering_near(config: &ArrayConfig, angle: f64, range: f64, split: f64, freq: f64) -> CVec {
    let s = angle.sin() + split;
    ramp(config.n_antennas, |i| {
        i * (s - near_term(config, angle, range, freq, i))
    })
}

/// Derivatives of the perturbed far-field steering with respect to the angle
/// (the split moving with it) and the split.
pub fn steering_derivatives_far(config: &ArrayConfig, angle: f64, split: f64, freq: f64) -> (CVec, CVec) {
    let eta = freq / config.carrier_freq_hz;
    let a = perturbed_steering_far(config, angle, split);
    let c = eta * angle.cos();
    (scaled(&a, |i| i * c), scaled(&a, |i| i))
}

/// Derivatives of the perturbed near-field steering: (angle, range, split).
pub fn steering_derivatives_near(
    config: &ArrayConfig,
    angle: f64,
    range: f64,
    split: f64,
    freq: f64,
) -> Result<(CVec, CVec, CVec)> {
    if !(range > 0.0) {
        return Err(Error::InvalidRange(range));
    }
    let fc = config.carrier_freq_hz;
    let eta = freq / fc;
    let a = perturbed_steering_near(config, angle, range, split, freq);
    let cos = angle.cos();
    let sin2 = (2.0 * angle).sin();
    let d_angle = scaled(&a, |i| i * eta * (cos + C0 * i * sin2 / (4.0 * fc * range)));
    let d_range = scaled(&a, |i| eta * C0 * i * i * cos * cos / (4.0 * fc * range * range));
    let d_split = scaled(&a, |i| i);
    Ok((d_angle, d_range, d_split))
}

/// I - G G^+
pub fn projection_complement(g: &CMat) -> CMat {
    let n = g.nrows();
    CMat::identity(n, n) - g * linalg::pinv(g)
}

/// Builds the FIM and the requested bound.
#[allow(clippy::too_many_arguments)]
pub fn crb(
    config: &ArrayConfig,
    params: &ParamVector,
    beamformer: &CMat,
    powers: &[f64],
    noise_var: f64,
    freq: f64,
    subcarrier_index: usize,
    options: CrbOptions,
) -> Result<CrbReport> {
    params.validate()?;
    let l = params.n_paths();
    if powers.len() != l {
        return Err(Error::DimensionMismatch {
            what: "power count",
            expected: l,
            found: powers.len(),
        });
    }
    if !(noise_var > 0.0) {
        return Err(Error::Config("noise variance must be positive".into()));
    }
    let nt = config.n_antennas;
    let obs = match options.aperture {
        Aperture::Observed => beamformer.clone(),
        Aperture::Full => CMat::identity(nt, nt),
    };
    if obs.ncols() != nt {
        return Err(Error::DimensionMismatch {
            what: "beamformer columns",
            expected: nt,
            found: obs.ncols(),
        });
    }
    let p = obs.nrows();

    let mut steer = CMat::zeros(nt, l);
    // (path, derivative) per parameter in the order directions, splits, ranges.
    let mut derivs: Vec<(usize, CVec)> = Vec::with_capacity(params.len());
    let mut by_kind: [Vec<(usize, CVec)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for k in 0..l {
        let (angle, split) = (params.directions[k], params.splits[k]);
        match &params.ranges {
            None => {
                steer
                    .column_mut(k)
                    .copy_from(&perturbed_steering_far(config, angle, split));
                let (da, ds) = steering_derivatives_far(config, angle, split, freq);
                by_kind[0].push((k, da));
                by_kind[1].push((k, ds));
            }
            Some(r) => {
                steer
                    .column_mut(k)
                    .copy_from(&perturbed_steering_near(config, angle, r[k], split, freq));
                let (da, dr, ds) = steering_derivatives_near(config, angle, r[k], split, freq)?;
                by_kind[0].push((k, da));
                by_kind[1].push((k, ds));
                by_kind[2].push((k, dr));
            }
        }
    }
    for kind in by_kind {
        derivs.extend(kind);
    }

    let g = &obs * &steer;
    let power = DMatrix::from_fn(l, l, |i, j| {
        if i == j {
            Complex64::new(powers[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let m = match options.signal_model {
        SignalModel::Stochastic => {
            let mut cov = &g * &power * g.adjoint();
            for i in 0..p {
                cov[(i, i)] += noise_var;
            }
            let cov_inv = linalg::hermitian_inverse(&cov)?;
            &power * g.adjoint() * cov_inv * &g * &power
        }
        SignalModel::HighSnr => power.clone(),
    };
    let perp = projection_complement(&g);
    let gd: Vec<(usize, CVec)> = derivs.iter().map(|(k, d)| (*k, &obs * d)).collect();
    let n = gd.len();
    let mut fim = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let pi_d = &perp * &gd[i].1;
        for j in 0..n {
            // K_ij has a single nonzero entry at (path_i, path_j).
            let kij = pi_d.dotc(&gd[j].1);
            let v = 2.0 / noise_var * (m[(gd[j].0, gd[i].0)] * kij).re;
            fim[(i, j)] = v;
        }
    }
    let fim = (&fim + fim.transpose()) * 0.5;

    let crb_diag = match options.inversion {
        Inversion::PerEntry => (0..n)
            .map(|i| {
                if fim[(i, i)] > 0.0 {
                    1.0 / fim[(i, i)]
                } else {
                    f64::INFINITY
                }
            })
            .collect(),
        Inversion::Full => {
            let eig = fim.clone().symmetric_eigen();
            let hi = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
            let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(lo > 1e-10 * hi) {
                return Err(Error::SingularFim);
            }
            let inv = fim.clone().try_inverse().ok_or(Error::SingularFim)?;
            (0..n).map(|i| inv[(i, i)]).collect()
        }
    };

    let signal: f64 = (0..l).map(|k| powers[k] * g.column(k).norm_squared()).sum();
    let snr_db = 10.0 * (signal / (p as f64 * noise_var)).log10();
    Ok(CrbReport {
        fim,
        crb_diag,
        snr_db,
        subcarrier_index,
    })
}

/// Converts an angle-domain variance (rad^2) to a standard deviation in degrees.
pub fn angle_std_deg(variance: f64) -> f64 {
    variance.sqrt().to_degrees()
}

/// RMS degree error of an unbiased sine-space estimate with the given variance,
/// pushed through the clamped arcsin used to report errors. Reduces to the local
/// slope times the standard deviation away from endfire and stays finite at it.
pub fn sine_std_to_deg(sine: f64, variance: f64) -> f64 {
    if !(variance > 0.0) {
        return 0.0;
    }
    let sd = variance.sqrt();
    let s = sine.clamp(-1.0, 1.0);
    let base = s.asin();
    // Trapezoid rule on the standard normal density over [-8, 8].
    const HALF: i32 = 400;
    let h = 8.0 / HALF as f64;
    let (mut acc, mut wsum) = (0.0, 0.0);
    for k in -HALF..=HALF {
        let t = k as f64 * h;
        let w = (-0.5 * t * t).exp();
        let e = (s + sd * t).clamp(-1.0, 1.0).asin() - base;
        acc += w * e * e;
        wsum += w;
    }
    (acc / wsum).sqrt().to_degrees()
}

/// Converts a sine-space split variance into an RMS angular width error in
/// degrees, evaluated at sin(angle) + split.
pub fn split_std_deg(variance: f64, sine: f64, split: f64) -> f64 {
    sine_std_to_deg(sine + split, variance)
}

/// Direction bound in degrees from an angle-domain variance at `angle`.
pub fn direction_std_deg(variance: f64, angle: f64) -> f64 {
    let c = angle.cos();
    sine_std_to_deg(angle.sin(), variance * c * c)
}
