//! Reference estimators: least squares, LMMSE with an oracle prior covariance,
//! and orthogonal matching pursuit on the carrier-frequency dictionary.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::array::Dictionary;
use crate::channel::{rng_from_seed, NLOS_REL_DB};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ls,
    Mmse,
    Omp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub est_channel: CMat,
    pub method: Method,
    pub support: Option<Vec<usize>>,
}

/// Minimum-norm least squares, B^+ y.
pub fn ls_estimate(beamformer: &CMat, y: &CVec) -> CVec {
    linalg::pinv(beamformer) * y
}

/// Least squares on every subcarrier with a single pseudo-inverse.
pub fn ls_channel(beamformer: &CMat, received: &CMat) -> BaselineResult {
    BaselineResult {
        est_channel: linalg::pinv(beamformer) * received,
        method: Method::Ls,
        support: None,
    }
}

fn check_psd(r: &CMat) -> Result<()> {
    if r.nrows() != r.ncols() || (r - r.adjoint()).norm() > 1e-9 * (1.0 + r.norm()) {
        return Err(Error::NotPositiveSemidefinite);
    }
    let (lo, hi) = linalg::hermitian_extremes(r);
    if lo < -1e-10 * hi.abs().max(1.0) {
        return Err(Error::NotPositiveSemidefinite);
    }
    Ok(())
}

/// Linear MMSE estimate R B^H (B R B^H + noise I)^{-1} y.
pub fn mmse_estimate(beamformer: &CMat, y: &CVec, channel_cov: &CMat, noise_var: f64) -> Result<CVec> {
    check_psd(channel_cov)?;
    if channel_cov.nrows() != beamformer.ncols() {
        return Err(Error::DimensionMismatch {
            what: "channel covariance size",
            expected: beamformer.ncols(),
            found: channel_cov.nrows(),
        });
    }
    let rbh = channel_cov * beamformer.adjoint();
    let mut cy = beamformer * &rbh;
    for i in 0..cy.nrows() {
        cy[(i, i)] += noise_var;
    }
    let w = match cy.clone().cholesky() {
        Some(ch) => ch.solve(y),
        None => linalg::pinv(&cy) * y,
    };
    Ok(rbh * w)
}

/// Channel covariance under the default path prior (uniform directions, unit
/// LoS power, NLoS paths 10 dB down) at frequency ratio `eta`. The matrix is
/// Toeplitz, so only one row of the Monte-Carlo average is accumulated.
pub fn prior_covariance(n_antennas: usize, n_paths: usize, eta: f64, draws: usize, seed: u64) -> CMat {
    let mut rng = rng_from_seed(seed);
    let mut lag = vec![Complex64::new(0.0, 0.0); n_antennas];
    for _ in 0..draws {
        let s = rng.random_range(-PI / 2.0..=PI / 2.0).sin();
        for (k, v) in lag.iter_mut().enumerate() {
            *v += Complex64::from_polar(1.0, PI * k as f64 * eta * s);
        }
    }
    let nlos = 10f64.powf(NLOS_REL_DB / 10.0);
    let power = (1.0 + nlos * (n_paths.max(1) - 1) as f64) / n_paths.max(1) as f64;
    let scale = power / draws.max(1) as f64;
    CMat::from_fn(n_antennas, n_antennas, |i, k| {
        if i >= k {
            lag[i - k] * scale
        } else {
            lag[k - i].conj() * scale
        }
    })
}

/// Effective dictionary B D with precomputed column norms.
#[derive(Debug, Clone)]
pub struct SensingDictionary {
    pub effective: CMat,
    pub atoms: CMat,
    norms: Vec<f64>,
}

impl SensingDictionary {
    pub fn new(beamformer: &CMat, dictionary: &Dictionary) -> Self {
        let effective = dictionary.right_multiply(beamformer);
        let norms = effective.column_iter().map(|c| c.norm()).collect();
        Self {
            effective,
            atoms: dictionary.atoms.clone(),
            norms,
        }
    }

    /// Normalized correlation |a_n^H r| / ||a_n||, summed in power over columns of `r`.
    fn correlation(&self, r: &CMat) -> Vec<f64> {
        let c = self.effective.adjoint() * r;
        (0..c.nrows())
            .map(|n| {
                let nn = self.norms[n];
                if nn == 0.0 {
                    return 0.0;
                }
                c.row(n).iter().map(|v| v.norm_sqr()).sum::<f64>() / (nn * nn)
            })
            .collect()
    }

    fn select(&self, residual: &CMat, support: &[usize]) -> Option<usize> {
        let corr = self.correlation(residual);
        let mut best: Option<usize> = None;
        for (n, &v) in corr.iter().enumerate() {
            if support.contains(&n) {
                continue;
            }
            if best.is_none_or(|b| v > corr[b]) {
                best = Some(n);
            }
        }
        best
    }

    /// Greedy pursuit with one support shared by all columns of `received`.
    /// Returns the support, the sparse coefficients and the residual norms after
    /// each round.
    pub fn pursue(&self, received: &CMat, sparsity: usize) -> (Vec<usize>, CMat, Vec<f64>) {
        let mut support = Vec::new();
        let mut residual = received.clone();
        let mut coeffs = CMat::zeros(0, received.ncols());
        let mut norms = Vec::new();
        for _ in 0..sparsity.min(self.effective.ncols()) {
            let Some(k) = self.select(&residual, &support) else {
                break;
            };
            support.push(k);
            let sub = self.effective.select_columns(&support);
            coeffs = linalg::pinv(&sub) * received;
            residual = received - &sub * &coeffs;
            norms.push(residual.norm());
        }
        (support, coeffs, norms)
    }

    pub fn channel(&self, support: &[usize], coeffs: &CMat) -> CMat {
        if support.is_empty() {
            return CMat::zeros(self.atoms.nrows(), coeffs.ncols());
        }
        self.atoms.select_columns(support) * coeffs
    }
}

/// Per-subcarrier OMP returning the support and the channel column.
pub fn omp_estimate(
    beamformer: &CMat,
    dictionary: &Dictionary,
    y: &CVec,
    sparsity: usize,
) -> Result<(Vec<usize>, CVec)> {
    if sparsity == 0 {
        return Err(Error::Config("sparsity must be at least 1".into()));
    }
    let sd = SensingDictionary::new(beamformer, dictionary);
    let r = CMat::from_column_slice(y.len(), 1, y.as_slice());
    let (support, coeffs, _) = sd.pursue(&r, sparsity);
    let h = sd.channel(&support, &coeffs);
    Ok((support, h.column(0).into_owned()))
}

/// OMP run independently on every subcarrier.
pub fn omp_channel(sd: &SensingDictionary, received: &CMat, sparsity: usize) -> BaselineResult {
    let mut est = CMat::zeros(sd.atoms.nrows(), received.ncols());
    let mut all = Vec::new();
    for m in 0..received.ncols() {
        let r = received.columns(m, 1).into_owned();
        let (support, coeffs, _) = sd.pursue(&r, sparsity);
        est.column_mut(m).copy_from(&sd.channel(&support, &coeffs).column(0));
        all.extend(support);
    }
    BaselineResult {
        est_channel: est,
        method: Method::Omp,
        support: Some(all),
    }
}

/// Simultaneous OMP: one support for all subcarriers, per-subcarrier gains.
pub fn omp_joint_channel(sd: &SensingDictionary, received: &CMat, sparsity: usize) -> BaselineResult {
    let (support, coeffs, _) = sd.pursue(received, sparsity);
    BaselineResult {
        est_channel: sd.channel(&support, &coeffs),
        method: Method::Omp,
        support: Some(support),
    }
}
