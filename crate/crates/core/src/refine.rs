//! Off-grid direction refinement around the coarse SBL peak.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::phase_ramp;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Search radius in sine space; `None` means one coarse grid cell.
    pub half_width: Option<f64>,
    pub n_points: usize,
    pub snapshots: usize,
    /// Grid cells on each side of the peak whose power is removed from the
    /// interference covariance.
    pub exclusion_radius: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            half_width: None,
            n_points: 201,
            snapshots: 1,
            exclusion_radius: 2,
        }
    }
}

/// Inputs taken from a converged per-subcarrier EM run.
#[derive(Debug, Clone, Copy)]
pub struct RefineState<'a> {
    pub beamformer: &'a CMat,
    pub perturbation: &'a [Complex64],
    pub effective: &'a CMat,
    pub sigma: &'a [f64],
    pub noise_var: f64,
    pub peak_index: usize,
    pub grid_size: usize,
}

/// Observation covariance with the listed atoms removed.
pub fn covariance_excluding(effective: &CMat, sigma: &[f64], noise_var: f64, excluded: &[usize]) -> Result<CMat> {
    let (p, n) = effective.shape();
    if sigma.len() != n {
        return Err(Error::DimensionMismatch {
            what: "sigma length",
            expected: n,
            found: sigma.len(),
        });
    }
    if let Some(&bad) = excluded.iter().find(|&&k| k >= n) {
        return Err(Error::DimensionMismatch {
            what: "excluded index bound",
            expected: n,
            found: bad,
        });
    }
    let mut cov = CMat::zeros(p, p);
    for (k, &w) in sigma.iter().enumerate() {
        if w == 0.0 || excluded.contains(&k) {
            continue;
        }
        let col = effective.column(k);
        for j in 0..p {
            let cj = col[j].conj() * w;
            for i in 0..p {
                cov[(i, j)] += col[i] * cj;
            }
        }
    }
    for i in 0..p {
        cov[(i, i)] += noise_var;
    }
    linalg::symmetrize(&mut cov);
    let (lo, hi) = linalg::hermitian_extremes(&cov);
    if !(lo > 0.0) || hi / lo > linalg::MAX_CONDITION {
        return Err(Error::SingularCovariance {
            cond: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        });
    }
    Ok(cov)
}

/// g(theta) = B C a(theta) and its derivative with respect to theta.
pub fn perturbed_response(beamformer: &CMat, perturbation: &[Complex64], direction: f64) -> (CVec, CVec) {
    let a = phase_ramp(perturbation.len(), direction);
    let ca = CVec::from_fn(a.len(), |i, _| perturbation[i] * a[i]);
    let dca = CVec::from_fn(a.len(), |i, _| ca[i] * Complex64::new(0.0, PI * i as f64));
    (beamformer * ca, beamformer * dca)
}

/// Concentrated power estimate of a source at `direction` given the
/// interference-plus-noise covariance.
pub fn signal_power_at(
    direction: f64,
    cov_excl: &CMat,
    sample_cov: &CMat,
    perturbation: &[Complex64],
    beamformer: &CMat,
) -> Result<f64> {
    let q = linalg::hermitian_inverse(cov_excl)?;
    let (g, _) = perturbed_response(beamformer, perturbation, direction);
    Ok(power_with_inverse(&g, &q, sample_cov, cov_excl))
}

fn power_with_inverse(g: &CVec, q: &CMat, sample_cov: &CMat, cov_excl: &CMat) -> f64 {
    let qg = q * g;
    let den = g.dotc(&qg).re;
    if den <= 0.0 {
        return 0.0;
    }
    let excess = sample_cov - cov_excl;
    qg.dotc(&(&excess * &qg)).re / (den * den)
}

/// Stationarity of the concentrated likelihood in the direction parameter.
pub fn stationarity(direction: f64, q: &CMat, sample_cov: &CMat, perturbation: &[Complex64], beamformer: &CMat) -> f64 {
    let (g, gd) = perturbed_response(beamformer, perturbation, direction);
    let qg = q * &g;
    let qgd = q * &gd;
    let a = g.dotc(&qg);
    let rqg = sample_cov * &qg;
    let rqgd = sample_cov * &qgd;
    // g^H Q R Q g' and g^H Q R Q g
    let b = qg.dotc(&rqgd);
    let c = qg.dotc(&rqg);
    let d = g.dotc(&qgd);
    (a * b - c * d).re
}

/// Sample covariance averaged over the columns of `snapshots`.
pub fn sample_covariance(snapshots: &CMat) -> CMat {
    let s = snapshots.ncols().max(1) as f64;
    (snapshots * snapshots.adjoint()).unscale(s)
}

/// Grid search for the root of the stationarity condition inside one coarse cell.
pub fn refine_direction(
    coarse_dir: f64,
    snapshots: &CMat,
    state: &RefineState<'_>,
    config: &RefineConfig,
) -> Result<f64> {
    if coarse_dir.abs() > 1.0 {
        return Err(Error::InvalidDirection(coarse_dir));
    }
    let n = state.sigma.len();
    let lo = state.peak_index.saturating_sub(config.exclusion_radius);
    let hi = (state.peak_index + config.exclusion_radius).min(n.saturating_sub(1));
    let excluded: Vec<usize> = (lo..=hi).collect();
    let cov = covariance_excluding(state.effective, state.sigma, state.noise_var, &excluded)?;
    let q = linalg::hermitian_inverse(&cov)?;
    let r = sample_covariance(snapshots);

    let half = config.half_width.unwrap_or(1.0 / state.grid_size as f64);
    let pts = config.n_points.max(2);
    let mut points = Vec::with_capacity(pts);
    let mut values = Vec::with_capacity(pts);
    for k in 0..pts {
        let t = coarse_dir - half + 2.0 * half * k as f64 / (pts - 1) as f64;
        if t.abs() > 1.0 {
            continue;
        }
        points.push(t);
        values.push(stationarity(t, &q, &r, state.perturbation, state.beamformer));
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if points.is_empty() || !(scale > 0.0) || !scale.is_finite() {
        return Ok(coarse_dir);
    }
    let best = (0..values.len())
        .min_by(|&a, &b| values[a].abs().total_cmp(&values[b].abs()))
        .unwrap_or(0);
    let crosses = values.windows(2).any(|w| w[0] * w[1] <= 0.0);
    let at_edge = best == 0 || best + 1 == values.len();
    if !crosses && at_edge {
        return Ok(coarse_dir);
    }
    Ok(points[best])
}
