//! Sparse Bayesian learning EM with a diagonal array perturbation that absorbs
//! the per-subcarrier beam split.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{phase_ramp, ArrayConfig, Dictionary, SubcarrierGrid};
use crate::channel::PilotObservation;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::refine::{refine_direction, RefineConfig, RefineState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseDivisor {
    /// Divide by the antenna count.
    Antennas,
    /// Divide by the observation length.
    #[default]
    Pilots,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseInit {
    /// max(1e-6, 0.01 ||y||^2 / P)
    #[default]
    Guarded,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SbceConfig {
    pub convergence_tol: f64,
    pub max_iters: usize,
    pub noise_var_divisor: NoiseDivisor,
    pub full_update_enabled: bool,
    pub noise_init: NoiseInit,
    /// Shift sigma along with the dictionary when the perturbation moves the atoms.
    pub realign_on_shift: bool,
    /// Stop moving C once the peak index starts alternating between two cells.
    pub freeze_on_cycle: bool,
    pub refine: RefineConfig,
}

impl Default for SbceConfig {
    fn default() -> Self {
        Self {
            convergence_tol: 1e-3,
            max_iters: 200,
            noise_var_divisor: NoiseDivisor::Pilots,
            full_update_enabled: false,
            noise_init: NoiseInit::Guarded,
            realign_on_shift: true,
            freeze_on_cycle: true,
            refine: RefineConfig::default(),
        }
    }
}

impl SbceConfig {
    /// Plain EM loop with none of the stabilizers.
    pub fn literal() -> Self {
        Self {
            noise_var_divisor: NoiseDivisor::Antennas,
            noise_init: NoiseInit::Zero,
            realign_on_shift: false,
            freeze_on_cycle: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbceState {
    pub sigma: Vec<f64>,
    pub noise_var: f64,
    pub perturbation_split: f64,
    pub posterior_mean: Vec<Complex64>,
    pub iter: usize,
}

impl SbceState {
    /// Dense posterior covariance for the given effective matrix. O(N^2) memory,
    /// so the EM loop never calls it.
    pub fn posterior_covariance(&self, effective: &CMat) -> Result<CMat> {
        let (_, pi) = posterior_update(effective, &self.sigma, self.noise_var, &CVec::zeros(effective.nrows()))?;
        Ok(pi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcarrierFit {
    pub state: SbceState,
    pub peak_index: usize,
    pub coarse_direction: f64,
    pub coarse_split: f64,
    pub converged: bool,
    /// Residual ratio of the full perturbation update against the diagonal one,
    /// recorded only when the full update is enabled.
    pub full_update_residual_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbceResult {
    pub est_direction_sine: f64,
    pub coarse_direction_sine: f64,
    pub est_beam_split: Vec<f64>,
    pub est_support_gain: Vec<Complex64>,
    pub est_channel: CMat,
    pub iterations: usize,
    pub converged: bool,
    pub subcarriers: Vec<SubcarrierFit>,
}

impl SbceResult {
    pub fn mean_iterations(&self) -> f64 {
        let n = self.subcarriers.len().max(1) as f64;
        self.subcarriers.iter().map(|s| s.state.iter as f64).sum::<f64>() / n
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { what, expected, found });
    }
    Ok(())
}

/// P' diag(sigma) P'^H
fn weighted_gram(effective: &CMat, sigma: &[f64]) -> CMat {
    let p = effective.nrows();
    let mut s = CMat::zeros(p, p);
    for (n, &w) in sigma.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let col = effective.column(n);
        for j in 0..p {
            let cj = col[j].conj() * w;
            for i in j..p {
                s[(i, j)] += col[i] * cj;
            }
        }
    }
    for j in 0..p {
        s[(j, j)].im = 0.0;
        for i in (j + 1)..p {
            s[(j, i)] = s[(i, j)].conj();
        }
    }
    s
}

fn observation_covariance(effective: &CMat, sigma: &[f64], noise_var: f64) -> CMat {
    let mut s = weighted_gram(effective, sigma);
    for i in 0..s.nrows() {
        s[(i, i)] += noise_var;
    }
    s
}

/// Gaussian posterior of the sparse vector: returns (z, Pi).
pub fn posterior_update(effective: &CMat, sigma: &[f64], noise_var: f64, y: &CVec) -> Result<(CVec, CMat)> {
    let (p, n) = effective.shape();
    check_len("sigma length", n, sigma.len())?;
    check_len("observation length", p, y.len())?;
    let pyi = linalg::hermitian_inverse(&observation_covariance(effective, sigma, noise_var))?;
    // Sigma P'^H
    let mut sph = effective.adjoint();
    for (k, &w) in sigma.iter().enumerate() {
        sph.row_mut(k).scale_mut(w);
    }
    let gain = &sph * &pyi;
    let z = &gain * y;
    let mut pi = -(&gain * sph.adjoint());
    for (k, &w) in sigma.iter().enumerate() {
        pi[(k, k)] += w;
    }
    linalg::symmetrize(&mut pi);
    Ok((z, pi))
}

pub fn update_sigma(z: &[Complex64]) -> Vec<f64> {
    z.iter().map(|v| v.norm_sqr()).collect()
}

fn divisor(mode: NoiseDivisor, n_pilots: usize, n_antennas: usize) -> f64 {
    match mode {
        NoiseDivisor::Antennas => n_antennas as f64,
        NoiseDivisor::Pilots => n_pilots as f64,
    }
}

/// Noise variance M-step: (||y - P'z||^2 + Tr{P' Pi P'^H}) / divisor.
pub fn update_noise_var(y: &CVec, effective: &CMat, z: &CVec, pi: &CMat, mode: NoiseDivisor, n_antennas: usize) -> f64 {
    let resid = (y - effective * z).norm_squared();
    let tr = linalg::trace(&(effective * pi * effective.adjoint())).re;
    (resid + tr) / divisor(mode, effective.nrows(), n_antennas)
}

/// Diagonal of C such that C a(phi) = a(eta phi).
pub fn update_perturbation_diag(
    config: &ArrayConfig,
    grid_dir: f64,
    freq_hz: f64,
    carrier_hz: f64,
) -> Result<Vec<Complex64>> {
    if grid_dir.abs() > 1.0 {
        return Err(Error::InvalidDirection(grid_dir));
    }
    Ok(perturbation_from_split(
        config.n_antennas,
        (freq_hz / carrier_hz - 1.0) * grid_dir,
    ))
}

pub fn perturbation_from_split(n_antennas: usize, split: f64) -> Vec<Complex64> {
    (0..n_antennas)
        .map(|i| Complex64::from_polar(1.0, PI * i as f64 * split))
        .collect()
}

/// Recovers the split from a unimodular phase ramp by unwrapping along the array
/// and averaging the per-element slopes.
pub fn beam_split_from_c(c: &[Complex64]) -> Result<f64> {
    for (index, v) in c.iter().enumerate() {
        let modulus = v.norm();
        if (modulus - 1.0).abs() > 1e-6 {
            return Err(Error::NonUnimodular { index, modulus });
        }
    }
    if c.len() < 2 {
        return Ok(0.0);
    }
    let mut prev = c[0].arg();
    let mut unwrapped = prev;
    let mut acc = 0.0;
    for (i, v) in c.iter().enumerate().skip(1) {
        let a = v.arg();
        let mut d = a - prev;
        d -= 2.0 * PI * (d / (2.0 * PI)).round();
        unwrapped += d;
        prev = a;
        acc += unwrapped / (PI * i as f64);
    }
    Ok(acc / (c.len() - 1) as f64)
}

/// Full (non-diagonal) perturbation update for small arrays. Returns vec(U - I)
/// in column-major order, solving the normal equations of the expected residual
/// in the minimum-norm sense because they are rank deficient whenever P < N_T.
pub fn update_perturbation_full(
    y: &CVec,
    beamformer: &CMat,
    dictionary: &CMat,
    z: &CVec,
    pi: &CMat,
) -> Result<Vec<Complex64>> {
    let nt = beamformer.ncols();
    if nt > 16 {
        return Err(Error::TooManyAntennas(nt));
    }
    check_len("dictionary rows", nt, dictionary.nrows())?;
    let gamma = z * z.adjoint() + pi;
    let dgd = dictionary * &gamma * dictionary.adjoint();
    let bhb = beamformer.adjoint() * beamformer;
    let nominal = beamformer * dictionary;
    // Tr{M_i^H X} with M_i = B E_rc is (B^H X)_rc.
    let rhs_mat =
        beamformer.adjoint() * (y * z.adjoint() * dictionary.adjoint() - &nominal * &gamma * dictionary.adjoint());
    let dim = nt * nt;
    let mut lhs = CMat::zeros(dim, dim);
    for c in 0..nt {
        for r in 0..nt {
            for c2 in 0..nt {
                for r2 in 0..nt {
                    lhs[(r + c * nt, r2 + c2 * nt)] = bhb[(r, r2)] * dgd[(c2, c)];
                }
            }
        }
    }
    let rhs = CVec::from_iterator(dim, rhs_mat.iter().cloned());
    let u = linalg::pinv(&lhs) * rhs;
    Ok(u.iter().cloned().collect())
}

struct EStep {
    z: Vec<Complex64>,
    trace_term: f64,
    residual: f64,
}

/// Posterior mean plus the two noise M-step terms, all in the P-dimensional
/// observation space.
fn lean_estep(effective: &CMat, sigma: &[f64], noise_var: f64, y: &CVec) -> Result<EStep> {
    let s = weighted_gram(effective, sigma);
    let mut py = s.clone();
    for i in 0..py.nrows() {
        py[(i, i)] += noise_var;
    }
    let pyi = linalg::hermitian_inverse(&py)?;
    let w = &pyi * y;
    let n = effective.ncols();
    let p = effective.nrows();
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    let mut fit = vec![Complex64::new(0.0, 0.0); p];
    for k in 0..n {
        if sigma[k] == 0.0 {
            continue;
        }
        let col = effective.column(k);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..p {
            acc += col[i].conj() * w[i];
        }
        let zk = acc * sigma[k];
        z[k] = zk;
        for i in 0..p {
            fit[i] += col[i] * zk;
        }
    }
    let x = &pyi * &s;
    let trace_term = (linalg::trace(&s) - linalg::trace_of_product(&s, &x)).re.max(0.0);
    let residual = y.iter().zip(&fit).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(EStep {
        z,
        trace_term,
        residual,
    })
}

/// Largest entry, lowest index on ties.
pub fn peak_index(sigma: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in sigma.iter().enumerate() {
        if v > sigma[best] {
            best = k;
        }
    }
    best
}

/// out[k] = v[k + shift], clamped at the ends.
fn shift_clamped(v: &[f64], shift: i64) -> Vec<f64> {
    let n = v.len() as i64;
    (0..n).map(|k| v[(k + shift).clamp(0, n - 1) as usize]).collect()
}

fn effective_matrix(beamformer: &CMat, c: &[Complex64], dictionary: &Dictionary) -> CMat {
    let bc = CMat::from_fn(beamformer.nrows(), c.len(), |i, j| beamformer[(i, j)] * c[j]);
    dictionary.right_multiply(&bc)
}

struct SubcarrierRun {
    fit: SubcarrierFit,
    effective: CMat,
    perturbation: Vec<Complex64>,
}

fn run_subcarrier(
    y: &CVec,
    beamformer: &CMat,
    nominal: &CMat,
    dictionary: &Dictionary,
    eta: f64,
    config: &SbceConfig,
) -> Result<SubcarrierRun> {
    let n = dictionary.grid_size;
    let nt = dictionary.n_antennas();
    let p = y.len();
    let y_energy = y.norm_squared();
    let floor = 1e-9 * y_energy / p as f64 + 1e-300;
    let div = divisor(config.noise_var_divisor, p, nt);

    let mut sigma = vec![1.0; n];
    let mut noise_var = match config.noise_init {
        NoiseInit::Guarded => (0.01 * y_energy / p as f64).max(1e-6),
        NoiseInit::Zero => 0.0,
    };
    let mut split = 0.0;
    let mut c = vec![Complex64::new(1.0, 0.0); nt];
    let mut effective = nominal.clone();
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    let mut history: Vec<usize> = Vec::new();
    let mut frozen = false;
    let mut converged = false;
    let mut iter = 0;

    while iter < config.max_iters {
        iter += 1;
        let step = lean_estep(&effective, &sigma, noise_var, y)?;
        let mut next = update_sigma(&step.z);
        let peak = peak_index(&next);
        let hl = history.len();
        if config.freeze_on_cycle && hl >= 2 && peak == history[hl - 2] && peak != history[hl - 1] {
            frozen = true;
        }
        history.push(peak);
        // The M-step must use the matrix that produced z.
        noise_var = ((step.residual + step.trace_term) / div).max(floor);
        z = step.z;
        if !frozen {
            let target = (eta - 1.0) * dictionary.grid_points[peak];
            if target != split {
                if config.realign_on_shift {
                    let shift = ((target - split) * n as f64 / 2.0).round() as i64;
                    if shift != 0 {
                        next = shift_clamped(&next, shift);
                    }
                }
                split = target;
                c = perturbation_from_split(nt, split);
                effective = effective_matrix(beamformer, &c, dictionary);
            }
        }
        let diff: f64 = next
            .iter()
            .zip(&sigma)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = next.iter().map(|a| a * a).sum::<f64>().sqrt();
        sigma = next;
        if diff <= config.convergence_tol * norm {
            converged = true;
            break;
        }
    }

    let peak = peak_index(&sigma);
    let coarse_split = beam_split_from_c(&c)?;
    let full_update_residual_ratio = if config.full_update_enabled {
        Some(full_update_ratio(
            y, beamformer, dictionary, &effective, &c, &sigma, noise_var,
        )?)
    } else {
        None
    };
    Ok(SubcarrierRun {
        fit: SubcarrierFit {
            state: SbceState {
                sigma,
                noise_var,
                perturbation_split: split,
                posterior_mean: z,
                iter,
            },
            peak_index: peak,
            coarse_direction: dictionary.grid_points[peak],
            coarse_split,
            converged,
            full_update_residual_ratio,
        },
        effective,
        perturbation: c,
    })
}

/// Residual of y against P'z after the full update, relative to the diagonal fit.
fn full_update_ratio(
    y: &CVec,
    beamformer: &CMat,
    dictionary: &Dictionary,
    effective: &CMat,
    c: &[Complex64],
    sigma: &[f64],
    noise_var: f64,
) -> Result<f64> {
    let nt = c.len();
    let (z, pi) = posterior_update(effective, sigma, noise_var, y)?;
    let diag_fit = (y - effective * &z).norm_squared();
    let bc = CMat::from_fn(beamformer.nrows(), nt, |i, j| beamformer[(i, j)] * c[j]);
    let u = update_perturbation_full(y, &bc, &dictionary.atoms, &z, &pi)?;
    let mut full = CMat::identity(nt, nt);
    for (k, v) in u.iter().enumerate() {
        full[(k % nt, k / nt)] += v;
    }
    let fitted = &bc * full * &dictionary.atoms * &z;
    let full_fit = (y - fitted).norm_squared();
    Ok(if diag_fit > 0.0 { full_fit / diag_fit } else { 0.0 })
}

/// Runs the estimator for one user across all subcarriers.
pub fn run_sbce(
    observation: &PilotObservation,
    dictionary: &Dictionary,
    config: &SbceConfig,
    grid: &SubcarrierGrid,
) -> Result<SbceResult> {
    let b = &observation.beamformer;
    let nt = dictionary.n_antennas();
    check_len("beamformer columns", nt, b.ncols())?;
    check_len("received rows", b.nrows(), observation.received.nrows())?;
    check_len("subcarriers", grid.n_subcarriers, observation.received.ncols())?;
    if config.full_update_enabled && nt > 16 {
        return Err(Error::TooManyAntennas(nt));
    }
    let nominal = dictionary.right_multiply(b);
    let ratios = grid.ratios();
    let mut runs = Vec::with_capacity(grid.n_subcarriers);
    for (m, &eta) in ratios.iter().enumerate() {
        let y = observation.received.column(m).into_owned();
        runs.push(run_subcarrier(&y, b, &nominal, dictionary, eta, config)?);
    }

    let center = grid.center_index();
    let run = &runs[center];
    let coarse = run.fit.coarse_direction;
    let snapshots = snapshot_block(&observation.received, center, config.refine.snapshots);
    let state = RefineState {
        beamformer: b,
        perturbation: &run.perturbation,
        effective: &run.effective,
        sigma: &run.fit.state.sigma,
        noise_var: run.fit.state.noise_var,
        peak_index: run.fit.peak_index,
        grid_size: dictionary.grid_size,
    };
    let refined = refine_direction(coarse, &snapshots, &state, &config.refine).unwrap_or(coarse);
    let theta = refined.clamp(-1.0, 1.0);

    let m_count = grid.n_subcarriers;
    let mut est_channel = CMat::zeros(nt, m_count);
    let mut est_support_gain = Vec::with_capacity(m_count);
    let mut est_beam_split = Vec::with_capacity(m_count);
    for (m, &eta) in ratios.iter().enumerate() {
        let c = perturbation_from_split(nt, (eta - 1.0) * theta);
        est_beam_split.push(beam_split_from_c(&c)?);
        let a = CVec::from_vec(phase_ramp(nt, eta * theta));
        let g = b * &a;
        let gn = g.norm_squared();
        let y = observation.received.column(m);
        let x = if gn > 0.0 {
            g.dotc(&y) / gn
        } else {
            Complex64::new(0.0, 0.0)
        };
        est_support_gain.push(x);
        est_channel.column_mut(m).copy_from(&(a * x));
    }

    let iterations = runs.iter().map(|r| r.fit.state.iter).max().unwrap_or(0);
    let converged = runs.iter().all(|r| r.fit.converged);
    Ok(SbceResult {
        est_direction_sine: theta,
        coarse_direction_sine: coarse,
        est_beam_split,
        est_support_gain,
        est_channel,
        iterations,
        converged,
        subcarriers: runs.into_iter().map(|r| r.fit).collect(),
    })
}

/// Columns centered on `center`, `count` wide, clipped to the available range.
fn snapshot_block(received: &CMat, center: usize, count: usize) -> CMat {
    let m = received.ncols();
    let count = count.clamp(1, m);
    let start = center.saturating_sub((count - 1) / 2).min(m - count);
    received.columns(start, count).into_owned()
}
