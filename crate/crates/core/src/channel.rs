//! Synthetic wideband channels, pilot beamformers and noisy pilot observations.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array::{phase_ramp, steering_near, ArrayConfig, Direction, NearFieldMode, SubcarrierGrid};
use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Maximum path delay drawn by the sampler, in seconds.
pub const MAX_DELAY_S: f64 = 20e-9;
/// Power of each NLoS path relative to the LoS path, in dB.
pub const NLOS_REL_DB: f64 = -10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: Complex64,
    pub delay_s: f64,
    pub direction: Direction,
    pub range_m: Option<f64>,
    pub is_los: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scenario {
    #[default]
    Far,
    /// Spherical wavefront. Without a fixed range, ranges are drawn uniformly
    /// between 10% and 100% of the Fraunhofer distance.
    Near {
        range_m: Option<f64>,
        #[serde(default)]
        mode: NearFieldMode,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub paths: Vec<PathParams>,
    pub per_subcarrier: CMat,
    pub grid: SubcarrierGrid,
    pub config: ArrayConfig,
    #[serde(default)]
    pub near_mode: NearFieldMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotObservation {
    pub beamformer: CMat,
    pub received: CMat,
    pub noise_var: f64,
    pub seed: u64,
}

impl PilotObservation {
    pub fn n_pilots(&self) -> usize {
        self.beamformer.nrows()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.received.ncols()
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Circularly symmetric complex Gaussian with total variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Draws path parameters from the default prior.
pub fn sample_paths<R: Rng + ?Sized>(
    config: &ArrayConfig,
    n_paths: usize,
    scenario: Scenario,
    rng: &mut R,
) -> Result<Vec<PathParams>> {
    if n_paths == 0 {
        return Err(Error::Config("need at least one path".into()));
    }
    let nlos_amp = 10f64.powf(NLOS_REL_DB / 20.0);
    let fraunhofer = config.fraunhofer_distance();
    (0..n_paths)
        .map(|l| {
            let angle = rng.random_range(-PI / 2.0..=PI / 2.0);
            let amp = if l == 0 { 1.0 } else { nlos_amp };
            let phase = rng.random_range(-PI..PI);
            let delay_s = rng.random_range(0.0..=MAX_DELAY_S);
            let range_m = match scenario {
                Scenario::Far => None,
                Scenario::Near { range_m: Some(r), .. } => Some(r),
                Scenario::Near { range_m: None, .. } => Some(rng.random_range(0.1 * fraunhofer..=fraunhofer)),
            };
            Ok(PathParams {
                gain: Complex64::from_polar(amp, phase),
                delay_s,
                direction: Direction::from_angle(angle)?,
                range_m,
                is_los: l == 0,
            })
        })
        .collect()
}

/// Evaluates the per-subcarrier channel matrix from explicit path parameters.
pub fn channel_matrix(
    config: &ArrayConfig,
    grid: &SubcarrierGrid,
    paths: &[PathParams],
    near_mode: NearFieldMode,
) -> Result<CMat> {
    let nt = config.n_antennas;
    let scale = (nt as f64 / paths.len().max(1) as f64).sqrt();
    let mut h = CMat::zeros(nt, grid.n_subcarriers);
    for (m, &f) in grid.frequencies.iter().enumerate() {
        for p in paths {
            let a = match p.range_m {
                None => phase_ramp(nt, f / config.carrier_freq_hz * p.direction.sine),
                Some(r) => steering_near(config, p.direction.sine, r, f, near_mode)?,
            };
            let w = p.gain * Complex64::from_polar(scale, -2.0 * PI * p.delay_s * f);
            for (i, ai) in a.iter().enumerate() {
                h[(i, m)] += w * ai;
            }
        }
    }
    Ok(h)
}

pub fn gen_channel(
    config: &ArrayConfig,
    grid: &SubcarrierGrid,
    n_paths: usize,
    scenario: Scenario,
    rng_seed: u64,
) -> Result<ChannelRealization> {
    gen_channel_with(config, grid, n_paths, scenario, &mut rng_from_seed(rng_seed))
}

pub fn gen_channel_with<R: Rng + ?Sized>(
    config: &ArrayConfig,
    grid: &SubcarrierGrid,
    n_paths: usize,
    scenario: Scenario,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let paths = sample_paths(config, n_paths, scenario, rng)?;
    let near_mode = match scenario {
        Scenario::Near { mode, .. } => mode,
        Scenario::Far => NearFieldMode::default(),
    };
    let per_subcarrier = channel_matrix(config, grid, &paths, near_mode)?;
    Ok(ChannelRealization {
        paths,
        per_subcarrier,
        grid: grid.clone(),
        config: *config,
        near_mode,
    })
}

impl ChannelRealization {
    /// Recomputes the channel from the stored paths.
    pub fn regenerate(&self) -> Result<CMat> {
        channel_matrix(&self.config, &self.grid, &self.paths, self.near_mode)
    }
}

pub fn gen_pilot_matrix(config: &ArrayConfig, n_pilots: usize, rng_seed: u64) -> Result<CMat> {
    gen_pilot_matrix_with(config, n_pilots, &mut rng_from_seed(rng_seed))
}

pub fn gen_pilot_matrix_with<R: Rng + ?Sized>(config: &ArrayConfig, n_pilots: usize, rng: &mut R) -> Result<CMat> {
    if n_pilots == 0 {
        return Err(Error::Config("need at least one pilot".into()));
    }
    let g = 1.0 / (config.n_antennas as f64).sqrt();
    let mut b = CMat::zeros(n_pilots, config.n_antennas);
    // Filled row by row so the sequence does not depend on storage order.
    for i in 0..n_pilots {
        for j in 0..config.n_antennas {
            let phi: f64 = rng.random_range(-1.0..1.0);
            b[(i, j)] = Complex64::from_polar(g, phi);
        }
    }
    Ok(b)
}

/// Noise variance that yields the requested average per-subcarrier SNR.
pub fn noise_var_for_snr(channel: &CMat, beamformer: &CMat, snr_db: f64) -> Result<f64> {
    check_cols(beamformer, channel)?;
    let bh = beamformer * channel;
    let p = beamformer.nrows() as f64;
    let m = channel.ncols().max(1) as f64;
    let signal: f64 = bh.iter().map(|x| x.norm_sqr()).sum::<f64>() / m;
    Ok(signal / (p * 10f64.powf(snr_db / 10.0)))
}

fn check_cols(beamformer: &CMat, channel: &CMat) -> Result<()> {
    if beamformer.ncols() != channel.nrows() {
        return Err(Error::DimensionMismatch {
            what: "beamformer columns",
            expected: channel.nrows(),
            found: beamformer.ncols(),
        });
    }
    Ok(())
}

pub fn observe(
    channel: &ChannelRealization,
    beamformer: &CMat,
    snr_db: f64,
    rng_seed: u64,
) -> Result<PilotObservation> {
    let nv = noise_var_for_snr(&channel.per_subcarrier, beamformer, snr_db)?;
    observe_with_noise_var(&channel.per_subcarrier, beamformer, nv, rng_seed)
}

pub fn observe_with_noise_var(
    channel: &CMat,
    beamformer: &CMat,
    noise_var: f64,
    rng_seed: u64,
) -> Result<PilotObservation> {
    check_cols(beamformer, channel)?;
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::Config(format!("noise variance {noise_var} is invalid")));
    }
    let mut rng = rng_from_seed(rng_seed);
    let mut received = beamformer * channel;
    if noise_var > 0.0 {
        for m in 0..received.ncols() {
            for p in 0..received.nrows() {
                received[(p, m)] += complex_gaussian(&mut rng, noise_var);
            }
        }
    }
    Ok(PilotObservation {
        beamformer: beamformer.clone(),
        received,
        noise_var,
        seed: rng_seed,
    })
}
