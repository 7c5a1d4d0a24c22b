//! Uniform linear array geometry: steering vectors, beam-split mappings and the
//! overcomplete direction dictionary.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Speed of light in m/s.
pub const C0: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub n_antennas: usize,
    pub carrier_freq_hz: f64,
    pub element_spacing_m: f64,
}

impl ArrayConfig {
    /// Half-wavelength ULA at the carrier.
    pub fn half_wavelength(n_antennas: usize, carrier_freq_hz: f64) -> Result<Self> {
        if n_antennas < 2 {
            return Err(Error::Config(format!("need at least 2 antennas, got {n_antennas}")));
        }
        if !(carrier_freq_hz > 0.0 && carrier_freq_hz.is_finite()) {
            return Err(Error::Config(format!(
                "carrier frequency {carrier_freq_hz} must be positive"
            )));
        }
        Ok(Self {
            n_antennas,
            carrier_freq_hz,
            element_spacing_m: C0 / (2.0 * carrier_freq_hz),
        })
    }

    /// Physical aperture (N_T - 1) d.
    pub fn aperture_m(&self) -> f64 {
        (self.n_antennas - 1) as f64 * self.element_spacing_m
    }

    pub fn fraunhofer_distance(&self) -> f64 {
        fraunhofer_distance(self.aperture_m(), self.carrier_freq_hz)
    }

    fn norm(&self) -> f64 {
        1.0 / (self.n_antennas as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcarrierGrid {
    pub n_subcarriers: usize,
    pub bandwidth_hz: f64,
    pub carrier_freq_hz: f64,
    pub frequencies: Vec<f64>,
}

impl SubcarrierGrid {
    pub fn new(n_subcarriers: usize, bandwidth_hz: f64, carrier_freq_hz: f64) -> Result<Self> {
        if n_subcarriers == 0 {
            return Err(Error::Config("need at least one subcarrier".into()));
        }
        if !(bandwidth_hz >= 0.0 && carrier_freq_hz > 0.0) {
            return Err(Error::Config("bandwidth and carrier must be positive".into()));
        }
        let m = n_subcarriers as f64;
        let step = bandwidth_hz / m;
        let frequencies = (0..n_subcarriers)
            .map(|k| carrier_freq_hz + step * (k as f64 - (m - 1.0) / 2.0))
            .collect();
        Ok(Self {
            n_subcarriers,
            bandwidth_hz,
            carrier_freq_hz,
            frequencies,
        })
    }

    /// Ratio f_m / f_c for every subcarrier.
    pub fn ratios(&self) -> Vec<f64> {
        self.frequencies.iter().map(|f| f / self.carrier_freq_hz).collect()
    }

    /// Subcarrier closest to the carrier; ties go to the lower index.
    pub fn center_index(&self) -> usize {
        let mut best = 0;
        for (k, f) in self.frequencies.iter().enumerate() {
            let d = (f - self.carrier_freq_hz).abs();
            if d < (self.frequencies[best] - self.carrier_freq_hz).abs() - 1e-9 {
                best = k;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub angle_rad: f64,
    pub sine: f64,
}

impl Direction {
    pub fn from_angle(angle_rad: f64) -> Result<Self> {
        if !(angle_rad.abs() <= PI / 2.0) {
            return Err(Error::InvalidDirection(angle_rad));
        }
        Ok(Self {
            angle_rad,
            sine: angle_rad.sin(),
        })
    }

    pub fn from_sine(sine: f64) -> Result<Self> {
        check_sine(sine)?;
        Ok(Self {
            angle_rad: sine.asin(),
            sine,
        })
    }
}

fn check_sine(s: f64) -> Result<()> {
    if s.abs() <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidDirection(s))
    }
}

fn check_range(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidRange(r))
    }
}

/// Far-field steering vector with the frequency-dependent phase slope.
pub fn steering_far(config: &ArrayConfig, sine_dir: f64, freq_hz: f64) -> Result<Vec<Complex64>> {
    check_sine(sine_dir)?;
    Ok(phase_ramp(
        config.n_antennas,
        freq_hz / config.carrier_freq_hz * sine_dir,
    ))
}

/// Unit-norm vector with entries exp(j pi i s) / sqrt(n), i = 0..n-1.
///
/// No range check on `s`, so it doubles as the perturbed steering a(theta + delta)
/// whose argument may leave [-1, 1].
pub fn phase_ramp(n: usize, s: f64) -> Vec<Complex64> {
    let g = 1.0 / (n as f64).sqrt();
    (0..n).map(|i| Complex64::from_polar(g, PI * i as f64 * s)).collect()
}

pub fn spatial_direction(sine_dir: f64, freq_hz: f64, carrier_hz: f64) -> f64 {
    freq_hz / carrier_hz * sine_dir
}

pub fn beam_split_far(sine_dir: f64, freq_hz: f64, carrier_hz: f64) -> f64 {
    (freq_hz / carrier_hz - 1.0) * sine_dir
}

/// Normalized Dirichlet kernel |sin(N pi a) / (N sin(pi a))|^2.
pub fn dirichlet_gain(n: usize, a: f64) -> f64 {
    let frac = a - a.round();
    if frac.abs() < 1e-12 {
        return 1.0;
    }
    let nf = n as f64;
    let v = (nf * PI * a).sin() / (nf * (PI * a).sin());
    v * v
}

/// Beamforming gain of a beam steered to `spatial_sine` at the carrier when the
/// user sits at `phys_sine` and the signal is at `freq_hz`.
pub fn array_gain(config: &ArrayConfig, phys_sine: f64, spatial_sine: f64, freq_hz: f64) -> Result<f64> {
    check_sine(phys_sine)?;
    check_sine(spatial_sine)?;
    let a = config.element_spacing_m * (config.carrier_freq_hz * spatial_sine - freq_hz * phys_sine) / C0;
    Ok(dirichlet_gain(config.n_antennas, a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NearFieldMode {
    Exact,
    #[default]
    Taylor,
}

/// Distance from antenna `i` (0-based) to a source at range `r` and sine `s`.
pub fn element_distance(config: &ArrayConfig, sine_dir: f64, range_m: f64, i: usize, mode: NearFieldMode) -> f64 {
    range_m + path_offset(config, sine_dir, range_m, i, mode)
}

/// Extra path length relative to the first antenna, computed without cancellation.
fn path_offset(config: &ArrayConfig, sine_dir: f64, range_m: f64, i: usize, mode: NearFieldMode) -> f64 {
    let x = i as f64 * config.element_spacing_m;
    match mode {
        NearFieldMode::Exact => {
            // r (sqrt(1 + u) - 1) rewritten as r u / (sqrt(1 + u) + 1)
            let u = (x / range_m).powi(2) - 2.0 * x * sine_dir / range_m;
            range_m * u / ((1.0 + u).sqrt() + 1.0)
        }
        NearFieldMode::Taylor => {
            let cos2 = 1.0 - sine_dir * sine_dir;
            -x * sine_dir + x * x * cos2 / (2.0 * range_m)
        }
    }
}

/// Spherical-wavefront steering vector referenced to the first antenna.
pub fn steering_near(
    config: &ArrayConfig,
    sine_dir: f64,
    range_m: f64,
    freq_hz: f64,
    mode: NearFieldMode,
) -> Result<Vec<Complex64>> {
    check_sine(sine_dir)?;
    check_range(range_m)?;
    let g = config.norm();
    let k = 2.0 * PI * freq_hz / C0;
    Ok((0..config.n_antennas)
        .map(|i| {
            let d = path_offset(config, sine_dir, range_m, i, mode);
            Complex64::from_polar(g, -k * d)
        })
        .collect())
}

fn near_correction(angle_rad: f64, range_m: f64, freq_hz: f64, carrier_hz: f64, antenna_index: usize) -> f64 {
    let c = angle_rad.cos();
    freq_hz * C0 * (antenna_index as f64 - 1.0) * c * c / (4.0 * carrier_hz * carrier_hz * range_m)
}

fn check_antenna(antenna_index: usize) -> Result<()> {
    if antenna_index == 0 {
        return Err(Error::Config("antenna index is 1-based".into()));
    }
    Ok(())
}

/// Range-dependent spatial direction seen by antenna `antenna_index` (1-based).
pub fn near_field_spatial_direction(
    sine_dir: f64,
    angle_rad: f64,
    range_m: f64,
    freq_hz: f64,
    carrier_hz: f64,
    antenna_index: usize,
) -> Result<f64> {
    check_range(range_m)?;
    check_antenna(antenna_index)?;
    Ok(freq_hz / carrier_hz * sine_dir - near_correction(angle_rad, range_m, freq_hz, carrier_hz, antenna_index))
}

pub fn beam_split_near(
    sine_dir: f64,
    angle_rad: f64,
    range_m: f64,
    freq_hz: f64,
    carrier_hz: f64,
    antenna_index: usize,
) -> Result<f64> {
    check_range(range_m)?;
    check_antenna(antenna_index)?;
    Ok((freq_hz / carrier_hz - 1.0) * sine_dir
        - near_correction(angle_rad, range_m, freq_hz, carrier_hz, antenna_index))
}

pub fn fraunhofer_distance(aperture_m: f64, carrier_hz: f64) -> f64 {
    2.0 * aperture_m * aperture_m * carrier_hz / C0
}

/// Overcomplete far-field dictionary on the grid (2n - N - 1) / N.
#[derive(Clone)]
pub struct Dictionary {
    pub grid_size: usize,
    pub grid_points: Vec<f64>,
    pub atoms: CMat,
    n_antennas: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Dictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dictionary")
            .field("grid_size", &self.grid_size)
            .field("n_antennas", &self.n_antennas)
            .finish()
    }
}

pub fn grid_point(grid_size: usize, n: usize) -> f64 {
    (2.0 * n as f64 + 1.0 - grid_size as f64) / grid_size as f64
}

pub fn build_dictionary(config: &ArrayConfig, grid_size: usize) -> Result<Dictionary> {
    if grid_size < config.n_antennas {
        return Err(Error::GridTooSmall {
            grid: grid_size,
            antennas: config.n_antennas,
        });
    }
    let grid_points: Vec<f64> = (0..grid_size).map(|n| grid_point(grid_size, n)).collect();
    let nt = config.n_antennas;
    let mut atoms = CMat::zeros(nt, grid_size);
    for (n, &phi) in grid_points.iter().enumerate() {
        atoms.column_mut(n).copy_from_slice(&phase_ramp(nt, phi));
    }
    let fft = FftPlanner::new().plan_fft_inverse(grid_size);
    Ok(Dictionary {
        grid_size,
        grid_points,
        atoms,
        n_antennas: nt,
        fft,
    })
}

impl Dictionary {
    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    /// Computes D^T w for a length-N_T weight vector, i.e. sum_i w_i [D]_{i,n}
    /// for every grid point, via one zero-padded FFT.
    pub fn transpose_apply(&self, w: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid_size;
        let g = 1.0 / (self.n_antennas as f64).sqrt();
        // phi_n = -1 + 1/N + 2n/N, so the n-independent part of the phase folds into w.
        let base = PI * (1.0 / n as f64 - 1.0);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (i, wi) in w.iter().enumerate() {
            buf[i] = wi * Complex64::from_polar(g, base * i as f64);
        }
        self.fft.process(&mut buf);
        buf
    }

    /// Computes M D for an arbitrary row count, one FFT per row of `m`.
    pub fn right_multiply(&self, m: &CMat) -> CMat {
        let mut out = CMat::zeros(m.nrows(), self.grid_size);
        let mut row = vec![Complex64::new(0.0, 0.0); m.ncols()];
        for r in 0..m.nrows() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = m[(r, k)];
            }
            let t = self.transpose_apply(&row);
            for (n, v) in t.into_iter().enumerate() {
                out[(r, n)] = v;
            }
        }
        out
    }

    /// Index of the grid point nearest to `sine`.
    pub fn nearest_index(&self, sine: f64) -> usize {
        let n = self.grid_size as f64;
        let k = ((sine * n + n - 1.0) / 2.0).round();
        k.clamp(0.0, n - 1.0) as usize
    }
}
