//! Experiment configuration, presets and flat key-value config files.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::array::{build_dictionary, ArrayConfig, Dictionary, NearFieldMode, SubcarrierGrid};
use crate::channel::Scenario;
use crate::error::{Error, Result};
use crate::sbce::{NoiseDivisor, SbceConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Sbce,
    Ls,
    Mmse,
    /// Greedy pursuit with one support shared across subcarriers.
    Omp,
    /// Greedy pursuit run separately on each subcarrier.
    OmpSc,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Sbce => "sbce",
            Estimator::Ls => "ls",
            Estimator::Mmse => "mmse",
            Estimator::Omp => "omp",
            Estimator::OmpSc => "omp-sc",
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sbce" => Ok(Estimator::Sbce),
            "ls" => Ok(Estimator::Ls),
            "mmse" | "lmmse" => Ok(Estimator::Mmse),
            "omp" => Ok(Estimator::Omp),
            "omp-sc" => Ok(Estimator::OmpSc),
            other => Err(Error::Config(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Values in dB.
    Snr,
    /// Values in Hz.
    Bandwidth,
    /// Values in m; forces the spherical-wavefront channel.
    Range,
    None,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr_db",
            SweepAxis::Bandwidth => "bandwidth_hz",
            SweepAxis::Range => "range_m",
            SweepAxis::None => "none",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "snr" => Ok(SweepAxis::Snr),
            "bandwidth" => Ok(SweepAxis::Bandwidth),
            "range" => Ok(SweepAxis::Range),
            "none" => Ok(SweepAxis::None),
            other => Err(Error::Config(format!("unknown sweep axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Far,
    Near,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_antennas: usize,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub n_subcarriers: usize,
    pub n_pilots: usize,
    pub grid_size: usize,
    pub n_paths: usize,
    pub n_users: usize,
    pub trials: usize,
    pub seed: u64,
    /// SNR used when the sweep axis is not SNR.
    pub snr_db: f64,
    pub sweep: SweepAxis,
    pub values: Vec<f64>,
    pub estimators: Vec<Estimator>,
    pub scenario: ScenarioKind,
    /// Fixed range for the spherical-wavefront channel; drawn per path when absent.
    pub range_m: Option<f64>,
    pub near_mode: NearFieldMode,
    pub output_path: Option<PathBuf>,
    pub threads: Option<usize>,
    pub max_iters: usize,
    pub convergence_tol: f64,
    pub noise_var_divisor: NoiseDivisor,
    pub exclusion_radius: usize,
    pub mmse_draws: usize,
    /// Fraction of failed trials above which a row is flagged.
    pub failure_threshold: f64,
}

impl ExperimentConfig {
    pub fn preset(p: Preset) -> Self {
        let desk = Self {
            n_antennas: 64,
            carrier_freq_hz: 300e9,
            bandwidth_hz: 30e9,
            n_subcarriers: 8,
            n_pilots: 16,
            grid_size: 512,
            n_paths: 1,
            n_users: 1,
            trials: 100,
            seed: 1,
            snr_db: 20.0,
            sweep: SweepAxis::Snr,
            values: vec![0.0, 10.0, 20.0, 30.0],
            estimators: vec![Estimator::Sbce, Estimator::Ls, Estimator::Omp, Estimator::Mmse],
            scenario: ScenarioKind::Far,
            range_m: None,
            near_mode: NearFieldMode::Taylor,
            output_path: None,
            threads: None,
            max_iters: 200,
            convergence_tol: 1e-3,
            noise_var_divisor: NoiseDivisor::Pilots,
            exclusion_radius: 2,
            mmse_draws: 10_000,
            failure_threshold: 0.2,
        };
        match p {
            Preset::Desk => desk,
            Preset::Paper => Self {
                n_antennas: 256,
                n_subcarriers: 128,
                n_pilots: 32,
                grid_size: 2048,
                n_users: 8,
                ..desk
            },
        }
    }

    /// Applies a flat TOML document on top of `self`; keys not present keep their value.
    pub fn merge_toml(&self, text: &str) -> Result<Self> {
        let patch: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut base = match toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))? {
            toml::Value::Table(t) => t,
            _ => return Err(Error::Config("configuration did not serialize to a table".into())),
        };
        for (k, v) in patch {
            if k == "preset" {
                continue;
            }
            base.insert(k, v);
        }
        let merged: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        merged.validate()?;
        Ok(merged)
    }

    /// Reads the optional `preset` key of a config document.
    pub fn preset_in_toml(text: &str) -> Result<Option<Preset>> {
        let t: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        match t.get("preset") {
            Some(toml::Value::String(s)) => Ok(Some(s.parse()?)),
            Some(_) => Err(Error::Config("preset must be a string".into())),
            None => Ok(None),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_antennas < 2 {
            return bad("n_antennas must be at least 2");
        }
        if self.grid_size < self.n_antennas {
            return bad("grid_size must be at least n_antennas");
        }
        if self.n_subcarriers == 0 || self.n_pilots == 0 || self.n_paths == 0 || self.n_users == 0 {
            return bad("counts must be positive");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.sweep != SweepAxis::None && self.values.is_empty() {
            return bad("sweep values must not be empty");
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return bad("sweep values must be finite");
        }
        if self.sweep == SweepAxis::Range && self.values.iter().any(|v| *v <= 0.0) {
            return bad("ranges must be positive");
        }
        if self.sweep == SweepAxis::Bandwidth && self.values.iter().any(|v| *v < 0.0) {
            return bad("bandwidths must be nonnegative");
        }
        if self.estimators.is_empty() {
            return bad("at least one estimator is required");
        }
        if !(self.carrier_freq_hz > 0.0) || !(self.bandwidth_hz >= 0.0) {
            return bad("frequencies must be positive");
        }
        if self.max_iters == 0 || !(self.convergence_tol > 0.0) {
            return bad("max_iters and convergence_tol must be positive");
        }
        if self.threads == Some(0) {
            return bad("threads must be positive");
        }
        Ok(())
    }

    pub fn array(&self) -> Result<ArrayConfig> {
        ArrayConfig::half_wavelength(self.n_antennas, self.carrier_freq_hz)
    }

    pub fn dictionary(&self) -> Result<Dictionary> {
        build_dictionary(&self.array()?, self.grid_size)
    }

    pub fn sbce_config(&self) -> SbceConfig {
        let mut c = SbceConfig {
            max_iters: self.max_iters,
            convergence_tol: self.convergence_tol,
            noise_var_divisor: self.noise_var_divisor,
            ..SbceConfig::default()
        };
        c.refine.exclusion_radius = self.exclusion_radius;
        c
    }

    /// Sweep points; a single point at the base SNR when not sweeping.
    pub fn points(&self) -> Vec<f64> {
        match self.sweep {
            SweepAxis::None => vec![self.snr_db],
            _ => self.values.clone(),
        }
    }

    /// Physical settings of one sweep point.
    pub fn point(&self, value: f64) -> Result<PointSettings> {
        let mut snr_db = self.snr_db;
        let mut bandwidth = self.bandwidth_hz;
        let mut scenario = match self.scenario {
            ScenarioKind::Far => Scenario::Far,
            ScenarioKind::Near => Scenario::Near {
                range_m: self.range_m,
                mode: self.near_mode,
            },
        };
        match self.sweep {
            SweepAxis::Snr | SweepAxis::None => snr_db = value,
            SweepAxis::Bandwidth => bandwidth = value,
            SweepAxis::Range => {
                scenario = Scenario::Near {
                    range_m: Some(value),
                    mode: self.near_mode,
                }
            }
        }
        Ok(PointSettings {
            snr_db,
            grid: SubcarrierGrid::new(self.n_subcarriers, bandwidth, self.carrier_freq_hz)?,
            scenario,
        })
    }
}

#[derive(Debug, Clone)]
pub struct PointSettings {
    pub snr_db: f64,
    pub grid: SubcarrierGrid,
    pub scenario: Scenario,
}
