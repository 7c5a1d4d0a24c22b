//! Single-instance scenario files: one channel, one observation, replayable.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Estimator, ExperimentConfig};
use super::{derive_seed, metrics, unit_instance};
use crate::baselines::{
    ls_channel, mmse_estimate, omp_channel, omp_joint_channel, prior_covariance, SensingDictionary,
};
use crate::channel::{ChannelRealization, PilotObservation};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::sbce::run_sbce;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub version: u32,
    pub config: ExperimentConfig,
    pub snr_db: f64,
    pub channel: ChannelRealization,
    pub observation: PilotObservation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub estimator: String,
    pub nmse: f64,
    pub direction_sine: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
}

/// Draws trial 0, user 0 of the first sweep point.
pub fn generate(cfg: &ExperimentConfig) -> Result<ScenarioFile> {
    cfg.validate()?;
    let value = cfg.points()[0];
    let p = cfg.point(value)?;
    let (channel, observation) = unit_instance(cfg, &p.grid, p.scenario, p.snr_db, 0, 0)?;
    Ok(ScenarioFile {
        version: SCENARIO_VERSION,
        config: cfg.clone(),
        snr_db: p.snr_db,
        channel,
        observation,
    })
}

pub fn save(path: &Path, s: &ScenarioFile) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(s)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ScenarioFile> {
    let s: ScenarioFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if s.version != SCENARIO_VERSION {
        return Err(Error::Config(format!("unsupported scenario version {}", s.version)));
    }
    s.config.validate()?;
    Ok(s)
}

/// Runs each configured estimator on the stored observation.
pub fn run(s: &ScenarioFile) -> Result<Vec<ScenarioOutcome>> {
    let cfg = &s.config;
    let dict = cfg.dictionary()?;
    let grid = &s.channel.grid;
    let obs = &s.observation;
    let h = &s.channel.per_subcarrier;
    let sensing = SensingDictionary::new(&obs.beamformer, &dict);
    let score = |est: &CMat| metrics::nmse(std::slice::from_ref(h), std::slice::from_ref(est));
    let mut out = Vec::new();
    for &e in &cfg.estimators {
        let plain = |est: CMat| -> Result<ScenarioOutcome> {
            Ok(ScenarioOutcome {
                estimator: e.name().into(),
                nmse: score(&est)?,
                direction_sine: None,
                iterations: None,
                converged: None,
            })
        };
        let row = match e {
            Estimator::Sbce => {
                let r = run_sbce(obs, &dict, &cfg.sbce_config(), grid)?;
                ScenarioOutcome {
                    estimator: e.name().into(),
                    nmse: score(&r.est_channel)?,
                    direction_sine: Some(r.est_direction_sine),
                    iterations: Some(r.iterations),
                    converged: Some(r.converged),
                }
            }
            Estimator::Ls => plain(ls_channel(&obs.beamformer, &obs.received).est_channel)?,
            Estimator::Omp => plain(omp_joint_channel(&sensing, &obs.received, cfg.n_paths).est_channel)?,
            Estimator::OmpSc => plain(omp_channel(&sensing, &obs.received, cfg.n_paths).est_channel)?,
            Estimator::Mmse => {
                let mut est = CMat::zeros(h.nrows(), h.ncols());
                for (m, eta) in grid.ratios().into_iter().enumerate() {
                    let seed = derive_seed(cfg.seed, &[super::STREAM_PRIOR, m as u64]);
                    let prior = prior_covariance(cfg.n_antennas, cfg.n_paths, eta, cfg.mmse_draws, seed);
                    let y = obs.received.column(m).into_owned();
                    est.column_mut(m)
                        .copy_from(&mmse_estimate(&obs.beamformer, &y, &prior, obs.noise_var)?);
                }
                plain(est)?
            }
        };
        out.push(row);
    }
    Ok(out)
}
