//! Seeded Monte-Carlo sweeps over SNR, bandwidth or range.

pub mod config;
pub mod metrics;
pub mod scenario;
pub mod selftest;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{Dictionary, SubcarrierGrid};
use crate::baselines::{
    ls_channel, mmse_estimate, omp_channel, omp_joint_channel, prior_covariance, SensingDictionary,
};
use crate::channel::{
    gen_channel_with, gen_pilot_matrix_with, observe, rng_from_seed, ChannelRealization, PilotObservation,
};
use crate::crb::{crb, direction_std_deg, split_std_deg, CrbOptions, ParamVector};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::sbce::{run_sbce, SbceConfig};

pub use config::{Estimator, ExperimentConfig, Preset, ScenarioKind, SweepAxis};
use metrics::{median, sine_to_deg, split_to_deg};

/// SplitMix64 finalizer, used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a stream identified by a path of indices under the master seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

const STREAM_PILOTS: u64 = 1;
const STREAM_CHANNEL: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_PRIOR: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub sweep_value: f64,
    pub estimator: String,
    pub nmse: f64,
    pub nmse_median: f64,
    pub rmse_direction_deg: Option<f64>,
    pub rmse_split_deg: Option<f64>,
    pub crb_direction: Option<f64>,
    pub crb_split: Option<f64>,
    pub mean_iters: Option<f64>,
    pub converged_fraction: Option<f64>,
    pub trials: usize,
    pub failures: usize,
    pub flagged: bool,
    /// Per-(trial, user) NMSE values in trial order, NaN for failures.
    #[serde(skip)]
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct Outcome {
    nmse: f64,
    dir_err_deg: Option<f64>,
    split_err_deg: Vec<f64>,
    iters: Option<f64>,
    converged: Option<bool>,
}

#[derive(Debug, Clone)]
struct UnitResult {
    per_estimator: Vec<Option<Outcome>>,
    crb_dir: Option<f64>,
    crb_split: Vec<f64>,
}

/// Shared, read-only state for one sweep point.
struct PointContext<'a> {
    cfg: &'a ExperimentConfig,
    dict: &'a Dictionary,
    sbce: SbceConfig,
    grid: SubcarrierGrid,
    snr_db: f64,
    scenario: crate::channel::Scenario,
    priors: Option<Vec<CMat>>,
}

/// Generates the channel and observation of one (trial, user) unit.
pub fn unit_instance(
    cfg: &ExperimentConfig,
    grid: &SubcarrierGrid,
    scenario: crate::channel::Scenario,
    snr_db: f64,
    trial: usize,
    user: usize,
) -> Result<(ChannelRealization, PilotObservation)> {
    let array = cfg.array()?;
    let b = gen_pilot_matrix_with(
        &array,
        cfg.n_pilots,
        &mut rng_from_seed(derive_seed(cfg.seed, &[STREAM_PILOTS, trial as u64])),
    )?;
    let mut crng = rng_from_seed(derive_seed(cfg.seed, &[STREAM_CHANNEL, trial as u64, user as u64]));
    let channel = gen_channel_with(&array, grid, cfg.n_paths, scenario, &mut crng)?;
    let noise_seed = derive_seed(cfg.seed, &[STREAM_NOISE, trial as u64, user as u64]);
    let obs = observe(&channel, &b, snr_db, noise_seed)?;
    Ok((channel, obs))
}

fn nmse_of(h: &CMat, est: &CMat) -> Result<f64> {
    metrics::nmse(std::slice::from_ref(h), std::slice::from_ref(est))
}

fn run_estimator(
    ctx: &PointContext<'_>,
    est: Estimator,
    channel: &ChannelRealization,
    obs: &PilotObservation,
    sensing: &SensingDictionary,
) -> Result<Outcome> {
    let h = &channel.per_subcarrier;
    let b = &obs.beamformer;
    let y = &obs.received;
    match est {
        Estimator::Sbce => {
            let r = run_sbce(obs, ctx.dict, &ctx.sbce, &ctx.grid)?;
            let los = &channel.paths[0];
            let s = los.direction.sine;
            let s_hat = r.est_direction_sine;
            let split_err = ctx
                .grid
                .ratios()
                .iter()
                .zip(&r.est_beam_split)
                .map(|(eta, d_hat)| split_to_deg(s_hat, *d_hat) - split_to_deg(s, (eta - 1.0) * s))
                .collect();
            Ok(Outcome {
                nmse: nmse_of(h, &r.est_channel)?,
                dir_err_deg: Some(sine_to_deg(s_hat) - los.direction.angle_rad.to_degrees()),
                split_err_deg: split_err,
                iters: Some(r.mean_iterations()),
                converged: Some(r.converged),
            })
        }
        Estimator::Ls => Ok(Outcome {
            nmse: nmse_of(h, &ls_channel(b, y).est_channel)?,
            ..Outcome::default()
        }),
        Estimator::Omp => Ok(Outcome {
            nmse: nmse_of(h, &omp_joint_channel(sensing, y, ctx.cfg.n_paths).est_channel)?,
            ..Outcome::default()
        }),
        Estimator::OmpSc => Ok(Outcome {
            nmse: nmse_of(h, &omp_channel(sensing, y, ctx.cfg.n_paths).est_channel)?,
            ..Outcome::default()
        }),
        Estimator::Mmse => {
            let priors = ctx
                .priors
                .as_ref()
                .ok_or_else(|| Error::Config("missing prior".into()))?;
            let mut est = CMat::zeros(h.nrows(), h.ncols());
            for (m, prior) in priors.iter().enumerate() {
                let col = mmse_estimate(b, &y.column(m).into_owned(), prior, obs.noise_var)?;
                est.column_mut(m).copy_from(&col);
            }
            Ok(Outcome {
                nmse: nmse_of(h, &est)?,
                ..Outcome::default()
            })
        }
    }
}

#[derive(Debug, Clone, Default)]
struct UnitBounds {
    /// Direction bound in deg^2 at the center subcarrier.
    dir: Option<f64>,
    /// Split variance in deg^2, one per subcarrier.
    splits: Vec<f64>,
    /// Range variance in m^2 at the center subcarrier, near field only.
    range: Option<f64>,
}

/// Bounds on the LoS path evaluated at the true parameters.
fn unit_bounds(
    cfg: &ExperimentConfig,
    grid: &SubcarrierGrid,
    channel: &ChannelRealization,
    obs: &PilotObservation,
) -> UnitBounds {
    let mut out = UnitBounds::default();
    let Ok(array) = cfg.array() else { return out };
    if !(obs.noise_var > 0.0) {
        return out;
    }
    let l = channel.paths.len();
    let nt = array.n_antennas as f64;
    let powers: Vec<f64> = channel
        .paths
        .iter()
        .map(|p| nt * p.gain.norm_sqr() / l as f64)
        .collect();
    let angles: Vec<f64> = channel.paths.iter().map(|p| p.direction.angle_rad).collect();
    let ranges: Option<Vec<f64>> = channel.paths.iter().map(|p| p.range_m).collect();
    let center = grid.center_index();
    let s = channel.paths[0].direction.sine;
    for (m, &f) in grid.frequencies.iter().enumerate() {
        let eta = f / array.carrier_freq_hz;
        let sp: Vec<f64> = channel.paths.iter().map(|p| (eta - 1.0) * p.direction.sine).collect();
        let params = match &ranges {
            Some(r) => ParamVector::near(angles.clone(), sp.clone(), r.clone()),
            None => ParamVector::far(angles.clone(), sp.clone()),
        };
        let Ok(rep) = crb(
            &array,
            &params,
            &obs.beamformer,
            &powers,
            obs.noise_var,
            f,
            m,
            CrbOptions::default(),
        ) else {
            continue;
        };
        out.splits.push(split_std_deg(rep.split(0, l), s, sp[0]).powi(2));
        if m == center {
            out.dir = Some(direction_std_deg(rep.direction(0), angles[0]).powi(2));
            out.range = rep.range(0, l);
        }
    }
    out
}

fn run_unit(ctx: &PointContext<'_>, trial: usize, user: usize) -> UnitResult {
    let n_est = ctx.cfg.estimators.len();
    let Ok((channel, obs)) = unit_instance(ctx.cfg, &ctx.grid, ctx.scenario, ctx.snr_db, trial, user) else {
        return UnitResult {
            per_estimator: vec![None; n_est],
            crb_dir: None,
            crb_split: Vec::new(),
        };
    };
    let sensing = SensingDictionary::new(&obs.beamformer, ctx.dict);
    let per_estimator = ctx
        .cfg
        .estimators
        .iter()
        .map(|&e| run_estimator(ctx, e, &channel, &obs, &sensing).ok())
        .collect();
    let b = unit_bounds(ctx.cfg, &ctx.grid, &channel, &obs);
    UnitResult {
        per_estimator,
        crb_dir: b.dir,
        crb_split: b.splits,
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn aggregate(cfg: &ExperimentConfig, value: f64, units: &[UnitResult]) -> Vec<MetricRecord> {
    let crb_dir: Vec<f64> = units.iter().filter_map(|u| u.crb_dir).collect();
    let crb_split: Vec<f64> = units.iter().flat_map(|u| u.crb_split.iter().cloned()).collect();
    let crb_dir = (!crb_dir.is_empty()).then(|| mean(&crb_dir).sqrt());
    let crb_split = (!crb_split.is_empty()).then(|| mean(&crb_split).sqrt());
    cfg.estimators
        .iter()
        .enumerate()
        .map(|(k, est)| {
            let outcomes: Vec<Option<&Outcome>> = units.iter().map(|u| u.per_estimator[k].as_ref()).collect();
            let samples: Vec<f64> = outcomes.iter().map(|o| o.map_or(f64::NAN, |o| o.nmse)).collect();
            let ok: Vec<&Outcome> = outcomes.iter().flatten().cloned().collect();
            let failures = units.len() - ok.len();
            let finite: Vec<f64> = ok.iter().map(|o| o.nmse).collect();
            let dir: Vec<f64> = ok.iter().filter_map(|o| o.dir_err_deg).map(|e| e * e).collect();
            let split: Vec<f64> = ok.iter().flat_map(|o| o.split_err_deg.iter()).map(|e| e * e).collect();
            let iters: Vec<f64> = ok.iter().filter_map(|o| o.iters).collect();
            let conv: Vec<f64> = ok
                .iter()
                .filter_map(|o| o.converged)
                .map(|c| if c { 1.0 } else { 0.0 })
                .collect();
            MetricRecord {
                sweep_value: value,
                estimator: est.name().to_string(),
                nmse: mean(&finite),
                nmse_median: median(&finite),
                rmse_direction_deg: (!dir.is_empty()).then(|| mean(&dir).sqrt()),
                rmse_split_deg: (!split.is_empty()).then(|| mean(&split).sqrt()),
                crb_direction: crb_dir,
                crb_split,
                mean_iters: (!iters.is_empty()).then(|| mean(&iters)),
                converged_fraction: (!conv.is_empty()).then(|| mean(&conv)),
                trials: units.len(),
                failures,
                flagged: failures as f64 > cfg.failure_threshold * units.len() as f64,
                samples,
            }
        })
        .collect()
}

/// Prior covariance per subcarrier for the LMMSE baseline.
fn priors_for(cfg: &ExperimentConfig, grid: &SubcarrierGrid) -> Vec<CMat> {
    grid.ratios()
        .iter()
        .enumerate()
        .map(|(m, &eta)| {
            let seed = derive_seed(cfg.seed, &[STREAM_PRIOR, m as u64]);
            prior_covariance(cfg.n_antennas, cfg.n_paths, eta, cfg.mmse_draws, seed)
        })
        .collect()
}

fn sweep_inner(cfg: &ExperimentConfig) -> Result<Vec<MetricRecord>> {
    let dict = cfg.dictionary()?;
    let mut out = Vec::new();
    for value in cfg.points() {
        let settings = cfg.point(value)?;
        let priors = cfg
            .estimators
            .contains(&Estimator::Mmse)
            .then(|| priors_for(cfg, &settings.grid));
        let ctx = PointContext {
            cfg,
            dict: &dict,
            sbce: cfg.sbce_config(),
            grid: settings.grid,
            snr_db: settings.snr_db,
            scenario: settings.scenario,
            priors,
        };
        let units: Vec<(usize, usize)> = (0..cfg.trials)
            .flat_map(|t| (0..cfg.n_users).map(move |k| (t, k)))
            .collect();
        let results: Vec<UnitResult> = units.par_iter().map(|&(t, k)| run_unit(&ctx, t, k)).collect();
        out.extend(aggregate(cfg, value, &results));
    }
    Ok(out)
}

/// Runs the sweep, honoring the configured thread count.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<MetricRecord>> {
    cfg.validate()?;
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| sweep_inner(cfg)),
        None => sweep_inner(cfg),
    }
}

pub const CSV_HEADER: &str = "sweep_axis,sweep_value,estimator,nmse,nmse_median,rmse_dir_deg,rmse_split_deg,crb_dir,crb_split,mean_iters,converged_frac,trials,failures,flagged";

/// Conversion note written above the column header.
pub const CSV_NOTE: &str = "# angles in degrees; direction error = asin(est) - true angle; split angle = asin(sine + split) - asin(sine); crb columns are standard deviations in degrees";

fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn to_csv(cfg: &ExperimentConfig, records: &[MetricRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CSV_NOTE}");
    let _ = writeln!(s, "{CSV_HEADER}");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            cfg.sweep.name(),
            num(r.sweep_value),
            r.estimator,
            num(r.nmse),
            num(r.nmse_median),
            opt(r.rmse_direction_deg),
            opt(r.rmse_split_deg),
            opt(r.crb_direction),
            opt(r.crb_split),
            opt(r.mean_iters),
            opt(r.converged_fraction),
            r.trials,
            r.failures,
            r.flagged,
        );
    }
    s
}

pub fn write_csv(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub sweep_value: f64,
    pub crb_dir: f64,
    pub crb_split: f64,
    pub crb_range: Option<f64>,
    pub trials: usize,
}

/// Ground-truth bounds only, averaged over random directions.
pub fn run_bounds(cfg: &ExperimentConfig) -> Result<Vec<BoundRecord>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for value in cfg.points() {
        let s = cfg.point(value)?;
        let rows: Vec<UnitBounds> = (0..cfg.trials)
            .into_par_iter()
            .filter_map(|t| {
                let (channel, obs) = unit_instance(cfg, &s.grid, s.scenario, s.snr_db, t, 0).ok()?;
                let b = unit_bounds(cfg, &s.grid, &channel, &obs);
                b.dir.is_some().then_some(b)
            })
            .collect();
        let dir: Vec<f64> = rows.iter().filter_map(|r| r.dir).collect();
        let split: Vec<f64> = rows.iter().flat_map(|r| r.splits.iter().cloned()).collect();
        let range: Vec<f64> = rows.iter().filter_map(|r| r.range).collect();
        out.push(BoundRecord {
            sweep_value: value,
            crb_dir: mean(&dir).sqrt(),
            crb_split: mean(&split).sqrt(),
            crb_range: (!range.is_empty()).then(|| mean(&range).sqrt()),
            trials: rows.len(),
        });
    }
    Ok(out)
}

pub fn bounds_csv(cfg: &ExperimentConfig, rows: &[BoundRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# standard deviations; crb_dir and crb_split in degrees, crb_range in m"
    );
    let _ = writeln!(s, "sweep_axis,sweep_value,crb_dir,crb_split,crb_range,trials");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            cfg.sweep.name(),
            num(r.sweep_value),
            num(r.crb_dir),
            num(r.crb_split),
            opt(r.crb_range),
            r.trials
        );
    }
    s
}
