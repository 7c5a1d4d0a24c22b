//! Fast sanity checks runnable from the command line.

use crate::array::{build_dictionary, grid_point, steering_far, ArrayConfig, SubcarrierGrid};
use crate::channel::{gen_channel, gen_pilot_matrix, observe, observe_with_noise_var, Scenario};
use crate::crb::{crb, CrbOptions, ParamVector};
use crate::error::Result;
use crate::linalg::CMat;
use crate::sbce::{beam_split_from_c, perturbation_from_split, run_sbce, SbceConfig};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn unit_norm() -> Result<Check> {
    let a = ArrayConfig::half_wavelength(64, 300e9)?;
    let v = steering_far(&a, 0.3, 310e9)?;
    let n: f64 = v.iter().map(|x| x.norm_sqr()).sum();
    Ok(check(
        "steering vector has unit norm",
        (n - 1.0).abs() < 1e-12,
        format!("norm^2 = {n:.3e}"),
    ))
}

fn split_round_trip() -> Result<Check> {
    let d = 0.0123;
    let got = beam_split_from_c(&perturbation_from_split(64, d))?;
    Ok(check(
        "split recovered from perturbation",
        (got - d).abs() < 1e-9,
        format!("{got:.6e}"),
    ))
}

fn noiseless_grid_recovery() -> Result<Check> {
    let a = ArrayConfig::half_wavelength(32, 300e9)?;
    let dict = build_dictionary(&a, 128)?;
    let grid = SubcarrierGrid::new(4, 0.0, 300e9)?;
    let s = grid_point(128, 80);
    let v = steering_far(&a, s, 300e9)?;
    let h = CMat::from_fn(32, 4, |i, _| v[i] * 2.0);
    let b = gen_pilot_matrix(&a, 16, 3)?;
    let obs = observe_with_noise_var(&h, &b, 0.0, 0)?;
    let r = run_sbce(&obs, &dict, &SbceConfig::default(), &grid)?;
    Ok(check(
        "noiseless on-grid direction recovered",
        (r.est_direction_sine - s).abs() < 1.0 / 128.0,
        format!("est {:.5} true {s:.5}", r.est_direction_sine),
    ))
}

fn high_snr_estimate() -> Result<Check> {
    let a = ArrayConfig::half_wavelength(32, 300e9)?;
    let dict = build_dictionary(&a, 256)?;
    let grid = SubcarrierGrid::new(4, 30e9, 300e9)?;
    let ch = gen_channel(&a, &grid, 1, Scenario::Far, 11)?;
    let b = gen_pilot_matrix(&a, 16, 12)?;
    let obs = observe(&ch, &b, 30.0, 13)?;
    let r = run_sbce(&obs, &dict, &SbceConfig::default(), &grid)?;
    let e = super::metrics::nmse(
        std::slice::from_ref(&ch.per_subcarrier),
        std::slice::from_ref(&r.est_channel),
    )?;
    Ok(check(
        "estimate at 30 dB has small error",
        e < 0.05,
        format!("nmse {e:.3e}"),
    ))
}

fn bound_scales_with_snr() -> Result<Check> {
    let a = ArrayConfig::half_wavelength(32, 300e9)?;
    let b = gen_pilot_matrix(&a, 16, 5)?;
    let p = ParamVector::far(vec![0.4], vec![0.01]);
    let lo = crb(&a, &p, &b, &[1.0], 1e-1, 303e9, 0, CrbOptions::default())?.direction(0);
    let hi = crb(&a, &p, &b, &[1.0], 1e-3, 303e9, 0, CrbOptions::default())?.direction(0);
    Ok(check(
        "bound shrinks with SNR",
        hi < lo,
        format!("{lo:.3e} -> {hi:.3e}"),
    ))
}

pub fn run_all() -> Vec<Check> {
    let tests: [fn() -> Result<Check>; 5] = [
        unit_norm,
        split_round_trip,
        noiseless_grid_recovery,
        high_snr_estimate,
        bound_scales_with_snr,
    ];
    tests
        .iter()
        .map(|t| t().unwrap_or_else(|e| check("check raised an error", false, e.to_string())))
        .collect()
}
