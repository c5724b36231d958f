//! Background calibration: solve for the per-gate background means that make
//! the predicted singles rates match target count rates.
//!
//! Singles on each channel depend only on that channel's background, and
//! increase monotonically with it, so each mean is found by bisection on the
//! oracle's exact singles probabilities.

use crate::config::ExperimentConfig;
use crate::optics::Detector;
use crate::oracle::{predicted_correlations, OracleError};

/// Stokes singles target, s⁻¹ (both Stokes detectors together).
pub const TARGET_STOKES_RATE: f64 = 220.0;
/// Anti-Stokes singles target, s⁻¹.
pub const TARGET_ANTISTOKES_RATE: f64 = 70.0;

const N_MAX: u32 = 60;
const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub bg_stokes_mean: f64,
    pub bg_antistokes_mean: f64,
    /// Predicted rates with the solved means.
    pub stokes_rate: f64,
    pub antistokes_rate: f64,
    /// Signal alone already exceeds the target, so the mean was clamped at zero.
    pub stokes_clamped: bool,
    pub antistokes_clamped: bool,
}

/// `(stokes, antistokes)` singles rates predicted for `config`, s⁻¹.
pub fn predicted_rates(config: &ExperimentConfig) -> Result<(f64, f64), OracleError> {
    let s = predicted_correlations(config, N_MAX)?.singles;
    let rate = config.trial_rate();
    Ok((
        (s[Detector::A.index()] + s[Detector::B.index()]) * rate,
        (s[Detector::C.index()] + s[Detector::D.index()]) * rate,
    ))
}

fn solve(
    config: &ExperimentConfig,
    target: f64,
    set: impl Fn(&mut ExperimentConfig, f64),
    rate_of: impl Fn((f64, f64)) -> f64,
) -> Result<(f64, bool), OracleError> {
    let rate_at = |bg: f64| {
        let mut c = config.clone();
        set(&mut c, bg);
        predicted_rates(&c).map(&rate_of)
    };
    if rate_at(0.0)? >= target {
        return Ok((0.0, true));
    }
    let (mut lo, mut hi) = (0.0, 1e-3);
    while rate_at(hi)? < target {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), false))
}

/// Solves both background means for `config` with every other parameter fixed.
pub fn calibrate_backgrounds(
    config: &ExperimentConfig,
    stokes_rate: f64,
    antistokes_rate: f64,
) -> Result<Calibration, OracleError> {
    let (bg_s, stokes_clamped) =
        solve(config, stokes_rate, |c, bg| c.bg_stokes_mean = bg, |r| r.0)?;
    let (bg_a, antistokes_clamped) = solve(
        config,
        antistokes_rate,
        |c, bg| c.bg_antistokes_mean = bg,
        |r| r.1,
    )?;
    let mut solved = config.clone();
    solved.bg_stokes_mean = bg_s;
    solved.bg_antistokes_mean = bg_a;
    let (s, a) = predicted_rates(&solved)?;
    Ok(Calibration {
        bg_stokes_mean: bg_s,
        bg_antistokes_mean: bg_a,
        stokes_rate: s,
        antistokes_rate: a,
        stokes_clamped,
        antistokes_clamped,
    })
}
