//! Normalized correlation functions, counting uncertainties, and the
//! Cauchy-Schwarz classicality test.

use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::tia::TimestampStream;
use crate::time::ticks_to_seconds;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CorrelationError {
    #[error("correlation undefined: baseline area M is zero")]
    ZeroBaseline,
    #[error("invalid input {name} = {value}")]
    InvalidInput { name: &'static str, value: f64 },
    #[error("mean excitation must be > 0, got {0}")]
    NonPositiveExcitation(f64),
    #[error("duration must be > 0, got {0}")]
    NonPositiveDuration(f64),
}

/// Value with a one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub value: f64,
    pub sigma: f64,
}

impl Measurement {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ± {}", self.value, self.sigma)
    }
}

/// `g = N/M`, treating the same-trial area `N` and each of the
/// `n_baseline_peaks` baseline areas as Poisson counts, so
/// `σ_g = g·√(1/N + 1/(n_baseline_peaks·M))`.
///
/// For `N = 0` the `1/N` term is dropped and `g = σ_g = 0`.
pub fn g_ratio(n: u64, m: f64, n_baseline_peaks: u32) -> Result<Measurement, CorrelationError> {
    if !(m.is_finite() && m >= 0.0) {
        return Err(CorrelationError::InvalidInput {
            name: "M",
            value: m,
        });
    }
    if m == 0.0 {
        return Err(CorrelationError::ZeroBaseline);
    }
    let n_f = n as f64;
    let g = n_f / m;
    // σ² = (σ_N/M)² + (N σ_M/M²)², σ_N² = N, σ_M² = M/k
    let var_m = m / f64::from(n_baseline_peaks.max(1));
    let var = n_f / (m * m) + n_f * n_f * var_m / m.powi(4);
    Ok(Measurement::new(g, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Violated,
    NotViolated,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Violated => "violated",
            Verdict::NotViolated => "not_violated",
        }
    }
}

/// Auto/cross correlations and the classicality test `g12² ≤ g11·g22`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub delay_dt: f64,
    pub g11: Measurement,
    pub g22: Measurement,
    pub g12: Measurement,
    /// `g12²`
    pub lhs: Measurement,
    /// `g11·g22`
    pub rhs: Measurement,
    /// `lhs / rhs`
    pub ratio: Measurement,
    /// `(lhs − rhs) / σ(lhs − rhs)`
    pub violation_significance: f64,
    pub verdict: Verdict,
}

/// Field names of [`CorrelationReport::render`], in order.
pub const REPORT_FIELDS: &[&str] = &[
    "delay_dt",
    "g11",
    "g11_sigma",
    "g22",
    "g22_sigma",
    "g12",
    "g12_sigma",
    "lhs",
    "lhs_sigma",
    "rhs",
    "rhs_sigma",
    "ratio",
    "ratio_sigma",
    "violation_significance",
    "verdict",
];

impl CorrelationReport {
    /// `key = value` summary, one field per line, in [`REPORT_FIELDS`] order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("delay_dt", format!("{:?}", self.delay_dt));
        for (name, m) in [
            ("g11", self.g11),
            ("g22", self.g22),
            ("g12", self.g12),
            ("lhs", self.lhs),
            ("rhs", self.rhs),
            ("ratio", self.ratio),
        ] {
            kv(name, format!("{:?}", m.value));
            kv(&format!("{name}_sigma"), format!("{:?}", m.sigma));
        }
        kv(
            "violation_significance",
            format!("{:?}", self.violation_significance),
        );
        kv("verdict", self.verdict.as_str().to_string());
        out
    }
}

fn check(name: &'static str, m: Measurement) -> Result<(), CorrelationError> {
    for v in [m.value, m.sigma] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(CorrelationError::InvalidInput { name, value: v });
        }
    }
    Ok(())
}

/// First-order propagation of independent uncertainties through
/// `lhs = g12²`, `rhs = g11·g22`, and `R = lhs/rhs`.
pub fn cauchy_schwarz(
    g11: Measurement,
    g22: Measurement,
    g12: Measurement,
    delay_dt: f64,
) -> Result<CorrelationReport, CorrelationError> {
    check("g11", g11)?;
    check("g22", g22)?;
    check("g12", g12)?;
    let lhs = Measurement::new(g12.value * g12.value, 2.0 * g12.value * g12.sigma);
    let rhs_value = g11.value * g22.value;
    let rhs = Measurement::new(
        rhs_value,
        ((g22.value * g11.sigma).powi(2) + (g11.value * g22.sigma).powi(2)).sqrt(),
    );
    let ratio_value = lhs.value / rhs.value;
    let ratio_sigma = if lhs.value > 0.0 && rhs.value > 0.0 {
        ratio_value
            * ((2.0 * g12.sigma / g12.value).powi(2)
                + (g11.sigma / g11.value).powi(2)
                + (g22.sigma / g22.value).powi(2))
            .sqrt()
    } else {
        f64::NAN
    };
    let diff = lhs.value - rhs.value;
    let sigma_diff = (lhs.sigma.powi(2) + rhs.sigma.powi(2)).sqrt();
    let violation_significance = if sigma_diff > 0.0 {
        diff / sigma_diff
    } else if diff > 0.0 {
        f64::INFINITY
    } else if diff < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    Ok(CorrelationReport {
        delay_dt,
        g11,
        g22,
        g12,
        lhs,
        rhs,
        ratio: Measurement::new(ratio_value, ratio_sigma),
        violation_significance,
        verdict: if diff > 0.0 {
            Verdict::Violated
        } else {
            Verdict::NotViolated
        },
    })
}

/// `((1+p)/(2p))²`, the violation expected in the absence of noise and loss.
pub fn ideal_violation(p: f64) -> Result<f64, CorrelationError> {
    if !(p.is_finite() && p > 0.0) {
        return Err(CorrelationError::NonPositiveExcitation(p));
    }
    Ok(((1.0 + p) / (2.0 * p)).powi(2))
}

/// Click rates in s⁻¹.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglesRates {
    /// Indexed by [`crate::Detector::index`].
    pub per_detector: [f64; 4],
    /// A + B
    pub stokes: f64,
    /// C + D
    pub antistokes: f64,
}

impl SinglesRates {
    pub fn from_counts(counts: [u64; 4], duration: f64) -> Result<Self, CorrelationError> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(CorrelationError::NonPositiveDuration(duration));
        }
        let per_detector = counts.map(|c| c as f64 / duration);
        Ok(Self {
            per_detector,
            stokes: (counts[0] + counts[1]) as f64 / duration,
            antistokes: (counts[2] + counts[3]) as f64 / duration,
        })
    }
}

/// Counts per detector divided by `duration` (seconds). Streams are matched to
/// detectors by their own id; missing detectors count zero.
pub fn singles_rates(
    streams: &[TimestampStream],
    duration: f64,
) -> Result<SinglesRates, CorrelationError> {
    let mut counts = [0u64; 4];
    for s in streams {
        counts[s.detector().index()] += s.len() as u64;
    }
    SinglesRates::from_counts(counts, duration)
}

/// Duration of a stream set in seconds, for [`singles_rates`].
pub fn stream_duration(stream: &TimestampStream) -> f64 {
    ticks_to_seconds(stream.total_duration())
}
