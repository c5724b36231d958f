//! Analytic click-pattern oracle.
//!
//! For a set `S` of detectors, let `Z(S)` be the probability that no detector in
//! `S` clicks in a trial. Conditional on the source numbers `(n_s, n_m)` every
//! photon and excitation acts independently, so `Z(S)` factorizes into
//! per-quantum generating-function factors raised to `n_s` and `n_m`, times
//! closed-form Poisson factors for backgrounds, dark counts and diffusion-in.
//! The source law is enumerated up to `n_max`; the 16 click-pattern
//! probabilities follow from `Z` by inclusion-exclusion.

use std::fmt;

use thiserror::Error;

use crate::config::{ExperimentConfig, SourceModel};
use crate::correlation::{cauchy_schwarz, CorrelationReport, Measurement};
use crate::optics::Detector;
use crate::source::{joint_pmf, survival_probability};

/// Truncation mass above which [`ClickPatternDistribution::warning`] is set.
pub const TRUNCATION_WARN: f64 = 1e-6;
/// Truncation mass that [`predicted_correlations`] accepts.
pub const TRUNCATION_REQUIRED: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("n_max must be >= 1")]
    ZeroTruncation,
    #[error("truncation error {bound:e} at n_max = {n_max} exceeds {TRUNCATION_REQUIRED:e}; use n_max >= {required}")]
    InsufficientTruncation {
        n_max: u32,
        bound: f64,
        required: u32,
    },
    #[error("{0} undefined: a detector in the pair never clicks")]
    Undefined(&'static str),
    #[error("correlation report: {0}")]
    Report(#[from] crate::correlation::CorrelationError),
}

/// Detector click pattern; bit `i` set means detector `Detector::ALL[i]` clicked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClickPattern(pub u8);

impl ClickPattern {
    pub const COUNT: usize = 16;

    pub fn from_clicks(clicks: [bool; 4]) -> Self {
        let mut bits = 0u8;
        for (i, c) in clicks.iter().enumerate() {
            if *c {
                bits |= 1 << i;
            }
        }
        ClickPattern(bits)
    }

    pub fn clicked(self, d: Detector) -> bool {
        self.0 & (1 << d.index()) != 0
    }

    pub fn all() -> impl Iterator<Item = ClickPattern> {
        (0..16u8).map(ClickPattern)
    }
}

impl fmt::Display for ClickPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            return f.write_str("none");
        }
        for d in Detector::ALL {
            if self.clicked(d) {
                write!(f, "{}", d.letter())?;
            }
        }
        Ok(())
    }
}

/// Per-trial probabilities of the 16 click patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickPatternDistribution {
    /// Indexed by [`ClickPattern`] bits.
    pub probabilities: [f64; 16],
    pub n_max: u32,
    /// Upper bound on the source probability mass beyond `n_max`.
    pub truncation_error_bound: f64,
    /// Set when the bound exceeds [`TRUNCATION_WARN`].
    pub warning: bool,
}

impl ClickPatternDistribution {
    pub fn probability(&self, pattern: ClickPattern) -> f64 {
        self.probabilities[pattern.0 as usize]
    }

    /// Probability that every detector in `detectors` clicks.
    pub fn all_click(&self, detectors: &[Detector]) -> f64 {
        ClickPattern::all()
            .filter(|p| detectors.iter().all(|d| p.clicked(*d)))
            .map(|p| self.probability(p))
            .sum()
    }

    pub fn singles(&self) -> [f64; 4] {
        Detector::ALL.map(|d| self.all_click(&[d]))
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

/// Per-quantum and Poisson factors of `Z(S)`, derived from the config.
struct Factors {
    transmission: f64,
    detector_eff: f64,
    dark: f64,
    bg_s: f64,
    bg_a: f64,
    survival: f64,
    retrieval: f64,
    injected: f64,
}

impl Factors {
    fn new(c: &ExperimentConfig) -> Self {
        let survival = survival_probability(c.delay_dt, c.memory_lifetime);
        Self {
            transmission: c.transmission,
            detector_eff: c.detector_eff,
            dark: c.dark_mean,
            bg_s: c.bg_stokes_mean,
            bg_a: c.bg_antistokes_mean,
            survival,
            retrieval: c.retrieval_eff,
            injected: c.memory_diffusion_in * (1.0 - survival),
        }
    }

    /// Mean no-click factor of one photon arriving at a 50/50 splitter whose
    /// outputs go to detectors `x` and `y`.
    fn splitter(&self, mask: u8, x: Detector, y: Detector) -> f64 {
        let phi = |d: Detector| {
            if mask & (1 << d.index()) != 0 {
                1.0 - self.detector_eff
            } else {
                1.0
            }
        };
        0.5 * (phi(x) + phi(y))
    }

    /// `(stokes photon factor, memory excitation factor, Poisson part)` for mask `S`.
    fn for_mask(&self, mask: u8) -> (f64, f64, f64) {
        let t = self.transmission;
        let gs = self.splitter(mask, Detector::A, Detector::B);
        let ga = self.splitter(mask, Detector::C, Detector::D);
        let stokes = (1.0 - t) + t * gs;
        let antistokes = (1.0 - t) + t * ga;
        let read = (1.0 - self.retrieval) + self.retrieval * antistokes;
        let memory = (1.0 - self.survival) + self.survival * read;
        let forced = mask.count_ones() as f64;
        let poisson = (-self.dark * forced
            - self.bg_s * (1.0 - gs)
            - self.bg_a * (1.0 - ga)
            - self.injected * (1.0 - read))
            .exp();
        (stokes, memory, poisson)
    }
}

/// Upper bound on the source mass outside `n_s, n_m <= n_max`.
pub fn truncation_bound(p: f64, model: SourceModel, n_max: u32) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    // both marginals are geometric with mean p
    let tail = (p / (1.0 + p)).powf(f64::from(n_max) + 1.0);
    let bound = match model {
        SourceModel::QuantumTms => tail,
        SourceModel::ClassicalCorrelated => 2.0 * tail,
    };
    bound.min(1.0)
}

/// Smallest `n_max` whose truncation bound is at most `target`.
pub fn required_n_max(p: f64, model: SourceModel, target: f64) -> u32 {
    if p == 0.0 {
        return 1;
    }
    let factor = match model {
        SourceModel::QuantumTms => 1.0,
        SourceModel::ClassicalCorrelated => 2.0,
    };
    let x = p / (1.0 + p);
    let n = ((target / factor).ln() / x.ln() - 1.0).ceil().max(1.0) as u32;
    (n.saturating_sub(2)..=n + 2)
        .find(|&m| m >= 1 && truncation_bound(p, model, m) <= target)
        .unwrap_or(n + 2)
}

/// `Z(S)` for all 16 masks, summed over the source law up to `n_max`.
fn no_click_table(config: &ExperimentConfig, n_max: u32) -> [f64; 16] {
    let factors = Factors::new(config);
    let p = config.p_excitation;
    let model = config.source_model;
    let n_max = u64::from(n_max);
    let mut z = [0.0; 16];
    for (mask, slot) in z.iter_mut().enumerate() {
        let (fs, fm, poisson) = factors.for_mask(mask as u8);
        let mut sum = 0.0;
        match model {
            SourceModel::QuantumTms => {
                for n in 0..=n_max {
                    let w = joint_pmf(p, model, n, n).expect("validated p");
                    sum += w * (fs * fm).powf(n as f64);
                }
            }
            SourceModel::ClassicalCorrelated => {
                for a in 0..=n_max {
                    let fa = fs.powf(a as f64);
                    for b in 0..=n_max {
                        let w = joint_pmf(p, model, a, b).expect("validated p");
                        sum += w * fa * fm.powf(b as f64);
                    }
                }
            }
        }
        *slot = sum * poisson;
    }
    z
}

/// Click-pattern distribution with the source law enumerated to `n_max`.
pub fn truncated_joint(
    config: &ExperimentConfig,
    n_max: u32,
) -> Result<ClickPatternDistribution, OracleError> {
    if n_max < 1 {
        return Err(OracleError::ZeroTruncation);
    }
    let z = no_click_table(config, n_max);
    let mut probabilities = [0.0; 16];
    for (clicks, slot) in probabilities.iter_mut().enumerate() {
        let quiet = !clicks as u8 & 0xF;
        // inclusion-exclusion over the subsets of the clicked set
        let mut sum = 0.0;
        let mut t = clicks as u8;
        loop {
            let sign = if t.count_ones().is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            sum += sign * z[(quiet | t) as usize];
            if t == 0 {
                break;
            }
            t = (t - 1) & clicks as u8;
        }
        // cancellation leaves round-off of order 1e-16 on impossible patterns
        *slot = if sum < 0.0 && sum > -1e-13 { 0.0 } else { sum };
    }
    let bound = truncation_bound(config.p_excitation, config.source_model, n_max);
    Ok(ClickPatternDistribution {
        probabilities,
        n_max,
        truncation_error_bound: bound,
        warning: bound > TRUNCATION_WARN,
    })
}

/// Exact per-trial correlation predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedCorrelations {
    pub g11: f64,
    pub g22: f64,
    pub g12: f64,
    /// `(B, D)` cross pair, equal to `g12` by splitter symmetry.
    pub g12_bd: f64,
    pub singles: [f64; 4],
    pub distribution: ClickPatternDistribution,
}

impl PredictedCorrelations {
    pub fn ratio(&self) -> f64 {
        self.g12 * self.g12 / (self.g11 * self.g22)
    }

    /// Rendered in the same format as a measured [`CorrelationReport`], with zero sigmas.
    pub fn report(&self, delay_dt: f64) -> Result<CorrelationReport, OracleError> {
        Ok(cauchy_schwarz(
            Measurement::exact(self.g11),
            Measurement::exact(self.g22),
            Measurement::exact(self.g12),
            delay_dt,
        )?)
    }
}

/// `g = P(start ∧ stop) / (P(start)·P(stop))` for the pairs (A,B), (C,D), (A,C).
pub fn predicted_correlations(
    config: &ExperimentConfig,
    n_max: u32,
) -> Result<PredictedCorrelations, OracleError> {
    let bound = truncation_bound(config.p_excitation, config.source_model, n_max);
    if n_max < 1 || bound > TRUNCATION_REQUIRED {
        return Err(OracleError::InsufficientTruncation {
            n_max,
            bound,
            required: required_n_max(
                config.p_excitation,
                config.source_model,
                TRUNCATION_REQUIRED,
            ),
        });
    }
    let dist = truncated_joint(config, n_max)?;
    let singles = dist.singles();
    let g = |name: &'static str, x: Detector, y: Detector| {
        let denom = singles[x.index()] * singles[y.index()];
        if denom > 0.0 {
            Ok(dist.all_click(&[x, y]) / denom)
        } else {
            Err(OracleError::Undefined(name))
        }
    };
    Ok(PredictedCorrelations {
        g11: g("g11", Detector::A, Detector::B)?,
        g22: g("g22", Detector::C, Detector::D)?,
        g12: g("g12", Detector::A, Detector::C)?,
        g12_bd: g("g12_bd", Detector::B, Detector::D)?,
        singles,
        distribution: dist,
    })
}

/// Monte Carlo quantities to compare against the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct McObservation {
    pub trials: u64,
    pub pattern_counts: [u64; 16],
    pub g11: Option<Measurement>,
    pub g22: Option<Measurement>,
    pub g12: Option<Measurement>,
}

/// Flag threshold for [`compare`].
pub const Z_FLAG: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ZRow {
    pub quantity: String,
    pub mc: f64,
    pub oracle: f64,
    pub sigma: f64,
    pub z: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZTable {
    pub rows: Vec<ZRow>,
}

impl ZTable {
    pub fn flagged(&self) -> impl Iterator<Item = &ZRow> {
        self.rows.iter().filter(|r| r.flagged)
    }

    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max)
    }

    /// Delimited table: `quantity,mc,oracle,sigma,z,flagged`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,mc,oracle,sigma,z,flagged\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{:?},{}\n",
                r.quantity, r.mc, r.oracle, r.sigma, r.z, r.flagged
            ));
        }
        out
    }
}

fn z_row(quantity: String, mc: f64, oracle: f64, sigma: f64) -> ZRow {
    let z = if sigma > 0.0 {
        (mc - oracle) / sigma
    } else if mc == oracle {
        0.0
    } else {
        f64::INFINITY.copysign(mc - oracle)
    };
    ZRow {
        quantity,
        mc,
        oracle,
        sigma,
        z,
        flagged: z.abs() > Z_FLAG,
    }
}

/// Per-quantity `z = (mc − oracle)/σ_mc` for the 16 pattern frequencies, the
/// four singles probabilities, and the three correlations. Frequencies use the
/// binomial σ of the observed frequency, falling back to the oracle probability
/// when the observed one is 0 or 1.
pub fn compare(mc: &McObservation, oracle: &PredictedCorrelations) -> ZTable {
    let trials = mc.trials as f64;
    // spread under the oracle's own probability, so rare patterns are not
    // judged by their noisy observed frequency
    let binomial_sigma = |_freq: f64, prob: f64| (prob * (1.0 - prob) / trials).sqrt();
    let mut rows = Vec::new();
    for p in ClickPattern::all() {
        let freq = mc.pattern_counts[p.0 as usize] as f64 / trials;
        let prob = oracle.distribution.probability(p);
        rows.push(z_row(
            format!("pattern_{p}"),
            freq,
            prob,
            binomial_sigma(freq, prob),
        ));
    }
    for d in Detector::ALL {
        let count: u64 = ClickPattern::all()
            .filter(|p| p.clicked(d))
            .map(|p| mc.pattern_counts[p.0 as usize])
            .sum();
        let freq = count as f64 / trials;
        let prob = oracle.singles[d.index()];
        rows.push(z_row(
            format!("single_{d}"),
            freq,
            prob,
            binomial_sigma(freq, prob),
        ));
    }
    for (name, measured, predicted) in [
        ("g11", mc.g11, oracle.g11),
        ("g22", mc.g22, oracle.g22),
        ("g12", mc.g12, oracle.g12),
    ] {
        match measured {
            Some(m) => rows.push(z_row(name.to_string(), m.value, predicted, m.sigma)),
            None => rows.push(ZRow {
                quantity: name.to_string(),
                mc: f64::NAN,
                oracle: predicted,
                sigma: f64::NAN,
                z: f64::NAN,
                flagged: true,
            }),
        }
    }
    ZTable { rows }
}
