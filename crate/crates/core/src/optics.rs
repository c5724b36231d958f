//! Photon transport and gated click detection.
//!
//! Losses are binomial thinnings, leaked pump light is Poisson background added
//! at the beam-splitter input, and each of the four detectors is a
//! non-number-resolving click detector gated once per trial.

use std::fmt;

use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution};

use crate::source::poisson;
use crate::time::{ticks_to_seconds, Tick};

/// Optical channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Stokes,
    AntiStokes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Detector {
    A,
    B,
    C,
    D,
}

impl Detector {
    pub const ALL: [Detector; 4] = [Detector::A, Detector::B, Detector::C, Detector::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Detector> {
        Self::ALL.get(i).copied()
    }

    /// A and B see the Stokes channel, C and D the anti-Stokes channel.
    pub fn channel(self) -> Channel {
        match self {
            Detector::A | Detector::B => Channel::Stokes,
            Detector::C | Detector::D => Channel::AntiStokes,
        }
    }

    pub fn letter(self) -> char {
        ['A', 'B', 'C', 'D'][self.index()]
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Loss and leakage of one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub channel: Channel,
    pub transmission: f64,
    pub bg_mean: f64,
}

impl ChannelParams {
    /// Source photons → photons at the beam-splitter input.
    pub fn transport<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> u64 {
        let kept = thin(n, self.transmission, rng);
        add_background(kept, self.bg_mean, rng)
    }
}

/// A detector click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClickEvent {
    pub detector: Detector,
    /// Absolute time since run start.
    pub timestamp: Tick,
    pub trial_index: u64,
}

impl ClickEvent {
    pub fn timestamp_seconds(&self) -> f64 {
        ticks_to_seconds(self.timestamp)
    }
}

/// Absolute gate window `[start, start + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gate {
    pub start: Tick,
    pub width: Tick,
}

impl Gate {
    pub fn contains(&self, t: Tick) -> bool {
        t >= self.start && t - self.start < self.width
    }
}

/// Temporal shape of detected photons inside a gate.
pub trait PulseProfile: Send + Sync {
    /// Offset in `[0, width)`.
    fn sample_offset(&self, width: Tick, rng: &mut dyn RngCore) -> Tick;
}

/// Flat over the whole gate.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformProfile;

impl PulseProfile for UniformProfile {
    fn sample_offset(&self, width: Tick, rng: &mut dyn RngCore) -> Tick {
        rng.random_range(0..width)
    }
}

/// Piecewise-constant shape over equal sub-intervals of the gate.
#[derive(Debug, Clone)]
pub struct PiecewiseProfile {
    cumulative: Vec<f64>,
}

impl PiecewiseProfile {
    /// `None` if the weights are empty, negative, or sum to zero.
    pub fn new(weights: &[f64]) -> Option<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return None;
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Some(Self { cumulative })
    }
}

impl PulseProfile for PiecewiseProfile {
    fn sample_offset(&self, width: Tick, rng: &mut dyn RngCore) -> Tick {
        let u: f64 = rng.random();
        let k = self
            .cumulative
            .iter()
            .position(|c| u < *c)
            .unwrap_or(self.cumulative.len() - 1);
        let pieces = self.cumulative.len() as u64;
        let lo = width * k as u64 / pieces;
        let hi = (width * (k as u64 + 1) / pieces).max(lo + 1).min(width);
        rng.random_range(lo..hi)
    }
}

/// `Binomial(n, eta)`.
pub fn thin<R: Rng + ?Sized>(n: u64, eta: f64, rng: &mut R) -> u64 {
    debug_assert!((0.0..=1.0).contains(&eta), "eta = {eta}");
    if n == 0 || eta <= 0.0 {
        return 0;
    }
    if eta >= 1.0 {
        return n;
    }
    if n <= 16 {
        return (0..n).filter(|_| rng.random::<f64>() < eta).count() as u64;
    }
    Binomial::new(n, eta).expect("valid binomial").sample(rng)
}

/// `n + Poisson(bg_mean)`.
pub fn add_background<R: Rng + ?Sized>(n: u64, bg_mean: f64, rng: &mut R) -> u64 {
    n + poisson(bg_mean, rng)
}

/// 50/50 beam splitter: `(k, n − k)` with `k ~ Binomial(n, 1/2)`.
pub fn split<R: Rng + ?Sized>(n: u64, rng: &mut R) -> (u64, u64) {
    let k = thin(n, 0.5, rng);
    (k, n - k)
}

/// Probability that a click detector fires for `n` incident photons.
pub fn click_probability(n: u64, det_eff: f64, dark_mean: f64) -> f64 {
    let miss = if n == 0 {
        1.0
    } else {
        (1.0 - det_eff).powf(n as f64)
    };
    1.0 - miss * (-dark_mean).exp()
}

/// At most one click per detector per gate.
#[allow(clippy::too_many_arguments)]
pub fn detect(
    n: u64,
    det_eff: f64,
    dark_mean: f64,
    gate: Gate,
    trial_index: u64,
    detector: Detector,
    profile: &dyn PulseProfile,
    rng: &mut dyn RngCore,
) -> Option<ClickEvent> {
    let p = click_probability(n, det_eff, dark_mean);
    if p <= 0.0 || rng.random::<f64>() >= p {
        return None;
    }
    Some(ClickEvent {
        detector,
        timestamp: gate.start + profile.sample_offset(gate.width, rng),
        trial_index,
    })
}
