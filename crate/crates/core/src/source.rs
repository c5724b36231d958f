//! Write-process photon source, memory storage, and read-out.
//!
//! The collective atomic mode is a single bosonic memory mode. Under
//! [`SourceModel::QuantumTms`] the write pulse produces a two-mode squeezed
//! state, so the Stokes photon number and the memory excitation number are
//! equal and thermally (geometrically) distributed with mean `p`.
//! [`SourceModel::ClassicalCorrelated`] instead draws a common intensity
//! `λ ~ Exp(mean p)` and two independent `Poisson(λ)` counts; it has a positive
//! P-representation and sits on the Cauchy-Schwarz boundary.

use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric, Poisson};
use thiserror::Error;

use crate::config::SourceModel;
use crate::optics::thin;

#[derive(Debug, Error, PartialEq)]
pub enum SourceError {
    #[error("mean excitation must be finite and >= 0, got {0}")]
    NegativeMean(f64),
    #[error("invalid storage parameters: {0}")]
    Storage(String),
}

/// Per-trial photon and excitation numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrialExcitation {
    /// Photons in the write (Stokes) mode.
    pub n_stokes: u64,
    /// Excitations in the collective memory mode.
    pub n_memory: u64,
    /// Photons in the read (anti-Stokes) mode, filled in by [`retrieve`].
    pub n_antistokes: u64,
}

/// Pre-built sampler for the write process; build once per run.
#[derive(Debug, Clone)]
pub enum WriteSampler {
    Vacuum,
    Thermal(Geometric),
    Mixture(Exp<f64>),
}

impl WriteSampler {
    pub fn new(p: f64, model: SourceModel) -> Result<Self, SourceError> {
        if !(p.is_finite() && p >= 0.0) {
            return Err(SourceError::NegativeMean(p));
        }
        if p == 0.0 {
            return Ok(WriteSampler::Vacuum);
        }
        Ok(match model {
            // Geometric counts failures before the first success: P(n) = (1-q)^n q.
            SourceModel::QuantumTms => {
                WriteSampler::Thermal(Geometric::new(1.0 / (1.0 + p)).expect("q in (0, 1]"))
            }
            SourceModel::ClassicalCorrelated => {
                WriteSampler::Mixture(Exp::new(1.0 / p).expect("positive rate"))
            }
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TrialExcitation {
        match self {
            WriteSampler::Vacuum => TrialExcitation::default(),
            WriteSampler::Thermal(geo) => {
                let n = geo.sample(rng);
                TrialExcitation {
                    n_stokes: n,
                    n_memory: n,
                    n_antistokes: 0,
                }
            }
            WriteSampler::Mixture(exp) => {
                let lambda = exp.sample(rng);
                TrialExcitation {
                    n_stokes: poisson(lambda, rng),
                    n_memory: poisson(lambda, rng),
                    n_antistokes: 0,
                }
            }
        }
    }
}

pub(crate) fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive mean");
    d.sample(rng) as u64
}

/// Draws the Stokes/memory numbers for one write pulse.
pub fn sample_write<R: Rng + ?Sized>(
    p: f64,
    model: SourceModel,
    rng: &mut R,
) -> Result<TrialExcitation, SourceError> {
    Ok(WriteSampler::new(p, model)?.sample(rng))
}

/// Exact probability of `(n_s, n_m)` under the write law.
pub fn joint_pmf(p: f64, model: SourceModel, n_s: u64, n_m: u64) -> Result<f64, SourceError> {
    if !(p.is_finite() && p >= 0.0) {
        return Err(SourceError::NegativeMean(p));
    }
    if p == 0.0 {
        return Ok(if n_s == 0 && n_m == 0 { 1.0 } else { 0.0 });
    }
    Ok(match model {
        SourceModel::QuantumTms => {
            if n_s != n_m {
                0.0
            } else {
                thermal_pmf(p, n_s)
            }
        }
        SourceModel::ClassicalCorrelated => {
            // ∫ Poisson(a;λ) Poisson(b;λ) e^{-λ/p}/p dλ = C(a+b, a) p^{a+b} / (1+2p)^{a+b+1}
            let n = n_s + n_m;
            let ln =
                ln_binomial(n, n_s) + n as f64 * (p / (1.0 + 2.0 * p)).ln() - (1.0 + 2.0 * p).ln();
            ln.exp()
        }
    })
}

/// Geometric (thermal) law with mean `p`: P(n) = pⁿ/(1+p)ⁿ⁺¹.
pub(crate) fn thermal_pmf(p: f64, n: u64) -> f64 {
    if p == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    ((n as f64) * (p / (1.0 + p)).ln() - (1.0 + p).ln()).exp()
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64 / (i + 1) as f64).ln()).sum()
}

/// Probability that a stored excitation is still in the collective mode after `delay`.
pub fn survival_probability(delay: f64, lifetime: f64) -> f64 {
    (-delay / lifetime).exp()
}

/// Applies storage for `delay`: each excitation survives with probability
/// `exp(-delay/lifetime)`, and `Poisson(diffusion_in_mean·(1 − survival))`
/// uncorrelated excitations diffuse in.
pub fn decohere_memory<R: Rng + ?Sized>(
    n_memory: u64,
    delay: f64,
    lifetime: f64,
    diffusion_in_mean: f64,
    rng: &mut R,
) -> Result<u64, SourceError> {
    if !(delay >= 0.0 && lifetime > 0.0 && diffusion_in_mean >= 0.0)
        || !delay.is_finite()
        || !diffusion_in_mean.is_finite()
    {
        return Err(SourceError::Storage(format!(
            "delay={delay}, lifetime={lifetime}, diffusion_in_mean={diffusion_in_mean}"
        )));
    }
    let survival = survival_probability(delay, lifetime);
    let kept = thin(n_memory, survival, rng);
    let injected = poisson(diffusion_in_mean * (1.0 - survival), rng);
    Ok(kept + injected)
}

/// Converts stored excitations into anti-Stokes photons, `Binomial(n_memory, eta_r)`.
pub fn retrieve<R: Rng + ?Sized>(n_memory: u64, eta_r: f64, rng: &mut R) -> u64 {
    thin(n_memory, eta_r, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{assert_within_sigma, chi_square_ok, rng};

    #[test]
    fn vacuum_is_always_empty() {
        let mut r = rng(1);
        for model in [SourceModel::QuantumTms, SourceModel::ClassicalCorrelated] {
            for _ in 0..1000 {
                assert_eq!(
                    sample_write(0.0, model, &mut r).unwrap(),
                    TrialExcitation::default()
                );
            }
        }
    }

    #[test]
    fn negative_mean_rejected() {
        let mut r = rng(1);
        assert_eq!(
            sample_write(-0.1, SourceModel::QuantumTms, &mut r),
            Err(SourceError::NegativeMean(-0.1))
        );
        assert!(joint_pmf(-1.0, SourceModel::QuantumTms, 0, 0).is_err());
    }

    #[test]
    fn preset_mean_matches() {
        let p = 0.14;
        let n = 1_000_000;
        let mut r = rng(2);
        let sampler = WriteSampler::new(p, SourceModel::QuantumTms).unwrap();
        let sum: u64 = (0..n).map(|_| sampler.sample(&mut r).n_stokes).sum();
        let mean = sum as f64 / n as f64;
        let sigma = (p * (1.0 + p) / n as f64).sqrt();
        assert!((mean - p).abs() <= 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn single_photon_probability() {
        // oracle: normalized truncated enumeration of pⁿ/(1+p)ⁿ⁺¹
        let p: f64 = 0.2;
        let terms: Vec<f64> = (0..=50)
            .map(|n| p.powi(n) / (1.0 + p).powi(n + 1))
            .collect();
        let total: f64 = terms.iter().sum();
        let expected = terms[1] / total;
        assert!((expected - 0.2 / 1.44).abs() < 1e-12);

        let n = 1_000_000;
        let mut r = rng(3);
        let ones = (0..n)
            .filter(|_| {
                sample_write(p, SourceModel::QuantumTms, &mut r)
                    .unwrap()
                    .n_stokes
                    == 1
            })
            .count();
        assert_within_sigma(
            ones as f64 / n as f64,
            expected,
            (expected * (1.0 - expected) / n as f64).sqrt(),
            4.0,
        );
    }

    #[test]
    fn pmf_examples() {
        assert_eq!(joint_pmf(0.37, SourceModel::QuantumTms, 1, 2).unwrap(), 0.0);
        assert!((joint_pmf(0.2, SourceModel::QuantumTms, 0, 0).unwrap() - 1.0 / 1.2).abs() < 1e-15);
        assert!(
            (joint_pmf(0.2, SourceModel::ClassicalCorrelated, 0, 0).unwrap() - 1.0 / 1.4).abs()
                < 1e-15
        );
    }

    #[test]
    fn classical_vacuum_probability_matches_mixture_integral() {
        // Monte Carlo over the mixture itself: E[e^{-2λ}] with λ ~ Exp(mean p)
        let p: f64 = 0.2;
        let exp = Exp::new(1.0 / p).unwrap();
        let mut r = rng(4);
        let n = 10_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v: f64 = (-2.0 * exp.sample(&mut r)).exp();
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let sd = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert_within_sigma(
            mean,
            joint_pmf(p, SourceModel::ClassicalCorrelated, 0, 0).unwrap(),
            sd,
            4.0,
        );
    }

    #[test]
    fn pmf_normalizes() {
        for model in [SourceModel::QuantumTms, SourceModel::ClassicalCorrelated] {
            for p in [0.01, 0.1, 0.2, 0.5] {
                let mut total = 0.0;
                for a in 0..=60 {
                    for b in 0..=60 {
                        total += joint_pmf(p, model, a, b).unwrap();
                    }
                }
                assert!((total - 1.0).abs() < 1e-9, "{model} p={p}: {total}");
            }
        }
    }

    #[test]
    fn sampled_frequencies_match_pmf() {
        for (model, seed) in [
            (SourceModel::QuantumTms, 5),
            (SourceModel::ClassicalCorrelated, 6),
        ] {
            let p = 0.3;
            let n = 1_000_000u64;
            let sampler = WriteSampler::new(p, model).unwrap();
            let mut r = rng(seed);
            let k = 6u64;
            let mut counts = vec![0u64; ((k + 1) * (k + 1)) as usize];
            for _ in 0..n {
                let e = sampler.sample(&mut r);
                let a = e.n_stokes.min(k);
                let b = e.n_memory.min(k);
                counts[(a * (k + 1) + b) as usize] += 1;
            }
            // expected with overflow cells collecting the tails
            let mut expected = vec![0.0; counts.len()];
            for a in 0..=40 {
                for b in 0..=40 {
                    let idx = (a.min(k) * (k + 1) + b.min(k)) as usize;
                    expected[idx] += joint_pmf(p, model, a, b).unwrap() * n as f64;
                }
            }
            for (c, e) in counts.iter().zip(&expected) {
                if *e == 0.0 {
                    assert_eq!(*c, 0);
                } else {
                    assert_within_sigma(*c as f64, *e, e.sqrt(), 4.5);
                }
            }
            assert!(chi_square_ok(&counts, &expected));
        }
    }

    #[test]
    fn tms_correlation_is_perfect() {
        let sampler = WriteSampler::new(0.5, SourceModel::QuantumTms).unwrap();
        let mut r = rng(7);
        let xs: Vec<TrialExcitation> = (0..100_000).map(|_| sampler.sample(&mut r)).collect();
        assert!(xs.iter().all(|e| e.n_stokes == e.n_memory));
        let n = xs.len() as f64;
        let ms = xs.iter().map(|e| e.n_stokes as f64).sum::<f64>() / n;
        let mm = xs.iter().map(|e| e.n_memory as f64).sum::<f64>() / n;
        let cov = xs
            .iter()
            .map(|e| (e.n_stokes as f64 - ms) * (e.n_memory as f64 - mm))
            .sum::<f64>();
        let vs = xs
            .iter()
            .map(|e| (e.n_stokes as f64 - ms).powi(2))
            .sum::<f64>();
        let vm = xs
            .iter()
            .map(|e| (e.n_memory as f64 - mm).powi(2))
            .sum::<f64>();
        assert_eq!(cov / (vs * vm).sqrt(), 1.0);
    }

    #[test]
    fn zero_delay_is_identity() {
        let mut r = rng(8);
        for n in [0, 1, 5, 40] {
            assert_eq!(decohere_memory(n, 0.0, 1e-6, 3.0, &mut r).unwrap(), n);
            assert_eq!(decohere_memory(n, 2e-6, f64::MAX, 3.0, &mut r).unwrap(), n);
        }
        assert!(decohere_memory(1, -1.0, 1e-6, 0.0, &mut r).is_err());
        assert!(decohere_memory(1, 1.0, 0.0, 0.0, &mut r).is_err());
        assert!(decohere_memory(1, 1.0, 1.0, -0.5, &mut r).is_err());
    }

    #[test]
    fn one_lifetime_survival() {
        let mut r = rng(9);
        let n = 1_000_000;
        let kept: u64 = (0..n)
            .map(|_| decohere_memory(1, 2e-6, 2e-6, 0.0, &mut r).unwrap())
            .sum();
        let expected = (-1.0f64).exp();
        assert!((expected - 0.3679).abs() < 1e-4);
        let frac = kept as f64 / n as f64;
        assert_within_sigma(
            frac,
            expected,
            (expected * (1.0 - expected) / n as f64).sqrt(),
            3.0,
        );
    }

    #[test]
    fn diffusion_in_mean() {
        let mut r = rng(10);
        let n = 1_000_000;
        let total: u64 = (0..n)
            .map(|_| decohere_memory(0, 1e-6, 1e-6, 0.5, &mut r).unwrap())
            .sum();
        let lambda = 0.5 * (1.0 - (-1.0f64).exp());
        assert_within_sigma(
            total as f64 / n as f64,
            lambda,
            (lambda / n as f64).sqrt(),
            4.0,
        );
    }

    #[test]
    fn retrieval_examples() {
        let mut r = rng(11);
        for n in [0, 1, 7] {
            assert_eq!(retrieve(n, 1.0, &mut r), n);
        }
        let n = 1_000_000;
        let ok = (0..n).filter(|_| retrieve(1, 0.32, &mut r) == 1).count();
        assert_within_sigma(
            ok as f64 / n as f64,
            0.32,
            (0.32 * 0.68 / n as f64).sqrt(),
            4.0,
        );

        // n=2, eta=0.5: enumerate the 4 equally likely keep/drop outcomes
        let outcomes = [(0, 0), (0, 1), (1, 0), (1, 1)];
        let p1 = outcomes.iter().filter(|(a, b)| a + b == 1).count() as f64 / 4.0;
        assert_eq!(p1, 0.5);
        let ones = (0..n).filter(|_| retrieve(2, 0.5, &mut r) == 1).count();
        assert_within_sigma(ones as f64 / n as f64, p1, (0.25 / n as f64).sqrt(), 4.0);
    }

    #[test]
    fn storage_then_retrieval_is_one_thinning() {
        let (s, eta) = ((-0.5f64).exp(), 0.6);
        let n = 1_000_000;
        let start = 4u64;
        let mut r = rng(12);
        let mut composed = vec![0u64; 5];
        let mut direct = vec![0u64; 5];
        for _ in 0..n {
            let m = decohere_memory(start, 1e-6, 2e-6, 0.0, &mut r).unwrap();
            composed[retrieve(m, eta, &mut r) as usize] += 1;
            direct[thin(start, s * eta, &mut r) as usize] += 1;
        }
        let expected: Vec<f64> = (0..=4u32)
            .map(|k| {
                let q: f64 = s * eta;
                let c = [1.0, 4.0, 6.0, 4.0, 1.0][k as usize];
                c * q.powi(k as i32) * (1.0 - q).powi(4 - k as i32) * n as f64
            })
            .collect();
        assert!(chi_square_ok(&composed, &expected));
        assert!(chi_square_ok(&direct, &expected));
    }
}
