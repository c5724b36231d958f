//! Trial orchestration: duty-cycle simulation, streaming reduction to
//! coincidence histograms, and parameter sweeps.
//!
//! Every trial draws from its own ChaCha8 stream keyed by the run seed and
//! selected by the trial index, so results do not depend on execution order or
//! worker count. Trials are processed in blocks; a block re-simulates the few
//! trials after it that its start clicks can reach within the histogram span, so
//! no block needs another block's clicks. Histograms and counters merge by
//! integer addition.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{validate, ConfigError, ExperimentConfig};
use crate::correlation::{
    cauchy_schwarz, g_ratio, CorrelationError, CorrelationReport, Measurement, SinglesRates,
};
use crate::optics::{
    detect, split, Channel, ChannelParams, ClickEvent, Detector, Gate, PulseProfile, UniformProfile,
};
use crate::oracle::{ClickPattern, McObservation};
use crate::source::{decohere_memory, retrieve, SourceError, TrialExcitation, WriteSampler};
use crate::tia::{
    merge_pair_streams, peak_areas_in, CoincidenceHistogram, PeakAreas, PeakWindow, TiaError,
    TimestampStream,
};
use crate::time::{ticks_to_seconds, Tick};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Tia(#[from] TiaError),
    #[error("unknown sweep parameter `{0}`")]
    UnknownParameter(String),
    #[error("bad value `{value}` for {parameter}: {message}")]
    BadSweepValue {
        parameter: String,
        value: String,
        message: String,
    },
    #[error("trial count must be >= 1")]
    NoTrials,
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

/// Detector pairs histogrammed by every run, as `(start, stop)`.
pub const PAIRS: [(Detector, Detector); 4] = [
    (Detector::A, Detector::B),
    (Detector::C, Detector::D),
    (Detector::A, Detector::C),
    (Detector::B, Detector::D),
];

/// Labels of [`PAIRS`]: auto-correlations 11 and 22, cross-correlation 12 and its duplicate.
pub const PAIR_LABELS: [&str; 4] = ["11", "22", "12", "12_bd"];

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
    /// Keep every click event (memory grows with the click count).
    pub keep_events: bool,
    /// Trials per work item.
    pub block_trials: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: None,
            keep_events: false,
            block_trials: 1 << 14,
        }
    }
}

/// Offset of each detector's gate from the start of its trial.
pub fn gate_offset(config: &ExperimentConfig, d: Detector) -> Tick {
    match d.channel() {
        Channel::Stokes => 0,
        Channel::AntiStokes => config.delay_ticks(),
    }
}

/// Delay window of the same-trial peak for a `(start, stop)` pair.
pub fn pair_window(config: &ExperimentConfig, start: Detector, stop: Detector) -> PeakWindow {
    PeakWindow::between_gates(
        gate_offset(config, start),
        gate_offset(config, stop),
        config.gate_ticks(),
    )
}

/// Outcome of one duty cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub excitation: TrialExcitation,
    /// Absolute click time per detector.
    pub clicks: [Option<Tick>; 4],
}

impl TrialOutcome {
    pub fn pattern(&self) -> ClickPattern {
        ClickPattern::from_clicks(self.clicks.map(|c| c.is_some()))
    }
}

/// Per-trial simulation with all distributions prepared once.
pub struct TrialSimulator<'a> {
    config: ExperimentConfig,
    key: [u8; 32],
    write: WriteSampler,
    stokes: ChannelParams,
    antistokes: ChannelParams,
    profile: &'a dyn PulseProfile,
    cycle: Tick,
    gate: Tick,
    delay: Tick,
}

impl<'a> TrialSimulator<'a> {
    pub fn new(
        config: &ExperimentConfig,
        seed: u64,
        profile: &'a dyn PulseProfile,
    ) -> Result<Self, RunError> {
        let config = validate(config.clone())?;
        Ok(Self {
            key: ChaCha8Rng::seed_from_u64(seed).get_seed(),
            write: WriteSampler::new(config.p_excitation, config.source_model)?,
            stokes: ChannelParams {
                channel: Channel::Stokes,
                transmission: config.transmission,
                bg_mean: config.bg_stokes_mean,
            },
            antistokes: ChannelParams {
                channel: Channel::AntiStokes,
                transmission: config.transmission,
                bg_mean: config.bg_antistokes_mean,
            },
            profile,
            cycle: config.cycle_ticks(),
            gate: config.gate_ticks(),
            delay: config.delay_ticks(),
            config,
        })
    }

    /// The random stream of one trial.
    pub fn trial_rng(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(trial);
        rng
    }

    /// write → Stokes optics and detection → storage → read → anti-Stokes optics and detection.
    pub fn simulate_trial(&self, trial: u64) -> TrialOutcome {
        let c = &self.config;
        let mut rng = self.trial_rng(trial);
        let mut exc = self.write.sample(&mut rng);

        let at_splitter = self.stokes.transport(exc.n_stokes, &mut rng);
        let (to_a, to_b) = split(at_splitter, &mut rng);

        let stored = decohere_memory(
            exc.n_memory,
            c.delay_dt,
            c.memory_lifetime,
            c.memory_diffusion_in,
            &mut rng,
        )
        .expect("validated storage parameters");
        exc.n_antistokes = retrieve(stored, c.retrieval_eff, &mut rng);
        let at_splitter = self.antistokes.transport(exc.n_antistokes, &mut rng);
        let (to_c, to_d) = split(at_splitter, &mut rng);

        let base = trial * self.cycle;
        let write_gate = Gate {
            start: base,
            width: self.gate,
        };
        let read_gate = Gate {
            start: base + self.delay,
            width: self.gate,
        };
        let mut clicks = [None; 4];
        for (d, n, gate) in [
            (Detector::A, to_a, write_gate),
            (Detector::B, to_b, write_gate),
            (Detector::C, to_c, read_gate),
            (Detector::D, to_d, read_gate),
        ] {
            clicks[d.index()] = detect(
                n,
                c.detector_eff,
                c.dark_mean,
                gate,
                trial,
                d,
                self.profile,
                &mut rng,
            )
            .map(|ev| ev.timestamp);
        }
        TrialOutcome {
            excitation: exc,
            clicks,
        }
    }
}

/// Everything reduced from the trials.
#[derive(Debug, Clone)]
struct Accumulator {
    histograms: Vec<CoincidenceHistogram>,
    pattern_counts: [u64; 16],
    events: Vec<ClickEvent>,
    photons: [u64; 2],
}

impl Accumulator {
    fn new(bin: Tick, span: Tick) -> Self {
        Self {
            histograms: PAIRS
                .iter()
                .map(|(a, b)| {
                    CoincidenceHistogram::zeros(*a, *b, bin, span).expect("validated binning")
                })
                .collect(),
            pattern_counts: [0; 16],
            events: Vec::new(),
            photons: [0; 2],
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.histograms.iter_mut().zip(&other.histograms) {
            a.add(b);
        }
        for (a, b) in self.pattern_counts.iter_mut().zip(other.pattern_counts) {
            *a += b;
        }
        self.photons[0] += other.photons[0];
        self.photons[1] += other.photons[1];
        self.events.extend(other.events);
        self
    }
}

fn simulate_block(
    sim: &TrialSimulator<'_>,
    acc: &mut Accumulator,
    lo: u64,
    hi: u64,
    reach: u64,
    keep_events: bool,
) {
    let end = hi.saturating_add(reach).min(sim.config.n_trials);
    let mut streams: [Vec<Tick>; 4] = Default::default();
    let mut own = [0usize; 4];
    for trial in lo..end {
        let outcome = sim.simulate_trial(trial);
        let is_own = trial < hi;
        for (i, click) in outcome.clicks.iter().enumerate() {
            if let Some(t) = click {
                streams[i].push(*t);
                if is_own {
                    own[i] += 1;
                    if keep_events {
                        acc.events.push(ClickEvent {
                            detector: Detector::ALL[i],
                            timestamp: *t,
                            trial_index: trial,
                        });
                    }
                }
            }
        }
        if is_own {
            acc.pattern_counts[outcome.pattern().0 as usize] += 1;
            acc.photons[0] += outcome.excitation.n_stokes;
            acc.photons[1] += outcome.excitation.n_antistokes;
        }
    }
    for (h, (start, stop)) in acc.histograms.iter_mut().zip(PAIRS) {
        let starts = &streams[start.index()][..own[start.index()]];
        h.accumulate(starts, &streams[stop.index()]);
    }
}

/// Snapshot of what produced a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub trials: u64,
    pub wall_time_seconds: f64,
    /// `(file name, sha256 hex)`, filled by [`crate::export::export`].
    pub outputs: Vec<(String, String)>,
    pub code_version: String,
}

/// Results of [`simulate_run`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: ExperimentConfig,
    /// Indexed like [`PAIRS`].
    pub histograms: Vec<CoincidenceHistogram>,
    pub peak_areas: Vec<PeakAreas>,
    pub correlations: Vec<Result<Measurement, CorrelationError>>,
    /// `None` when any of g11, g22, g12 is undefined.
    pub report: Option<CorrelationReport>,
    pub pattern_counts: [u64; 16],
    pub singles_counts: [u64; 4],
    /// Stokes photons emitted and anti-Stokes photons retrieved, summed over trials.
    pub photons: [u64; 2],
    /// Sorted by `(trial, detector)`; only with [`RunOptions::keep_events`].
    pub events: Option<Vec<ClickEvent>>,
    pub manifest: RunManifest,
}

impl RunArtifacts {
    pub fn trials(&self) -> u64 {
        self.manifest.trials
    }

    pub fn duration_seconds(&self) -> f64 {
        self.trials() as f64 * self.config.cycle_period
    }

    pub fn singles_rates(&self) -> SinglesRates {
        SinglesRates::from_counts(self.singles_counts, self.duration_seconds())
            .expect("positive duration")
    }

    pub fn g11(&self) -> Option<Measurement> {
        self.correlations[0].as_ref().ok().copied()
    }

    pub fn g22(&self) -> Option<Measurement> {
        self.correlations[1].as_ref().ok().copied()
    }

    pub fn g12(&self) -> Option<Measurement> {
        self.correlations[2].as_ref().ok().copied()
    }

    pub fn g12_bd(&self) -> Option<Measurement> {
        self.correlations[3].as_ref().ok().copied()
    }

    pub fn observation(&self) -> McObservation {
        McObservation {
            trials: self.trials(),
            pattern_counts: self.pattern_counts,
            g11: self.g11(),
            g22: self.g22(),
            g12: self.g12(),
        }
    }

    /// Per-detector click streams, available when events were kept.
    pub fn streams(&self) -> Option<[TimestampStream; 4]> {
        let events = self.events.as_ref()?;
        let duration = self.trials() * self.config.cycle_ticks();
        Some(merge_pair_streams(events, duration).expect("simulated streams are ordered"))
    }

    /// `key = value` report; undefined correlations are written as `undefined`.
    pub fn render_report(&self) -> String {
        if let Some(r) = &self.report {
            let mut s = r.render();
            let bd = self.g12_bd();
            s.push_str(&format!(
                "g12_bd = {}\ng12_bd_sigma = {}\n",
                bd.map_or("undefined".into(), |m| format!("{:?}", m.value)),
                bd.map_or("undefined".into(), |m| format!("{:?}", m.sigma)),
            ));
            s.push_str(&self.render_counts());
            return s;
        }
        let mut s = format!("delay_dt = {:?}\n", self.config.delay_dt);
        for (label, g) in PAIR_LABELS.iter().zip(&self.correlations) {
            match g {
                Ok(m) => s.push_str(&format!(
                    "g{label} = {:?}\ng{label}_sigma = {:?}\n",
                    m.value, m.sigma
                )),
                Err(_) => s.push_str(&format!(
                    "g{label} = undefined\ng{label}_sigma = undefined\n"
                )),
            }
        }
        s.push_str("verdict = undefined\n");
        s.push_str(&self.render_counts());
        s
    }

    fn render_counts(&self) -> String {
        let rates = self.singles_rates();
        let mut s = format!("trials = {}\n", self.trials());
        for (label, a) in PAIR_LABELS.iter().zip(&self.peak_areas) {
            s.push_str(&format!("n{label} = {}\nm{label} = {:?}\n", a.n, a.m));
        }
        for d in Detector::ALL {
            s.push_str(&format!(
                "singles_{d} = {}\n",
                self.singles_counts[d.index()]
            ));
        }
        s.push_str(&format!(
            "stokes_rate = {:?}\nantistokes_rate = {:?}\n",
            rates.stokes, rates.antistokes
        ));
        s
    }
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| RunError::Pool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs `trials` duty cycles with the uniform in-gate profile.
pub fn simulate_run(
    config: &ExperimentConfig,
    trials: u64,
    seed: u64,
    options: &RunOptions,
) -> Result<RunArtifacts, RunError> {
    simulate_run_with_profile(config, trials, seed, options, &UniformProfile)
}

pub fn simulate_run_with_profile(
    config: &ExperimentConfig,
    trials: u64,
    seed: u64,
    options: &RunOptions,
    profile: &dyn PulseProfile,
) -> Result<RunArtifacts, RunError> {
    if trials == 0 {
        return Err(RunError::NoTrials);
    }
    let started = Instant::now();
    let mut config = config.clone();
    config.n_trials = trials;
    config.rng_seed = seed;
    let sim = TrialSimulator::new(&config, seed, profile)?;
    let config = sim.config.clone();

    let (bin, span, cycle) = (
        config.bin_ticks(),
        config.span_ticks(),
        config.cycle_ticks(),
    );
    let reach = span.div_ceil(cycle) + 1;
    let block = options.block_trials.max(1);
    let blocks = trials.div_ceil(block);
    let keep = options.keep_events;

    let acc = with_pool(options.workers, || {
        (0..blocks)
            .into_par_iter()
            .fold(
                || Accumulator::new(bin, span),
                |mut acc, b| {
                    let lo = b * block;
                    let hi = (lo + block).min(trials);
                    simulate_block(&sim, &mut acc, lo, hi, reach, keep);
                    acc
                },
            )
            .reduce(|| Accumulator::new(bin, span), Accumulator::merge)
    })?;

    let mut singles_counts = [0u64; 4];
    for p in ClickPattern::all() {
        for d in Detector::ALL {
            if p.clicked(d) {
                singles_counts[d.index()] += acc.pattern_counts[p.0 as usize];
            }
        }
    }

    let mut peak_areas = Vec::with_capacity(PAIRS.len());
    for (h, (start, stop)) in acc.histograms.iter().zip(PAIRS) {
        peak_areas.push(peak_areas_in(
            h,
            cycle,
            pair_window(&config, start, stop),
            config.baseline_peaks,
        )?);
    }
    let correlations: Vec<_> = peak_areas
        .iter()
        .map(|a| g_ratio(a.n, a.m, config.baseline_peaks))
        .collect();
    let report = match (&correlations[0], &correlations[1], &correlations[2]) {
        (Ok(g11), Ok(g22), Ok(g12)) => cauchy_schwarz(*g11, *g22, *g12, config.delay_dt).ok(),
        _ => None,
    };

    let events = keep.then(|| {
        let mut ev = acc.events;
        ev.sort_unstable_by_key(|e| (e.trial_index, e.detector));
        ev
    });

    Ok(RunArtifacts {
        histograms: acc.histograms,
        peak_areas,
        correlations,
        report,
        pattern_counts: acc.pattern_counts,
        singles_counts,
        photons: acc.photons,
        events,
        manifest: RunManifest {
            config: config.clone(),
            seed,
            trials,
            wall_time_seconds: started.elapsed().as_secs_f64(),
            outputs: Vec::new(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        },
        config,
    })
}

/// splitmix64 finalizer applied to `seed + index`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Config keys a sweep may vary.
pub const SWEEPABLE: &[&str] = &[
    "source_model",
    "p_excitation",
    "delay_dt",
    "memory_lifetime",
    "memory_diffusion_in",
    "retrieval_eff",
    "transmission",
    "detector_eff",
    "dark_mean",
    "bg_stokes_mean",
    "bg_antistokes_mean",
    "gate_width",
    "cycle_period",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub seed: u64,
    pub g11: Option<Measurement>,
    pub g22: Option<Measurement>,
    pub g12: Option<Measurement>,
    pub ratio: Option<Measurement>,
    pub violation_significance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub parameter: String,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_HEADER: &str =
    "value,seed,g11,g11_sigma,g22,g22_sigma,g12,g12_sigma,ratio,ratio_sigma,violation_significance";

impl SweepTable {
    /// Delimited export with header [`SWEEP_HEADER`]; undefined values are `nan`.
    pub fn to_csv(&self) -> String {
        let m = |x: Option<Measurement>| match x {
            Some(m) => format!("{:?},{:?}", m.value, m.sigma),
            None => "nan,nan".to_string(),
        };
        let mut out = format!("{SWEEP_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.value,
                r.seed,
                m(r.g11),
                m(r.g22),
                m(r.g12),
                m(r.ratio),
                r.violation_significance
                    .map_or("nan".into(), |s| format!("{s:?}")),
            ));
        }
        out
    }
}

/// One run per value of `parameter`, each with seed `derive_seed(seed, index)`.
pub fn sweep(
    config: &ExperimentConfig,
    parameter: &str,
    values: &[String],
    trials: u64,
    seed: u64,
    options: &RunOptions,
) -> Result<SweepTable, RunError> {
    if !SWEEPABLE.contains(&parameter) {
        return Err(RunError::UnknownParameter(parameter.to_string()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for (i, value) in values.iter().enumerate() {
        let mut c = config.clone();
        c.set(parameter, value)
            .map_err(|message| RunError::BadSweepValue {
                parameter: parameter.to_string(),
                value: value.clone(),
                message,
            })?;
        let run_seed = derive_seed(seed, i as u64);
        let run = simulate_run(&c, trials, run_seed, options)?;
        rows.push(SweepRow {
            value: value.clone(),
            seed: run_seed,
            g11: run.g11(),
            g22: run.g22(),
            g12: run.g12(),
            ratio: run.report.as_ref().map(|r| r.ratio),
            violation_significance: run.report.as_ref().map(|r| r.violation_significance),
        });
    }
    Ok(SweepTable {
        parameter: parameter.to_string(),
        rows,
    })
}

/// Seconds of simulated time for `trials` cycles.
pub fn run_duration(config: &ExperimentConfig, trials: u64) -> f64 {
    ticks_to_seconds(trials * config.cycle_ticks())
}
