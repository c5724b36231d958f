//! Time-interval-analyzer emulation: start–stop coincidence histograms and the
//! same-trial / cross-trial peak areas extracted from them.
//!
//! The analyzer is multi-stop: every stop click at a delay in `[0, span)` after
//! a start click is counted, not only the first one.

use std::fmt::Write as _;

use thiserror::Error;

use crate::optics::{ClickEvent, Detector};
use crate::time::{seconds_to_ticks, ticks_to_seconds, Tick};

#[derive(Debug, Error, PartialEq)]
pub enum TiaError {
    #[error("timestamps of detector {detector} not strictly increasing at index {index}")]
    Unsorted { detector: Detector, index: usize },
    #[error("timestamp {timestamp} ps of detector {detector} outside run duration {duration} ps")]
    OutOfRange {
        detector: Detector,
        timestamp: Tick,
        duration: Tick,
    },
    #[error("histogram span {span} ps is not a positive multiple of bin width {bin} ps")]
    BadBinning { span: Tick, bin: Tick },
    #[error(
        "histogram span {span} ps shorter than the {needed} ps needed for {peaks} baseline peaks"
    )]
    SpanTooSmall {
        span: Tick,
        needed: Tick,
        peaks: u32,
    },
    #[error("peak window [{lo}, {hi}) ps does not fit inside cycle period {cycle} ps")]
    WindowTooWide { lo: Tick, hi: Tick, cycle: Tick },
    #[error("cycle period {cycle} ps is not a multiple of bin width {bin} ps")]
    Misaligned { cycle: Tick, bin: Tick },
    #[error("at least one baseline peak is required")]
    NoBaseline,
    #[error("malformed histogram export at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Click times of one detector over a whole run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampStream {
    detector: Detector,
    timestamps: Vec<Tick>,
    total_duration: Tick,
}

impl TimestampStream {
    pub fn new(
        detector: Detector,
        timestamps: Vec<Tick>,
        total_duration: Tick,
    ) -> Result<Self, TiaError> {
        check_sorted(detector, &timestamps)?;
        if let Some(&last) = timestamps.last() {
            if last >= total_duration {
                return Err(TiaError::OutOfRange {
                    detector,
                    timestamp: last,
                    duration: total_duration,
                });
            }
        }
        Ok(Self {
            detector,
            timestamps,
            total_duration,
        })
    }

    pub fn empty(detector: Detector, total_duration: Tick) -> Self {
        Self {
            detector,
            timestamps: Vec::new(),
            total_duration,
        }
    }

    pub fn detector(&self) -> Detector {
        self.detector
    }

    pub fn timestamps(&self) -> &[Tick] {
        &self.timestamps
    }

    pub fn total_duration(&self) -> Tick {
        self.total_duration
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn seconds(&self) -> impl Iterator<Item = f64> + '_ {
        self.timestamps.iter().map(|t| ticks_to_seconds(*t))
    }
}

fn check_sorted(detector: Detector, ts: &[Tick]) -> Result<(), TiaError> {
    match ts.windows(2).position(|w| w[1] <= w[0]) {
        Some(i) => Err(TiaError::Unsorted {
            detector,
            index: i + 1,
        }),
        None => Ok(()),
    }
}

/// Binned start→stop delay counts for one detector pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoincidenceHistogram {
    pub start: Detector,
    pub stop: Detector,
    pub bin_width: Tick,
    pub bins: Vec<u64>,
}

impl CoincidenceHistogram {
    pub fn zeros(
        start: Detector,
        stop: Detector,
        bin_width: Tick,
        span: Tick,
    ) -> Result<Self, TiaError> {
        if bin_width == 0 || span == 0 || !span.is_multiple_of(bin_width) {
            return Err(TiaError::BadBinning {
                span,
                bin: bin_width,
            });
        }
        Ok(Self {
            start,
            stop,
            bin_width,
            bins: vec![0; (span / bin_width) as usize],
        })
    }

    pub fn span(&self) -> Tick {
        self.bin_width * self.bins.len() as Tick
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    /// Counts every `(t_start, t_stop)` pair with `0 <= t_stop − t_start < span`.
    /// Both slices must be sorted ascending.
    pub fn accumulate(&mut self, starts: &[Tick], stops: &[Tick]) {
        let span = self.span();
        let bin = self.bin_width;
        let mut lo = 0usize;
        for &ts in starts {
            while lo < stops.len() && stops[lo] < ts {
                lo += 1;
            }
            for &tp in &stops[lo..] {
                let delay = tp - ts;
                if delay >= span {
                    break;
                }
                self.bins[(delay / bin) as usize] += 1;
            }
        }
    }

    /// Bin-wise sum. Panics if the binning differs.
    pub fn add(&mut self, other: &CoincidenceHistogram) {
        assert_eq!(self.bin_width, other.bin_width);
        assert_eq!(self.bins.len(), other.bins.len());
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
    }

    /// Sum of bins whose delay range starts inside `[lo, hi)`, with `lo` rounded
    /// down and `hi` rounded up to bin edges.
    pub fn window_sum(&self, lo: Tick, hi: Tick) -> u64 {
        let a = (lo / self.bin_width) as usize;
        let b = (hi.div_ceil(self.bin_width) as usize).min(self.bins.len());
        if a >= b {
            return 0;
        }
        self.bins[a..b].iter().sum()
    }

    /// Delimited export: header then `delay_bin_start_seconds,count` per bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.bins.len() * 16);
        out.push_str("delay_bin_start_seconds,count\n");
        for (i, c) in self.bins.iter().enumerate() {
            let start = ticks_to_seconds(i as Tick * self.bin_width);
            let _ = writeln!(out, "{start},{c}");
        }
        out
    }

    pub fn from_csv(text: &str, start: Detector, stop: Detector) -> Result<Self, TiaError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "delay_bin_start_seconds,count")) => {}
            _ => {
                return Err(TiaError::Parse {
                    line: 1,
                    message: "missing header".into(),
                })
            }
        }
        let mut starts = Vec::new();
        let mut bins = Vec::new();
        for (i, line) in lines {
            let bad = |message: String| TiaError::Parse {
                line: i + 1,
                message,
            };
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| bad("expected two columns".into()))?;
            let t: f64 = a.parse().map_err(|_| bad(format!("bad delay `{a}`")))?;
            let c: u64 = b.parse().map_err(|_| bad(format!("bad count `{b}`")))?;
            starts.push(seconds_to_ticks(t));
            bins.push(c);
        }
        let bin_width = match starts.get(1) {
            Some(&w) => w,
            None => {
                return Err(TiaError::Parse {
                    line: 2,
                    message: "need at least two bins to recover the bin width".into(),
                })
            }
        };
        if starts
            .iter()
            .enumerate()
            .any(|(i, t)| *t != i as Tick * bin_width)
        {
            return Err(TiaError::Parse {
                line: 2,
                message: "bin starts are not evenly spaced".into(),
            });
        }
        Ok(Self {
            start,
            stop,
            bin_width,
            bins,
        })
    }
}

/// Builds the start→stop histogram of two streams.
pub fn histogram(
    start: &TimestampStream,
    stop: &TimestampStream,
    bin_width: Tick,
    span: Tick,
) -> Result<CoincidenceHistogram, TiaError> {
    let mut h = CoincidenceHistogram::zeros(start.detector, stop.detector, bin_width, span)?;
    h.accumulate(&start.timestamps, &stop.timestamps);
    Ok(h)
}

/// Same as [`histogram`] but on raw slices, checking order first.
pub fn histogram_from_slices(
    start: (Detector, &[Tick]),
    stop: (Detector, &[Tick]),
    bin_width: Tick,
    span: Tick,
) -> Result<CoincidenceHistogram, TiaError> {
    check_sorted(start.0, start.1)?;
    check_sorted(stop.0, stop.1)?;
    let mut h = CoincidenceHistogram::zeros(start.0, stop.0, bin_width, span)?;
    h.accumulate(start.1, stop.1);
    Ok(h)
}

/// Splits the start stream into `shards` contiguous ranges, histograms each,
/// and merges bin-wise. Equal to [`histogram`] for any shard count.
pub fn histogram_sharded(
    start: &TimestampStream,
    stop: &TimestampStream,
    bin_width: Tick,
    span: Tick,
    shards: usize,
) -> Result<CoincidenceHistogram, TiaError> {
    use rayon::prelude::*;
    let mut total = CoincidenceHistogram::zeros(start.detector, stop.detector, bin_width, span)?;
    let chunk = start.timestamps.len().div_ceil(shards.max(1)).max(1);
    let parts: Vec<CoincidenceHistogram> = start
        .timestamps
        .par_chunks(chunk)
        .map(|starts| {
            let mut h = CoincidenceHistogram::zeros(start.detector, stop.detector, bin_width, span)
                .expect("binning checked above");
            h.accumulate(starts, &stop.timestamps);
            h
        })
        .collect();
    for p in &parts {
        total.add(p);
    }
    Ok(total)
}

/// Delay window of a coincidence peak, relative to the peak's nominal position
/// `j·cycle_period`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeakWindow {
    pub lo: Tick,
    pub hi: Tick,
}

impl PeakWindow {
    /// `[0, gate_width)`: both detectors share one gate.
    pub fn same_gate(gate_width: Tick) -> Self {
        Self {
            lo: 0,
            hi: gate_width,
        }
    }

    /// Window covering every delay between a click in the start detector's gate
    /// (opening at `start_gate`) and one in the stop detector's gate (opening at
    /// `stop_gate`), clipped to non-negative delays.
    pub fn between_gates(start_gate: Tick, stop_gate: Tick, gate_width: Tick) -> Self {
        let offset = stop_gate as i128 - start_gate as i128;
        let gw = gate_width as i128;
        let lo = (offset - gw).max(0);
        let hi = (offset + gw).max(0);
        Self {
            lo: lo as Tick,
            hi: hi as Tick,
        }
    }
}

/// Same-trial and cross-trial peak areas.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakAreas {
    /// Area of the same-trial peak.
    pub n: u64,
    /// Mean area of the baseline (cross-trial) peaks.
    pub m: f64,
    /// Area of baseline peaks `j = 1..=baseline_peaks`.
    pub baseline: Vec<u64>,
}

impl PeakAreas {
    pub fn baseline_total(&self) -> u64 {
        self.baseline.iter().sum()
    }
}

/// Peak areas with the same-gate window `[0, gate_width)`.
pub fn peak_areas(
    hist: &CoincidenceHistogram,
    cycle_period: Tick,
    gate_width: Tick,
    baseline_peaks: u32,
) -> Result<PeakAreas, TiaError> {
    if gate_width >= cycle_period {
        return Err(TiaError::WindowTooWide {
            lo: 0,
            hi: gate_width,
            cycle: cycle_period,
        });
    }
    peak_areas_in(
        hist,
        cycle_period,
        PeakWindow::same_gate(gate_width),
        baseline_peaks,
    )
}

/// `N` = area over `window`, `area_j` = area over `j·cycle_period + window`,
/// `M` = mean of `area_1..area_baseline_peaks`.
pub fn peak_areas_in(
    hist: &CoincidenceHistogram,
    cycle_period: Tick,
    window: PeakWindow,
    baseline_peaks: u32,
) -> Result<PeakAreas, TiaError> {
    if baseline_peaks == 0 {
        return Err(TiaError::NoBaseline);
    }
    if window.hi > cycle_period || window.lo > window.hi {
        return Err(TiaError::WindowTooWide {
            lo: window.lo,
            hi: window.hi,
            cycle: cycle_period,
        });
    }
    if !cycle_period.is_multiple_of(hist.bin_width) {
        return Err(TiaError::Misaligned {
            cycle: cycle_period,
            bin: hist.bin_width,
        });
    }
    let needed = Tick::from(baseline_peaks + 1) * cycle_period;
    if hist.span() < needed {
        return Err(TiaError::SpanTooSmall {
            span: hist.span(),
            needed,
            peaks: baseline_peaks,
        });
    }
    let area = |j: u32| {
        let shift = Tick::from(j) * cycle_period;
        hist.window_sum(shift + window.lo, shift + window.hi)
    };
    let baseline: Vec<u64> = (1..=baseline_peaks).map(area).collect();
    let m = baseline.iter().sum::<u64>() as f64 / f64::from(baseline_peaks);
    Ok(PeakAreas {
        n: area(0),
        m,
        baseline,
    })
}

/// Groups clicks into one sorted stream per detector, indexed by [`Detector::index`].
pub fn merge_pair_streams(
    events: &[ClickEvent],
    total_duration: Tick,
) -> Result<[TimestampStream; 4], TiaError> {
    let mut per: [Vec<Tick>; 4] = Default::default();
    for ev in events {
        per[ev.detector.index()].push(ev.timestamp);
    }
    let mut out = Detector::ALL.map(|d| TimestampStream::empty(d, total_duration));
    for (i, mut ts) in per.into_iter().enumerate() {
        ts.sort_unstable();
        out[i] = TimestampStream::new(Detector::ALL[i], ts, total_duration)?;
    }
    Ok(out)
}
