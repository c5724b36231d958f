//! Experiment parameters, their validation, and the flat `key = value` file format.
//!
//! A config file holds one `key = value` pair per line. Everything after a `#`
//! is a comment and blank lines are ignored. Every key is optional; omitted keys
//! take the value from [`paper_preset`]. Times are in seconds, means are
//! dimensionless per-gate (or per-trial) expectation values.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::time::{seconds_to_ticks, Tick};

/// Physics of the write process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceModel {
    /// Two-mode squeezed vacuum: Stokes and memory share one thermal photon number.
    QuantumTms,
    /// Exponentially distributed common intensity driving two independent Poisson counts.
    ClassicalCorrelated,
}

impl SourceModel {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceModel::QuantumTms => "quantum_tms",
            SourceModel::ClassicalCorrelated => "classical_correlated",
        }
    }
}

impl fmt::Display for SourceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quantum_tms" => Ok(SourceModel::QuantumTms),
            "classical_correlated" => Ok(SourceModel::ClassicalCorrelated),
            other => Err(format!(
                "unknown source model `{other}` (expected quantum_tms or classical_correlated)"
            )),
        }
    }
}

/// Every physical and acquisition parameter of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source_model: SourceModel,
    /// Mean excitation number of the write mode per write pulse.
    pub p_excitation: f64,
    /// Write-gate start to read-gate start, seconds.
    pub delay_dt: f64,
    /// 1/e survival time of a stored excitation, seconds.
    pub memory_lifetime: f64,
    /// Mean uncorrelated excitations diffusing into the read mode (full-decay limit).
    pub memory_diffusion_in: f64,
    pub retrieval_eff: f64,
    /// Cell-to-detector transmission, applied to both channels.
    pub transmission: f64,
    pub detector_eff: f64,
    /// Mean dark counts per detector per gate.
    pub dark_mean: f64,
    pub bg_stokes_mean: f64,
    pub bg_antistokes_mean: f64,
    pub gate_width: f64,
    pub cycle_period: f64,
    pub n_trials: u64,
    pub rng_seed: u64,
    pub hist_bin: f64,
    pub hist_span: f64,
    pub baseline_peaks: u32,
}

/// Committed Stokes background mean (photons per gate at the beam splitter),
/// produced by [`crate::calibrate::calibrate_backgrounds`] for [`paper_preset`].
pub const PRESET_BG_STOKES_MEAN: f64 = 1.337_634_568_333_783e-4;
/// Committed anti-Stokes background mean. The noise-free anti-Stokes rate already
/// exceeds the 70 s⁻¹ target, so the solve clamps at zero.
pub const PRESET_BG_ANTISTOKES_MEAN: f64 = 0.0;

/// Reference preset: room-temperature vapor-cell memory driven at 5 kHz.
///
/// Retrieval efficiency is the value measured at the preset 2 µs delay, so the
/// stored excitation is treated as non-decaying (`memory_lifetime = f64::MAX`).
/// `memory_diffusion_in` only acts once a finite lifetime is set.
pub fn paper_preset() -> ExperimentConfig {
    ExperimentConfig {
        source_model: SourceModel::QuantumTms,
        p_excitation: 0.14,
        delay_dt: 2e-6,
        memory_lifetime: f64::MAX,
        memory_diffusion_in: 0.1,
        retrieval_eff: 0.32,
        transmission: 0.50,
        detector_eff: 0.64,
        dark_mean: 5e-5,
        bg_stokes_mean: PRESET_BG_STOKES_MEAN,
        bg_antistokes_mean: PRESET_BG_ANTISTOKES_MEAN,
        gate_width: 1e-6,
        cycle_period: 2e-4,
        n_trials: 1_000_000,
        rng_seed: 1,
        hist_bin: 1e-8,
        hist_span: 1.8e-3,
        baseline_peaks: 7,
    }
}

/// One broken invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub key: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid value for `{key}` at line {line}: {message}")]
    Value {
        key: String,
        line: usize,
        message: String,
    },
    #[error("{}", render_violations(.0))]
    Domain(Vec<Violation>),
}

fn render_violations(v: &[Violation]) -> String {
    let parts: Vec<String> = v.iter().map(|v| v.to_string()).collect();
    format!(
        "config violates {} constraint(s): {}",
        v.len(),
        parts.join("; ")
    )
}

/// All keys accepted by the parser, in render order.
pub const KEYS: &[&str] = &[
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
    "n_trials",
    "rng_seed",
    "hist_bin",
    "hist_span",
    "baseline_peaks",
];

fn parse_f64(raw: &str) -> Result<f64, String> {
    raw.parse::<f64>()
        .map_err(|_| format!("`{raw}` is not a number"))
}

fn parse_u64(raw: &str) -> Result<u64, String> {
    raw.parse::<u64>()
        .map_err(|_| format!("`{raw}` is not a non-negative integer"))
}

impl ExperimentConfig {
    /// Sets one field from its textual value. Does not validate.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), String> {
        match key {
            "source_model" => self.source_model = raw.parse()?,
            "p_excitation" => self.p_excitation = parse_f64(raw)?,
            "delay_dt" => self.delay_dt = parse_f64(raw)?,
            "memory_lifetime" => self.memory_lifetime = parse_f64(raw)?,
            "memory_diffusion_in" => self.memory_diffusion_in = parse_f64(raw)?,
            "retrieval_eff" => self.retrieval_eff = parse_f64(raw)?,
            "transmission" => self.transmission = parse_f64(raw)?,
            "detector_eff" => self.detector_eff = parse_f64(raw)?,
            "dark_mean" => self.dark_mean = parse_f64(raw)?,
            "bg_stokes_mean" => self.bg_stokes_mean = parse_f64(raw)?,
            "bg_antistokes_mean" => self.bg_antistokes_mean = parse_f64(raw)?,
            "gate_width" => self.gate_width = parse_f64(raw)?,
            "cycle_period" => self.cycle_period = parse_f64(raw)?,
            "n_trials" => self.n_trials = parse_u64(raw)?,
            "rng_seed" => self.rng_seed = parse_u64(raw)?,
            "hist_bin" => self.hist_bin = parse_f64(raw)?,
            "hist_span" => self.hist_span = parse_f64(raw)?,
            "baseline_peaks" => {
                self.baseline_peaks =
                    u32::try_from(parse_u64(raw)?).map_err(|_| format!("`{raw}` is too large"))?
            }
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order, then validates.
    pub fn with_overrides<'a, I>(mut self, overrides: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        for (i, item) in overrides.into_iter().enumerate() {
            let (key, value) = split_assignment(item).ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                column: 1,
                message: format!("override `{item}` is not of the form key=value"),
            })?;
            self.set(key, value).map_err(|message| ConfigError::Value {
                key: key.to_string(),
                line: i + 1,
                message,
            })?;
        }
        validate(self)
    }

    /// Renders in the config file format; `parse_config(&c.render())` returns `c`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.value_string(key));
            out.push('\n');
        }
        out
    }

    /// Textual value of a field, as the parser would accept it.
    pub fn value_string(&self, key: &str) -> String {
        match key {
            "source_model" => self.source_model.to_string(),
            "p_excitation" => format!("{:?}", self.p_excitation),
            "delay_dt" => format!("{:?}", self.delay_dt),
            "memory_lifetime" => format!("{:?}", self.memory_lifetime),
            "memory_diffusion_in" => format!("{:?}", self.memory_diffusion_in),
            "retrieval_eff" => format!("{:?}", self.retrieval_eff),
            "transmission" => format!("{:?}", self.transmission),
            "detector_eff" => format!("{:?}", self.detector_eff),
            "dark_mean" => format!("{:?}", self.dark_mean),
            "bg_stokes_mean" => format!("{:?}", self.bg_stokes_mean),
            "bg_antistokes_mean" => format!("{:?}", self.bg_antistokes_mean),
            "gate_width" => format!("{:?}", self.gate_width),
            "cycle_period" => format!("{:?}", self.cycle_period),
            "n_trials" => self.n_trials.to_string(),
            "rng_seed" => self.rng_seed.to_string(),
            "hist_bin" => format!("{:?}", self.hist_bin),
            "hist_span" => format!("{:?}", self.hist_span),
            "baseline_peaks" => self.baseline_peaks.to_string(),
            _ => String::new(),
        }
    }

    pub fn gate_ticks(&self) -> Tick {
        seconds_to_ticks(self.gate_width)
    }

    pub fn cycle_ticks(&self) -> Tick {
        seconds_to_ticks(self.cycle_period)
    }

    pub fn delay_ticks(&self) -> Tick {
        seconds_to_ticks(self.delay_dt)
    }

    pub fn bin_ticks(&self) -> Tick {
        seconds_to_ticks(self.hist_bin)
    }

    pub fn span_ticks(&self) -> Tick {
        seconds_to_ticks(self.hist_span)
    }

    /// Trial repetition rate, s⁻¹.
    pub fn trial_rate(&self) -> f64 {
        1.0 / self.cycle_period
    }
}

fn split_assignment(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim(), v.trim()))
}

/// Parses a config document. Unknown or duplicate keys are errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut config = paper_preset();
    let mut seen: Vec<&str> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        if content.trim().is_empty() {
            continue;
        }
        let Some(eq) = content.find('=') else {
            let column = content.len() - content.trim_start().len() + 1;
            return Err(ConfigError::Syntax {
                line: line_no,
                column,
                message: "expected `key = value`".to_string(),
            });
        };
        let key = content[..eq].trim();
        let value = content[eq + 1..].trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: line_no,
                column: eq + 1,
                message: "missing key before `=`".to_string(),
            });
        }
        if value.is_empty() {
            return Err(ConfigError::Syntax {
                line: line_no,
                column: eq + 2,
                message: format!("missing value for `{key}`"),
            });
        }
        let Some(&canonical) = KEYS.iter().find(|k| **k == key) else {
            let column = content.len() - content.trim_start().len() + 1;
            return Err(ConfigError::Syntax {
                line: line_no,
                column,
                message: format!("unknown key `{key}`"),
            });
        };
        if seen.contains(&canonical) {
            return Err(ConfigError::Syntax {
                line: line_no,
                column: 1,
                message: format!("duplicate key `{key}`"),
            });
        }
        seen.push(canonical);
        config
            .set(canonical, value)
            .map_err(|message| ConfigError::Value {
                key: canonical.to_string(),
                line: line_no,
                message,
            })?;
    }
    validate(config)
}

/// Returns the config unchanged if every invariant holds, else the full list of violations.
pub fn validate(config: ExperimentConfig) -> Result<ExperimentConfig, ConfigError> {
    let violations = violations(&config);
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Domain(violations))
    }
}

/// Every broken invariant of `c`, in field order.
pub fn violations(c: &ExperimentConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |key: &'static str, message: String| out.push(Violation { key, message });

    for (key, v) in [
        ("retrieval_eff", c.retrieval_eff),
        ("transmission", c.transmission),
        ("detector_eff", c.detector_eff),
    ] {
        if !(0.0..=1.0).contains(&v) {
            push(key, format!("probability {v} outside [0, 1]"));
        }
    }
    for (key, v) in [
        ("p_excitation", c.p_excitation),
        ("memory_diffusion_in", c.memory_diffusion_in),
        ("dark_mean", c.dark_mean),
        ("bg_stokes_mean", c.bg_stokes_mean),
        ("bg_antistokes_mean", c.bg_antistokes_mean),
        ("delay_dt", c.delay_dt),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            push(key, format!("value {v} must be finite and >= 0"));
        }
    }
    for (key, v) in [
        ("memory_lifetime", c.memory_lifetime),
        ("gate_width", c.gate_width),
        ("cycle_period", c.cycle_period),
        ("hist_bin", c.hist_bin),
        ("hist_span", c.hist_span),
    ] {
        if !(v.is_finite() && v > 0.0) {
            push(key, format!("value {v} must be finite and > 0"));
        }
    }
    if c.n_trials < 1 {
        push("n_trials", "must be >= 1".to_string());
    }
    if c.baseline_peaks < 1 {
        push("baseline_peaks", "must be >= 1".to_string());
    }

    let timing_ok = [
        c.gate_width,
        c.cycle_period,
        c.hist_bin,
        c.hist_span,
        c.delay_dt,
    ]
    .iter()
    .all(|v| v.is_finite() && *v >= 0.0)
        && c.hist_bin > 0.0;
    if !timing_ok {
        return out;
    }

    if c.gate_width >= c.cycle_period {
        push(
            "gate_width",
            format!(
                "gate must fit inside cycle (gate_width {} >= cycle_period {})",
                c.gate_width, c.cycle_period
            ),
        );
    } else if 2.0 * c.gate_width > c.cycle_period {
        push(
            "gate_width",
            format!(
                "coincidence peaks overlap: 2*gate_width {} > cycle_period {}",
                2.0 * c.gate_width,
                c.cycle_period
            ),
        );
    }
    if c.delay_dt + c.gate_width > c.cycle_period {
        push(
            "delay_dt",
            format!(
                "read gate must fit inside cycle (delay_dt + gate_width = {} > cycle_period {})",
                c.delay_dt + c.gate_width,
                c.cycle_period
            ),
        );
    }
    let min_span = f64::from(c.baseline_peaks + 1) * c.cycle_period;
    if c.hist_span < min_span {
        push(
            "hist_span",
            format!(
                "span too small: {} < (baseline_peaks+1)*cycle_period = {}",
                c.hist_span, min_span
            ),
        );
    }
    let bin = c.bin_ticks();
    if bin == 0 {
        push("hist_bin", "bin width below 1 ps resolution".to_string());
    } else {
        if !c.span_ticks().is_multiple_of(bin) {
            push(
                "hist_span",
                "span must be a multiple of hist_bin".to_string(),
            );
        }
        if !c.cycle_ticks().is_multiple_of(bin) {
            push(
                "cycle_period",
                "cycle_period must be a multiple of hist_bin".to_string(),
            );
        }
    }
    if c.gate_ticks() == 0 && c.gate_width > 0.0 {
        push("gate_width", "gate width below 1 ps resolution".to_string());
    }
    out
}
