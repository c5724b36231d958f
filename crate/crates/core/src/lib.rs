//! Monte Carlo simulation of Stokes/anti-Stokes photon-pair experiments on an
//! atomic-ensemble memory, with a time-interval-analyzer emulation for
//! coincidence histograms, normalized correlation functions, the Cauchy-Schwarz
//! classicality test, and an analytic click-pattern oracle.
//!
//! The pipeline for one trial (duty cycle) is
//! write → Stokes optics/detection → memory storage → read → anti-Stokes
//! optics/detection; [`run::simulate_run`] repeats it and reduces the clicks to
//! coincidence histograms and a [`correlation::CorrelationReport`].

pub mod calibrate;
pub mod config;
pub mod correlation;
pub mod export;
pub mod optics;
pub mod oracle;
pub mod run;
pub mod source;
pub mod tia;
pub mod time;

#[cfg(test)]
mod testutil;

pub use config::{paper_preset, parse_config, validate, ExperimentConfig, SourceModel};
pub use correlation::{cauchy_schwarz, g_ratio, ideal_violation, CorrelationReport, Measurement};
pub use optics::{ClickEvent, Detector};
pub use oracle::{predicted_correlations, truncated_joint, ClickPatternDistribution};
pub use run::{simulate_run, sweep, RunArtifacts, RunOptions};
pub use tia::{histogram, peak_areas, CoincidenceHistogram, PeakAreas, TimestampStream};
