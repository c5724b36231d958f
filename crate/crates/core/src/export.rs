//! Writing run artifacts to a directory, and reading them back.
//!
//! Layout:
//!
//! | file | content |
//! |------|---------|
//! | `hist_11.csv`, `hist_22.csv`, `hist_12.csv`, `hist_12_bd.csv` | coincidence histograms |
//! | `report.txt` | `key = value` correlation summary |
//! | `config.txt` | config snapshot, loadable with [`crate::parse_config`] |
//! | `events.csv` | raw clicks, only when events were kept |
//! | `manifest.txt` | seed, trials, wall time, version, config, output digests |
//!
//! Every file except the manifest depends only on `(config, trials, seed)`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::KEYS;
use crate::optics::Detector;
use crate::run::{RunArtifacts, RunManifest, PAIRS, PAIR_LABELS};
use crate::tia::{CoincidenceHistogram, TiaError};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const REPORT_FILE: &str = "report.txt";
pub const CONFIG_FILE: &str = "config.txt";
pub const EVENTS_FILE: &str = "events.csv";
pub const EVENTS_HEADER: &str = "trial_index,detector,timestamp_ps";

pub fn histogram_file(label: &str) -> String {
    format!("hist_{label}.csv")
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Renders the manifest as `key = value` lines.
pub fn render_manifest(m: &RunManifest) -> String {
    let mut s = format!(
        "code_version = {}\nseed = {}\ntrials = {}\nwall_time_seconds = {:?}\n",
        m.code_version, m.seed, m.trials, m.wall_time_seconds
    );
    for key in KEYS {
        let _ = writeln!(s, "config.{key} = {}", m.config.value_string(key));
    }
    for (file, digest) in &m.outputs {
        let _ = writeln!(s, "output.{file} = {digest}");
    }
    s
}

pub fn parse_manifest(text: &str) -> Result<RunManifest, String> {
    let mut config = crate::config::paper_preset();
    let (mut seed, mut trials, mut wall, mut version) = (None, None, None, None);
    let mut outputs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        let bad = |e: &dyn std::fmt::Display| format!("line {}: {k}: {e}", i + 1);
        match k {
            "code_version" => version = Some(v.to_string()),
            "seed" => seed = Some(v.parse::<u64>().map_err(|e| bad(&e))?),
            "trials" => trials = Some(v.parse::<u64>().map_err(|e| bad(&e))?),
            "wall_time_seconds" => wall = Some(v.parse::<f64>().map_err(|e| bad(&e))?),
            _ => {
                if let Some(key) = k.strip_prefix("config.") {
                    config.set(key, v).map_err(|e| bad(&e))?;
                } else if let Some(file) = k.strip_prefix("output.") {
                    outputs.push((file.to_string(), v.to_string()));
                } else {
                    return Err(format!("line {}: unknown key `{k}`", i + 1));
                }
            }
        }
    }
    Ok(RunManifest {
        config,
        seed: seed.ok_or("missing seed")?,
        trials: trials.ok_or("missing trials")?,
        wall_time_seconds: wall.ok_or("missing wall_time_seconds")?,
        outputs,
        code_version: version.ok_or("missing code_version")?,
    })
}

fn render_events(artifacts: &RunArtifacts) -> Option<String> {
    let events = artifacts.events.as_ref()?;
    let mut s = String::with_capacity(events.len() * 24 + 40);
    s.push_str(EVENTS_HEADER);
    s.push('\n');
    for e in events {
        let _ = writeln!(s, "{},{},{}", e.trial_index, e.detector, e.timestamp);
    }
    Some(s)
}

/// Writes every artifact into `dir` (created if missing) and returns the
/// manifest with its output list filled in. The manifest file itself is
/// written last.
pub fn export(artifacts: &RunArtifacts, dir: &Path) -> Result<RunManifest, ExportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files: Vec<(String, String)> = Vec::new();
    for (label, h) in PAIR_LABELS.iter().zip(&artifacts.histograms) {
        files.push((histogram_file(label), h.to_csv()));
    }
    files.push((REPORT_FILE.to_string(), artifacts.render_report()));
    files.push((CONFIG_FILE.to_string(), artifacts.config.render()));
    if let Some(events) = render_events(artifacts) {
        files.push((EVENTS_FILE.to_string(), events));
    }

    let mut manifest = artifacts.manifest.clone();
    manifest.outputs.clear();
    for (name, body) in &files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))?;
        manifest
            .outputs
            .push((name.clone(), sha256_hex(body.as_bytes())));
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, render_manifest(&manifest)).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Reads one exported histogram back; the pair is taken from the label.
pub fn read_histogram(dir: &Path, label: &str) -> Result<CoincidenceHistogram, ExportError> {
    let i = PAIR_LABELS
        .iter()
        .position(|l| *l == label)
        .ok_or_else(|| ExportError::Parse {
            path: dir.join(histogram_file(label)),
            message: format!("unknown pair label `{label}`"),
        })?;
    let (start, stop): (Detector, Detector) = PAIRS[i];
    let path = dir.join(histogram_file(label));
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    CoincidenceHistogram::from_csv(&text, start, stop).map_err(|e: TiaError| ExportError::Parse {
        path,
        message: e.to_string(),
    })
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, ExportError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    parse_manifest(&text).map_err(|message| ExportError::Parse { path, message })
}
