//! `dlcz` — run simulations, sweeps and oracle comparisons from the shell.
//!
//! Exit codes: 0 success, 2 usage, 3 invalid configuration, 4 Monte Carlo and
//! oracle disagree, 5 I/O failure, 6 oracle cannot evaluate the configuration,
//! 1 anything else.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dlcz_core::config::ConfigError;
use dlcz_core::export::{export, ExportError};
use dlcz_core::oracle::{compare, OracleError, ZTable};
use dlcz_core::run::RunError;
use dlcz_core::{
    paper_preset, parse_config, predicted_correlations, simulate_run, sweep, ExperimentConfig,
    RunOptions,
};

const DEFAULT_N_MAX: u32 = 60;

#[derive(Parser)]
#[command(
    name = "dlcz",
    version,
    about = "Photon-pair Monte Carlo with coincidence analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run and print its correlation report.
    Run(RunArgs),
    /// One run per value of a config parameter; prints a CSV table.
    Sweep(SweepArgs),
    /// Exact click-pattern prediction for the configuration.
    Oracle(OracleArgs),
    /// Simulate and compare against the oracle; exits 4 on any ≥4σ deviation.
    Compare(CompareArgs),
    /// Print the resolved configuration (preset, then file, then overrides).
    Preset(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` config file; omitted keys take preset values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of trials [default: n_trials from the config].
    #[arg(long)]
    trials: Option<u64>,
    /// Base seed [default: rng_seed from the config].
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Export directory (created if missing).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Keep and export every click event.
    #[arg(long)]
    keep_events: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Config key to vary.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values: Vec<String>,
    /// Directory for `sweep.csv`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Largest photon number enumerated per mode.
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    n_max: u32,
    /// Directory for `oracle.txt`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    n_max: u32,
    /// Directory for `compare.csv`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

/// Monte Carlo and oracle disagree.
#[derive(Debug)]
struct Disagreement(usize);

impl std::fmt::Display for Disagreement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} quantities deviate from the oracle by 4σ or more",
            self.0
        )
    }
}

impl std::error::Error for Disagreement {}

/// I/O failure outside the export module.
#[derive(Debug)]
struct PathIo(PathBuf, std::io::Error);

impl std::fmt::Display for PathIo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.0.display(), self.1)
    }
}

impl std::error::Error for PathIo {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 3;
        }
        if cause.is::<Disagreement>() {
            return 4;
        }
        if cause.is::<ExportError>() || cause.is::<PathIo>() {
            return 5;
        }
        if cause.is::<OracleError>() {
            return 6;
        }
        if let Some(e) = cause.downcast_ref::<RunError>() {
            return match e {
                RunError::Config(_)
                | RunError::UnknownParameter(_)
                | RunError::BadSweepValue { .. } => 3,
                _ => 1,
            };
        }
    }
    1
}

fn read(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path).map_err(|e| PathIo(path.to_path_buf(), e))?)
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| PathIo(dir.to_path_buf(), e))?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| PathIo(path.clone(), e))?;
    Ok(path)
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let base = match &args.config {
        Some(path) => {
            parse_config(&read(path)?).with_context(|| format!("in {}", path.display()))?
        }
        None => paper_preset(),
    };
    Ok(base.with_overrides(args.overrides.iter().map(String::as_str))?)
}

fn resolve(sim: &SimArgs) -> Result<(ExperimentConfig, u64, u64, RunOptions)> {
    let config = load_config(&sim.config)?;
    if sim.workers == Some(0) {
        bail!("--workers must be >= 1");
    }
    let trials = sim.trials.unwrap_or(config.n_trials);
    let seed = sim.seed.unwrap_or(config.rng_seed);
    let options = RunOptions {
        workers: sim.workers,
        ..Default::default()
    };
    Ok((config, trials, seed, options))
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let (config, trials, seed, mut options) = resolve(&args.sim)?;
    options.keep_events = args.keep_events;
    let run = simulate_run(&config, trials, seed, &options)?;
    print!("{}", run.render_report());
    if let Some(dir) = &args.out {
        let manifest = export(&run, dir)?;
        for (file, _) in &manifest.outputs {
            eprintln!("wrote {}", dir.join(file).display());
        }
        eprintln!(
            "wrote {}",
            dir.join(dlcz_core::export::MANIFEST_FILE).display()
        );
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let (config, trials, seed, options) = resolve(&args.sim)?;
    let table = sweep(&config, &args.param, &args.values, trials, seed, &options)?;
    let csv = table.to_csv();
    print!("{csv}");
    if let Some(dir) = &args.out {
        eprintln!("wrote {}", write(dir, "sweep.csv", &csv)?.display());
    }
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let pred = predicted_correlations(&config, args.n_max)?;
    let mut text = pred.report(config.delay_dt)?.render();
    text.push_str(&format!("g12_bd = {:?}\n", pred.g12_bd));
    text.push_str(&format!("n_max = {}\n", pred.distribution.n_max));
    text.push_str(&format!(
        "truncation_error_bound = {:?}\n",
        pred.distribution.truncation_error_bound
    ));
    for pattern in dlcz_core::oracle::ClickPattern::all() {
        text.push_str(&format!(
            "p_{pattern} = {:?}\n",
            pred.distribution.probability(pattern)
        ));
    }
    print!("{text}");
    if let Some(dir) = &args.out {
        eprintln!("wrote {}", write(dir, "oracle.txt", &text)?.display());
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let (config, trials, seed, options) = resolve(&args.sim)?;
    let pred = predicted_correlations(&config, args.n_max)?;
    let run = simulate_run(&config, trials, seed, &options)?;
    let table: ZTable = compare(&run.observation(), &pred);
    let csv = table.to_csv();
    print!("{csv}");
    if let Some(dir) = &args.out {
        eprintln!("wrote {}", write(dir, "compare.csv", &csv)?.display());
    }
    let flagged = table.flagged().count();
    if flagged > 0 {
        return Err(Disagreement(flagged).into());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Preset(a) => load_config(&a).map(|c| print!("{}", c.render())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
