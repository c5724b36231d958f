//! Trials per second for the preset on the current machine.
//!
//! `cargo run --release -p dlcz-core --example throughput [trials]`

use std::time::Instant;

use dlcz_core::{paper_preset, simulate_run, RunOptions};

fn main() {
    let trials: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1_000_000);
    let options = RunOptions {
        workers: Some(1),
        ..Default::default()
    };
    let t = Instant::now();
    let run = simulate_run(&paper_preset(), trials, 1, &options).expect("preset is valid");
    let secs = t.elapsed().as_secs_f64();
    println!(
        "{trials} trials in {secs:.3} s = {:.0} trials/s on one worker",
        trials as f64 / secs
    );
    print!("{}", run.render_report());
}
