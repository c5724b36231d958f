//! Re-derives the committed preset background means.
//!
//! `cargo run -p dlcz-core --example calibrate_preset`

use dlcz_core::calibrate::{calibrate_backgrounds, TARGET_ANTISTOKES_RATE, TARGET_STOKES_RATE};
use dlcz_core::paper_preset;

fn main() {
    let cal = calibrate_backgrounds(&paper_preset(), TARGET_STOKES_RATE, TARGET_ANTISTOKES_RATE)
        .expect("oracle converges for the preset");
    println!("bg_stokes_mean = {:?}", cal.bg_stokes_mean);
    println!("bg_antistokes_mean = {:?}", cal.bg_antistokes_mean);
    println!(
        "stokes_rate = {:?} (clamped: {})",
        cal.stokes_rate, cal.stokes_clamped
    );
    println!(
        "antistokes_rate = {:?} (clamped: {})",
        cal.antistokes_rate, cal.antistokes_clamped
    );
}
