//! Integer picosecond time base shared by the simulator and the TIA emulation.

/// Picoseconds since the start of the run.
pub type Tick = u64;

pub const TICKS_PER_SECOND: f64 = 1e12;

/// Rounds to the nearest picosecond; negative or non-finite inputs map to 0.
pub fn seconds_to_ticks(seconds: f64) -> Tick {
    if seconds.is_finite() && seconds > 0.0 {
        (seconds * TICKS_PER_SECOND).round() as Tick
    } else {
        0
    }
}

pub fn ticks_to_seconds(ticks: Tick) -> f64 {
    ticks as f64 / TICKS_PER_SECOND
}
