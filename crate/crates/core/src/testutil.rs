use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[track_caller]
pub fn assert_within_sigma(value: f64, expected: f64, sigma: f64, k: f64) {
    assert!(
        (value - expected).abs() <= k * sigma,
        "{value} differs from {expected} by more than {k}σ (σ = {sigma})"
    );
}

/// Pearson chi-square goodness of fit at the 1e-4 level. Cells with expected
/// count below 5 are pooled.
pub fn chi_square_ok(observed: &[u64], expected: &[f64]) -> bool {
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        if e < 5.0 {
            pool_o += o as f64;
            pool_e += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pool_e >= 5.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e;
        cells += 1;
    } else if pool_o > pool_e + 5.0 * pool_e.sqrt().max(1.0) {
        return false;
    }
    let dof = cells.saturating_sub(1).max(1) as f64;
    // Wilson-Hilferty upper quantile, z(1e-4) = 3.719
    let z = 3.719;
    let a = 2.0 / (9.0 * dof);
    let critical = dof * (1.0 - a + z * a.sqrt()).powi(3);
    stat <= critical
}
