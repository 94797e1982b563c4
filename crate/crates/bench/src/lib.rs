//! Shared fixtures for the criterion benches.

use saeti::synth::regime_series;
use saeti::TimeSeries;

/// Noise-free regime series, deterministic in `seed`.
pub fn series(d: usize, n: usize, m: usize, regimes: usize, seed: u64) -> TimeSeries {
    regime_series(d, n, m, regimes, 0.0, seed).expect("valid fixture").series
}

/// Inputs in [0, 1] with every fifth value replaced by the missing fill.
pub fn inputs(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| if i % 5 == 0 { saeti::models::MISSING_FILL } else { 0.5 + 0.4 * (i as f64 * 0.37).sin() })
        .collect()
}
