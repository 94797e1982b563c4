//! Synthetic multi-regime series for tests, benchmarks and demos.
//!
//! Each regime is a fixed periodic waveform per coordinate with period `m`;
//! the series switches regimes at multiples of `m`, so every aligned segment
//! is an exact copy of its regime's pattern.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::ts::TimeSeries;

/// Value of regime `r`, coordinate `j` at phase `t` in `[0, 1)`.
pub fn regime_value(r: usize, j: usize, t: f64) -> f64 {
    let harmonic = (1 + r / 3) as f64;
    let p = (harmonic * t + 0.17 * j as f64).fract();
    let base = match r % 3 {
        0 => (TAU * p).sin(),
        1 => 2.0 * p - 1.0,
        _ => {
            if p < 0.2 {
                1.0 - 10.0 * p
            } else {
                -0.5 * (TAU * p).cos()
            }
        }
    };
    (1.0 + j as f64) * base + 10.0 * j as f64
}

/// One period of regime `r` for coordinate `j`.
pub fn regime_pattern(r: usize, j: usize, m: usize) -> Vec<f64> {
    (0..m).map(|i| regime_value(r, j, i as f64 / m as f64)).collect()
}

/// A generated series and the regime active at every time step.
#[derive(Debug, Clone)]
pub struct RegimeSeries {
    pub series: TimeSeries,
    pub regimes: Vec<usize>,
}

/// `d`-dimensional series of length `n` cycling through `regimes` patterns in
/// blocks of 4 to 12 periods, never repeating a regime back to back.
/// `noise` adds seeded uniform noise of that amplitude.
pub fn regime_series(d: usize, n: usize, m: usize, regimes: usize, noise: f64, seed: u64) -> Result<RegimeSeries> {
    if d == 0 || m == 0 || regimes == 0 || n < m {
        return Err(Error::invalid(format!(
            "cannot generate d = {d}, n = {n}, m = {m}, regimes = {regimes}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = Vec::with_capacity(n);
    let mut current = rng.random_range(0..regimes);
    while labels.len() < n {
        let periods = rng.random_range(4..=12);
        labels.extend(std::iter::repeat_n(current, periods * m));
        if regimes > 1 {
            current = (current + rng.random_range(1..regimes)) % regimes;
        }
    }
    labels.truncate(n);
    let columns = (0..d)
        .map(|j| {
            let pattern: Vec<Vec<f64>> = (0..regimes).map(|r| regime_pattern(r, j, m)).collect();
            (0..n)
                .map(|i| {
                    let v = pattern[labels[i]][i % m];
                    if noise > 0.0 {
                        v + rng.random_range(-noise..noise)
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    Ok(RegimeSeries {
        series: TimeSeries::from_unnamed(columns)?,
        regimes: labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_segments_repeat_their_regime_pattern() {
        let g = regime_series(2, 640, 16, 3, 0.0, 5).unwrap();
        for s in 0..40 {
            let r = g.regimes[s * 16];
            if g.regimes[s * 16 + 15] == r {
                assert_eq!(&g.series.coord(1)[s * 16..s * 16 + 16], &regime_pattern(r, 1, 16)[..]);
            }
        }
        assert!(g.regimes.windows(2).any(|w| w[0] != w[1]));
        let again = regime_series(2, 640, 16, 3, 0.0, 5).unwrap();
        assert_eq!(again.series, g.series);
    }
}
