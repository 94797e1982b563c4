//! Multivariate time series with a missing-value mask.
//!
//! Storage is coordinate-major so each coordinate is a contiguous slice.
//! Missing cells hold `NaN` and have `mask == false`; the two always agree.
//! Positions exposed through [`Subsequence::start`] and [`Window::start`]
//! are 1-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest segment length accepted by [`segments`]; the MPdist inner window
/// `ceil(m / 2)` must be at least 2.
pub const MIN_SEGMENT_LEN: usize = 4;

#[derive(Debug, Clone)]
pub struct TimeSeries {
    names: Vec<String>,
    n: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl TimeSeries {
    /// Builds a series from per-coordinate columns. Non-finite values are
    /// treated as missing.
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::shape(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        if columns.is_empty() {
            return Err(Error::invalid("time series needs at least one coordinate"));
        }
        let n = columns[0].len();
        if let Some((j, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::shape(format!(
                "coordinate {j} has length {}, expected {n}",
                c.len()
            )));
        }
        let mut values = Vec::with_capacity(n * columns.len());
        let mut mask = Vec::with_capacity(n * columns.len());
        for col in columns {
            for v in col {
                let observed = v.is_finite();
                mask.push(observed);
                values.push(if observed { v } else { f64::NAN });
            }
        }
        Ok(TimeSeries {
            names,
            n,
            values,
            mask,
        })
    }

    /// Same as [`from_columns`](Self::from_columns) with generated names `x1..xd`.
    pub fn from_unnamed(columns: Vec<Vec<f64>>) -> Result<Self> {
        let names = (1..=columns.len()).map(|j| format!("x{j}")).collect();
        Self::from_columns(names, columns)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Coordinate `j` with `NaN` at missing positions.
    pub fn coord(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn coord_mask(&self, j: usize) -> &[bool] {
        &self.mask[j * self.n..(j + 1) * self.n]
    }

    /// Value at 0-based row `i`, coordinate `j`, or `None` when missing.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let k = j * self.n + i;
        self.mask[k].then(|| self.values[k])
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[j * self.n + i]
    }

    /// Stores an observed value; non-finite input marks the cell missing.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = j * self.n + i;
        if v.is_finite() {
            self.values[k] = v;
            self.mask[k] = true;
        } else {
            self.values[k] = f64::NAN;
            self.mask[k] = false;
        }
    }

    pub fn remove(&mut self, i: usize, j: usize) {
        let k = j * self.n + i;
        self.values[k] = f64::NAN;
        self.mask[k] = false;
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&o| !o).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        self.missing_count() as f64 / self.mask.len() as f64
    }

    pub fn has_gaps(&self) -> bool {
        self.mask.iter().any(|&o| !o)
    }

    /// The `d x m` window starting at 1-based position `start`.
    pub fn window(&self, start: usize, m: usize) -> Window {
        assert!(start >= 1 && start + m - 1 <= self.n, "window out of range");
        let d = self.d();
        let mut values = Vec::with_capacity(d * m);
        for j in 0..d {
            values.extend_from_slice(&self.coord(j)[start - 1..start - 1 + m]);
        }
        Window {
            start,
            m,
            d,
            values,
        }
    }

    pub(crate) fn same_shape(&self, other: &TimeSeries) -> Result<()> {
        if self.n != other.n || self.d() != other.d() {
            return Err(Error::shape(format!(
                "series are {}x{} and {}x{}",
                self.n,
                self.d(),
                other.n,
                other.d()
            )));
        }
        Ok(())
    }
}

/// Equal when names, shape and mask agree and observed values are bit-identical.
impl PartialEq for TimeSeries {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
            && self.n == other.n
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.mask)
                .all(|((a, b), &obs)| !obs || a.to_bits() == b.to_bits())
    }
}

/// A length-`m` view into one coordinate. `start` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subsequence<'a> {
    pub coord: Option<usize>,
    pub start: usize,
    pub values: &'a [f64],
}

impl Subsequence<'_> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_gap_free(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// A `d x m` multivariate window, coordinate-major, `NaN` for missing.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: usize,
    pub m: usize,
    pub d: usize,
    pub values: Vec<f64>,
}

impl Window {
    pub fn coord(&self, j: usize) -> &[f64] {
        &self.values[j * self.m..(j + 1) * self.m]
    }

    pub fn has_gaps(&self) -> bool {
        self.values.iter().any(|v| !v.is_finite())
    }

    /// Values with missing cells replaced by `fill`.
    pub fn filled(&self, fill: f64) -> Vec<f64> {
        self.values
            .iter()
            .map(|&v| if v.is_finite() { v } else { fill })
            .collect()
    }
}

/// Per-coordinate min/max of the observed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormParams {
    pub fn d(&self) -> usize {
        self.min.len()
    }

    /// Normalizes with these parameters. Constant coordinates map to 0.5.
    pub fn normalize(&self, ts: &TimeSeries) -> Result<TimeSeries> {
        self.check(ts)?;
        let mut out = ts.clone();
        for j in 0..ts.d() {
            let (lo, hi) = (self.min[j], self.max[j]);
            let range = hi - lo;
            let base = j * ts.n;
            for i in 0..ts.n {
                if out.mask[base + i] {
                    let v = out.values[base + i];
                    out.values[base + i] = if range > 0.0 { (v - lo) / range } else { 0.5 };
                }
            }
        }
        Ok(out)
    }

    pub fn denormalize_value(&self, j: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[j], self.max[j]);
        if hi > lo {
            v * (hi - lo) + lo
        } else {
            lo
        }
    }

    fn check(&self, ts: &TimeSeries) -> Result<()> {
        if self.min.len() != ts.d() || self.max.len() != ts.d() {
            return Err(Error::shape(format!(
                "normalization parameters cover {} coordinates, series has {}",
                self.min.len(),
                ts.d()
            )));
        }
        Ok(())
    }
}

/// Min-max normalization of each coordinate into `[0, 1]` over observed points.
pub fn minmax_normalize(ts: &TimeSeries) -> Result<(TimeSeries, NormParams)> {
    let mut min = Vec::with_capacity(ts.d());
    let mut max = Vec::with_capacity(ts.d());
    for j in 0..ts.d() {
        let mut observed = ts.coord(j).iter().copied().filter(|v| v.is_finite());
        let first = observed.next().ok_or(Error::EmptyCoordinate(j))?;
        let (lo, hi) = observed.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        min.push(lo);
        max.push(hi);
    }
    let params = NormParams { min, max };
    Ok((params.normalize(ts)?, params))
}

/// Inverse of [`minmax_normalize`]. Constant coordinates map back to their minimum.
pub fn denormalize(ts: &TimeSeries, params: &NormParams) -> Result<TimeSeries> {
    params.check(ts)?;
    let mut out = ts.clone();
    for j in 0..ts.d() {
        let base = j * ts.n;
        for i in 0..ts.n {
            if out.mask[base + i] {
                out.values[base + i] = params.denormalize_value(j, out.values[base + i]);
            }
        }
    }
    Ok(out)
}

/// The `floor(n / m)` disjoint segments of a coordinate; a trailing remainder
/// shorter than `m` is dropped.
pub fn segments(coord: &[f64], m: usize) -> Result<Vec<Subsequence<'_>>> {
    if m < MIN_SEGMENT_LEN {
        return Err(Error::SegmentTooShort(m));
    }
    if m > coord.len() {
        return Err(Error::invalid(format!(
            "segment length {m} exceeds series length {}",
            coord.len()
        )));
    }
    Ok(coord
        .chunks_exact(m)
        .enumerate()
        .map(|(r, values)| Subsequence {
            coord: None,
            start: r * m + 1,
            values,
        })
        .collect())
}

/// All `n - m + 1` length-`m` windows of a coordinate in position order.
pub fn all_subsequences(coord: &[f64], m: usize) -> Result<Vec<Subsequence<'_>>> {
    if m == 0 || m > coord.len() {
        return Err(Error::invalid(format!(
            "subsequence length {m} invalid for series length {}",
            coord.len()
        )));
    }
    Ok(coord
        .windows(m)
        .enumerate()
        .map(|(i, values)| Subsequence {
            coord: None,
            start: i + 1,
            values,
        })
        .collect())
}

/// 1-based starts of the imputation windows: stride `m`, with a final window
/// anchored at `n - m + 1` when `m` does not divide `n`.
pub fn window_starts(n: usize, m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return Err(Error::invalid(format!(
            "window length {m} invalid for series length {n}"
        )));
    }
    let mut starts: Vec<usize> = (0..n / m).map(|k| k * m + 1).collect();
    if n % m != 0 {
        starts.push(n - m + 1);
    }
    Ok(starts)
}

/// Splits a series into the windows of [`window_starts`].
pub fn split_nonoverlapping(ts: &TimeSeries, m: usize) -> Result<Vec<Window>> {
    Ok(window_starts(ts.n(), m)?
        .into_iter()
        .map(|s| ts.window(s, m))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(col: Vec<f64>) -> TimeSeries {
        TimeSeries::from_unnamed(vec![col]).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let (norm, p) = minmax_normalize(&single(vec![0.0, 5.0, 10.0])).unwrap();
        assert_eq!(norm.coord(0), &[0.0, 0.5, 1.0]);
        assert_eq!((p.min[0], p.max[0]), (0.0, 10.0));

        let (norm, p) = minmax_normalize(&single(vec![7.0, 7.0, 7.0])).unwrap();
        assert_eq!(norm.coord(0), &[0.5, 0.5, 0.5]);
        assert_eq!((p.min[0], p.max[0]), (7.0, 7.0));

        let (norm, _) = minmax_normalize(&single(vec![3.0, f64::NAN, 9.0])).unwrap();
        assert_eq!(norm.get(0, 0), Some(0.0));
        assert_eq!(norm.get(1, 0), None);
        assert_eq!(norm.get(2, 0), Some(1.0));
    }

    #[test]
    fn normalize_rejects_empty_coordinate() {
        let ts = TimeSeries::from_unnamed(vec![vec![1.0, 2.0], vec![f64::NAN, f64::NAN]]).unwrap();
        assert!(matches!(minmax_normalize(&ts), Err(Error::EmptyCoordinate(1))));
    }

    #[test]
    fn denormalize_examples() {
        let p = NormParams {
            min: vec![0.0],
            max: vec![10.0],
        };
        let out = denormalize(&single(vec![0.0, 0.5, 1.0]), &p).unwrap();
        assert_eq!(out.coord(0), &[0.0, 5.0, 10.0]);

        let degenerate = NormParams {
            min: vec![7.0],
            max: vec![7.0],
        };
        assert_eq!(denormalize(&single(vec![0.5]), &degenerate).unwrap().coord(0), &[7.0]);

        let two = NormParams {
            min: vec![0.0, 0.0],
            max: vec![1.0, 1.0],
        };
        assert!(matches!(denormalize(&single(vec![0.5]), &two), Err(Error::Shape(_))));
    }

    #[test]
    fn segment_examples() {
        let coord: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(matches!(segments(&coord, 2), Err(Error::SegmentTooShort(2))));

        let coord: Vec<f64> = (0..20).map(f64::from).collect();
        let starts: Vec<usize> = segments(&coord, 4).unwrap().iter().map(|s| s.start).collect();
        assert_eq!(starts, vec![1, 5, 9, 13, 17]);

        // remainder of 2 is dropped
        let coord: Vec<f64> = (0..22).map(f64::from).collect();
        let segs = segments(&coord, 4).unwrap();
        assert_eq!(segs.len(), 5);
        assert_eq!(segs[4].values, &[16.0, 17.0, 18.0, 19.0]);

        let coord = vec![1.0; 6];
        let segs = segments(&coord, 6).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].values, coord.as_slice());
    }

    #[test]
    fn subsequence_examples() {
        let coord: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(all_subsequences(&coord, 2).unwrap().len(), 9);
        assert_eq!(all_subsequences(&coord, 10).unwrap().len(), 1);
        let starts: Vec<usize> = all_subsequences(&coord[..5], 3)
            .unwrap()
            .iter()
            .map(|s| s.start)
            .collect();
        assert_eq!(starts, vec![1, 2, 3]);
        assert!(all_subsequences(&coord, 11).is_err());
    }

    #[test]
    fn window_start_examples() {
        assert_eq!(window_starts(12, 4).unwrap(), vec![1, 5, 9]);
        assert_eq!(window_starts(10, 4).unwrap(), vec![1, 5, 7]);
        assert_eq!(window_starts(4, 4).unwrap(), vec![1]);
        assert!(window_starts(3, 4).is_err());
    }

    #[test]
    fn window_extraction() {
        let ts = TimeSeries::from_unnamed(vec![
            vec![1.0, 2.0, 3.0, 4.0],
            vec![5.0, f64::NAN, 7.0, 8.0],
        ])
        .unwrap();
        let w = ts.window(2, 2);
        assert_eq!(w.coord(0), &[2.0, 3.0]);
        assert!(w.has_gaps());
        assert_eq!(w.filled(-1.0), vec![2.0, 3.0, -1.0, 7.0]);
    }
}
