//! Z-normalized distance profiles and the MPdist subsequence distance.
//!
//! MPdist between two equal-length windows `A` and `B` with inner window
//! length `ell`: every length-`ell` window of `A` is matched to its nearest
//! window of `B` and vice versa; the joined list of nearest distances is
//! `P_ABBA`, and the distance is its `k`-th smallest element with
//! `k = ceil(0.05 * (|A| + |B|))`, clamped to `|P_ABBA|`.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Windows whose standard deviation is at or below this (relative to
/// `1 + |mean|`) z-normalize to all zeros.
pub const ZERO_STD_TOL: f64 = 1e-10;

/// Fraction of `|A| + |B|` selecting the reported element of `P_ABBA`.
pub const MPDIST_THRESHOLD: f64 = 0.05;

/// Default inner window for segment length `m`: `ceil(m / 2)`.
pub fn default_inner_window(m: usize) -> usize {
    m.div_ceil(2)
}

/// 1-based rank of the reported element of `P_ABBA`.
pub fn mpdist_rank(len_a: usize, len_b: usize) -> usize {
    ((MPDIST_THRESHOLD * (len_a + len_b) as f64).ceil() as usize).max(1)
}

/// Z-normalizes a window (population standard deviation).
pub fn znormalize(window: &[f64]) -> Vec<f64> {
    let len = window.len() as f64;
    let mean = window.iter().sum::<f64>() / len;
    let var = window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len;
    let std = var.sqrt();
    if std <= ZERO_STD_TOL * (1.0 + mean.abs()) {
        vec![0.0; window.len()]
    } else {
        window.iter().map(|v| (v - mean) / std).collect()
    }
}

#[inline]
fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn ensure_gap_free(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::GapInInput)
    }
}

/// Distances of one query window to every alignment in a target series.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceProfile {
    pub query_len: usize,
    pub values: Vec<f64>,
}

pub fn znorm_dist_profile(query: &[f64], target: &[f64]) -> Result<DistanceProfile> {
    let ell = query.len();
    if ell == 0 || ell > target.len() {
        return Err(Error::invalid(format!(
            "query length {ell} invalid for target length {}",
            target.len()
        )));
    }
    ensure_gap_free(query)?;
    ensure_gap_free(target)?;
    let zq = znormalize(query);
    let values = target
        .windows(ell)
        .map(|w| euclid(&zq, &znormalize(w)))
        .collect();
    Ok(DistanceProfile {
        query_len: ell,
        values,
    })
}

/// k-th smallest (1-based, clamped to the last element).
fn kth_smallest(values: &mut [f64], k: usize) -> f64 {
    let idx = k.min(values.len()) - 1;
    *values.select_nth_unstable_by(idx, f64::total_cmp).1
}

/// MPdist between two windows of equal length.
pub fn mpdist(a: &[f64], b: &[f64], ell: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "mpdist inputs have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if ell == 0 || ell > a.len() {
        return Err(Error::invalid(format!(
            "inner window {ell} invalid for length {}",
            a.len()
        )));
    }
    ensure_gap_free(a)?;
    ensure_gap_free(b)?;
    let za: Vec<Vec<f64>> = a.windows(ell).map(znormalize).collect();
    let zb: Vec<Vec<f64>> = b.windows(ell).map(znormalize).collect();

    let mut row_min = vec![f64::INFINITY; za.len()];
    let mut col_min = vec![f64::INFINITY; zb.len()];
    for (i, wa) in za.iter().enumerate() {
        for (j, wb) in zb.iter().enumerate() {
            let dist = euclid(wa, wb);
            row_min[i] = row_min[i].min(dist);
            col_min[j] = col_min[j].min(dist);
        }
    }
    let mut p_abba = row_min;
    p_abba.extend(col_min);
    Ok(kth_smallest(&mut p_abba, mpdist_rank(a.len(), b.len())))
}

/// `D[r][c] = mpdist(T_{start_c, m}, S_r)` for every segment `r` and every
/// retained (gap-free) subsequence start.
#[derive(Debug, Clone)]
pub struct ProfileMatrix {
    pub m: usize,
    pub ell: usize,
    /// Number of segments (rows), `floor(n / m)`.
    pub rows: usize,
    /// 1-based starts of the retained subsequences (columns).
    pub starts: Vec<usize>,
    /// 1-based starts of subsequences excluded for containing gaps.
    pub excluded: Vec<usize>,
    /// Segments containing gaps; their rows are `+inf`.
    pub gapped_segments: Vec<usize>,
    data: Vec<f64>,
}

impl ProfileMatrix {
    pub fn cols(&self) -> usize {
        self.starts.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    /// Builds a matrix from raw rows; used for testing the assignment step.
    pub fn from_rows(m: usize, ell: usize, starts: Vec<usize>, rows: Vec<Vec<f64>>) -> Self {
        let n_rows = rows.len();
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        assert_eq!(data.len(), n_rows * starts.len(), "ragged profile matrix");
        ProfileMatrix {
            m,
            ell,
            rows: n_rows,
            starts,
            excluded: Vec::new(),
            gapped_segments: Vec::new(),
            data,
        }
    }
}

/// Sliding minimum over windows of `w` consecutive elements (van Herk /
/// Gil-Werman). Output length is `values.len() - w + 1`.
fn sliding_min(values: &[f64], w: usize, out: &mut Vec<f64>) {
    let len = values.len();
    out.clear();
    if w == 1 {
        out.extend_from_slice(values);
        return;
    }
    let mut prefix = vec![0.0; len];
    let mut suffix = vec![0.0; len];
    for i in 0..len {
        prefix[i] = if i % w == 0 { values[i] } else { prefix[i - 1].min(values[i]) };
    }
    for i in (0..len).rev() {
        suffix[i] = if i == len - 1 || (i + 1) % w == 0 {
            values[i]
        } else {
            suffix[i + 1].min(values[i])
        };
    }
    for j in 0..=len - w {
        out.push(suffix[j].min(prefix[j + w - 1]));
    }
}

/// Computes the full profile matrix of one coordinate.
///
/// Inner windows are z-normalized once for the whole series. Per segment, the
/// `w x (n - ell + 1)` table of inner-window distances yields both halves of
/// `P_ABBA` for every subsequence: column minima give the subsequence side,
/// sliding row minima the segment side. Rows are independent and computed in
/// parallel; the result does not depend on scheduling.
pub fn mpdist_profile_matrix(coord: &[f64], m: usize, ell: usize) -> Result<ProfileMatrix> {
    let n = coord.len();
    if m < crate::ts::MIN_SEGMENT_LEN {
        return Err(Error::SegmentTooShort(m));
    }
    if m > n {
        return Err(Error::invalid(format!("segment length {m} exceeds series length {n}")));
    }
    if ell == 0 || ell > m {
        return Err(Error::invalid(format!("inner window {ell} invalid for m = {m}")));
    }
    let rows = n / m;
    let w = m - ell + 1;
    let n_inner = n - ell + 1;
    let k = mpdist_rank(m, m);

    let inner: Vec<Option<Vec<f64>>> = coord
        .windows(ell)
        .map(|win| win.iter().all(|v| v.is_finite()).then(|| znormalize(win)))
        .collect();

    let mut starts = Vec::new();
    let mut excluded = Vec::new();
    for (i, win) in coord.windows(m).enumerate() {
        if win.iter().all(|v| v.is_finite()) {
            starts.push(i + 1);
        } else {
            excluded.push(i + 1);
        }
    }
    let gapped_segments: Vec<usize> = (0..rows)
        .filter(|&r| coord[r * m..(r + 1) * m].iter().any(|v| !v.is_finite()))
        .map(|r| r + 1)
        .collect();

    let row_data: Vec<Vec<f64>> = (0..rows)
        .into_par_iter()
        .map(|r| {
            if gapped_segments.binary_search(&(r + 1)).is_ok() {
                return vec![f64::INFINITY; starts.len()];
            }
            // dist[b][a]: segment inner window b against series inner window a
            let mut dist = vec![f64::INFINITY; w * n_inner];
            for b in 0..w {
                let seg_win = inner[r * m + b].as_deref().expect("segment is gap-free");
                let row = &mut dist[b * n_inner..(b + 1) * n_inner];
                for (a, slot) in row.iter_mut().enumerate() {
                    if let Some(win) = &inner[a] {
                        *slot = euclid(win, seg_win);
                    }
                }
            }
            let mut col_min = vec![f64::INFINITY; n_inner];
            for b in 0..w {
                for (cm, &v) in col_min.iter_mut().zip(&dist[b * n_inner..(b + 1) * n_inner]) {
                    *cm = cm.min(v);
                }
            }
            let mut slide = vec![Vec::new(); w];
            for (b, s) in slide.iter_mut().enumerate() {
                sliding_min(&dist[b * n_inner..(b + 1) * n_inner], w, s);
            }
            let mut p_abba = vec![0.0; 2 * w];
            starts
                .iter()
                .map(|&s| {
                    let j = s - 1;
                    p_abba[..w].copy_from_slice(&col_min[j..j + w]);
                    for (b, s) in slide.iter().enumerate() {
                        p_abba[w + b] = s[j];
                    }
                    kth_smallest(&mut p_abba, k)
                })
                .collect()
        })
        .collect();

    Ok(ProfileMatrix {
        m,
        ell,
        rows,
        data: row_data.into_iter().flatten().collect(),
        starts,
        excluded,
        gapped_segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_profile_is_zero() {
        let x = [1.0, 4.0, 2.0, 8.0];
        let p = znorm_dist_profile(&x, &x).unwrap();
        assert_eq!(p.values, vec![0.0]);
    }

    #[test]
    fn profile_of_ramp_against_hill() {
        let p = znorm_dist_profile(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(p.values.len(), 3);
        assert_eq!(p.values[0], 0.0);
        // (1,2,3) vs (2,3,2): z = (-1.2247,0,1.2247) vs (-0.7071,1.4142,-0.7071)
        let zq = [-1.5f64.sqrt(), 0.0, 1.5f64.sqrt()];
        let zt = [-0.5f64.sqrt(), 2.0f64.sqrt(), -0.5f64.sqrt()];
        let expect: f64 = zq.iter().zip(&zt).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!((p.values[1] - expect).abs() < 1e-12);
    }

    #[test]
    fn constant_windows_are_zero_distance() {
        let p = znorm_dist_profile(&[3.0, 3.0], &[5.0, 5.0, 5.0, 5.0]).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaps_are_rejected() {
        assert!(matches!(
            znorm_dist_profile(&[1.0, f64::NAN], &[1.0, 2.0, 3.0]),
            Err(Error::GapInInput)
        ));
        assert!(matches!(
            mpdist(&[1.0, 2.0, 3.0, 4.0], &[1.0, f64::NAN, 3.0, 4.0], 2),
            Err(Error::GapInInput)
        ));
    }

    #[test]
    fn rank_clamps_and_rounds_up() {
        assert_eq!(mpdist_rank(8, 8), 1);
        assert_eq!(mpdist_rank(32, 32), 4);
        assert_eq!(mpdist_rank(16, 16), 2);
        assert_eq!(default_inner_window(7), 4);
        let mut v = vec![3.0, 1.0];
        assert_eq!(kth_smallest(&mut v, 5), 3.0);
    }

    #[test]
    fn sliding_min_matches_naive() {
        let v: Vec<f64> = (0..23).map(|i| ((i * 7919) % 13) as f64).collect();
        for w in 1..=9 {
            let mut out = Vec::new();
            sliding_min(&v, w, &mut out);
            let naive: Vec<f64> = v
                .windows(w)
                .map(|s| s.iter().copied().fold(f64::INFINITY, f64::min))
                .collect();
            assert_eq!(out, naive, "w = {w}");
        }
    }

    #[test]
    fn identical_inputs_have_zero_mpdist() {
        let a: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin()).collect();
        assert_eq!(mpdist(&a, &a, 8).unwrap(), 0.0);
    }

    #[test]
    fn gapped_columns_and_rows_are_reported() {
        let mut x: Vec<f64> = (0..16).map(|i| (i as f64).sin()).collect();
        x[5] = f64::NAN;
        let pm = mpdist_profile_matrix(&x, 4, 2).unwrap();
        assert_eq!(pm.rows, 4);
        assert_eq!(pm.excluded, vec![3, 4, 5, 6]);
        assert_eq!(pm.gapped_segments, vec![2]);
        assert!(pm.row(1).iter().all(|v| v.is_infinite()));
        assert_eq!(pm.cols(), 13 - 4);
    }
}
