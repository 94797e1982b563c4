//! Brute-force references for MPdist and snippet assignment. Written
//! independently of the library: every window pair is z-normalized and
//! compared directly.
#![allow(dead_code)]

pub fn znorm(w: &[f64]) -> Vec<f64> {
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd <= 1e-10 * (1.0 + mean.abs()) {
        return vec![0.0; w.len()];
    }
    w.iter().map(|v| (v - mean) / sd).collect()
}

pub fn zdist(a: &[f64], b: &[f64]) -> f64 {
    let (za, zb) = (znorm(a), znorm(b));
    za.iter().zip(&zb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// For every length-`ell` window of `a`, its smallest distance to any window of `b`.
fn nearest(a: &[f64], b: &[f64], ell: usize) -> Vec<f64> {
    (0..=a.len() - ell)
        .map(|i| {
            (0..=b.len() - ell)
                .map(|j| zdist(&a[i..i + ell], &b[j..j + ell]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

pub fn mpdist_naive(a: &[f64], b: &[f64], ell: usize) -> f64 {
    let mut p = nearest(a, b, ell);
    p.extend(nearest(b, a, ell));
    p.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let k = (0.05 * (a.len() + b.len()) as f64).ceil() as usize;
    let k = k.clamp(1, p.len());
    p[k - 1]
}

/// Rows = segments, columns = gap-free subsequence starts (1-based).
pub fn profile_matrix_naive(coord: &[f64], m: usize, ell: usize) -> (Vec<usize>, Vec<Vec<f64>>) {
    let starts: Vec<usize> = (0..=coord.len() - m)
        .filter(|&i| coord[i..i + m].iter().all(|v| v.is_finite()))
        .map(|i| i + 1)
        .collect();
    let rows = (0..coord.len() / m)
        .map(|r| {
            let seg = &coord[r * m..(r + 1) * m];
            starts
                .iter()
                .map(|&s| {
                    if seg.iter().any(|v| !v.is_finite()) {
                        f64::INFINITY
                    } else {
                        mpdist_naive(&coord[s - 1..s - 1 + m], seg, ell)
                    }
                })
                .collect()
        })
        .collect();
    (starts, rows)
}

/// 1-based argmin of each column, first minimum wins.
pub fn argmin_columns(rows: &[Vec<f64>]) -> Vec<usize> {
    (0..rows[0].len())
        .map(|c| {
            let mut best = 0;
            for r in 1..rows.len() {
                if rows[r][c] < rows[best][c] {
                    best = r;
                }
            }
            best + 1
        })
        .collect()
}
