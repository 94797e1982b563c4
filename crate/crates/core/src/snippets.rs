//! Snippet discovery on a single coordinate.
//!
//! Every gap-free length-`m` subsequence is assigned to the segment with the
//! smallest MPdist to it. A segment's `frac` is the share of subsequences
//! assigned to it; the `K` segments with the largest `frac` are the snippets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpdist::{mpdist, mpdist_profile_matrix, ProfileMatrix};
use crate::ts::Subsequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    /// 1-based segment number.
    pub index: usize,
    pub frac: f64,
    pub values: Vec<f64>,
    /// 1-based start positions of the subsequences assigned to this segment.
    pub neighbors: Vec<usize>,
}

/// The `K` most significant snippets of one coordinate, by non-increasing `frac`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnippetSet {
    pub coord: usize,
    pub m: usize,
    pub ell: usize,
    pub items: Vec<Snippet>,
}

impl SnippetSet {
    pub fn k(&self) -> usize {
        self.items.len()
    }

    /// Snippet values for a 1-based rank.
    pub fn values(&self, rank: usize) -> &[f64] {
        &self.items[rank - 1].values
    }
}

/// Per-segment outcome of the neighbor assignment.
#[derive(Debug, Clone)]
pub struct SegmentShare {
    pub index: usize,
    pub neighbors: Vec<usize>,
    pub frac: f64,
    pub gapped: bool,
}

/// Profile matrix plus the neighbor partition it induces.
#[derive(Debug, Clone)]
pub struct Discovery {
    pub profile: ProfileMatrix,
    /// 1-based home segment of each retained subsequence, aligned with `profile.starts`.
    pub assignment: Vec<usize>,
    pub segments: Vec<SegmentShare>,
}

/// Home segment (1-based) of every column: the row argmin, ties to the
/// smaller segment number.
pub fn assign_neighbors(profile: &ProfileMatrix) -> Vec<usize> {
    (0..profile.cols())
        .map(|c| {
            let mut best = 0;
            let mut best_val = profile.get(0, c);
            for r in 1..profile.rows {
                let v = profile.get(r, c);
                if v < best_val {
                    best = r;
                    best_val = v;
                }
            }
            best + 1
        })
        .collect()
}

/// Builds the profile matrix and the full neighbor partition over all segments.
pub fn discover(coord: &[f64], m: usize, ell: usize) -> Result<Discovery> {
    let profile = mpdist_profile_matrix(coord, m, ell)?;
    if profile.cols() == 0 {
        return Err(Error::InsufficientData(
            "every subsequence contains a missing value".into(),
        ));
    }
    if profile.gapped_segments.len() == profile.rows {
        return Err(Error::InsufficientData(
            "every segment contains a missing value".into(),
        ));
    }
    let assignment = assign_neighbors(&profile);
    let mut segments: Vec<SegmentShare> = (1..=profile.rows)
        .map(|index| SegmentShare {
            index,
            neighbors: Vec::new(),
            frac: 0.0,
            gapped: profile.gapped_segments.binary_search(&index).is_ok(),
        })
        .collect();
    for (&start, &seg) in profile.starts.iter().zip(&assignment) {
        segments[seg - 1].neighbors.push(start);
    }
    let total = profile.cols() as f64;
    for s in &mut segments {
        s.frac = s.neighbors.len() as f64 / total;
    }
    Ok(Discovery {
        profile,
        assignment,
        segments,
    })
}

/// The `k` most significant snippets of a coordinate (`NaN` marks missing values).
pub fn find_snippets(coord: &[f64], coord_index: usize, m: usize, k: usize, ell: usize) -> Result<SnippetSet> {
    let n_segments = coord.len() / m.max(1);
    if k == 0 || k > n_segments {
        return Err(Error::invalid(format!(
            "K = {k} must lie in 1..={n_segments} (number of segments)"
        )));
    }
    if k == 1 {
        log::warn!("K = 1: every subsequence falls into a single class");
    }
    let discovery = discover(coord, m, ell)?;
    select_top(coord, coord_index, m, ell, k, discovery.segments)
}

pub(crate) fn select_top(
    coord: &[f64],
    coord_index: usize,
    m: usize,
    ell: usize,
    k: usize,
    segments: Vec<SegmentShare>,
) -> Result<SnippetSet> {
    let mut candidates: Vec<SegmentShare> = segments.into_iter().filter(|s| !s.gapped).collect();
    if k > candidates.len() {
        return Err(Error::InsufficientData(format!(
            "K = {k} exceeds the {} gap-free segments",
            candidates.len()
        )));
    }
    candidates.sort_by(|a, b| b.frac.total_cmp(&a.frac).then(a.index.cmp(&b.index)));
    let items = candidates
        .into_iter()
        .take(k)
        .map(|s| Snippet {
            values: coord[(s.index - 1) * m..s.index * m].to_vec(),
            index: s.index,
            frac: s.frac,
            neighbors: s.neighbors,
        })
        .collect();
    Ok(SnippetSet {
        coord: coord_index,
        m,
        ell,
        items,
    })
}

/// 1-based rank of the MPdist-nearest snippet, ties to the smaller rank.
pub fn nearest_snippet(values: &[f64], set: &SnippetSet) -> Result<usize> {
    let mut best = (1, f64::INFINITY);
    for (r, snip) in set.items.iter().enumerate() {
        let dist = mpdist(values, &snip.values, set.ell)?;
        if dist < best.1 {
            best = (r + 1, dist);
        }
    }
    Ok(best.0)
}

/// Class of a gap-free subsequence taken from the series the snippets were
/// found on: the rank of the snippet whose neighbor set holds its start, or
/// the MPdist-nearest snippet when its home segment was not selected.
pub fn label_subsequence(sub: &Subsequence<'_>, set: &SnippetSet) -> Result<usize> {
    if set.items.is_empty() {
        return Err(Error::invalid("empty snippet set"));
    }
    if !sub.is_gap_free() {
        return Err(Error::GapInInput);
    }
    if let Some(rank) = set
        .items
        .iter()
        .position(|s| s.neighbors.binary_search(&sub.start).is_ok())
    {
        return Ok(rank + 1);
    }
    nearest_snippet(sub.values, set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern_p(m: usize) -> Vec<f64> {
        (0..m)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / m as f64).sin())
            .collect()
    }

    fn pattern_q(m: usize) -> Vec<f64> {
        (0..m).map(|t| if t < m / 4 { 1.0 } else { (t % 3) as f64 * 0.2 }).collect()
    }

    #[test]
    fn unique_and_tied_minimum() {
        let pm = ProfileMatrix::from_rows(
            4,
            2,
            vec![1, 2],
            vec![
                vec![5.0, 1.0],
                vec![4.0, 1.0],
                vec![3.0, 2.0],
                vec![0.5, 7.0],
            ],
        );
        assert_eq!(assign_neighbors(&pm), vec![4, 1]);
    }

    #[test]
    fn repeated_pattern_gives_single_full_snippet() {
        let p = pattern_p(8);
        let series: Vec<f64> = p.iter().copied().cycle().take(64).collect();
        let set = find_snippets(&series, 0, 8, 1, 4).unwrap();
        assert_eq!(set.k(), 1);
        assert_eq!(set.items[0].index, 1);
        assert_eq!(set.items[0].frac, 1.0);
        assert_eq!(set.items[0].neighbors.len(), 64 - 8 + 1);
    }

    #[test]
    fn k_bounds_are_checked() {
        let series: Vec<f64> = (0..40).map(|i| (i as f64).cos()).collect();
        assert!(find_snippets(&series, 0, 8, 6, 4).is_err());
        assert!(find_snippets(&series, 0, 8, 0, 4).is_err());
        assert!(find_snippets(&series, 0, 8, 5, 4).is_ok());
        let all_gaps = vec![f64::NAN; 40];
        assert!(matches!(
            find_snippets(&all_gaps, 0, 8, 1, 4),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn labels_follow_neighbor_sets() {
        let m = 16;
        let (p, q) = (pattern_p(m), pattern_q(m));
        let series: Vec<f64> = (0..8).flat_map(|i| if i % 2 == 0 { p.clone() } else { q.clone() }).collect();
        let set = find_snippets(&series, 0, m, 2, 8).unwrap();
        let rank_of_q = set.items.iter().position(|s| s.values == q).unwrap() + 1;
        let sub = Subsequence {
            coord: Some(0),
            start: m + 1,
            values: &series[m..2 * m],
        };
        assert_eq!(label_subsequence(&sub, &set).unwrap(), rank_of_q);

        let single = find_snippets(&series, 0, m, 1, 8).unwrap();
        for start in [1, 5, 17, 100] {
            let sub = Subsequence {
                coord: Some(0),
                start,
                values: &series[start - 1..start - 1 + m],
            };
            assert_eq!(label_subsequence(&sub, &single).unwrap(), 1);
        }
    }
}
