mod common;

use common::oracle::{argmin_columns, mpdist_naive, profile_matrix_naive};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saeti::mpdist::{mpdist, mpdist_profile_matrix, ProfileMatrix};
use saeti::snippets::{assign_neighbors, discover, find_snippets, label_subsequence, nearest_snippet};
use saeti::ts::Subsequence;

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = 0.0;
    (0..n)
        .map(|_| {
            level += rng.random_range(-1.0..1.0);
            level + rng.random_range(-0.5..0.5)
        })
        .collect()
}

fn sine_pattern(m: usize) -> Vec<f64> {
    (0..m)
        .map(|t| (2.0 * std::f64::consts::PI * t as f64 / m as f64).sin())
        .collect()
}

fn spike_pattern(m: usize) -> Vec<f64> {
    (0..m).map(|t| if t % 8 < 2 { 1.0 } else { -(t as f64 / m as f64) }).collect()
}

#[test]
fn sine_versus_ramp_matches_oracle() {
    let a: Vec<f64> = (0..8).map(|t| (t as f64 * 0.8).sin()).collect();
    let b: Vec<f64> = (0..8).map(|t| t as f64 * 0.5 - 1.0).collect();
    let fast = mpdist(&a, &b, 4).unwrap();
    let slow = mpdist_naive(&a, &b, 4);
    assert!((fast - slow).abs() <= 1e-9, "{fast} vs {slow}");
    assert!(fast > 0.0);
}

#[test]
fn profile_matrix_shape_and_self_distance() {
    let x = noise(16, 1);
    let pm = mpdist_profile_matrix(&x, 4, 2).unwrap();
    assert_eq!(pm.rows, 4);
    assert!(pm.cols() <= 13);
    for r in 0..4 {
        let col = pm.starts.iter().position(|&s| s == r * 4 + 1).unwrap();
        assert_eq!(pm.get(r, col), 0.0);
    }
}

#[test]
fn profile_matrix_equals_brute_force_with_gaps() {
    for (seed, n, m) in [(2u64, 60usize, 6usize), (3, 97, 8), (4, 128, 16)] {
        let mut x = noise(n, seed);
        x[n / 3] = f64::NAN;
        x[n / 3 + 1] = f64::NAN;
        let ell = m.div_ceil(2);
        let pm = mpdist_profile_matrix(&x, m, ell).unwrap();
        let (starts, rows) = profile_matrix_naive(&x, m, ell);
        assert_eq!(pm.starts, starts);
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                let got = pm.get(r, c);
                if v.is_infinite() {
                    assert!(got.is_infinite());
                } else {
                    assert!((got - v).abs() <= 1e-9, "r={r} c={c}: {got} vs {v}");
                }
            }
        }
        assert_eq!(assign_neighbors(&pm), argmin_columns(&rows));
    }
}

#[test]
fn random_matrix_assignment_matches_argmin() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..9).map(|_| rng.random_range(0..5) as f64).collect())
        .collect();
    let pm = ProfileMatrix::from_rows(4, 2, (1..=9).collect(), rows.clone());
    assert_eq!(assign_neighbors(&pm), argmin_columns(&rows));
}

#[test]
fn alternating_patterns_yield_two_balanced_snippets() {
    let m = 32;
    let (p, q) = (sine_pattern(m), spike_pattern(m));
    let series: Vec<f64> = (0..40).flat_map(|i| if i % 2 == 0 { p.clone() } else { q.clone() }).collect();
    let set = find_snippets(&series, 0, m, 2, m / 2).unwrap();
    assert_eq!(set.k(), 2);
    let mut found: Vec<&Vec<f64>> = set.items.iter().map(|s| &s.values).collect();
    found.sort_by(|a, b| a[1].partial_cmp(&b[1]).unwrap());
    assert!(found.contains(&&p) && found.contains(&&q));
    for s in &set.items {
        assert!((0.4..=0.6).contains(&s.frac), "frac {}", s.frac);
    }
    // every subsequence lands in one of the two pattern segments
    let total: f64 = set.items.iter().map(|s| s.frac).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn relabels_orphans_to_nearest_snippet() {
    let x = noise(240, 11);
    let m = 8;
    let set = find_snippets(&x, 0, m, 2, 4).unwrap();
    let disc = discover(&x, m, 4).unwrap();
    let chosen: Vec<usize> = set.items.iter().map(|s| s.index).collect();
    let orphan = disc
        .profile
        .starts
        .iter()
        .zip(&disc.assignment)
        .find(|(_, seg)| !chosen.contains(seg))
        .map(|(&s, _)| s)
        .expect("some subsequence belongs to an unselected segment");
    let values = &x[orphan - 1..orphan - 1 + m];
    let sub = Subsequence {
        coord: Some(0),
        start: orphan,
        values,
    };
    let d: Vec<f64> = set.items.iter().map(|s| mpdist_naive(values, &s.values, 4)).collect();
    let expect = if d[1] < d[0] { 2 } else { 1 };
    assert_eq!(label_subsequence(&sub, &set).unwrap(), expect);
    assert_eq!(nearest_snippet(values, &set).unwrap(), expect);

    // a snippet's own values are labeled with its rank
    let own = Subsequence {
        coord: Some(0),
        start: set.items[1].index * m - m + 1,
        values: &set.items[1].values,
    };
    assert_eq!(label_subsequence(&own, &set).unwrap(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mpdist_is_symmetric_nonnegative_and_matches_oracle(
        seed in any::<u64>(),
        m in 4usize..48,
    ) {
        let a = noise(m, seed);
        let b = noise(m, seed.wrapping_add(1));
        let ell = m.div_ceil(2);
        let ab = mpdist(&a, &b, ell).unwrap();
        let ba = mpdist(&b, &a, ell).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(mpdist(&a, &a, ell).unwrap(), 0.0);
        prop_assert!((ab - mpdist_naive(&a, &b, ell)).abs() <= 1e-9);
    }

    #[test]
    fn neighbor_sets_partition_retained_subsequences(
        seed in any::<u64>(),
        n in 40usize..400,
        m in 4usize..16,
        gap in proptest::option::of(0usize..40),
    ) {
        let mut x = noise(n, seed);
        if let Some(g) = gap {
            x[g] = f64::NAN;
        }
        let ell = m.div_ceil(2);
        let disc = discover(&x, m, ell).unwrap();
        let mut union: Vec<usize> = disc.segments.iter().flat_map(|s| s.neighbors.clone()).collect();
        union.sort_unstable();
        prop_assert_eq!(&union, &disc.profile.starts);
        let total: f64 = disc.segments.iter().map(|s| s.frac).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);

        let k = (n / m - 1).min(3);
        let set = find_snippets(&x, 0, m, k, ell).unwrap();
        for w in set.items.windows(2) {
            prop_assert!(w[0].frac >= w[1].frac);
        }
        let min_selected = set.items.last().unwrap().frac;
        for s in &disc.segments {
            if !s.gapped && !set.items.iter().any(|c| c.index == s.index) {
                prop_assert!(min_selected >= s.frac);
            }
        }
        for snip in &set.items {
            prop_assert_eq!(&snip.values[..], &x[(snip.index - 1) * m..snip.index * m]);
            prop_assert_eq!(snip.frac, snip.neighbors.len() as f64 / disc.profile.cols() as f64);
        }
        prop_assert_eq!(find_snippets(&x, 0, m, k, ell).unwrap(), set);
    }
}
