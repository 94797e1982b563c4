use std::sync::OnceLock;

use proptest::prelude::*;
use saeti::pipeline::{impute, impute_report, impute_with_stats};
use saeti::scenarios::*;
use saeti::synth::regime_series;
use saeti::training::{train, ModelBundle, TrainConfig};
use saeti::TimeSeries;

fn bundle() -> &'static ModelBundle {
    static B: OnceLock<ModelBundle> = OnceLock::new();
    B.get_or_init(|| {
        let mut cfg = TrainConfig::new(8, 2);
        cfg.max_epochs = 3;
        train(&series(1), &cfg).unwrap().bundle
    })
}

fn series(seed: u64) -> TimeSeries {
    regime_series(2, 404, 8, 2, 0.0, seed).unwrap().series
}

fn assert_observed_preserved(input: &TimeSeries, output: &TimeSeries) {
    for j in 0..input.d() {
        for i in 0..input.n() {
            if let Some(v) = input.get(i, j) {
                assert_eq!(output.get(i, j).unwrap().to_bits(), v.to_bits(), "({i}, {j})");
            }
        }
    }
}

#[test]
fn gap_free_input_is_returned_unchanged() {
    let u = series(2);
    let (out, stats) = impute_with_stats(&u, bundle()).unwrap();
    assert_eq!(out, u);
    assert_eq!(stats.routed, 0);
    assert_eq!(stats.windows, 51);
}

#[test]
fn single_missing_point_changes_one_value() {
    let truth = series(2);
    let mut u = truth.clone();
    u.remove(100, 1);
    let out = impute(&u, bundle()).unwrap();
    assert!(!out.has_gaps());
    assert_observed_preserved(&u, &out);
    let differing = (0..u.n())
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .filter(|&(i, j)| out.get(i, j) != truth.get(i, j))
        .count();
    assert!(differing <= 1);
}

#[test]
fn tail_window_gap_is_imputed() {
    let mut u = series(3);
    // n = 404 is not a multiple of m, so the last window overlaps its predecessor
    u.remove(403, 0);
    u.remove(398, 1);
    let out = impute(&u, bundle()).unwrap();
    assert!(!out.has_gaps());
    assert_observed_preserved(&u, &out);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let u = TimeSeries::from_unnamed(vec![vec![1.0; 50]]).unwrap();
    assert!(impute(&u, bundle()).is_err());
}

#[test]
fn report_matches_scenario_rmse() {
    let truth = series(4);
    let (gapped, mask) = gen_blackout(&truth, 10, 1).unwrap();
    let (out, report) = impute_report(&gapped, bundle(), &truth).unwrap();
    assert_eq!(report.rmse_per_coord.len(), 2);
    assert_eq!(report.rmse.unwrap(), rmse(&truth, &out, &mask).unwrap());
    assert_eq!(report.stats.imputed_points, 20);
    let usage: usize = report.stats.snippet_usage.iter().map(|u| u.iter().sum::<usize>()).sum();
    assert_eq!(usage, 2 * report.stats.routed);

    let (_, perfect) = impute_report(&gapped, bundle(), &out).unwrap();
    assert_eq!(perfect.rmse, Some(0.0));
}

#[test]
fn out_of_range_values_are_clamped_and_counted() {
    let mut u = series(5);
    u.set(3, 0, 1e6);
    u.remove(4, 0);
    let (out, stats) = impute_with_stats(&u, bundle()).unwrap();
    assert_eq!(stats.clamped_inputs, 1);
    assert_observed_preserved(&u, &out);
}

#[test]
fn rmse_hand_values() {
    assert_eq!(rmse_values(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt());
    assert_eq!(rmse_values(&[1.0], &[1.0]).unwrap(), 0.0);
    assert_eq!(rmse_values(&[2.0], &[-1.5]).unwrap(), 3.5);
    assert!(rmse_values(&[], &[]).unwrap_err().to_string().contains("nothing to score"));

    let truth = TimeSeries::from_unnamed(vec![vec![0.0, 1.0, 2.0], vec![5.0, 5.0, 5.0]]).unwrap();
    let pred = TimeSeries::from_unnamed(vec![vec![3.0, 1.0, 2.0], vec![5.0, 9.0, 5.0]]).unwrap();
    let mut mask = GapMask::new(3, 2);
    mask.insert(0, 0);
    mask.insert(1, 1);
    assert_eq!(rmse(&truth, &pred, &mask).unwrap(), 12.5f64.sqrt());
    assert_eq!(rmse_per_coord(&truth, &pred, &mask).unwrap(), vec![Some(3.0), Some(4.0)]);
}

#[test]
fn blackout_removes_one_aligned_block() {
    let ts = series(6);
    let (gapped, mask) = gen_blackout(&ts, 10, 3).unwrap();
    assert_eq!(mask.count(), 20);
    let cells = mask.cells();
    let first = cells[0].0;
    for i in first..first + 10 {
        assert!(mask.contains(i, 0) && mask.contains(i, 1));
        assert!(!gapped.is_observed(i, 0) && !gapped.is_observed(i, 1));
    }
    assert_eq!(gen_blackout(&ts, 10, 3).unwrap().1, mask);
    assert!(gen_blackout(&ts, 404, 0).is_err());
}

#[test]
fn ts_nbr_touches_one_coordinate() {
    let ts = series(7);
    assert_eq!(default_ts_nbr_gap(404), 40);
    let (_, mask) = gen_ts_nbr(&ts, 1, 40, 2).unwrap();
    assert_eq!(mask.count(), 40);
    assert!(mask.cells().iter().all(|&(_, j)| j == 1));
    assert_eq!(gen_ts_nbr(&ts, 1, 40, 2).unwrap().1, mask);
    assert!(gen_ts_nbr(&ts, 2, 40, 2).is_err());
}

#[test]
fn mcar_stops_just_past_the_target() {
    let ts = series(8);
    let (gapped, mask) = gen_mcar(&ts, 0.25, 10, 4).unwrap();
    let frac = gapped.missing_fraction();
    assert!(frac >= 0.25 && frac <= 0.25 + 10.0 / (404.0 * 2.0), "{frac}");
    assert_eq!(mask.count(), gapped.missing_count());
    assert!(gen_mcar(&ts, 0.0, 10, 4).unwrap().1.is_empty());
    assert!(gen_mcar(&ts, 1.0, 10, 4).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generators_leave_existing_gaps_alone(seed in any::<u64>(), holes in proptest::collection::vec((0usize..404, 0usize..2), 0..20)) {
        let mut ts = series(9);
        for &(i, j) in &holes {
            ts.remove(i, j);
        }
        let before = GapMask::missing_of(&ts);
        for (gapped, mask) in [
            gen_blackout(&ts, 10, seed).unwrap(),
            gen_mcar(&ts, 0.2, 5, seed).unwrap(),
            gen_ts_nbr(&ts, (seed % 2) as usize, 30, seed).unwrap(),
        ] {
            for (i, j) in mask.cells() {
                prop_assert!(!before.contains(i, j));
                prop_assert!(!gapped.is_observed(i, j));
            }
            prop_assert_eq!(gapped.missing_count(), before.count() + mask.count());
        }
    }

    #[test]
    fn rmse_is_permutation_invariant_and_scales(values in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..40), c in 0.1f64..10.0) {
        let (t, p): (Vec<f64>, Vec<f64>) = values.iter().copied().unzip();
        let base = rmse_values(&t, &p).unwrap();
        let (tr, pr): (Vec<f64>, Vec<f64>) = values.iter().rev().copied().unzip();
        prop_assert!((rmse_values(&tr, &pr).unwrap() - base).abs() <= 1e-9 * (1.0 + base));
        let ts: Vec<f64> = t.iter().map(|v| v * c).collect();
        let ps: Vec<f64> = p.iter().map(|v| v * c).collect();
        prop_assert!((rmse_values(&ts, &ps).unwrap() - c * base).abs() <= 1e-9 * (1.0 + c * base));
    }

    #[test]
    fn imputation_preserves_observed_and_is_idempotent(seed in 0u64..1000, rate in 0.05f64..0.4) {
        let truth = series(10);
        let (gapped, _) = gen_mcar(&truth, rate, 7, seed).unwrap();
        let out = impute(&gapped, bundle()).unwrap();
        prop_assert!(!out.has_gaps());
        assert_observed_preserved(&gapped, &out);
        prop_assert_eq!(impute(&out, bundle()).unwrap(), out);
    }
}
