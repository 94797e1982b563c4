//! Imputation of a new series with a trained bundle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{reconstructor_input, MISSING_FILL};
use crate::scenarios::{rmse, rmse_per_coord, GapMask};
use crate::training::ModelBundle;
use crate::ts::{split_nonoverlapping, TimeSeries};

/// Windows per inference batch. Fixed so results never depend on scheduling.
const INFER_BATCH: usize = 64;

/// What happened during one imputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeStats {
    pub windows: usize,
    pub routed: usize,
    pub imputed_points: usize,
    /// Observed inputs outside the training range, clamped for the models.
    pub clamped_inputs: usize,
    /// `snippet_usage[j][r - 1]`: routed windows assigned rank `r` in coordinate `j`.
    pub snippet_usage: Vec<Vec<usize>>,
}

/// Fills every missing point of `u`; observed points are returned unchanged.
pub fn impute(u: &TimeSeries, bundle: &ModelBundle) -> Result<TimeSeries> {
    impute_with_stats(u, bundle).map(|(ts, _)| ts)
}

pub fn impute_with_stats(u: &TimeSeries, bundle: &ModelBundle) -> Result<(TimeSeries, ImputeStats)> {
    let c = &bundle.config;
    if u.d() != c.d {
        return Err(Error::shape(format!(
            "series has {} coordinates, bundle was trained on {}",
            u.d(),
            c.d
        )));
    }
    let m = c.m;
    let mut norm = bundle.norm.normalize(u)?;
    let mut clamped = 0;
    for j in 0..norm.d() {
        for i in 0..norm.n() {
            if let Some(v) = norm.get(i, j) {
                if !(0.0..=1.0).contains(&v) {
                    clamped += 1;
                    norm.set(i, j, v.clamp(0.0, 1.0));
                }
            }
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} observed values fall outside the training range and were clamped");
    }

    let windows = split_nonoverlapping(&norm, m)?;
    let routed: Vec<_> = windows.iter().filter(|w| w.has_gaps()).collect();
    let results = routed
        .par_chunks(INFER_BATCH)
        .map(|chunk| -> Result<Vec<(Vec<usize>, Vec<f64>)>> {
            let x: Vec<f64> = chunk.iter().flat_map(|w| w.filled(MISSING_FILL)).collect();
            let ranks = bundle.recognizer.predict(&x, chunk.len())?;
            let mut stacked = Vec::with_capacity(chunk.len() * 2 * c.d * m);
            for (w, r) in chunk.iter().zip(&ranks) {
                let rows: Vec<&[f64]> = r
                    .iter()
                    .zip(&bundle.snippets)
                    .map(|(&rank, set)| set.values(rank))
                    .collect();
                reconstructor_input(&w.filled(MISSING_FILL), &rows, m, &mut stacked)?;
            }
            let out = bundle.reconstructor.forward(&stacked, chunk.len())?;
            Ok(ranks.into_iter().zip(out.chunks(c.d * m).map(<[f64]>::to_vec)).collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = u.clone();
    let mut usage = vec![vec![0; c.k]; c.d];
    let mut imputed = 0;
    for (w, (ranks, recon)) in routed.iter().zip(results.into_iter().flatten()) {
        for (j, &r) in ranks.iter().enumerate() {
            usage[j][r - 1] += 1;
        }
        for j in 0..c.d {
            for t in 0..m {
                let i = w.start - 1 + t;
                // earlier windows take precedence where the last one overlaps
                if !out.is_observed(i, j) {
                    out.set(i, j, bundle.norm.denormalize_value(j, recon[j * m + t]));
                    imputed += 1;
                }
            }
        }
    }
    debug_assert!(!out.has_gaps());
    Ok((
        out,
        ImputeStats {
            windows: windows.len(),
            routed: routed.len(),
            imputed_points: imputed,
            clamped_inputs: clamped,
            snippet_usage: usage,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeReport {
    /// RMSE at originally missing points per coordinate; `None` when a
    /// coordinate had no gaps.
    pub rmse_per_coord: Vec<Option<f64>>,
    pub rmse: Option<f64>,
    pub stats: ImputeStats,
}

/// Imputes `u` and scores the result against `truth` at the points `u` was missing.
pub fn impute_report(u: &TimeSeries, bundle: &ModelBundle, truth: &TimeSeries) -> Result<(TimeSeries, ImputeReport)> {
    u.same_shape(truth)?;
    let (out, stats) = impute_with_stats(u, bundle)?;
    let mask = GapMask::missing_of(u);
    let overall = if mask.is_empty() {
        None
    } else {
        Some(rmse(truth, &out, &mask)?)
    };
    let report = ImputeReport {
        rmse_per_coord: rmse_per_coord(truth, &out, &mask)?,
        rmse: overall,
        stats,
    };
    Ok((out, report))
}
