//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates forward passes, so it is independent
//! of the backward rules it validates.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Relative error `|a - b| / max(|a|, |b|, REL_FLOOR)`.
pub const REL_FLOOR: f64 = 1e-6;

/// Relative step for central differences.
pub const FD_STEP: f64 = 1e-5;

/// A stencil straddles a kink (relu, leaky relu, max pool) when the central
/// differences at `h` and `h/2`, or the two one-sided slopes, differ by more
/// than this (relative). The step then shrinks; elements that never settle
/// are skipped, not scored.
pub const KINK_TOL: f64 = 1e-3;

const KINK_RETRIES: usize = 2;

#[derive(Debug, Clone, Copy)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Elements whose difference stencil straddled a non-differentiable point.
    pub kinks: usize,
    /// (input index, element, analytic, numeric) at the worst element.
    pub worst: (usize, usize, f64, f64),
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares backward gradients of `build`'s scalar output against central
/// differences for every input, or for `samples` random elements per input.
pub fn check_gradients<F>(inputs: &[Tensor], build: F, samples: Option<usize>, seed: u64) -> Result<GradReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let base = g.value(loss).data()[0];
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let loss = build(&mut g, &vars)?;
        Ok(g.value(loss).data()[0])
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut report = GradReport {
        max_rel_err: 0.0,
        checked: 0,
        kinks: 0,
        worst: (0, 0, 0.0, 0.0),
    };
    for i in 0..inputs.len() {
        let len = inputs[i].len();
        let picks: Vec<usize> = match samples {
            Some(s) if s < len => sample(&mut rng, len, s).into_vec(),
            _ => (0..len).collect(),
        };
        for e in picks {
            let x0 = inputs[i].data()[e];
            // (central, right slope, left slope)
            let mut stencil = |h: f64| -> Result<(f64, f64, f64)> {
                work[i].data_mut()[e] = x0 + h;
                let up = eval(&work)?;
                work[i].data_mut()[e] = x0 - h;
                let down = eval(&work)?;
                work[i].data_mut()[e] = x0;
                Ok(((up - down) / (2.0 * h), (up - base) / h, (base - down) / h))
            };
            let mut h = FD_STEP * x0.abs().max(1.0);
            let mut numeric = None;
            for _ in 0..=KINK_RETRIES {
                let (full, right, left) = stencil(h)?;
                let (half, _, _) = stencil(h / 2.0)?;
                if rel_err(full, half) <= KINK_TOL && rel_err(right, left) <= KINK_TOL {
                    numeric = Some(half);
                    break;
                }
                h /= 100.0;
            }
            let Some(numeric) = numeric else {
                report.kinks += 1;
                continue;
            };
            let err = rel_err(analytic[i][e], numeric);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = (i, e, analytic[i][e], numeric);
            }
        }
    }
    Ok(report)
}
