//! The two networks: a snippet [`Recognizer`] and a window [`Reconstructor`].
//!
//! Inputs are min-max normalized, with [`MISSING_FILL`] at missing points.
//! Batches are flat row-major buffers.

mod recognizer;
mod reconstructor;

pub use recognizer::{argmax_rank, Recognizer, RECOGNIZER_FILTERS, RECOGNIZER_HIDDEN};
pub use reconstructor::{default_latent, Reconstructor, ENCODER_FILTERS};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};

/// Convolution kernel width shared by every conv layer.
pub const KERNEL: usize = 5;

/// Value fed to the networks in place of a missing point.
pub const MISSING_FILL: f64 = -1.0;

/// Mean per-window cross-entropy: summed over windows and coordinates,
/// divided by the batch size. `targets` are 1-based snippet ranks, one per
/// logits row.
pub fn recognizer_loss(g: &mut Graph, logits: Var, targets: &[usize], batch: usize) -> Result<Var> {
    if batch == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if targets.contains(&0) {
        return Err(Error::invalid("snippet ranks are 1-based"));
    }
    let zero_based: Vec<usize> = targets.iter().map(|t| t - 1).collect();
    let total = g.softmax_cross_entropy(logits, &zero_based)?;
    Ok(g.affine(total, 1.0 / batch as f64, 0.0))
}

/// Stacks one window (`d x m`, missing already filled) with its per-coordinate
/// snippet rows into the `d x 2 x m` layout the reconstructor expects.
pub fn reconstructor_input(window: &[f64], snippets: &[&[f64]], m: usize, out: &mut Vec<f64>) -> Result<()> {
    let d = snippets.len();
    if window.len() != d * m || snippets.iter().any(|s| s.len() != m) {
        return Err(Error::shape(format!(
            "window of {} values with {d} snippets of length m = {m}",
            window.len()
        )));
    }
    for (row, snip) in window.chunks(m).zip(snippets) {
        out.extend_from_slice(row);
        out.extend_from_slice(snip);
    }
    Ok(())
}
