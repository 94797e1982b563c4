use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{KERNEL, MISSING_FILL};
use crate::autograd::{Conv1d, Dense, Graph, Gru, ParamSet, Tensor, Var, LEAKY_SLOPE};
use crate::error::{Error, Result};

pub const RECOGNIZER_FILTERS: [usize; 3] = [256, 128, 64];
pub const RECOGNIZER_HIDDEN: usize = 128;

/// Snippet classifier: three conv/max-pool/ReLU stages, a GRU over the pooled
/// sequence, and a dense head emitting `K` logits per coordinate.
#[derive(Debug, Clone)]
pub struct Recognizer {
    d: usize,
    k: usize,
    m: usize,
    params: ParamSet,
    convs: [Conv1d; 3],
    gru: Gru,
    head: Dense,
}

impl Recognizer {
    pub fn new(d: usize, k: usize, m: usize, seed: u64) -> Result<Self> {
        if m < 8 {
            return Err(Error::invalid(format!(
                "window too short for three pools: m = {m}, need m >= 8"
            )));
        }
        if d == 0 || k == 0 {
            return Err(Error::invalid("recognizer needs d >= 1 and K >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let [f1, f2, f3] = RECOGNIZER_FILTERS;
        let convs = [
            Conv1d::new(&mut params, &mut rng, "rec.conv1", d, f1, KERNEL),
            Conv1d::new(&mut params, &mut rng, "rec.conv2", f1, f2, KERNEL),
            Conv1d::new(&mut params, &mut rng, "rec.conv3", f2, f3, KERNEL),
        ];
        let gru = Gru::new(&mut params, &mut rng, "rec.gru", f3, RECOGNIZER_HIDDEN);
        let head = Dense::new(&mut params, &mut rng, "rec.head", RECOGNIZER_HIDDEN, d * k);
        Ok(Recognizer {
            d,
            k,
            m,
            params,
            convs,
            gru,
            head,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Length of the sequence the GRU sees after three poolings.
    pub fn pooled_len(&self) -> usize {
        self.m.div_ceil(2).div_ceil(2).div_ceil(2)
    }

    /// Logits `B*d x K` for `x: B x d x m`, row `b*d + j` for coordinate `j`.
    pub fn logits(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != self.d || shape[2] != self.m {
            return Err(Error::shape(format!(
                "recognizer input {shape:?}, expected [B, {}, {}]",
                self.d, self.m
            )));
        }
        let batch = shape[0];
        let mut h = x;
        for conv in &self.convs {
            h = conv.forward(g, vars, h)?;
            h = g.maxpool1d(h)?;
            h = g.relu(h);
        }
        let steps = g.shape(h)[2];
        let seq = g.permute3(h, [2, 0, 1])?;
        let seq = g.reshape(seq, vec![steps * batch, RECOGNIZER_FILTERS[2]])?;
        let states = self.gru.forward(g, vars, seq, steps, batch)?;
        let last = g.leaky_relu(*states.last().expect("non-empty sequence"), LEAKY_SLOPE);
        let out = self.head.forward(g, vars, last)?;
        g.reshape(out, vec![batch * self.d, self.k])
    }

    /// Per-coordinate snippet probabilities, `B x d x K` flattened.
    /// Inputs use [`MISSING_FILL`] for missing points.
    pub fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let vars = self.params.load(&mut g, false);
        let input = g.constant(Tensor::new(vec![batch, self.d, self.m], x.to_vec())?);
        let logits = self.logits(&mut g, &vars, input)?;
        let probs = g.softmax(logits)?;
        Ok(g.value(probs).data().to_vec())
    }

    /// 1-based snippet rank per coordinate for each window in the batch.
    pub fn predict(&self, x: &[f64], batch: usize) -> Result<Vec<Vec<usize>>> {
        let probs = self.forward(x, batch)?;
        Ok(probs
            .chunks(self.d * self.k)
            .map(|window| window.chunks(self.k).map(argmax_rank).collect())
            .collect())
    }

    /// Convenience for a single window with `NaN` at missing points.
    pub fn predict_window(&self, values: &[f64]) -> Result<Vec<usize>> {
        let filled: Vec<f64> = values
            .iter()
            .map(|&v| if v.is_finite() { v } else { MISSING_FILL })
            .collect();
        Ok(self.predict(&filled, 1)?.remove(0))
    }
}

/// 1-based index of the largest entry; ties go to the smaller rank.
pub fn argmax_rank(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best + 1
}
