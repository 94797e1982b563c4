//! Layers as parameter indices into a [`ParamSet`] plus forward builders.

use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{glorot_uniform, ParamSet};
use super::tensor::Tensor;
use crate::error::Result;

/// Slope of the leaky ReLU for negative inputs.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy)]
pub struct Conv1d {
    pub w: usize,
    pub b: usize,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
}

impl Conv1d {
    pub fn new<R: Rng>(params: &mut ParamSet, rng: &mut R, name: &str, cin: usize, cout: usize, kernel: usize) -> Self {
        let w = params.push(
            format!("{name}.weight"),
            glorot_uniform(rng, vec![cout, cin, kernel], cin * kernel, cout * kernel),
        );
        let b = params.push(format!("{name}.bias"), Tensor::zeros(vec![cout]));
        Conv1d {
            w,
            b,
            cin,
            cout,
            kernel,
        }
    }

    pub fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        g.conv1d(x, vars[self.w], vars[self.b])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: usize,
    pub b: usize,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new<R: Rng>(params: &mut ParamSet, rng: &mut R, name: &str, input: usize, output: usize) -> Self {
        let w = params.push(
            format!("{name}.weight"),
            glorot_uniform(rng, vec![input, output], input, output),
        );
        let b = params.push(format!("{name}.bias"), Tensor::zeros(vec![output]));
        Dense { w, b, input, output }
    }

    /// `x: B x input` to `B x output`.
    pub fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let y = g.matmul(x, vars[self.w])?;
        g.add_bias(y, vars[self.b])
    }
}

/// Gated recurrent unit:
///
/// ```text
/// z = sigmoid(x Wz + h Uz + bz)
/// r = sigmoid(x Wr + h Ur + br)
/// c = tanh(x Wc + (r * h) Uc + bc)
/// h' = (1 - z) * c + z * h
/// ```
///
/// `w_x` stacks `[Wz | Wr | Wc]` (input x 3H), `w_h` stacks `[Uz | Ur]`
/// (H x 2H), `w_c` is `Uc` (H x H), `b` stacks the three biases.
#[derive(Debug, Clone, Copy)]
pub struct Gru {
    pub w_x: usize,
    pub w_h: usize,
    pub w_c: usize,
    pub b: usize,
    pub input: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn new<R: Rng>(params: &mut ParamSet, rng: &mut R, name: &str, input: usize, hidden: usize) -> Self {
        let mut stacked = |rows: usize, gates: usize| {
            let mut data = Vec::with_capacity(rows * gates * hidden);
            let parts: Vec<Tensor> = (0..gates)
                .map(|_| glorot_uniform(rng, vec![rows, hidden], rows, hidden))
                .collect();
            for r in 0..rows {
                for p in &parts {
                    data.extend_from_slice(&p.data()[r * hidden..(r + 1) * hidden]);
                }
            }
            Tensor::new(vec![rows, gates * hidden], data).expect("stacked gate shape")
        };
        let wx = stacked(input, 3);
        let wh = stacked(hidden, 2);
        let wc = stacked(hidden, 1);
        Gru {
            w_x: params.push(format!("{name}.w_x"), wx),
            w_h: params.push(format!("{name}.w_h"), wh),
            w_c: params.push(format!("{name}.w_c"), wc),
            b: params.push(format!("{name}.bias"), Tensor::zeros(vec![3 * hidden])),
            input,
            hidden,
        }
    }

    /// Runs the recurrence from a zero state over a time-major input
    /// `steps*batch x input`; returns every hidden state (`batch x H` each).
    pub fn forward(&self, g: &mut Graph, vars: &[Var], xs: Var, steps: usize, batch: usize) -> Result<Vec<Var>> {
        if steps == 0 {
            return Err(crate::error::Error::invalid("GRU over an empty sequence"));
        }
        let hdim = self.hidden;
        let proj = g.matmul(xs, vars[self.w_x])?;
        let proj = g.add_bias(proj, vars[self.b])?;
        let mut h = g.constant(Tensor::zeros(vec![batch, hdim]));
        let mut states = Vec::with_capacity(steps);
        for t in 0..steps {
            let xt = g.slice(proj, 0, t * batch, (t + 1) * batch)?;
            let xz = g.slice(xt, 1, 0, hdim)?;
            let xr = g.slice(xt, 1, hdim, 2 * hdim)?;
            let xc = g.slice(xt, 1, 2 * hdim, 3 * hdim)?;
            let hh = g.matmul(h, vars[self.w_h])?;
            let hz = g.slice(hh, 1, 0, hdim)?;
            let hr = g.slice(hh, 1, hdim, 2 * hdim)?;
            let z = g.add(xz, hz)?;
            let z = g.sigmoid(z);
            let r = g.add(xr, hr)?;
            let r = g.sigmoid(r);
            let rh = g.mul(r, h)?;
            let hc = g.matmul(rh, vars[self.w_c])?;
            let c = g.add(xc, hc)?;
            let c = g.tanh(c);
            // h' = c + z * (h - c)
            let diff = g.sub(h, c)?;
            let zd = g.mul(z, diff)?;
            h = g.add(c, zd)?;
            states.push(h);
        }
        Ok(states)
    }
}
