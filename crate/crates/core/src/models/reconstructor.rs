use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::KERNEL;
use crate::autograd::{Conv1d, Dense, Graph, Gru, ParamSet, Tensor, Var, LEAKY_SLOPE};
use crate::error::{Error, Result};

pub const ENCODER_FILTERS: [usize; 3] = [128, 64, 32];

/// Default latent size `ceil(d * m / 4)`.
pub fn default_latent(d: usize, m: usize) -> usize {
    (d * m).div_ceil(4)
}

/// Autoencoder over `d` stacks of `2 x m` (gap-filled window row, snippet row).
///
/// Encoder: per-coordinate conv stacks (2 -> 128 -> 64 -> 32, no pooling),
/// concatenated into a `32 d`-feature sequence, a shared GRU with `m` hidden
/// units, and a dense layer from all `m x m` states to the latent vector.
/// Decoder mirrors it: dense to `m x m`, a GRU with `32 d` hidden units,
/// split per coordinate into conv stacks (32 -> 64 -> 128 -> 1) ending in a
/// sigmoid.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    d: usize,
    m: usize,
    latent: usize,
    params: ParamSet,
    enc_convs: Vec<[Conv1d; 3]>,
    enc_gru: Gru,
    enc_dense: Dense,
    dec_dense: Dense,
    dec_gru: Gru,
    dec_convs: Vec<[Conv1d; 3]>,
}

impl Reconstructor {
    pub fn new(d: usize, m: usize, latent: usize, seed: u64) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::invalid("reconstructor needs d >= 1 and m >= 1"));
        }
        if latent == 0 || latent >= d * m {
            return Err(Error::invalid(format!(
                "latent not compressive: z = {latent}, need 1 <= z < d*m = {}",
                d * m
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let [f1, f2, f3] = ENCODER_FILTERS;
        let enc_convs = (0..d)
            .map(|j| {
                [
                    Conv1d::new(&mut params, &mut rng, &format!("enc{j}.conv1"), 2, f1, KERNEL),
                    Conv1d::new(&mut params, &mut rng, &format!("enc{j}.conv2"), f1, f2, KERNEL),
                    Conv1d::new(&mut params, &mut rng, &format!("enc{j}.conv3"), f2, f3, KERNEL),
                ]
            })
            .collect();
        let enc_gru = Gru::new(&mut params, &mut rng, "enc.gru", f3 * d, m);
        let enc_dense = Dense::new(&mut params, &mut rng, "enc.dense", m * m, latent);
        let dec_dense = Dense::new(&mut params, &mut rng, "dec.dense", latent, m * m);
        let dec_gru = Gru::new(&mut params, &mut rng, "dec.gru", m, f3 * d);
        let dec_convs = (0..d)
            .map(|j| {
                [
                    Conv1d::new(&mut params, &mut rng, &format!("dec{j}.conv1"), f3, f2, KERNEL),
                    Conv1d::new(&mut params, &mut rng, &format!("dec{j}.conv2"), f2, f1, KERNEL),
                    Conv1d::new(&mut params, &mut rng, &format!("dec{j}.conv3"), f1, 1, KERNEL),
                ]
            })
            .collect();
        Ok(Reconstructor {
            d,
            m,
            latent,
            params,
            enc_convs,
            enc_gru,
            enc_dense,
            dec_dense,
            dec_gru,
            dec_convs,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn latent(&self) -> usize {
        self.latent
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// `x: B x (2 d) x m` (coordinate `j` owns channels `2j, 2j+1`) to `B x z`.
    pub fn encode_var(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != 2 * self.d || shape[2] != self.m {
            return Err(Error::shape(format!(
                "reconstructor input {shape:?}, expected [B, {}, {}]",
                2 * self.d,
                self.m
            )));
        }
        let (batch, m) = (shape[0], self.m);
        let mut branches = Vec::with_capacity(self.d);
        for (j, stack) in self.enc_convs.iter().enumerate() {
            let mut h = g.slice(x, 1, 2 * j, 2 * j + 2)?;
            for conv in stack {
                h = conv.forward(g, vars, h)?;
                h = g.leaky_relu(h, LEAKY_SLOPE);
            }
            branches.push(h);
        }
        let feats = g.concat(&branches, 1)?;
        let width = ENCODER_FILTERS[2] * self.d;
        let seq = g.permute3(feats, [2, 0, 1])?;
        let seq = g.reshape(seq, vec![m * batch, width])?;
        let states = self.enc_gru.forward(g, vars, seq, m, batch)?;
        let all = g.concat(&states, 1)?;
        let z = self.enc_dense.forward(g, vars, all)?;
        Ok(g.leaky_relu(z, LEAKY_SLOPE))
    }

    /// `z: B x latent` to `B x d x m` in `[0, 1]`.
    pub fn decode_var(&self, g: &mut Graph, vars: &[Var], z: Var) -> Result<Var> {
        let shape = g.shape(z).to_vec();
        if shape.len() != 2 || shape[1] != self.latent {
            return Err(Error::shape(format!(
                "latent input {shape:?}, expected [B, {}]",
                self.latent
            )));
        }
        let (batch, m) = (shape[0], self.m);
        let seed = self.dec_dense.forward(g, vars, z)?;
        let seed = g.leaky_relu(seed, LEAKY_SLOPE);
        let seed = g.reshape(seed, vec![batch, m, m])?;
        let seq = g.permute3(seed, [1, 0, 2])?;
        let seq = g.reshape(seq, vec![m * batch, m])?;
        let states = self.dec_gru.forward(g, vars, seq, m, batch)?;
        let width = ENCODER_FILTERS[2] * self.d;
        let stacked: Vec<Var> = states
            .iter()
            .map(|&s| g.reshape(s, vec![1, batch, width]))
            .collect::<Result<_>>()?;
        let seq = g.concat(&stacked, 0)?;
        let feats = g.permute3(seq, [1, 2, 0])?;
        let mut outs = Vec::with_capacity(self.d);
        for (j, stack) in self.dec_convs.iter().enumerate() {
            let f3 = ENCODER_FILTERS[2];
            let mut h = g.slice(feats, 1, j * f3, (j + 1) * f3)?;
            for (i, conv) in stack.iter().enumerate() {
                h = conv.forward(g, vars, h)?;
                h = if i + 1 < stack.len() {
                    g.leaky_relu(h, LEAKY_SLOPE)
                } else {
                    g.sigmoid(h)
                };
            }
            outs.push(h);
        }
        g.concat(&outs, 1)
    }

    pub fn forward_var(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let z = self.encode_var(g, vars, x)?;
        self.decode_var(g, vars, z)
    }

    fn input(&self, g: &mut Graph, x: &[f64], batch: usize) -> Result<Var> {
        Ok(g.constant(Tensor::new(vec![batch, 2 * self.d, self.m], x.to_vec())?))
    }

    /// Reconstruction `B x d x m` from inputs `B x d x 2 x m`.
    pub fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let vars = self.params.load(&mut g, false);
        let input = self.input(&mut g, x, batch)?;
        let out = self.forward_var(&mut g, &vars, input)?;
        Ok(g.value(out).data().to_vec())
    }

    /// Latent vectors `B x z`.
    pub fn encode(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let vars = self.params.load(&mut g, false);
        let input = self.input(&mut g, x, batch)?;
        let z = self.encode_var(&mut g, &vars, input)?;
        Ok(g.value(z).data().to_vec())
    }

    pub fn decode(&self, z: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let vars = self.params.load(&mut g, false);
        let z = g.constant(Tensor::new(vec![batch, self.latent], z.to_vec())?);
        let out = self.decode_var(&mut g, &vars, z)?;
        Ok(g.value(out).data().to_vec())
    }
}
