//! Two-phase training: the recognizer first, then the reconstructor on inputs
//! paired with the recognizer's snippet choices.

mod bundle;

pub use bundle::{load_bundle, save_bundle, BundleConfig, ModelBundle, BUNDLE_MAGIC, BUNDLE_VERSION};

use rand::seq::{index, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Adam, Graph, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::models::{
    argmax_rank, default_latent, recognizer_loss, Reconstructor, Recognizer, MISSING_FILL,
};
use crate::mpdist::default_inner_window;
use crate::snippets::{find_snippets, label_subsequence, SnippetSet};
use crate::ts::{minmax_normalize, window_starts, Subsequence, TimeSeries};

/// Hyper-parameters of a full training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub m: usize,
    pub k: usize,
    /// MPdist inner window; `ceil(m / 2)` when unset.
    pub ell: Option<usize>,
    /// Latent size; `ceil(d * m / 4)` when unset.
    pub latent: Option<usize>,
    pub seed: u64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub mask_fraction: f64,
    pub train_ratio: f64,
    pub lr: f64,
    /// Window stride for training datasets; `m` (non-overlapping) when unset.
    pub stride: Option<usize>,
}

impl TrainConfig {
    pub fn new(m: usize, k: usize) -> Self {
        TrainConfig {
            m,
            k,
            ell: None,
            latent: None,
            seed: 42,
            batch_size: 32,
            max_epochs: 200,
            patience: 10,
            mask_fraction: 0.25,
            train_ratio: 0.75,
            lr: 1e-3,
            stride: None,
        }
    }

    pub fn ell(&self) -> usize {
        self.ell.unwrap_or_else(|| default_inner_window(self.m))
    }

    fn check(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("batch size and epoch limit must be positive"));
        }
        if !(0.0..1.0).contains(&self.mask_fraction) {
            return Err(Error::invalid(format!(
                "mask fraction {} outside [0, 1)",
                self.mask_fraction
            )));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::invalid(format!(
                "train ratio {} outside (0, 1)",
                self.train_ratio
            )));
        }
        if self.stride == Some(0) {
            return Err(Error::invalid("stride must be positive"));
        }
        Ok(())
    }
}

/// A gap-free window (`d x m`, coordinate-major) with one snippet rank per
/// coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub start: usize,
    pub x: Vec<f64>,
    pub labels: Vec<usize>,
}

/// Reconstructor sample. `window` holds the normalized values with
/// [`MISSING_FILL`] at genuine gaps, `snippets` the recognized snippet row of
/// each coordinate, `y` the ground truth (0 where unknown) and `weight` 1 where
/// the truth is known.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconPair {
    pub start: usize,
    pub window: Vec<f64>,
    pub snippets: Vec<f64>,
    pub y: Vec<f64>,
    pub weight: Vec<f64>,
}

impl ReconPair {
    /// Stacked `d x 2 x m` input with `window` replaced by `row1`.
    fn stacked(&self, row1: &[f64], m: usize, out: &mut Vec<f64>) {
        for (w, s) in row1.chunks(m).zip(self.snippets.chunks(m)) {
            out.extend_from_slice(w);
            out.extend_from_slice(s);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Recognizer,
    Reconstructor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: Phase,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Per-coordinate label accuracy on validation (recognizer only).
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

fn stride_starts(n: usize, m: usize, stride: Option<usize>) -> Result<Vec<usize>> {
    match stride {
        None => window_starts(n, m),
        Some(s) if s == m => window_starts(n, m),
        Some(s) => {
            if m == 0 || m > n {
                return Err(Error::invalid(format!("window length {m} invalid for series length {n}")));
            }
            Ok((1..=n - m + 1).step_by(s).collect())
        }
    }
}

fn check_sets(ts: &TimeSeries, sets: &[SnippetSet], m: usize) -> Result<()> {
    if sets.len() != ts.d() {
        return Err(Error::shape(format!(
            "{} snippet sets for {} coordinates",
            sets.len(),
            ts.d()
        )));
    }
    if let Some(s) = sets.iter().find(|s| s.m != m || s.items.is_empty()) {
        return Err(Error::invalid(format!(
            "snippet set for coordinate {} has m = {} and {} snippets, expected m = {m}",
            s.coord,
            s.m,
            s.items.len()
        )));
    }
    Ok(())
}

/// Every gap-free window of the normalized series, labeled per coordinate.
pub fn build_recognizer_dataset(
    ts_norm: &TimeSeries,
    sets: &[SnippetSet],
    m: usize,
    stride: Option<usize>,
) -> Result<Vec<LabeledWindow>> {
    check_sets(ts_norm, sets, m)?;
    let mut out = Vec::new();
    for start in stride_starts(ts_norm.n(), m, stride)? {
        let w = ts_norm.window(start, m);
        if w.has_gaps() {
            continue;
        }
        let labels = sets
            .iter()
            .enumerate()
            .map(|(j, set)| {
                let sub = Subsequence {
                    coord: Some(j),
                    start,
                    values: w.coord(j),
                };
                label_subsequence(&sub, set)
            })
            .collect::<Result<_>>()?;
        out.push(LabeledWindow {
            start,
            x: w.values,
            labels,
        });
    }
    if out.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no gap-free window of length {m}"
        )));
    }
    Ok(out)
}

/// Seeded shuffle; the first `ratio` share (rounded) trains, the rest validates.
pub fn split_train_val<T: Clone>(data: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if data.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} windows, need at least 4 to split",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((data.len() as f64 * ratio).round() as usize).clamp(1, data.len() - 1);
    let pick = |ix: &[usize]| ix.iter().map(|&i| data[i].clone()).collect();
    Ok((pick(&order[..cut]), pick(&order[cut..])))
}

/// Replaces `floor(fraction * x.len())` observed entries (those not already
/// [`MISSING_FILL`]) with the fill value, capped at the observed count.
/// Returns the chosen 0-based positions in ascending order.
pub fn mask_random_points<R: Rng + ?Sized>(x: &mut [f64], fraction: f64, rng: &mut R) -> Vec<usize> {
    let observed: Vec<usize> = (0..x.len()).filter(|&i| x[i] != MISSING_FILL).collect();
    let count = ((fraction * x.len() as f64).floor() as usize).min(observed.len());
    let mut chosen: Vec<usize> = index::sample(rng, observed.len(), count)
        .into_iter()
        .map(|i| observed[i])
        .collect();
    chosen.sort_unstable();
    for &i in &chosen {
        x[i] = MISSING_FILL;
    }
    chosen
}

/// Best-validation tracker shared by both training loops.
struct EarlyStop {
    best: f64,
    best_epoch: usize,
    best_params: ParamSet,
    waited: usize,
    patience: usize,
}

impl EarlyStop {
    fn new(params: &ParamSet, patience: usize) -> Self {
        EarlyStop {
            best: f64::INFINITY,
            best_epoch: 0,
            best_params: params.clone(),
            waited: 0,
            patience,
        }
    }

    /// Records an epoch; true when training should stop.
    fn update(&mut self, epoch: usize, val: f64, params: &ParamSet) -> bool {
        if val < self.best {
            self.best = val;
            self.best_epoch = epoch;
            self.best_params = params.clone();
            self.waited = 0;
            false
        } else {
            self.waited += 1;
            self.waited >= self.patience
        }
    }
}

fn diverged(phase: &str, epoch: usize, batch: usize, loss: f64) -> Error {
    Error::Diverged(format!(
        "{phase} loss {loss} at epoch {epoch}, batch {batch}; try a smaller learning rate"
    ))
}

/// Mean per-window loss and per-coordinate accuracy of `data`, whose inputs
/// are used as given.
pub fn evaluate_recognizer(rec: &Recognizer, data: &[LabeledWindow], batch_size: usize) -> Result<(f64, f64)> {
    let (d, m, k) = (rec.d(), rec.m(), rec.k());
    let (mut loss, mut correct) = (0.0, 0usize);
    for chunk in data.chunks(batch_size.max(1)) {
        let x: Vec<f64> = chunk.iter().flat_map(|w| w.x.iter().copied()).collect();
        let targets: Vec<usize> = chunk.iter().flat_map(|w| w.labels.iter().copied()).collect();
        let mut g = Graph::new();
        let vars = rec.params().load(&mut g, false);
        let input = g.constant(Tensor::new(vec![chunk.len(), d, m], x)?);
        let logits = rec.logits(&mut g, &vars, input)?;
        let l = recognizer_loss(&mut g, logits, &targets, 1)?;
        loss += g.value(l).data()[0];
        for (row, &t) in g.value(logits).data().chunks(k).zip(&targets) {
            correct += (argmax_rank(row) == t) as usize;
        }
    }
    let windows = data.len().max(1) as f64;
    Ok((loss / windows, correct as f64 / (windows * d as f64)))
}

/// Trains on freshly masked copies of `train` each batch; validation inputs
/// are masked once with a fixed draw so epochs are comparable. Leaves the
/// best-validation parameters in `rec`.
pub fn train_recognizer(
    rec: &mut Recognizer,
    train: &[LabeledWindow],
    val: &[LabeledWindow],
    cfg: &TrainConfig,
) -> Result<Outcome> {
    cfg.check()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InsufficientData("empty train or validation set".into()));
    }
    let (d, m) = (rec.d(), rec.m());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let val_masked: Vec<LabeledWindow> = val
        .iter()
        .map(|w| {
            let mut w = w.clone();
            mask_random_points(&mut w.x, cfg.mask_fraction, &mut rng);
            w
        })
        .collect();
    let mut adam = Adam::new(cfg.lr, 0.9, 0.999, 1e-8);
    let mut stop = EarlyStop::new(rec.params(), cfg.patience);
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut x = Vec::with_capacity(idx.len() * d * m);
            let mut targets = Vec::with_capacity(idx.len() * d);
            for &i in idx {
                let start = x.len();
                x.extend_from_slice(&train[i].x);
                mask_random_points(&mut x[start..], cfg.mask_fraction, &mut rng);
                targets.extend_from_slice(&train[i].labels);
            }
            let mut g = Graph::new();
            let vars = rec.params().load(&mut g, true);
            let input = g.constant(Tensor::new(vec![idx.len(), d, m], x)?);
            let logits = rec.logits(&mut g, &vars, input)?;
            let loss = recognizer_loss(&mut g, logits, &targets, idx.len())?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(diverged("recognizer", epoch, b + 1, value));
            }
            total += value * idx.len() as f64;
            g.backward(loss)?;
            let grads = rec.params().grads(&g, &vars);
            adam.step(rec.params_mut(), &grads);
        }
        if !rec.params().all_finite() {
            return Err(diverged("recognizer", epoch, 0, f64::NAN));
        }
        let (val_loss, acc) = evaluate_recognizer(rec, &val_masked, 128)?;
        let train_loss = total / train.len() as f64;
        log::info!("recognizer epoch {epoch}: train {train_loss:.6} val {val_loss:.6} acc {acc:.4}");
        history.push(EpochLog {
            phase: Phase::Recognizer,
            epoch,
            train_loss,
            val_loss,
            val_accuracy: Some(acc),
        });
        if stop.update(epoch, val_loss, rec.params()) {
            break;
        }
    }
    rec.params_mut().assign(&stop.best_params)?;
    Ok(Outcome {
        history,
        best_epoch: stop.best_epoch,
        best_val_loss: stop.best,
    })
}

/// Every window (gapped ones included) paired with the snippets the
/// recognizer picks for it.
pub fn build_reconstructor_dataset(
    ts_norm: &TimeSeries,
    rec: &Recognizer,
    sets: &[SnippetSet],
    m: usize,
    stride: Option<usize>,
) -> Result<Vec<ReconPair>> {
    check_sets(ts_norm, sets, m)?;
    if rec.d() != ts_norm.d() || rec.m() != m {
        return Err(Error::shape(format!(
            "recognizer built for d = {}, m = {}; data has d = {}, m = {m}",
            rec.d(),
            rec.m(),
            ts_norm.d()
        )));
    }
    let windows: Vec<_> = stride_starts(ts_norm.n(), m, stride)?
        .into_iter()
        .map(|s| ts_norm.window(s, m))
        .collect();
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(128) {
        let x: Vec<f64> = chunk.iter().flat_map(|w| w.filled(MISSING_FILL)).collect();
        let ranks = rec.predict(&x, chunk.len())?;
        for (w, ranks) in chunk.iter().zip(ranks) {
            let snippets = ranks
                .iter()
                .zip(sets)
                .flat_map(|(&r, set)| set.values(r).iter().copied())
                .collect();
            let weight: Vec<f64> = w.values.iter().map(|v| v.is_finite() as u8 as f64).collect();
            let y = w.values.iter().map(|&v| if v.is_finite() { v } else { 0.0 }).collect();
            out.push(ReconPair {
                start: w.start,
                window: w.filled(MISSING_FILL),
                snippets,
                y,
                weight,
            });
        }
    }
    Ok(out)
}

/// Masked MSE of the reconstructor over `data`, inputs used as given,
/// weighted by windows.
pub fn evaluate_reconstructor(net: &Reconstructor, data: &[ReconPair], batch_size: usize) -> Result<f64> {
    let (d, m) = (net.d(), net.m());
    let (mut total, mut weight) = (0.0, 0.0);
    for chunk in data.chunks(batch_size.max(1)) {
        let mut x = Vec::with_capacity(chunk.len() * 2 * d * m);
        for p in chunk {
            p.stacked(&p.window, m, &mut x);
        }
        let out = net.forward(&x, chunk.len())?;
        for (p, pred) in chunk.iter().zip(out.chunks(d * m)) {
            for ((&o, &t), &w) in pred.iter().zip(&p.y).zip(&p.weight) {
                total += w * (o - t) * (o - t);
                weight += w;
            }
        }
    }
    Ok(if weight > 0.0 { total / weight } else { 0.0 })
}

/// Trains with per-batch augmentation masking of the window rows; the loss
/// covers every position with known truth. Validation windows are masked
/// once. Leaves the best-validation parameters in `net`.
pub fn train_reconstructor(
    net: &mut Reconstructor,
    train: &[ReconPair],
    val: &[ReconPair],
    cfg: &TrainConfig,
) -> Result<Outcome> {
    cfg.check()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InsufficientData("empty train or validation set".into()));
    }
    let (d, m) = (net.d(), net.m());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let val_masked: Vec<ReconPair> = val
        .iter()
        .map(|p| {
            let mut p = p.clone();
            mask_random_points(&mut p.window, cfg.mask_fraction, &mut rng);
            p
        })
        .collect();
    let mut adam = Adam::new(cfg.lr, 0.9, 0.999, 1e-8);
    let mut stop = EarlyStop::new(net.params(), cfg.patience);
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut total, mut seen) = (0.0, 0.0);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut x = Vec::with_capacity(idx.len() * 2 * d * m);
            let mut y = Vec::with_capacity(idx.len() * d * m);
            let mut w = Vec::with_capacity(idx.len() * d * m);
            for &i in idx {
                let p = &train[i];
                let mut row1 = p.window.clone();
                mask_random_points(&mut row1, cfg.mask_fraction, &mut rng);
                p.stacked(&row1, m, &mut x);
                y.extend_from_slice(&p.y);
                w.extend_from_slice(&p.weight);
            }
            let batch_weight: f64 = w.iter().sum();
            if batch_weight == 0.0 {
                continue;
            }
            let mut g = Graph::new();
            let vars = net.params().load(&mut g, true);
            let input = g.constant(Tensor::new(vec![idx.len(), 2 * d, m], x)?);
            let out = net.forward_var(&mut g, &vars, input)?;
            let loss = g.masked_mse(out, &y, &w)?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(diverged("reconstructor", epoch, b + 1, value));
            }
            total += value * batch_weight;
            seen += batch_weight;
            g.backward(loss)?;
            let grads = net.params().grads(&g, &vars);
            adam.step(net.params_mut(), &grads);
        }
        if !net.params().all_finite() {
            return Err(diverged("reconstructor", epoch, 0, f64::NAN));
        }
        let val_loss = evaluate_reconstructor(net, &val_masked, 128)?;
        let train_loss = if seen > 0.0 { total / seen } else { 0.0 };
        log::info!("reconstructor epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        history.push(EpochLog {
            phase: Phase::Reconstructor,
            epoch,
            train_loss,
            val_loss,
            val_accuracy: None,
        });
        if stop.update(epoch, val_loss, net.params()) {
            break;
        }
    }
    net.params_mut().assign(&stop.best_params)?;
    Ok(Outcome {
        history,
        best_epoch: stop.best_epoch,
        best_val_loss: stop.best,
    })
}

/// A trained bundle and the per-epoch log of both phases.
#[derive(Debug, Clone)]
pub struct Trained {
    pub bundle: ModelBundle,
    pub recognizer: Outcome,
    pub reconstructor: Outcome,
}

impl Trained {
    pub fn history(&self) -> impl Iterator<Item = &EpochLog> {
        self.recognizer.history.iter().chain(&self.reconstructor.history)
    }
}

/// Normalize, find snippets per coordinate, then train both networks.
/// All randomness derives from `cfg.seed`.
pub fn train(ts: &TimeSeries, cfg: &TrainConfig) -> Result<Trained> {
    cfg.check()?;
    let (m, k, ell) = (cfg.m, cfg.k, cfg.ell());
    let d = ts.d();
    let latent = cfg.latent.unwrap_or_else(|| default_latent(d, m));
    let (norm_ts, norm) = minmax_normalize(ts)?;
    let sets = (0..d)
        .map(|j| find_snippets(norm_ts.coord(j), j, m, k, ell))
        .collect::<Result<Vec<_>>>()?;

    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut next = || seeds.next_u64();
    let (rec_init, rec_split, rec_train, con_init, con_split, con_train) =
        (next(), next(), next(), next(), next(), next());

    let mut rec = Recognizer::new(d, k, m, rec_init)?;
    let mut con = Reconstructor::new(d, m, latent, con_init)?;

    let data = build_recognizer_dataset(&norm_ts, &sets, m, cfg.stride)?;
    let (tr, va) = split_train_val(&data, cfg.train_ratio, rec_split)?;
    let rec_out = train_recognizer(&mut rec, &tr, &va, &TrainConfig { seed: rec_train, ..cfg.clone() })?;

    let pairs = build_reconstructor_dataset(&norm_ts, &rec, &sets, m, cfg.stride)?;
    let (tr, va) = split_train_val(&pairs, cfg.train_ratio, con_split)?;
    let con_out = train_reconstructor(&mut con, &tr, &va, &TrainConfig { seed: con_train, ..cfg.clone() })?;

    let config = BundleConfig {
        d,
        m,
        k,
        ell,
        latent,
        seed: cfg.seed,
        names: ts.names().to_vec(),
    };
    Ok(Trained {
        bundle: ModelBundle::new(config, norm, sets, rec, con)?,
        recognizer: rec_out,
        reconstructor: con_out,
    })
}
