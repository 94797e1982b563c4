use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saeti::autograd::check::check_gradients;
use saeti::autograd::{Adam, Graph, Tensor};
use saeti::models::{
    argmax_rank, default_latent, reconstructor_input, recognizer_loss, Recognizer, Reconstructor, MISSING_FILL,
};

const GRAD_TOL: f64 = 1e-3;

fn inputs(len: usize, seed: u64, missing: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            if rng.random_bool(missing) {
                MISSING_FILL
            } else {
                rng.random_range(0.0..1.0)
            }
        })
        .collect()
}

#[test]
fn recognizer_outputs_distributions() {
    let (d, k, m, batch) = (3, 4, 20, 5);
    let rec = Recognizer::new(d, k, m, 1).unwrap();
    assert_eq!(rec.pooled_len(), 3);
    let x = inputs(batch * d * m, 2, 0.2);
    let probs = rec.forward(&x, batch).unwrap();
    assert_eq!(probs.len(), batch * d * k);
    for row in probs.chunks(k) {
        assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let ranks = rec.predict(&x, batch).unwrap();
    assert_eq!(ranks.len(), batch);
    for (w, window) in ranks.iter().enumerate() {
        for (j, &r) in window.iter().enumerate() {
            let off = (w * d + j) * k;
            assert_eq!(r, argmax_rank(&probs[off..off + k]));
        }
    }
    // batching does not change per-window results
    let single = rec.forward(&x[..d * m], 1).unwrap();
    for (a, b) in single.iter().zip(&probs[..d * k]) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn recognizer_rejects_short_windows_and_bad_shapes() {
    assert!(Recognizer::new(1, 2, 7, 0).is_err());
    assert!(Recognizer::new(0, 2, 8, 0).is_err());
    let rec = Recognizer::new(2, 2, 8, 0).unwrap();
    assert!(rec.forward(&[0.5; 8], 1).is_err());
}

#[test]
fn argmax_prefers_smaller_rank_on_ties() {
    assert_eq!(argmax_rank(&[0.2, 0.4, 0.4]), 2);
    assert_eq!(argmax_rank(&[0.5, 0.5]), 1);
    assert_eq!(argmax_rank(&[0.1]), 1);
}

#[test]
fn construction_is_seed_deterministic() {
    let a = Recognizer::new(2, 3, 16, 9).unwrap();
    let b = Recognizer::new(2, 3, 16, 9).unwrap();
    let c = Recognizer::new(2, 3, 16, 10).unwrap();
    assert_eq!(a.params().checksum(), b.params().checksum());
    assert_ne!(a.params().checksum(), c.params().checksum());
    let r1 = Reconstructor::new(2, 16, 8, 9).unwrap();
    let r2 = Reconstructor::new(2, 16, 8, 9).unwrap();
    assert_eq!(r1.params(), r2.params());
}

#[test]
fn reconstructor_shapes_range_and_composition() {
    let (d, m, batch) = (2, 12, 3);
    let z = default_latent(d, m);
    assert_eq!(z, 6);
    let net = Reconstructor::new(d, m, z, 4).unwrap();
    let x = inputs(batch * d * 2 * m, 5, 0.3);
    let out = net.forward(&x, batch).unwrap();
    assert_eq!(out.len(), batch * d * m);
    assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
    let latent = net.encode(&x, batch).unwrap();
    assert_eq!(latent.len(), batch * z);
    assert_eq!(net.decode(&latent, batch).unwrap(), out);
}

#[test]
fn latent_must_compress() {
    assert!(Reconstructor::new(2, 8, 16, 0).is_err());
    assert!(Reconstructor::new(2, 8, 0, 0).is_err());
    assert!(Reconstructor::new(2, 8, 15, 0).is_ok());
    assert_eq!(default_latent(1, 1), 1);
}

#[test]
fn input_layout_interleaves_window_and_snippet_rows() {
    let window = [1.0, 2.0, 3.0, 4.0];
    let (s1, s2) = ([9.0, 8.0], [7.0, 6.0]);
    let mut out = Vec::new();
    reconstructor_input(&window, &[&s1, &s2], 2, &mut out).unwrap();
    assert_eq!(out, vec![1.0, 2.0, 9.0, 8.0, 3.0, 4.0, 7.0, 6.0]);
    assert!(reconstructor_input(&window, &[&s1], 2, &mut out).is_err());
}

fn param_tensors(set: &saeti::autograd::ParamSet) -> Vec<Tensor> {
    set.iter().map(|(_, t)| t.clone()).collect()
}

#[test]
fn recognizer_gradients_match_finite_differences() {
    let (d, k, m, batch) = (1, 2, 8, 2);
    let rec = Recognizer::new(d, k, m, 3).unwrap();
    let x = inputs(batch * d * m, 6, 0.25);
    let targets = [1, 2];
    let params = param_tensors(rec.params());
    let report = check_gradients(
        &params,
        |g, vars| {
            let input = g.constant(Tensor::new(vec![batch, d, m], x.clone())?);
            let logits = rec.logits(g, vars, input)?;
            recognizer_loss(g, logits, &targets, batch)
        },
        Some(12),
        7,
    )
    .unwrap();
    assert!(report.max_rel_err <= GRAD_TOL, "{report:?}");
    assert!(report.checked > 60);
}

#[test]
fn reconstructor_gradients_match_finite_differences() {
    let (d, m, z, batch) = (1, 8, 4, 2);
    let net = Reconstructor::new(d, m, z, 3).unwrap();
    let x = inputs(batch * d * 2 * m, 8, 0.25);
    let target = inputs(batch * d * m, 9, 0.0);
    let weight: Vec<f64> = (0..batch * d * m).map(|i| (i % 3 != 0) as u8 as f64).collect();
    let params = param_tensors(net.params());
    let report = check_gradients(
        &params,
        |g, vars| {
            let input = g.constant(Tensor::new(vec![batch, 2 * d, m], x.clone())?);
            let out = net.forward_var(g, vars, input)?;
            g.masked_mse(out, &target, &weight)
        },
        Some(8),
        11,
    )
    .unwrap();
    assert!(report.max_rel_err <= GRAD_TOL, "{report:?}");
    assert!(report.checked > 100);
}

#[test]
fn adam_reduces_recognizer_loss() {
    let (d, k, m, batch) = (2, 2, 16, 8);
    let mut rec = Recognizer::new(d, k, m, 0).unwrap();
    let x = inputs(batch * d * m, 1, 0.1);
    let targets: Vec<usize> = (0..batch * d).map(|i| 1 + (i / d) % 2).collect();
    let mut adam = Adam::default();
    let mut losses = Vec::new();
    for _ in 0..10 {
        let mut g = Graph::new();
        let vars = rec.params().load(&mut g, true);
        let input = g.constant(Tensor::new(vec![batch, d, m], x.clone()).unwrap());
        let logits = rec.logits(&mut g, &vars, input).unwrap();
        let loss = recognizer_loss(&mut g, logits, &targets, batch).unwrap();
        losses.push(g.value(loss).data()[0]);
        g.backward(loss).unwrap();
        let grads = rec.params().grads(&g, &vars);
        adam.step(rec.params_mut(), &grads);
    }
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

#[test]
fn adam_reduces_reconstructor_loss() {
    let (d, m, batch) = (2, 8, 4);
    let mut net = Reconstructor::new(d, m, 4, 0).unwrap();
    let x = inputs(batch * d * 2 * m, 3, 0.2);
    let target: Vec<f64> = (0..batch * d * m).map(|i| 0.5 + 0.4 * (i as f64 * 0.7).sin()).collect();
    let weight = vec![1.0; target.len()];
    let mut adam = Adam::default();
    let mut losses = Vec::new();
    for _ in 0..10 {
        let mut g = Graph::new();
        let vars = net.params().load(&mut g, true);
        let input = g.constant(Tensor::new(vec![batch, 2 * d, m], x.clone()).unwrap());
        let out = net.forward_var(&mut g, &vars, input).unwrap();
        let loss = g.masked_mse(out, &target, &weight).unwrap();
        losses.push(g.value(loss).data()[0]);
        g.backward(loss).unwrap();
        let grads = net.params().grads(&g, &vars);
        adam.step(net.params_mut(), &grads);
    }
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

proptest::proptest! {
    #[test]
    fn argmax_survives_strictly_monotone_maps(
        row in proptest::collection::vec(-20.0f64..20.0, 1..8),
        a in 0.01f64..50.0,
        b in -10.0f64..10.0,
    ) {
        let r = argmax_rank(&row);
        let affine: Vec<f64> = row.iter().map(|v| a * v + b).collect();
        let cubic: Vec<f64> = row.iter().map(|v| v * v * v).collect();
        let exp: Vec<f64> = row.iter().map(|v| v.exp()).collect();
        proptest::prop_assert_eq!(argmax_rank(&affine), r);
        proptest::prop_assert_eq!(argmax_rank(&cubic), r);
        proptest::prop_assert_eq!(argmax_rank(&exp), r);
    }
}
