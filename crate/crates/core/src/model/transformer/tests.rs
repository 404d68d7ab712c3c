use super::*;
use crate::model::{Arch, ModelConfig, Precision, Tokenizer};
use crate::rng::stream;

fn toy(n: usize, stacking: u32, arch: Arch, precision: Precision) -> ModelConfig {
    ModelConfig::new(n, stacking, arch, false, precision).unwrap()
}

fn random_batch(cfg: &ModelConfig, batch: usize, seed: u64) -> (Vec<Vec<u32>>, Vec<Vec<Target>>) {
    let mut rng = stream(seed, &[]);
    let tok = Tokenizer::new(cfg.stacking, cfg.n).unwrap();
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..batch {
        let a = crate::gs::GsArray::random(cfg.n, &mut rng).unwrap();
        let seq = tok.tokenize(&a);
        let m = seq.len() - 1;
        inputs.push(seq[..m].to_vec());
        targets.push(tok.targets(&seq[1..]));
    }
    (inputs, targets)
}

#[test]
fn gradients_match_central_differences() {
    // n = 12 with s = 5 leaves three padding bits, so the masked target is covered.
    let cfg = toy(12, 5, Arch { n_layer: 2, n_embd: 8, n_head: 2 }, Precision::F64);
    let mut rng = stream(70, &[]);
    let mut net = Transformer::<f64>::new(cfg, &mut rng).unwrap();
    // Move away from the symmetric init so every parameter gets a gradient.
    for p in net.params.iter_mut() {
        p.mapv_inplace(|x| x + 0.1 * rng.random_range(-1.0..1.0));
    }
    let (inputs, targets) = random_batch(&cfg, 3, 71);
    let (_, grads) = net.loss_and_grad(&inputs, &targets).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for t in 0..net.params.len() {
        for idx in 0..net.params[t].len() {
            let orig = net.params[t].as_slice().unwrap()[idx];
            net.params[t].as_slice_mut().unwrap()[idx] = orig + h;
            let up = net.loss(&inputs, &targets).unwrap();
            net.params[t].as_slice_mut().unwrap()[idx] = orig - h;
            let down = net.loss(&inputs, &targets).unwrap();
            net.params[t].as_slice_mut().unwrap()[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads[t].as_slice().unwrap()[idx];
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(err);
        }
    }
    assert!(worst <= 1e-5, "worst relative error {worst:e}");
}

#[test]
fn causal_mask_is_exact() {
    let cfg = toy(16, 2, Arch { n_layer: 2, n_embd: 16, n_head: 4 }, Precision::F32);
    let mut rng = stream(72, &[]);
    let net = Transformer::<f32>::new(cfg, &mut rng).unwrap();
    let base: Vec<u32> = (0..cfg.context_length).map(|_| rng.random_range(0..4)).collect();
    let logits = net.forward(&base).unwrap();
    for p in 0..base.len() {
        let mut changed = base.clone();
        changed[p] = (changed[p] + 1) % 4;
        let other = net.forward(&changed).unwrap();
        for q in 0..p {
            assert_eq!(logits.row(q), other.row(q), "position {q} saw token {p}");
        }
        if p + 1 < base.len() {
            assert_ne!(logits.row(p), other.row(p));
        }
    }
}

#[test]
fn softmax_rows_sum_to_one() {
    let cfg = toy(16, 3, Arch { n_layer: 1, n_embd: 16, n_head: 2 }, Precision::F32);
    let mut rng = stream(73, &[]);
    let mut net = Transformer::<f32>::new(cfg, &mut rng).unwrap();
    net.params[WTE].mapv_inplace(|x| x * 400.0);
    let (inputs, _) = random_batch(&cfg, 4, 74);
    let logits = net.forward_batch(&inputs).unwrap();
    for row in logits.rows() {
        let mut p = row.to_vec();
        softmax_in_place(&mut p);
        let total: f64 = p.iter().map(|&x| x as f64).sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }
}

#[test]
fn initial_loss_is_near_uniform() {
    let cfg = toy(36, 3, Arch::default(), Precision::F32);
    let mut rng = stream(75, &[]);
    let net = Transformer::<f32>::new(cfg, &mut rng).unwrap();
    let (inputs, _) = random_batch(&cfg, 16, 76);
    let targets: Vec<Vec<Target>> = inputs
        .iter()
        .map(|s| s.iter().map(|_| Target::Token(rng.random_range(0..cfg.vocab_size as u32))).collect())
        .collect();
    let loss = net.loss(&inputs, &targets).unwrap();
    let uniform = (cfg.vocab_size as f64).ln();
    assert!((loss - uniform).abs() < 0.05 * uniform, "{loss} vs {uniform}");
}

#[test]
fn decoder_matches_full_forward() {
    let cfg = toy(20, 2, Arch { n_layer: 2, n_embd: 16, n_head: 4 }, Precision::F64);
    let mut rng = stream(77, &[]);
    let net = Transformer::<f64>::new(cfg, &mut rng).unwrap();
    let (inputs, _) = random_batch(&cfg, 3, 78);
    let full = net.forward_batch(&inputs).unwrap();
    let len = inputs[0].len();
    let mut dec = net.decoder(inputs.len());
    for p in 0..len {
        let col: Vec<u32> = inputs.iter().map(|s| s[p]).collect();
        let step = dec.step(&col).unwrap();
        for b in 0..inputs.len() {
            for (x, y) in step.row(b).iter().zip(full.row(b * len + p).iter()) {
                assert!((x - y).abs() < 1e-12, "position {p}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn rejects_over_length_and_unknown_tokens() {
    let cfg = toy(8, 2, Arch { n_layer: 1, n_embd: 8, n_head: 2 }, Precision::F32);
    let net = Transformer::<f32>::new(cfg, &mut stream(79, &[])).unwrap();
    let long = vec![0u32; cfg.context_length + 1];
    assert!(matches!(net.forward(&long), Err(Error::ContextOverflow { .. })));
    assert!(matches!(net.forward(&[cfg.vocab_size as u32]), Err(Error::BadToken { .. })));
    let mut dec = net.decoder(1);
    for _ in 0..cfg.context_length {
        dec.step(&[0]).unwrap();
    }
    assert!(dec.step(&[0]).is_err());
}

#[test]
fn prefix_target_marginalizes_padding() {
    // With uniform logits over 8 stack tokens plus BOS, a target with two free
    // bits covers four tokens.
    let logits = Array2::<f64>::zeros((1, 9));
    let (loss, grad) = cross_entropy(&logits, &[vec![Target::Prefix { value: 1, free_bits: 2 }]]).unwrap();
    assert!((loss - (9.0f64 / 4.0).ln()).abs() < 1e-12);
    for v in 0..9 {
        let expected = 1.0 / 9.0 - if (4..8).contains(&v) { 0.25 } else { 0.0 };
        assert!((grad[[0, v]] - expected).abs() < 1e-12);
    }
}
