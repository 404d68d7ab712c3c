use super::*;
use crate::gs::segment_sums;
use crate::rng::stream;
use crate::symmetry::{stabilizer_order, units};

fn model<F: Float>(n: usize, stacking: u32, arch: Arch, uses_score: bool, seed: u64) -> Model<F> {
    let precision = if F::DTYPE == "f64" { Precision::F64 } else { Precision::F32 };
    let cfg = ModelConfig::new(n, stacking, arch, uses_score, precision).unwrap();
    Model::new(cfg, AdamWConfig::default(), &mut stream(seed, &[])).unwrap()
}

const TINY: Arch = Arch { n_layer: 2, n_embd: 32, n_head: 2 };

fn overfit(m: &mut Model<f32>, data: &[GsArray], target: f64) -> f64 {
    let batch: Vec<Example> = data.iter().flat_map(|a| m.encode(a)).collect();
    let mut loss = f64::INFINITY;
    for _ in 0..500 {
        loss = m.step(&batch, 3e-3, 1.0).unwrap();
        if loss < target {
            break;
        }
    }
    loss
}

#[test]
fn overfits_one_batch() {
    // Conditioned sequences open with example-specific summary tokens, so a
    // batch of eight arrays can be memorized down to zero loss.
    let mut rng = stream(80, &[]);
    let mut m = model::<f32>(36, 3, TINY, true, 81);
    let mut prefixes = std::collections::HashSet::new();
    let mut data = Vec::new();
    while data.len() < 8 {
        let a = GsArray::random(36, &mut rng).unwrap();
        let own: Vec<Vec<u32>> = m.encode(&a).into_iter().map(|(x, _)| x[..9].to_vec()).collect();
        if own.iter().all(|p| !prefixes.contains(p)) {
            prefixes.extend(own);
            data.push(a);
        }
    }
    let loss = overfit(&mut m, &data, 0.01);
    assert!(loss < 0.01, "loss {loss}");
}

#[test]
fn plain_overfit_reaches_the_entropy_floor() {
    // Every plain sequence starts from the same begin token: eight equally
    // likely arrays leave ln(8) nats per sequence that no model can remove.
    let mut rng = stream(80, &[]);
    let data: Vec<GsArray> = (0..8).map(|_| GsArray::random(36, &mut rng).unwrap()).collect();
    let mut m = model::<f32>(36, 3, TINY, false, 81);
    let floor = 8f64.ln() / m.tokenizer.tokens() as f64;
    let loss = overfit(&mut m, &data, floor + 0.01);
    assert!(loss < floor + 0.01, "loss {loss}, floor {floor}");
    assert!(loss > floor - 1e-3);
}

#[test]
fn orbit_corpus_keeps_irreducible_entropy() {
    let n = 16;
    let np = n / 4;
    let mut rng = stream(82, &[]);
    let a = GsArray::random(n, &mut rng).unwrap();
    let group = np.pow(4) as u64 * 16 * 24 * units(np).len() as u64;
    let orbit = group / stabilizer_order(&a);
    let mut m = model::<f32>(n, 2, TINY, false, 83);
    let floor = (orbit as f64).ln() / m.tokenizer.tokens() as f64;
    let cfg = TrainConfig { steps: 300, batch_size: 64, learning_rate: 3e-3, ..Default::default() };
    let report = m.train(&[a], &cfg, &mut rng).unwrap();
    let last = report.final_loss();
    assert!(last > 0.9 * floor, "loss {last} below orbit entropy {floor}");
    assert!(last < report.losses[0]);
}

#[test]
fn training_and_sampling_are_deterministic() {
    let run = |exec: Exec| {
        let mut m = model::<f32>(20, 3, TINY, false, 84);
        m.set_exec(exec);
        let mut rng = stream(85, &[]);
        let data: Vec<GsArray> = (0..16).map(|_| GsArray::random(20, &mut rng).unwrap()).collect();
        let cfg = TrainConfig { steps: 5, batch_size: 8, ..Default::default() };
        m.train(&data, &cfg, &mut rng).unwrap();
        let samples = m.sample(600, 1.0, &mut rng).unwrap();
        (m.payload(), samples)
    };
    let a = run(Exec::Sequential);
    assert_eq!(a, run(Exec::Sequential));
    assert_eq!(a, run(Exec::default()));
}

#[test]
fn samples_are_valid_arrays() {
    let m = model::<f32>(20, 3, TINY, false, 86);
    let out = m.sample(50, 1.0, &mut stream(87, &[])).unwrap();
    assert_eq!(out.len(), 50);
    assert!(out.iter().all(|a| a.n() == 20 && a.as_slice().iter().all(|&x| x == 1 || x == -1)));
    assert!(m.sample(1, 0.0, &mut stream(87, &[])).is_err());
}

#[test]
fn low_temperature_is_greedy() {
    let m = model::<f64>(20, 3, TINY, false, 88);
    let tok = m.tokenizer;
    let sampled = m.generate(&[vec![tok.bos()]], tok.tokens(), 1e-9, &mut stream(89, &[])).unwrap();
    let mut greedy = vec![tok.bos()];
    for _ in 0..tok.tokens() {
        let logits = m.net.forward(&greedy).unwrap();
        let last = logits.row(greedy.len() - 1);
        let best = (0..tok.stack_vocab() as usize).max_by(|&a, &b| last[a].total_cmp(&last[b])).unwrap();
        greedy.push(best as u32);
    }
    assert_eq!(sampled[0], greedy);
}

#[test]
fn save_load_is_bit_exact() {
    let mut m = model::<f64>(12, 2, TINY, false, 90);
    let mut rng = stream(91, &[]);
    let data: Vec<GsArray> = (0..4).map(|_| GsArray::random(12, &mut rng).unwrap()).collect();
    m.train(&data, &TrainConfig { steps: 3, batch_size: 4, ..Default::default() }, &mut rng).unwrap();
    let any = AnyModel::F64(m.clone());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    any.save(&path).unwrap();
    let AnyModel::F64(back) = AnyModel::load(&path).unwrap() else { panic!("precision changed") };
    assert_eq!(back.payload(), m.payload());
    assert_eq!(back.opt.step, 3);
    let seq = m.tokenizer.tokenize(&data[0]);
    let x = m.net.forward(&seq).unwrap();
    let y = back.net.forward(&seq).unwrap();
    assert!(x.iter().zip(y.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn f32_payload_round_trips() {
    let m = model::<f32>(12, 3, TINY, true, 92);
    let back = Model::<f32>::from_parts(&m.manifest(), &m.payload()).unwrap();
    assert_eq!(back.payload(), m.payload());
    assert!(Model::<f64>::from_parts(&m.manifest(), &m.payload()).is_err());
    assert!(Model::<f32>::from_parts(&m.manifest(), &m.payload()[1..]).is_err());
}

#[test]
fn augmentation_preserves_score() {
    let mut rng = stream(93, &[]);
    for _ in 0..200 {
        let a = GsArray::random(28, &mut rng).unwrap();
        let b = SymmetryElement::random(7, &mut rng).apply(&a);
        assert!((a.score().value() - b.score().value()).abs() < 1e-10);
    }
}

#[test]
fn conditioned_geometry() {
    let plain = ModelConfig::new(172, 3, Arch::default(), false, Precision::F32).unwrap();
    let cond = ModelConfig::new(172, 3, Arch::default(), true, Precision::F32).unwrap();
    assert_eq!(plain.context_length, 1 + 58);
    assert_eq!(cond.context_length, 1 + 8 + 15);
    assert_eq!(cond.vocab_size, 8 + 4 + 8);
}

#[test]
fn conditioned_first_summary_is_constant_at_inference() {
    let m = model::<f32>(36, 3, TINY, true, 94);
    let ideal = condition::ideal_summary(9);
    let prefix = m.condition_prefix(0, &ideal);
    assert_eq!(prefix, vec![8, 16, 16, 16, 16, 16, 16, 16, 16]);
    let out = m.sample(40, 1.0, &mut stream(95, &[])).unwrap();
    assert_eq!(out.len(), 40);
    assert!(out.iter().all(|a| a.n() == 36));
}

#[test]
fn conditioned_training_runs_and_encodes_four_segments() {
    let mut m = model::<f32>(36, 3, TINY, true, 96);
    let mut rng = stream(97, &[]);
    let a = GsArray::random(36, &mut rng).unwrap();
    let ex = m.encode(&a);
    assert_eq!(ex.len(), 4);
    for (i, (input, targets)) in ex.iter().enumerate() {
        assert_eq!(input[0], 8 + i as u32);
        assert_eq!(input.len(), targets.len());
        assert_eq!(input.len(), 8 + 3);
        assert!(targets[..8].iter().all(|t| *t == Target::Ignore));
    }
    let report = m.train(&[a], &TrainConfig { steps: 3, batch_size: 4, ..Default::default() }, &mut rng).unwrap();
    assert!(report.losses.iter().all(|l| l.is_finite()));
}

#[test]
fn learns_a_segment_sum_constraint() {
    // Data with sums (1, 1, 3, 3) at n = 20 in fixed order; a trained model
    // mostly reproduces them.
    let mut rng = stream(98, &[]);
    let data: Vec<GsArray> = (0..512)
        .map(|_| loop {
            let a = GsArray::random(20, &mut rng).unwrap();
            if segment_sums(&a).0.iter().zip([1, 1, 3, 3]).all(|(&k, t)| k.abs() == t) {
                break a;
            }
        })
        .collect();
    let mut m = model::<f32>(20, 5, TINY, false, 99);
    let cfg = TrainConfig { steps: 300, batch_size: 32, learning_rate: 3e-3, augment: false, ..Default::default() };
    m.train(&data, &cfg, &mut rng).unwrap();
    let out = m.sample(500, 1.0, &mut rng).unwrap();
    let ok = out.iter().filter(|a| segment_sums(a).0.iter().zip([1, 1, 3, 3]).all(|(&k, t)| k.abs() == t)).count();
    assert!(ok >= 400, "{ok} of 500");
}
