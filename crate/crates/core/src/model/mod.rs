//! Autoregressive sequence model over bit-stacked arrays.

mod adamw;
pub mod checkpoint;
pub mod condition;
mod float;
mod tokenizer;
mod transformer;

use ndarray::{Array2, ArrayView1};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use adamw::{AdamW, AdamWConfig};
pub use float::Float;
pub use tokenizer::{array_bits, segment_bits, Target, Tokenizer, MAX_STACKING};
pub use transformer::{tensor_specs, Decoder, TensorSpec, Transformer};

use crate::error::{Error, Result};
use crate::gs::GsArray;
use crate::par::Exec;
use crate::rng::{self, Rng};
use crate::symmetry::SymmetryElement;

/// Sequences decoded together with one random stream.
pub const SAMPLE_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Self::F32),
            "f64" => Ok(Self::F64),
            _ => Err(Error::Config { field: "precision", msg: format!("expected f32 or f64, got {s:?}") }),
        }
    }
}

/// Architecture knobs chosen by the caller; sequence geometry is derived.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub n_layer: usize,
    pub n_embd: usize,
    pub n_head: usize,
}

impl Default for Arch {
    fn default() -> Self {
        Self { n_layer: 4, n_embd: 128, n_head: 4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Order of the generated arrays.
    pub n: usize,
    pub stacking: u32,
    pub n_layer: usize,
    pub n_embd: usize,
    pub n_head: usize,
    pub context_length: usize,
    pub vocab_size: usize,
    pub uses_score: bool,
    pub precision: Precision,
}

impl ModelConfig {
    pub fn new(n: usize, stacking: u32, arch: Arch, uses_score: bool, precision: Precision) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(4) {
            return Err(Error::InvalidOrder(n));
        }
        let bits = if uses_score { n / 4 } else { n };
        let tok = Tokenizer::new(stacking, bits)?;
        let (context_length, vocab_size) = if uses_score {
            (1 + condition::BANDS + tok.tokens(), tok.stack_vocab() as usize + 4 + condition::LEVELS as usize)
        } else {
            (1 + tok.tokens(), tok.vocab())
        };
        let cfg = Self { n, stacking, n_layer: arch.n_layer, n_embd: arch.n_embd, n_head: arch.n_head, context_length, vocab_size, uses_score, precision };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("n_layer", self.n_layer), ("n_embd", self.n_embd), ("n_head", self.n_head), ("context_length", self.context_length), ("vocab_size", self.vocab_size)];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::Config { field, msg: "must be positive".into() });
            }
        }
        if !self.n_embd.is_multiple_of(self.n_head) {
            return Err(Error::Config { field: "n_head", msg: format!("n_embd {} is not divisible by n_head {}", self.n_embd, self.n_head) });
        }
        let needed = 1 + self.tokenizer()?.tokens() + if self.uses_score { condition::BANDS } else { 0 };
        if self.context_length < needed {
            return Err(Error::Config { field: "context_length", msg: format!("{} is shorter than the {needed} tokens per sequence", self.context_length) });
        }
        Ok(())
    }

    pub fn tokenizer(&self) -> Result<Tokenizer> {
        Tokenizer::new(self.stacking, if self.uses_score { self.n / 4 } else { self.n })
    }

    fn segment_token(&self, i: usize) -> u32 {
        (1u32 << self.stacking) + i as u32
    }

    fn level_token(&self, level: u32) -> u32 {
        (1u32 << self.stacking) + 4 + level
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Linear warmup length; 0 disables warmup.
    pub warmup_steps: usize,
    pub grad_clip: f64,
    /// Apply an independent random symmetry to every example.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 500, batch_size: 64, learning_rate: 3e-4, warmup_steps: 0, grad_clip: 1.0, augment: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
}

impl TrainReport {
    /// Mean over the last tenth of the steps.
    pub fn final_loss(&self) -> f64 {
        if self.losses.is_empty() {
            return f64::NAN;
        }
        let k = (self.losses.len() / 10).max(1);
        self.losses[self.losses.len() - k..].iter().sum::<f64>() / k as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub config: ModelConfig,
    pub adamw: AdamWConfig,
    pub step: u64,
    pub dtype: String,
    pub tensors: Vec<TensorInfo>,
}

/// One training sequence: model inputs and per-position targets.
pub type Example = (Vec<u32>, Vec<Target>);

#[derive(Clone, Debug)]
pub struct Model<F: Float> {
    pub tokenizer: Tokenizer,
    pub net: Transformer<F>,
    pub opt: AdamW<F>,
    decay: Vec<bool>,
}

impl<F: Float> Model<F> {
    pub fn new(config: ModelConfig, adamw: AdamWConfig, rng: &mut Rng) -> Result<Self> {
        let net = Transformer::new(config, rng)?;
        Self::assemble(net, adamw)
    }

    fn assemble(net: Transformer<F>, adamw: AdamWConfig) -> Result<Self> {
        let specs = tensor_specs(&net.config);
        let shapes: Vec<_> = specs.iter().map(|s| s.shape).collect();
        Ok(Self {
            tokenizer: net.config.tokenizer()?,
            opt: AdamW::new(adamw, &shapes),
            decay: specs.iter().map(|s| s.decay).collect(),
            net,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    pub fn set_exec(&mut self, exec: Exec) {
        self.net.exec = exec;
    }

    /// Training sequences for one array: one in plain mode, four (one per
    /// segment, with its summary) in conditioned mode.
    pub fn encode(&self, a: &GsArray) -> Vec<Example> {
        let cfg = self.config();
        let tok = &self.tokenizer;
        if !cfg.uses_score {
            let seq = tok.tokenize(a);
            let m = seq.len() - 1;
            return vec![(seq[..m].to_vec(), tok.targets(&seq[1..]))];
        }
        let summaries = condition::training_summaries(a);
        (0..4)
            .map(|i| {
                let stacks = tok.pack(&segment_bits(a.segment(i)));
                let mut input = self.condition_prefix(i, &summaries[i]);
                input.extend_from_slice(&stacks[..stacks.len() - 1]);
                let mut targets = vec![Target::Ignore; condition::BANDS];
                targets.extend(tok.targets(&stacks));
                (input, targets)
            })
            .collect()
    }

    fn condition_prefix(&self, segment: usize, summary: &condition::Summary) -> Vec<u32> {
        let cfg = self.config();
        let mut out = vec![cfg.segment_token(segment)];
        out.extend(summary.iter().map(|&l| cfg.level_token(l)));
        out
    }

    /// One AdamW step on a batch of examples; returns the loss before the step.
    pub fn step(&mut self, batch: &[Example], learning_rate: f64, grad_clip: f64) -> Result<f64> {
        let inputs: Vec<Vec<u32>> = batch.iter().map(|(x, _)| x.clone()).collect();
        let targets: Vec<Vec<Target>> = batch.iter().map(|(_, t)| t.clone()).collect();
        let (loss, mut grads) = self.net.loss_and_grad(&inputs, &targets)?;
        let norm = grads.iter().flat_map(|g| g.iter()).map(|&x| x.f64() * x.f64()).sum::<f64>().sqrt();
        if !loss.is_finite() || !norm.is_finite() {
            return Err(Error::Divergence { step: self.opt.step as usize, loss });
        }
        if grad_clip > 0.0 && norm > grad_clip {
            let s = F::c(grad_clip / norm);
            grads.iter_mut().for_each(|g| g.mapv_inplace(|x| x * s));
        }
        let mut params: Vec<&mut Array2<F>> = self.net.params.iter_mut().collect();
        let grads: Vec<&Array2<F>> = grads.iter().collect();
        self.opt.update(&mut params, &grads, &self.decay, learning_rate);
        Ok(loss)
    }

    pub fn train(&mut self, data: &[GsArray], cfg: &TrainConfig, rng: &mut Rng) -> Result<TrainReport> {
        if data.is_empty() {
            return Err(Error::Config { field: "dataset", msg: "training set is empty".into() });
        }
        if cfg.batch_size == 0 {
            return Err(Error::Config { field: "batch_size", msg: "must be positive".into() });
        }
        let np = self.config().n / 4;
        let mut report = TrainReport::default();
        for step in 0..cfg.steps {
            let mut batch = Vec::with_capacity(cfg.batch_size * 4);
            for _ in 0..cfg.batch_size {
                let a = &data[rng.random_range(0..data.len())];
                let a = if cfg.augment { SymmetryElement::random(np, rng).apply(a) } else { a.clone() };
                batch.extend(self.encode(&a));
            }
            let lr = if cfg.warmup_steps > 0 {
                cfg.learning_rate * ((step + 1) as f64 / cfg.warmup_steps as f64).min(1.0)
            } else {
                cfg.learning_rate
            };
            report.losses.push(self.step(&batch, lr, cfg.grad_clip)?);
        }
        Ok(report)
    }

    /// Extends every prefix by `steps` stack tokens. Prefixes must share a length.
    pub fn generate(&self, prefixes: &[Vec<u32>], steps: usize, temperature: f64, rng: &mut Rng) -> Result<Vec<Vec<u32>>> {
        check_temperature(temperature)?;
        let mut out: Vec<Vec<u32>> = prefixes.to_vec();
        if prefixes.is_empty() || steps == 0 {
            return Ok(out);
        }
        let mut dec = self.net.decoder(prefixes.len());
        let mut logits = Array2::zeros((0, 0));
        for p in 0..prefixes[0].len() {
            let col: Vec<u32> = prefixes.iter().map(|s| s[p]).collect();
            logits = dec.step(&col)?;
        }
        let k = self.tokenizer.stack_vocab() as usize;
        for step in 0..steps {
            let next: Vec<u32> = logits.rows().into_iter().map(|row| sample_row(row, k, temperature, rng)).collect();
            for (seq, &t) in out.iter_mut().zip(&next) {
                seq.push(t);
            }
            if step + 1 < steps {
                logits = dec.step(&next)?;
            }
        }
        Ok(out)
    }

    fn sample_chunk(&self, count: usize, temperature: f64, rng: &mut Rng) -> Result<Vec<GsArray>> {
        let tok = &self.tokenizer;
        let n = self.config().n;
        if !self.config().uses_score {
            let seqs = self.generate(&vec![vec![tok.bos()]; count], tok.tokens(), temperature, rng)?;
            return seqs.iter().map(|s| tok.detokenize(s)).collect();
        }
        let np = n / 4;
        let ideal = vec![1.0; np];
        let mut partial = vec![vec![0.0; np]; count];
        let mut segments: Vec<Vec<Vec<i8>>> = vec![Vec::with_capacity(4); count];
        for i in 0..4 {
            let prefixes: Vec<Vec<u32>> = partial.iter().map(|p| self.condition_prefix(i, &condition::summary(p, &ideal))).collect();
            let seqs = self.generate(&prefixes, tok.tokens(), temperature, rng)?;
            for ((seq, p), segs) in seqs.iter().zip(partial.iter_mut()).zip(segments.iter_mut()) {
                let bits = tok.unpack(&seq[prefixes[0].len()..])?;
                let seg: Vec<i8> = bits.iter().map(|&b| if b == 1 { 1 } else { -1 }).collect();
                condition::add_segment_power(p, &seg, n);
                segs.push(seg);
            }
        }
        segments
            .into_iter()
            .map(|s| GsArray::new(s.try_into().expect("four segments")))
            .collect()
    }

    /// Draws `count` arrays. Work is split into fixed chunks, each with its own
    /// stream derived from `rng`, so the result does not depend on threads.
    pub fn sample(&self, count: usize, temperature: f64, rng: &mut Rng) -> Result<Vec<GsArray>> {
        check_temperature(temperature)?;
        let base: u64 = rng.random();
        let chunks = count.div_ceil(SAMPLE_CHUNK);
        let parts = self.net.exec.map_range(chunks, |c| {
            let size = SAMPLE_CHUNK.min(count - c * SAMPLE_CHUNK);
            let mut r = rng::stream(base, &[rng::phase::SAMPLE, c as u64]);
            self.sample_chunk(size, temperature, &mut r)
        });
        let mut out = Vec::with_capacity(count);
        for part in parts {
            out.extend(part?);
        }
        Ok(out)
    }

    pub fn manifest(&self) -> ModelManifest {
        ModelManifest {
            config: *self.config(),
            adamw: self.opt.config,
            step: self.opt.step,
            dtype: F::DTYPE.into(),
            tensors: tensor_specs(self.config())
                .into_iter()
                .map(|s| TensorInfo { name: s.name, shape: [s.shape.0, s.shape.1] })
                .collect(),
        }
    }

    /// Weights, then first moments, then second moments, little-endian.
    pub fn payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(3 * self.net.num_parameters() * F::BYTES);
        for group in [&self.net.params, &self.opt.m, &self.opt.v] {
            for t in group.iter() {
                t.iter().for_each(|&x| x.push_le(&mut out));
            }
        }
        out
    }

    pub fn from_parts(manifest: &ModelManifest, payload: &[u8]) -> Result<Self> {
        if manifest.dtype != F::DTYPE {
            return Err(Error::Checkpoint(format!("tensor dtype {} does not match {}", manifest.dtype, F::DTYPE)));
        }
        manifest.config.validate()?;
        let specs = tensor_specs(&manifest.config);
        let expected: Vec<TensorInfo> = specs.iter().map(|s| TensorInfo { name: s.name.clone(), shape: [s.shape.0, s.shape.1] }).collect();
        if expected != manifest.tensors {
            return Err(Error::Checkpoint("tensor table does not match the model configuration".into()));
        }
        let total: usize = specs.iter().map(|s| s.shape.0 * s.shape.1).sum();
        if payload.len() != 3 * total * F::BYTES {
            return Err(Error::Checkpoint(format!("payload has {} bytes, expected {}", payload.len(), 3 * total * F::BYTES)));
        }
        let mut chunks = payload.chunks_exact(F::BYTES).map(F::from_le);
        let mut read_group = || -> Vec<Array2<F>> {
            specs.iter().map(|s| Array2::from_shape_simple_fn(s.shape, || chunks.next().expect("length checked"))).collect()
        };
        let params = read_group();
        let m = read_group();
        let v = read_group();
        let net = Transformer { config: manifest.config, params, exec: Exec::default() };
        let mut model = Self::assemble(net, manifest.adamw)?;
        model.opt.m = m;
        model.opt.v = v;
        model.opt.step = manifest.step;
        Ok(model)
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Config { field: "temperature", msg: format!("must be positive and finite, got {t}") })
    }
}

/// Samples among the first `k` logits after dividing by the temperature.
fn sample_row<F: Float>(row: ArrayView1<F>, k: usize, temperature: f64, rng: &mut Rng) -> u32 {
    let scaled: Vec<f64> = row.iter().take(k).map(|&x| x.f64() / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (t, &w) in weights.iter().enumerate() {
        if u < w {
            return t as u32;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0) as u32
}

/// Model of either precision.
#[derive(Clone, Debug)]
pub enum AnyModel {
    F32(Model<f32>),
    F64(Model<f64>),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            AnyModel::F32($m) => $body,
            AnyModel::F64($m) => $body,
        }
    };
}

impl AnyModel {
    pub fn new(config: ModelConfig, adamw: AdamWConfig, rng: &mut Rng) -> Result<Self> {
        Ok(match config.precision {
            Precision::F32 => Self::F32(Model::new(config, adamw, rng)?),
            Precision::F64 => Self::F64(Model::new(config, adamw, rng)?),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        dispatch!(self, m => m.config())
    }

    pub fn set_exec(&mut self, exec: Exec) {
        dispatch!(self, m => m.set_exec(exec))
    }

    pub fn train(&mut self, data: &[GsArray], cfg: &TrainConfig, rng: &mut Rng) -> Result<TrainReport> {
        dispatch!(self, m => m.train(data, cfg, rng))
    }

    pub fn sample(&self, count: usize, temperature: f64, rng: &mut Rng) -> Result<Vec<GsArray>> {
        dispatch!(self, m => m.sample(count, temperature, rng))
    }

    pub fn manifest(&self) -> ModelManifest {
        dispatch!(self, m => m.manifest())
    }

    pub fn payload(&self) -> Vec<u8> {
        dispatch!(self, m => m.payload())
    }

    pub fn from_parts(manifest: &ModelManifest, payload: &[u8]) -> Result<Self> {
        Ok(match manifest.config.precision {
            Precision::F32 => Self::F32(Model::from_parts(manifest, payload)?),
            Precision::F64 => Self::F64(Model::from_parts(manifest, payload)?),
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let manifest = serde_json::json!({ "kind": "model", "model": self.manifest() });
        checkpoint::save(path, &manifest, &self.payload())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (manifest, payload) = checkpoint::load(path)?;
        let m: ModelManifest = serde_json::from_value(manifest["model"].clone())?;
        Self::from_parts(&m, &payload)
    }
}

#[cfg(test)]
mod tests;
