//! Pre-norm decoder-only transformer with learned positions, tanh-GELU MLP
//! (ratio 4) and an untied output head. Backpropagation is written out by hand.

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::float::Float;
use super::tokenizer::Target;
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::par::Exec;

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

pub(crate) const WTE: usize = 0;
pub(crate) const WPE: usize = 1;
const LAYER_BASE: usize = 2;
const PER_LAYER: usize = 12;

const LN1_G: usize = 0;
const LN1_B: usize = 1;
const QKV_W: usize = 2;
const QKV_B: usize = 3;
const PROJ_W: usize = 4;
const PROJ_B: usize = 5;
const LN2_G: usize = 6;
const LN2_B: usize = 7;
const FC_W: usize = 8;
const FC_B: usize = 9;
const OUT_W: usize = 10;
const OUT_B: usize = 11;

const LAYER_NAMES: [&str; PER_LAYER] =
    ["ln1.g", "ln1.b", "attn.qkv.w", "attn.qkv.b", "attn.proj.w", "attn.proj.b", "ln2.g", "ln2.b", "mlp.fc.w", "mlp.fc.b", "mlp.out.w", "mlp.out.b"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Normal,
    Scaled,
    Ones,
    Zeros,
}

/// Name, shape, init and weight-decay flag of one parameter tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: (usize, usize),
    pub decay: bool,
    init: Init,
}

pub fn tensor_specs(cfg: &ModelConfig) -> Vec<TensorSpec> {
    let (c, v, t) = (cfg.n_embd, cfg.vocab_size, cfg.context_length);
    let spec = |name: String, shape, decay, init| TensorSpec { name, shape, decay, init };
    let mut out = vec![
        spec("wte".into(), (v, c), true, Init::Normal),
        spec("wpe".into(), (t, c), true, Init::Normal),
    ];
    for l in 0..cfg.n_layer {
        let shapes = [(1, c), (1, c), (c, 3 * c), (1, 3 * c), (c, c), (1, c), (1, c), (1, c), (c, 4 * c), (1, 4 * c), (4 * c, c), (1, c)];
        for (k, shape) in shapes.into_iter().enumerate() {
            let (decay, init) = match k {
                LN1_G | LN2_G => (false, Init::Ones),
                QKV_W | FC_W => (true, Init::Normal),
                PROJ_W | OUT_W => (true, Init::Scaled),
                _ => (false, Init::Zeros),
            };
            out.push(spec(format!("h{l}.{}", LAYER_NAMES[k]), shape, decay, init));
        }
    }
    out.push(spec("lnf.g".into(), (1, c), false, Init::Ones));
    out.push(spec("lnf.b".into(), (1, c), false, Init::Zeros));
    out.push(spec("head.w".into(), (c, v), true, Init::Normal));
    out
}

#[derive(Clone, Debug)]
pub struct Transformer<F: Float> {
    pub config: ModelConfig,
    pub params: Vec<Array2<F>>,
    pub exec: Exec,
}

struct LnCache<F> {
    xhat: Array2<F>,
    rstd: Vec<F>,
}

struct LayerCache<F> {
    h1: Array2<F>,
    ln1: LnCache<F>,
    qkv: Array2<F>,
    probs: Vec<Array2<F>>,
    att: Array2<F>,
    h2: Array2<F>,
    ln2: LnCache<F>,
    f: Array2<F>,
    g: Array2<F>,
}

pub(crate) struct Cache<F> {
    batch: usize,
    len: usize,
    tokens: Vec<u32>,
    layers: Vec<LayerCache<F>>,
    hf: Array2<F>,
    lnf: LnCache<F>,
}

fn layernorm<F: Float>(x: &Array2<F>, g: &Array2<F>, b: &Array2<F>) -> (Array2<F>, LnCache<F>) {
    let c = F::c(x.ncols() as f64);
    let eps = F::c(LN_EPS);
    let mut xhat = x.clone();
    let mut rstd = Vec::with_capacity(x.nrows());
    for mut row in xhat.rows_mut() {
        let mean = row.iter().copied().sum::<F>() / c;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<F>() / c;
        let r = F::one() / (var + eps).sqrt();
        row.mapv_inplace(|v| v * r);
        rstd.push(r);
    }
    let y = &xhat * g + b;
    (y, LnCache { xhat, rstd })
}

fn layernorm_backward<F: Float>(dy: &Array2<F>, cache: &LnCache<F>, g: &Array2<F>, dg: &mut Array2<F>, db: &mut Array2<F>) -> Array2<F> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let c = F::c(dy.ncols() as f64);
    let mut dx = dy * g;
    for (r, (mut row, xh)) in dx.rows_mut().into_iter().zip(cache.xhat.rows()).enumerate() {
        let mean = row.iter().copied().sum::<F>() / c;
        let mean_x = row.iter().zip(xh.iter()).map(|(&d, &x)| d * x).sum::<F>() / c;
        let rstd = cache.rstd[r];
        row.zip_mut_with(&xh, |d, &x| *d = rstd * (*d - mean - x * mean_x));
    }
    dx
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044715;

fn gelu<F: Float>(x: F) -> F {
    let half = F::c(0.5);
    half * x * (F::one() + (F::c(GELU_K) * (x + F::c(GELU_A) * x * x * x)).tanh())
}

fn gelu_grad<F: Float>(x: F) -> F {
    let half = F::c(0.5);
    let t = (F::c(GELU_K) * (x + F::c(GELU_A) * x * x * x)).tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * F::c(GELU_K) * (F::one() + F::c(3.0 * GELU_A) * x * x)
}

fn add_bias<F: Float>(mut y: Array2<F>, b: &Array2<F>) -> Array2<F> {
    y += b;
    y
}

fn softmax_in_place<F: Float>(row: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut total = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn accumulate_rows<F: Float>(dw: &mut Array2<F>, dy: &Array2<F>) {
    *dw += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
}

fn accumulate_matmul<F: Float>(dw: &mut Array2<F>, x: &Array2<F>, dy: &Array2<F>) {
    ndarray::linalg::general_mat_mul(F::one(), &x.t(), dy, F::one(), dw);
}

impl<F: Float> Transformer<F> {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let proj_scale = 1.0 / (2.0 * config.n_layer as f64).sqrt();
        let params = tensor_specs(&config)
            .into_iter()
            .map(|spec| match spec.init {
                Init::Ones => Array2::ones(spec.shape),
                Init::Zeros => Array2::zeros(spec.shape),
                Init::Normal => Array2::from_shape_simple_fn(spec.shape, || F::c(normal.sample(rng))),
                Init::Scaled => Array2::from_shape_simple_fn(spec.shape, || F::c(normal.sample(rng) * proj_scale)),
            })
            .collect();
        Ok(Self { config, params, exec: Exec::default() })
    }

    fn p(&self, l: usize, k: usize) -> &Array2<F> {
        &self.params[LAYER_BASE + PER_LAYER * l + k]
    }

    fn final_index(&self) -> usize {
        LAYER_BASE + PER_LAYER * self.config.n_layer
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    fn check_tokens(&self, batch: &[Vec<u32>]) -> Result<usize> {
        let len = batch.first().map_or(0, |s| s.len());
        if len == 0 || batch.iter().any(|s| s.len() != len) {
            return Err(Error::Config { field: "tokens", msg: "batch must hold non-empty sequences of equal length".into() });
        }
        if len > self.config.context_length {
            return Err(Error::ContextOverflow { len, context: self.config.context_length });
        }
        let vocab = self.config.vocab_size;
        if let Some(&t) = batch.iter().flatten().find(|&&t| t as usize >= vocab) {
            return Err(Error::BadToken { token: t as usize, vocab });
        }
        Ok(len)
    }

    fn embed(&self, tokens: &[u32], len: usize) -> Array2<F> {
        let mut x = Array2::zeros((tokens.len(), self.config.n_embd));
        for (r, &tok) in tokens.iter().enumerate() {
            let mut row = x.row_mut(r);
            row.assign(&self.params[WTE].row(tok as usize));
            row += &self.params[WPE].row(r % len);
        }
        x
    }

    /// Causal attention over every `(sequence, head)` pair.
    fn attention(&self, qkv: &Array2<F>, batch: usize, len: usize) -> (Array2<F>, Vec<Array2<F>>) {
        let (c, h) = (self.config.n_embd, self.config.n_head);
        let d = c / h;
        let scale = F::c(1.0 / (d as f64).sqrt());
        let results = self.exec.map_range(batch * h, |idx| {
            let (b, hd) = (idx / h, idx % h);
            let rows = b * len..(b + 1) * len;
            let q = qkv.slice(s![rows.clone(), hd * d..(hd + 1) * d]);
            let k = qkv.slice(s![rows.clone(), c + hd * d..c + (hd + 1) * d]);
            let v = qkv.slice(s![rows, 2 * c + hd * d..2 * c + (hd + 1) * d]);
            let mut p = q.dot(&k.t()) * scale;
            for (i, mut row) in p.rows_mut().into_iter().enumerate() {
                let row = row.as_slice_mut().expect("contiguous");
                softmax_in_place(&mut row[..=i]);
                row[i + 1..].fill(F::zero());
            }
            let y = p.dot(&v);
            (p, y)
        });
        let mut out = Array2::zeros((batch * len, c));
        let mut probs = Vec::with_capacity(results.len());
        for (idx, (p, y)) in results.into_iter().enumerate() {
            let (b, hd) = (idx / h, idx % h);
            out.slice_mut(s![b * len..(b + 1) * len, hd * d..(hd + 1) * d]).assign(&y);
            probs.push(p);
        }
        (out, probs)
    }

    fn attention_backward(&self, datt: &Array2<F>, cache: &LayerCache<F>, batch: usize, len: usize) -> Array2<F> {
        let (c, h) = (self.config.n_embd, self.config.n_head);
        let d = c / h;
        let scale = F::c(1.0 / (d as f64).sqrt());
        let qkv = &cache.qkv;
        let results = self.exec.map_range(batch * h, |idx| {
            let (b, hd) = (idx / h, idx % h);
            let rows = b * len..(b + 1) * len;
            let q = qkv.slice(s![rows.clone(), hd * d..(hd + 1) * d]);
            let k = qkv.slice(s![rows.clone(), c + hd * d..c + (hd + 1) * d]);
            let v = qkv.slice(s![rows.clone(), 2 * c + hd * d..2 * c + (hd + 1) * d]);
            let dy = datt.slice(s![rows, hd * d..(hd + 1) * d]);
            let p = &cache.probs[idx];
            let dp = dy.dot(&v.t());
            let dv = p.t().dot(&dy);
            let mut ds = dp;
            for (mut drow, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                let dot = drow.iter().zip(prow.iter()).map(|(&a, &b)| a * b).sum::<F>();
                drow.zip_mut_with(&prow, |dv, &pv| *dv = pv * (*dv - dot));
            }
            let dq = ds.dot(&k) * scale;
            let dk = ds.t().dot(&q) * scale;
            (dq, dk, dv)
        });
        let mut dqkv = Array2::zeros((batch * len, 3 * c));
        for (idx, (dq, dk, dv)) in results.into_iter().enumerate() {
            let (b, hd) = (idx / h, idx % h);
            let rows = b * len..(b + 1) * len;
            dqkv.slice_mut(s![rows.clone(), hd * d..(hd + 1) * d]).assign(&dq);
            dqkv.slice_mut(s![rows.clone(), c + hd * d..c + (hd + 1) * d]).assign(&dk);
            dqkv.slice_mut(s![rows, 2 * c + hd * d..2 * c + (hd + 1) * d]).assign(&dv);
        }
        dqkv
    }

    pub(crate) fn forward_cached(&self, batch: &[Vec<u32>]) -> Result<(Array2<F>, Cache<F>)> {
        let len = self.check_tokens(batch)?;
        let tokens: Vec<u32> = batch.iter().flatten().copied().collect();
        let mut x = self.embed(&tokens, len);
        let mut layers = Vec::with_capacity(self.config.n_layer);
        for l in 0..self.config.n_layer {
            let (h1, ln1) = layernorm(&x, self.p(l, LN1_G), self.p(l, LN1_B));
            let qkv = add_bias(h1.dot(self.p(l, QKV_W)), self.p(l, QKV_B));
            let (att, probs) = self.attention(&qkv, batch.len(), len);
            x += &add_bias(att.dot(self.p(l, PROJ_W)), self.p(l, PROJ_B));
            let (h2, ln2) = layernorm(&x, self.p(l, LN2_G), self.p(l, LN2_B));
            let f = add_bias(h2.dot(self.p(l, FC_W)), self.p(l, FC_B));
            let g = f.mapv(gelu);
            x += &add_bias(g.dot(self.p(l, OUT_W)), self.p(l, OUT_B));
            layers.push(LayerCache { h1, ln1, qkv, probs, att, h2, ln2, f, g });
        }
        let fi = self.final_index();
        let (hf, lnf) = layernorm(&x, &self.params[fi], &self.params[fi + 1]);
        let logits = hf.dot(&self.params[fi + 2]);
        Ok((logits, Cache { batch: batch.len(), len, tokens, layers, hf, lnf }))
    }

    /// Logits for every position of every sequence, rows ordered sequence-major.
    pub fn forward_batch(&self, batch: &[Vec<u32>]) -> Result<Array2<F>> {
        Ok(self.forward_cached(batch)?.0)
    }

    pub fn forward(&self, tokens: &[u32]) -> Result<Array2<F>> {
        self.forward_batch(&[tokens.to_vec()])
    }

    pub(crate) fn backward(&self, dlogits: &Array2<F>, cache: &Cache<F>) -> Vec<Array2<F>> {
        let mut grads: Vec<Array2<F>> = self.params.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
        let fi = self.final_index();
        accumulate_matmul(&mut grads[fi + 2], &cache.hf, dlogits);
        let dhf = dlogits.dot(&self.params[fi + 2].t());
        let (head, tail) = grads.split_at_mut(fi + 1);
        let mut dx = layernorm_backward(&dhf, &cache.lnf, &self.params[fi], &mut head[fi], &mut tail[0]);

        for l in (0..self.config.n_layer).rev() {
            let lc = &cache.layers[l];
            let base = LAYER_BASE + PER_LAYER * l;
            let g = &mut grads[base..base + PER_LAYER];

            accumulate_rows(&mut g[OUT_B], &dx);
            accumulate_matmul(&mut g[OUT_W], &lc.g, &dx);
            let mut df = dx.dot(&self.p(l, OUT_W).t());
            df.zip_mut_with(&lc.f, |d, &f| *d *= gelu_grad(f));
            accumulate_rows(&mut g[FC_B], &df);
            accumulate_matmul(&mut g[FC_W], &lc.h2, &df);
            let dh2 = df.dot(&self.p(l, FC_W).t());
            let (lo, hi) = g.split_at_mut(LN2_B);
            dx += &layernorm_backward(&dh2, &lc.ln2, self.p(l, LN2_G), &mut lo[LN2_G], &mut hi[0]);

            accumulate_rows(&mut g[PROJ_B], &dx);
            accumulate_matmul(&mut g[PROJ_W], &lc.att, &dx);
            let datt = dx.dot(&self.p(l, PROJ_W).t());
            let dqkv = self.attention_backward(&datt, lc, cache.batch, cache.len);
            accumulate_rows(&mut g[QKV_B], &dqkv);
            accumulate_matmul(&mut g[QKV_W], &lc.h1, &dqkv);
            let dh1 = dqkv.dot(&self.p(l, QKV_W).t());
            let (lo, hi) = g.split_at_mut(LN1_B);
            dx += &layernorm_backward(&dh1, &lc.ln1, self.p(l, LN1_G), &mut lo[LN1_G], &mut hi[0]);
        }

        for (r, &tok) in cache.tokens.iter().enumerate() {
            let row = dx.row(r);
            let mut wte = grads[WTE].row_mut(tok as usize);
            wte += &row;
            let mut wpe = grads[WPE].row_mut(r % cache.len);
            wpe += &row;
        }
        grads
    }

    /// Mean cross-entropy over non-ignored targets and its gradient.
    pub fn loss_and_grad(&self, batch: &[Vec<u32>], targets: &[Vec<Target>]) -> Result<(f64, Vec<Array2<F>>)> {
        let (logits, cache) = self.forward_cached(batch)?;
        let (loss, dlogits) = cross_entropy(&logits, targets)?;
        Ok((loss, self.backward(&dlogits, &cache)))
    }

    pub fn loss(&self, batch: &[Vec<u32>], targets: &[Vec<Target>]) -> Result<f64> {
        let logits = self.forward_batch(batch)?;
        Ok(cross_entropy(&logits, targets)?.0)
    }

    pub fn decoder(&self, batch: usize) -> Decoder<'_, F> {
        let (t, c) = (self.config.context_length, self.config.n_embd);
        let layers = self.config.n_layer;
        Decoder {
            net: self,
            pos: 0,
            keys: (0..layers).map(|_| Array3::zeros((batch, t, c))).collect(),
            values: (0..layers).map(|_| Array3::zeros((batch, t, c))).collect(),
        }
    }
}

/// Returns the mean loss in nats and the gradient with respect to the logits.
pub(crate) fn cross_entropy<F: Float>(logits: &Array2<F>, targets: &[Vec<Target>]) -> Result<(f64, Array2<F>)> {
    let flat: Vec<Target> = targets.iter().flatten().copied().collect();
    if flat.len() != logits.nrows() {
        return Err(Error::Config { field: "targets", msg: format!("{} targets for {} positions", flat.len(), logits.nrows()) });
    }
    let count = flat.iter().filter(|t| !matches!(t, Target::Ignore)).count();
    if count == 0 {
        return Err(Error::Config { field: "targets", msg: "no positions carry a target".into() });
    }
    let inv = F::c(1.0 / count as f64);
    let mut total = 0.0;
    let mut dlogits = Array2::zeros(logits.raw_dim());
    for ((target, row), mut drow) in flat.iter().zip(logits.rows()).zip(dlogits.rows_mut()) {
        let in_set: Box<dyn Fn(usize) -> bool> = match *target {
            Target::Ignore => continue,
            Target::Token(t) => Box::new(move |v| v == t as usize),
            Target::Prefix { value, free_bits } => {
                Box::new(move |v| v >> free_bits == value as usize)
            }
        };
        let mut p: Vec<F> = row.to_vec();
        softmax_in_place(&mut p);
        let mass: F = p.iter().enumerate().filter(|&(v, _)| in_set(v)).map(|(_, &x)| x).sum();
        total -= mass.f64().ln();
        for (v, d) in drow.iter_mut().enumerate() {
            let q = if in_set(v) { p[v] / mass } else { F::zero() };
            *d = (p[v] - q) * inv;
        }
    }
    Ok((total / count as f64, dlogits))
}

/// Incremental decoding with per-layer key/value caches.
pub struct Decoder<'a, F: Float> {
    net: &'a Transformer<F>,
    pos: usize,
    keys: Vec<Array3<F>>,
    values: Vec<Array3<F>>,
}

impl<F: Float> Decoder<'_, F> {
    pub fn position(&self) -> usize {
        self.pos
    }

    /// Feeds one token per sequence and returns next-token logits `[batch, vocab]`.
    pub fn step(&mut self, tokens: &[u32]) -> Result<Array2<F>> {
        let net = self.net;
        let cfg = &net.config;
        if self.pos >= cfg.context_length {
            return Err(Error::ContextOverflow { len: self.pos + 1, context: cfg.context_length });
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(Error::BadToken { token: t as usize, vocab: cfg.vocab_size });
        }
        let (c, h) = (cfg.n_embd, cfg.n_head);
        let d = c / h;
        let scale = F::c(1.0 / (d as f64).sqrt());
        let pos = self.pos;
        let mut x = Array2::zeros((tokens.len(), c));
        for (r, &tok) in tokens.iter().enumerate() {
            let mut row = x.row_mut(r);
            row.assign(&net.params[WTE].row(tok as usize));
            row += &net.params[WPE].row(pos);
        }
        for l in 0..cfg.n_layer {
            let (h1, _) = layernorm(&x, net.p(l, LN1_G), net.p(l, LN1_B));
            let qkv = add_bias(h1.dot(net.p(l, QKV_W)), net.p(l, QKV_B));
            self.keys[l].slice_mut(s![.., pos, ..]).assign(&qkv.slice(s![.., c..2 * c]));
            self.values[l].slice_mut(s![.., pos, ..]).assign(&qkv.slice(s![.., 2 * c..]));
            let mut att = Array2::zeros((tokens.len(), c));
            for b in 0..tokens.len() {
                for hd in 0..h {
                    let cols = hd * d..(hd + 1) * d;
                    let q = qkv.slice(s![b, cols.clone()]);
                    let keys: ArrayView2<F> = self.keys[l].slice(s![b, ..=pos, cols.clone()]);
                    let vals: ArrayView2<F> = self.values[l].slice(s![b, ..=pos, cols.clone()]);
                    let mut w = (keys.dot(&q) * scale).to_vec();
                    softmax_in_place(&mut w);
                    let w = ndarray::Array1::from(w);
                    att.slice_mut(s![b, cols]).assign(&w.dot(&vals));
                }
            }
            x += &add_bias(att.dot(net.p(l, PROJ_W)), net.p(l, PROJ_B));
            let (h2, _) = layernorm(&x, net.p(l, LN2_G), net.p(l, LN2_B));
            let g = add_bias(h2.dot(net.p(l, FC_W)), net.p(l, FC_B)).mapv(gelu);
            x += &add_bias(g.dot(net.p(l, OUT_W)), net.p(l, OUT_B));
        }
        let fi = net.final_index();
        let (hf, _) = layernorm(&x, &net.params[fi], &net.params[fi + 1]);
        self.pos += 1;
        Ok(hf.dot(&net.params[fi + 2]))
    }
}

#[cfg(test)]
mod tests;
