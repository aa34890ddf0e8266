//! Decoder-only transformer in f64 with hand-written backpropagation.
//!
//! Pre-norm blocks: `x += Attn(LN(x))`, `x += FF(LN(x))`, then a final
//! layer norm and an untied output projection. Learned absolute position
//! embeddings are added to token embeddings. All parameters live in one
//! flat vector so optimizers, checkpoints and gradient checks treat them
//! uniformly.

use std::ops::Range;
use std::time::Instant;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_corpus, DecodeState, GenError, NextTokenModel};
use crate::sequence::TokenSeq;
use crate::util::derive_seed;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd { momentum: f64 },
    AdamW { beta1: f64, beta2: f64, eps: f64, weight_decay: f64 },
}

impl Optimizer {
    pub fn adamw() -> Self {
        Optimizer::AdamW { beta1: 0.9, beta2: 0.98, eps: 1e-9, weight_decay: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Linear warmup, then cosine decay to `min_factor * lr` at the last step.
    WarmupCosine { warmup_steps: usize, min_factor: f64 },
}

impl LrSchedule {
    fn factor(&self, step: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::Constant => 1.0,
            LrSchedule::WarmupCosine { warmup_steps, min_factor } => {
                if step < warmup_steps {
                    (step + 1) as f64 / warmup_steps as f64
                } else {
                    let span = total.saturating_sub(warmup_steps).max(1) as f64;
                    let t = ((step - warmup_steps) as f64 / span).min(1.0);
                    min_factor + (1.0 - min_factor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub t_max: usize,
    /// Residual-branch dropout during training.
    pub dropout: f64,
    pub lr: f64,
    pub schedule: LrSchedule,
    pub optimizer: Optimizer,
    pub batch_size: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub init_std: f64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 4,
            d_model: 64,
            d_ff: 256,
            t_max: 1024,
            dropout: 0.0,
            lr: 0.05,
            schedule: LrSchedule::WarmupCosine { warmup_steps: 20, min_factor: 0.1 },
            optimizer: Optimizer::Sgd { momentum: 0.9 },
            batch_size: 8,
            grad_clip: 1.0,
            init_std: 0.02,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::BadConfig(m.to_string()));
        if self.layers == 0 || self.heads == 0 || self.d_model == 0 || self.d_ff == 0 || self.t_max == 0 {
            return bad("layers, heads, d_model, d_ff and t_max must be positive");
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return bad("d_model must be divisible by heads");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.lr > 0.0) || self.batch_size == 0 {
            return bad("lr and batch_size must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub seed: u64,
    /// Stop after the first epoch whose mean loss falls below this value.
    pub stop_below: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    /// Wall-clock throughput; the only non-reproducible field.
    pub tokens_per_sec: f64,
}

#[derive(Debug, Clone, Copy)]
struct Mat {
    off: usize,
    rows: usize,
    cols: usize,
}

impl Mat {
    fn range(&self) -> Range<usize> {
        self.off..self.off + self.rows * self.cols
    }
}

#[derive(Debug, Clone)]
struct LayerParams {
    ln1_g: Mat,
    ln1_b: Mat,
    wq: Mat,
    bq: Mat,
    wk: Mat,
    bk: Mat,
    wv: Mat,
    bv: Mat,
    wo: Mat,
    bo: Mat,
    ln2_g: Mat,
    ln2_b: Mat,
    w1: Mat,
    b1: Mat,
    w2: Mat,
    b2: Mat,
}

#[derive(Debug, Clone)]
struct ParamLayout {
    tok: Mat,
    pos: Mat,
    layers: Vec<LayerParams>,
    lnf_g: Mat,
    lnf_b: Mat,
    w_out: Mat,
    b_out: Mat,
    total: usize,
}

enum Init {
    Normal,
    Zero,
    One,
}

impl ParamLayout {
    /// Parameter blocks in storage order with how each is initialized and
    /// whether weight decay applies.
    fn build(cfg: &TransformerConfig, vocab: usize) -> (Self, Vec<(Mat, Init, bool)>) {
        let mut off = 0;
        let mut blocks = Vec::new();
        let mut take = |rows: usize, cols: usize, init: Init, decay: bool| {
            let m = Mat { off, rows, cols };
            off += rows * cols;
            blocks.push((m, init, decay));
            m
        };
        let (d, f) = (cfg.d_model, cfg.d_ff);
        let tok = take(vocab, d, Init::Normal, true);
        let pos = take(cfg.t_max, d, Init::Normal, false);
        let mut layers = Vec::with_capacity(cfg.layers);
        for _ in 0..cfg.layers {
            layers.push(LayerParams {
                ln1_g: take(1, d, Init::One, false),
                ln1_b: take(1, d, Init::Zero, false),
                wq: take(d, d, Init::Normal, true),
                bq: take(1, d, Init::Zero, false),
                wk: take(d, d, Init::Normal, true),
                bk: take(1, d, Init::Zero, false),
                wv: take(d, d, Init::Normal, true),
                bv: take(1, d, Init::Zero, false),
                wo: take(d, d, Init::Normal, true),
                bo: take(1, d, Init::Zero, false),
                ln2_g: take(1, d, Init::One, false),
                ln2_b: take(1, d, Init::Zero, false),
                w1: take(d, f, Init::Normal, true),
                b1: take(1, f, Init::Zero, false),
                w2: take(f, d, Init::Normal, true),
                b2: take(1, d, Init::Zero, false),
            });
        }
        let lnf_g = take(1, d, Init::One, false);
        let lnf_b = take(1, d, Init::Zero, false);
        let w_out = take(d, vocab, Init::Normal, true);
        let b_out = take(1, vocab, Init::Zero, false);
        let layout = ParamLayout { tok, pos, layers, lnf_g, lnf_b, w_out, b_out, total: off };
        (layout, blocks)
    }
}

fn view<'a>(p: &'a [f64], m: Mat) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((m.rows, m.cols), &p[m.range()]).expect("layout shapes are consistent")
}

fn view_mut<'a>(p: &'a mut [f64], m: Mat) -> ArrayViewMut2<'a, f64> {
    ArrayViewMut2::from_shape((m.rows, m.cols), &mut p[m.range()]).expect("layout shapes are consistent")
}

fn vec_of(p: &[f64], m: Mat) -> ArrayView1<'_, f64> {
    ArrayView1::from(&p[m.range()])
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let t = (C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (i, mut row) in xhat.axis_iter_mut(Axis(0)).enumerate() {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let r = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * r);
        rstd[i] = r;
    }
    let y = &xhat * &g + b;
    (y, LnCache { xhat, rstd })
}

fn layer_norm_back(
    dy: &Array2<f64>,
    c: &LnCache,
    g: ArrayView1<f64>,
    dg: &mut [f64],
    db: &mut [f64],
) -> Array2<f64> {
    let d = dy.ncols() as f64;
    for (i, row) in dy.axis_iter(Axis(0)).enumerate() {
        for (j, v) in row.iter().enumerate() {
            dg[j] += v * c.xhat[(i, j)];
            db[j] += v;
        }
    }
    let mut dx = dy * &g;
    for (i, mut row) in dx.axis_iter_mut(Axis(0)).enumerate() {
        let xh = c.xhat.row(i);
        let m1 = row.sum() / d;
        let m2 = row.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        let r = c.rstd[i];
        for (v, x) in row.iter_mut().zip(xh.iter()) {
            *v = r * (*v - m1 - x * m2);
        }
    }
    dx
}

fn add_bias_grad(dst: &mut [f64], dy: &Array2<f64>) {
    for row in dy.axis_iter(Axis(0)) {
        for (a, b) in dst.iter_mut().zip(row.iter()) {
            *a += b;
        }
    }
}

/// `grad += a^T b`.
fn acc_at_b(grad: &mut [f64], m: Mat, a: &Array2<f64>, b: &Array2<f64>) {
    general_mat_mul(1.0, &a.t(), b, 1.0, &mut view_mut(grad, m));
}

fn dropout_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, p: f64) -> Option<Array2<f64>> {
    (p > 0.0).then(|| {
        let keep = 1.0 / (1.0 - p);
        Array2::from_shape_fn((rows, cols), |_| if rng.random::<f64>() < p { 0.0 } else { keep })
    })
}

struct LayerCache {
    ln1: LnCache,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    o: Array2<f64>,
    mask1: Option<Array2<f64>>,
    ln2: LnCache,
    h2: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
    mask2: Option<Array2<f64>>,
}

struct Forward {
    layers: Vec<LayerCache>,
    lnf: LnCache,
    hf: Array2<f64>,
    logits: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    cfg: TransformerConfig,
    vocab: usize,
    params: Vec<f64>,
}

impl Transformer {
    pub fn new(cfg: TransformerConfig, vocab: usize, seed: u64) -> Result<Self, GenError> {
        cfg.validate()?;
        if vocab == 0 {
            return Err(GenError::BadConfig("empty vocabulary".into()));
        }
        let (layout, blocks) = ParamLayout::build(&cfg, vocab);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, cfg.init_std).map_err(|e| GenError::BadConfig(e.to_string()))?;
        for (m, init, _) in blocks {
            let dst = &mut params[m.range()];
            match init {
                Init::Normal => dst.iter_mut().for_each(|v| *v = normal.sample(&mut rng)),
                Init::Zero => {}
                Init::One => dst.fill(1.0),
            }
        }
        Ok(Self { cfg, vocab, params })
    }

    pub(super) fn from_parts(cfg: TransformerConfig, vocab: usize, params: Vec<f64>) -> Result<Self, GenError> {
        cfg.validate()?;
        let (layout, _) = ParamLayout::build(&cfg, vocab);
        if layout.total != params.len() {
            return Err(GenError::Checkpoint(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self { cfg, vocab, params })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn layout(&self) -> ParamLayout {
        ParamLayout::build(&self.cfg, self.vocab).0
    }

    fn forward(&self, lay: &ParamLayout, toks: &[u32], drop_rng: Option<&mut ChaCha8Rng>) -> Forward {
        let p = &self.params;
        let (t_len, d) = (toks.len(), self.cfg.d_model);
        let dh = d / self.cfg.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let tok = view(p, lay.tok);
        let pos = view(p, lay.pos);
        let mut x = Array2::from_shape_fn((t_len, d), |(i, j)| tok[(toks[i] as usize, j)] + pos[(i, j)]);
        let mut rng = drop_rng;
        let pdrop = if rng.is_some() { self.cfg.dropout } else { 0.0 };
        let mut caches = Vec::with_capacity(lay.layers.len());
        for lp in &lay.layers {
            let (h1, ln1) = layer_norm(&x, vec_of(p, lp.ln1_g).view(), vec_of(p, lp.ln1_b));
            let q = h1.dot(&view(p, lp.wq)) + vec_of(p, lp.bq);
            let k = h1.dot(&view(p, lp.wk)) + vec_of(p, lp.bk);
            let v = h1.dot(&view(p, lp.wv)) + vec_of(p, lp.bv);
            let mut o = Array2::zeros((t_len, d));
            let mut probs = Vec::with_capacity(self.cfg.heads);
            for h in 0..self.cfg.heads {
                let r = h * dh..(h + 1) * dh;
                let mut a = q.slice(s![.., r.clone()]).dot(&k.slice(s![.., r.clone()]).t()) * scale;
                for (i, mut row) in a.axis_iter_mut(Axis(0)).enumerate() {
                    let mx = row.iter().take(i + 1).fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let mut sum = 0.0;
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = if j <= i { (*v - mx).exp() } else { 0.0 };
                        sum += *v;
                    }
                    row.mapv_inplace(|v| v / sum);
                }
                o.slice_mut(s![.., r.clone()]).assign(&a.dot(&v.slice(s![.., r])));
                probs.push(a);
            }
            let mut attn = o.dot(&view(p, lp.wo)) + vec_of(p, lp.bo);
            let mask1 = rng.as_deref_mut().and_then(|g| dropout_mask(g, t_len, d, pdrop));
            if let Some(m) = &mask1 {
                attn *= m;
            }
            x += &attn;
            let (h2, ln2) = layer_norm(&x, vec_of(p, lp.ln2_g), vec_of(p, lp.ln2_b));
            let u = h2.dot(&view(p, lp.w1)) + vec_of(p, lp.b1);
            let g = u.mapv(gelu);
            let mut m = g.dot(&view(p, lp.w2)) + vec_of(p, lp.b2);
            let mask2 = rng.as_deref_mut().and_then(|g| dropout_mask(g, t_len, d, pdrop));
            if let Some(mk) = &mask2 {
                m *= mk;
            }
            x += &m;
            caches.push(LayerCache { ln1, h1, q, k, v, probs, o, mask1, ln2, h2, u, g, mask2 });
        }
        let (hf, lnf) = layer_norm(&x, vec_of(p, lay.lnf_g), vec_of(p, lay.lnf_b));
        let logits = hf.dot(&view(p, lay.w_out)) + vec_of(p, lay.b_out);
        Forward { layers: caches, lnf, hf, logits }
    }

    /// Next-token logits at every position of `toks`.
    pub fn logits(&self, toks: &[u32]) -> Array2<f64> {
        self.forward(&self.layout(), toks, None).logits
    }

    /// Summed cross-entropy of predicting `toks[1..]` and its gradient
    /// scaled by `1 / norm`.
    fn loss_and_grad(&self, lay: &ParamLayout, toks: &[u32], norm: f64, seed: Option<u64>) -> (f64, Vec<f64>) {
        let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
        let fw = self.forward(lay, toks, rng.as_mut());
        let p = &self.params;
        let mut grad = vec![0.0; p.len()];
        let (t_len, d) = (toks.len(), self.cfg.d_model);
        let dh = d / self.cfg.heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let mut loss = 0.0;
        let mut dlogits = Array2::zeros(fw.logits.raw_dim());
        for i in 0..t_len.saturating_sub(1) {
            let row = fw.logits.row(i);
            let mx = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            let target = toks[i + 1] as usize;
            loss += z.ln() + mx - row[target];
            let mut drow = dlogits.row_mut(i);
            for (j, v) in drow.iter_mut().enumerate() {
                *v = (row[j] - mx).exp() / z / norm;
            }
            drow[target] -= 1.0 / norm;
        }

        acc_at_b(&mut grad, lay.w_out, &fw.hf, &dlogits);
        add_bias_grad(&mut grad[lay.b_out.range()], &dlogits);
        let dhf = dlogits.dot(&view(p, lay.w_out).t());
        let mut dx = {
            let (dg, db) = split_pair(&mut grad, lay.lnf_g, lay.lnf_b);
            layer_norm_back(&dhf, &fw.lnf, vec_of(p, lay.lnf_g), dg, db)
        };

        for (lp, c) in lay.layers.iter().zip(&fw.layers).rev() {
            // feed-forward branch
            let mut dm = dx.clone();
            if let Some(mk) = &c.mask2 {
                dm *= mk;
            }
            acc_at_b(&mut grad, lp.w2, &c.g, &dm);
            add_bias_grad(&mut grad[lp.b2.range()], &dm);
            let dg_act = dm.dot(&view(p, lp.w2).t());
            let du = ndarray::Zip::from(&dg_act).and(&c.u).map_collect(|a, u| a * gelu_grad(*u));
            acc_at_b(&mut grad, lp.w1, &c.h2, &du);
            add_bias_grad(&mut grad[lp.b1.range()], &du);
            let dh2 = du.dot(&view(p, lp.w1).t());
            {
                let (dg, db) = split_pair(&mut grad, lp.ln2_g, lp.ln2_b);
                dx += &layer_norm_back(&dh2, &c.ln2, vec_of(p, lp.ln2_g), dg, db);
            }

            // attention branch
            let mut dattn = dx.clone();
            if let Some(mk) = &c.mask1 {
                dattn *= mk;
            }
            acc_at_b(&mut grad, lp.wo, &c.o, &dattn);
            add_bias_grad(&mut grad[lp.bo.range()], &dattn);
            let d_o = dattn.dot(&view(p, lp.wo).t());
            let mut dq = Array2::zeros((t_len, d));
            let mut dk = Array2::zeros((t_len, d));
            let mut dv = Array2::zeros((t_len, d));
            for h in 0..self.cfg.heads {
                let r = h * dh..(h + 1) * dh;
                let a = &c.probs[h];
                let doh = d_o.slice(s![.., r.clone()]);
                let da = doh.dot(&c.v.slice(s![.., r.clone()]).t());
                dv.slice_mut(s![.., r.clone()]).assign(&a.t().dot(&doh));
                let mut ds = da;
                for (i, mut row) in ds.axis_iter_mut(Axis(0)).enumerate() {
                    let ar = a.row(i);
                    let dot: f64 = row.iter().zip(ar.iter()).map(|(x, y)| x * y).sum();
                    for (v, pa) in row.iter_mut().zip(ar.iter()) {
                        *v = pa * (*v - dot) * scale;
                    }
                }
                dq.slice_mut(s![.., r.clone()]).assign(&ds.dot(&c.k.slice(s![.., r.clone()])));
                dk.slice_mut(s![.., r.clone()]).assign(&ds.t().dot(&c.q.slice(s![.., r])));
            }
            acc_at_b(&mut grad, lp.wq, &c.h1, &dq);
            acc_at_b(&mut grad, lp.wk, &c.h1, &dk);
            acc_at_b(&mut grad, lp.wv, &c.h1, &dv);
            add_bias_grad(&mut grad[lp.bq.range()], &dq);
            add_bias_grad(&mut grad[lp.bk.range()], &dk);
            add_bias_grad(&mut grad[lp.bv.range()], &dv);
            let dh1 = dq.dot(&view(p, lp.wq).t()) + dk.dot(&view(p, lp.wk).t()) + dv.dot(&view(p, lp.wv).t());
            {
                let (dg, db) = split_pair(&mut grad, lp.ln1_g, lp.ln1_b);
                dx += &layer_norm_back(&dh1, &c.ln1, vec_of(p, lp.ln1_g), dg, db);
            }
        }

        for (i, &t) in toks.iter().enumerate() {
            let tr = lay.tok.off + t as usize * lay.tok.cols;
            let pr = lay.pos.off + i * lay.pos.cols;
            for j in 0..d {
                grad[tr + j] += dx[(i, j)];
                grad[pr + j] += dx[(i, j)];
            }
        }
        (loss, grad)
    }

    /// Mean next-token cross-entropy over the corpus, without dropout.
    pub fn mean_loss(&self, seqs: &[TokenSeq]) -> f64 {
        let lay = self.layout();
        let parts: Vec<(f64, usize)> = seqs
            .par_iter()
            .map(|s| {
                let logits = self.forward(&lay, s.as_slice(), None).logits;
                let t = s.as_slice();
                let mut loss = 0.0;
                for i in 0..t.len().saturating_sub(1) {
                    let row = logits.row(i);
                    let mx = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
                    loss += z.ln() + mx - row[t[i + 1] as usize];
                }
                (loss, t.len().saturating_sub(1))
            })
            .collect();
        let (l, n) = parts.iter().fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        l / n.max(1) as f64
    }

    /// Mean loss over `seqs` and its exact gradient, without dropout.
    pub fn loss_and_gradient(&self, seqs: &[TokenSeq]) -> (f64, Vec<f64>) {
        let lay = self.layout();
        let n: usize = seqs.iter().map(|s| s.len().saturating_sub(1)).sum();
        let mut total = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for s in seqs {
            let (l, g) = self.loss_and_grad(&lay, s.as_slice(), n.max(1) as f64, None);
            loss += l;
            total.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        (loss / n.max(1) as f64, total)
    }

    /// Teacher-forced training. Returns the loss before any update and one
    /// log entry per epoch.
    pub fn train(&mut self, seqs: &[TokenSeq], opts: &TrainOptions) -> Result<(f64, Vec<EpochLog>), GenError> {
        check_corpus(seqs, self.vocab, self.cfg.t_max)?;
        let lay = self.layout();
        let (_, blocks) = ParamLayout::build(&self.cfg, self.vocab);
        let mut decay = vec![false; self.params.len()];
        for (m, _, dcy) in &blocks {
            decay[m.range()].fill(*dcy);
        }
        let initial = self.mean_loss(seqs);
        let bs = self.cfg.batch_size;
        let steps_per_epoch = seqs.len().div_ceil(bs);
        let total_steps = steps_per_epoch * opts.epochs;
        let mut m1 = vec![0.0; self.params.len()];
        let mut m2 = vec![0.0; self.params.len()];
        let mut step = 0usize;
        let mut logs = Vec::with_capacity(opts.epochs);
        let use_dropout = self.cfg.dropout > 0.0;
        for epoch in 0..opts.epochs {
            let clock = Instant::now();
            let mut order: Vec<usize> = (0..seqs.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, epoch as u64)));
            let (mut epoch_loss, mut epoch_tokens) = (0.0, 0usize);
            for batch in order.chunks(bs) {
                let n: usize = batch.iter().map(|&i| seqs[i].len().saturating_sub(1)).sum();
                let norm = n.max(1) as f64;
                let parts: Vec<(f64, Vec<f64>)> = batch
                    .par_iter()
                    .enumerate()
                    .map(|(k, &i)| {
                        let seed = use_dropout.then(|| derive_seed(derive_seed(opts.seed, 1 << 32 | step as u64), k as u64));
                        self.loss_and_grad(&lay, seqs[i].as_slice(), norm, seed)
                    })
                    .collect();
                // fixed-order reduction keeps results independent of scheduling
                let mut grad = vec![0.0; self.params.len()];
                for (l, g) in &parts {
                    epoch_loss += l;
                    grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
                epoch_tokens += n;
                if self.cfg.grad_clip > 0.0 {
                    let gn = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                    if gn > self.cfg.grad_clip {
                        let f = self.cfg.grad_clip / gn;
                        grad.iter_mut().for_each(|g| *g *= f);
                    }
                }
                let lr = self.cfg.lr * self.cfg.schedule.factor(step, total_steps);
                step += 1;
                match self.cfg.optimizer {
                    Optimizer::Sgd { momentum } => {
                        for ((p, g), v) in self.params.iter_mut().zip(&grad).zip(m1.iter_mut()) {
                            *v = momentum * *v + g;
                            *p -= lr * *v;
                        }
                    }
                    Optimizer::AdamW { beta1, beta2, eps, weight_decay } => {
                        let bc1 = 1.0 - beta1.powi(step as i32);
                        let bc2 = 1.0 - beta2.powi(step as i32);
                        for i in 0..self.params.len() {
                            let g = grad[i];
                            m1[i] = beta1 * m1[i] + (1.0 - beta1) * g;
                            m2[i] = beta2 * m2[i] + (1.0 - beta2) * g * g;
                            if decay[i] {
                                self.params[i] -= lr * weight_decay * self.params[i];
                            }
                            self.params[i] -= lr * (m1[i] / bc1) / ((m2[i] / bc2).sqrt() + eps);
                        }
                    }
                }
            }
            let loss = epoch_loss / epoch_tokens.max(1) as f64;
            let secs = clock.elapsed().as_secs_f64();
            logs.push(EpochLog {
                epoch: epoch + 1,
                loss,
                tokens_per_sec: epoch_tokens as f64 / secs.max(1e-9),
            });
            log::info!("epoch {} loss {:.4}", epoch + 1, loss);
            if opts.stop_below.is_some_and(|t| loss < t) {
                break;
            }
        }
        Ok((initial, logs))
    }
}

fn split_pair(grad: &mut [f64], a: Mat, b: Mat) -> (&mut [f64], &mut [f64]) {
    debug_assert_eq!(a.off + a.rows * a.cols, b.off);
    let (lo, hi) = grad.split_at_mut(b.off);
    (&mut lo[a.range()], &mut hi[..b.rows * b.cols])
}

fn softmax(logits: ArrayView1<f64>) -> Vec<f64> {
    let mx = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e: Vec<f64> = logits.iter().map(|v| (v - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

impl NextTokenModel for Transformer {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn context_limit(&self) -> usize {
        self.cfg.t_max
    }

    fn next_token_dist(&self, prefix: &[u32]) -> Vec<f64> {
        if prefix.is_empty() {
            return vec![1.0 / self.vocab as f64; self.vocab];
        }
        let logits = self.logits(prefix);
        softmax(logits.row(prefix.len() - 1))
    }

    fn decoder(&self) -> Option<Box<dyn DecodeState + '_>> {
        Some(Box::new(KvDecoder {
            m: self,
            lay: self.layout(),
            keys: vec![Vec::new(); self.cfg.layers],
            values: vec![Vec::new(); self.cfg.layers],
            len: 0,
            last: None,
        }))
    }
}

/// Incremental decoding with cached keys and values per layer.
struct KvDecoder<'a> {
    m: &'a Transformer,
    lay: ParamLayout,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    len: usize,
    last: Option<Array1<f64>>,
}

fn ln_vec(x: &Array1<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let d = x.len() as f64;
    let mean = x.sum() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let r = 1.0 / (var + LN_EPS).sqrt();
    x.mapv(|v| (v - mean) * r) * g + b
}

impl DecodeState for KvDecoder<'_> {
    fn push(&mut self, token: u32) {
        let (m, lay) = (self.m, &self.lay);
        let p = &m.params;
        let d = m.cfg.d_model;
        let dh = d / m.cfg.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let t = self.len;
        let mut x = &view(p, lay.tok).row(token as usize) + &view(p, lay.pos).row(t);
        for (l, lp) in lay.layers.iter().enumerate() {
            let h1 = ln_vec(&x, vec_of(p, lp.ln1_g), vec_of(p, lp.ln1_b));
            let q = h1.dot(&view(p, lp.wq)) + vec_of(p, lp.bq);
            let k = h1.dot(&view(p, lp.wk)) + vec_of(p, lp.bk);
            let v = h1.dot(&view(p, lp.wv)) + vec_of(p, lp.bv);
            self.keys[l].extend(k.iter());
            self.values[l].extend(v.iter());
            let keys = ArrayView2::from_shape((t + 1, d), &self.keys[l]).unwrap();
            let vals = ArrayView2::from_shape((t + 1, d), &self.values[l]).unwrap();
            let mut o = Array1::zeros(d);
            for h in 0..m.cfg.heads {
                let r = h * dh..(h + 1) * dh;
                let sc = keys.slice(s![.., r.clone()]).dot(&q.slice(s![r.clone()])) * scale;
                let a = softmax(sc.view());
                let a = ArrayView1::from(&a);
                o.slice_mut(s![r.clone()]).assign(&a.dot(&vals.slice(s![.., r])));
            }
            x += &(o.dot(&view(p, lp.wo)) + vec_of(p, lp.bo));
            let h2 = ln_vec(&x, vec_of(p, lp.ln2_g), vec_of(p, lp.ln2_b));
            let u = (h2.dot(&view(p, lp.w1)) + vec_of(p, lp.b1)).mapv(gelu);
            x += &(u.dot(&view(p, lp.w2)) + vec_of(p, lp.b2));
        }
        let hf = ln_vec(&x, vec_of(p, lay.lnf_g), vec_of(p, lay.lnf_b));
        self.last = Some(hf.dot(&view(p, lay.w_out)) + vec_of(p, lay.b_out));
        self.len += 1;
    }

    fn dist(&mut self) -> Vec<f64> {
        match &self.last {
            Some(l) => softmax(l.view()),
            None => vec![1.0 / self.m.vocab as f64; self.m.vocab],
        }
    }
}
