//! A small pre-norm causal transformer with a hand-written backward pass.
//!
//! Parameters live in one flat `Vec<f64>`; [`Layout`] maps each tensor to
//! an offset so that optimizers and finite-difference checks can treat the
//! model as a single vector.

use std::time::Instant;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ModelError, ScoreNormalization, StepScoreVector};
use crate::corpus::{build_loss_mask, LossMask, MaskVariant, TokenStream, Vocabulary, MINUS, NUM_SPECIAL, PLUS};

/// Probabilities are clamped to this band before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;
const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub context: usize,
    pub init_std: f64,
}

impl ModelConfig {
    /// Two blocks of width 64 with a 512-token context.
    pub fn toy(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            context: 512,
            init_std: 0.02,
        }
    }

    /// A few thousand parameters, for finite-difference checks.
    pub fn tiny(vocab_size: usize, context: usize) -> Self {
        ModelConfig {
            vocab_size,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_ff: 16,
            context,
            init_std: 0.3,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 || self.d_ff == 0 || self.context == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!("width {} is not divisible by {} heads", self.d_model, self.n_heads));
        }
        if self.vocab_size <= NUM_SPECIAL as usize {
            return bad(format!("vocabulary of {} leaves no base symbols", self.vocab_size));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return bad("init_std must be positive".into());
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        Layout::new(self).total
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    w_qkv: usize,
    b_qkv: usize,
    w_o: usize,
    b_o: usize,
    ln2_g: usize,
    ln2_b: usize,
    w_fc: usize,
    b_fc: usize,
    w_proj: usize,
    b_proj: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    wte: usize,
    wpe: usize,
    layers: Vec<LayerOffsets>,
    lnf_g: usize,
    lnf_b: usize,
    w_out: usize,
    b_out: usize,
    total: usize,
}

impl Layout {
    fn new(c: &ModelConfig) -> Self {
        let (v, d, f) = (c.vocab_size, c.d_model, c.d_ff);
        let mut at = 0;
        let mut take = |n: usize| {
            let off = at;
            at += n;
            off
        };
        let wte = take(v * d);
        let wpe = take(c.context * d);
        let layers = (0..c.n_layers)
            .map(|_| LayerOffsets {
                ln1_g: take(d),
                ln1_b: take(d),
                w_qkv: take(d * 3 * d),
                b_qkv: take(3 * d),
                w_o: take(d * d),
                b_o: take(d),
                ln2_g: take(d),
                ln2_b: take(d),
                w_fc: take(d * f),
                b_fc: take(f),
                w_proj: take(f * d),
                b_proj: take(d),
            })
            .collect();
        let lnf_g = take(d);
        let lnf_b = take(d);
        let w_out = take(d * v);
        let b_out = take(v);
        Layout {
            wte,
            wpe,
            layers,
            lnf_g,
            lnf_b,
            w_out,
            b_out,
            total: at,
        }
    }
}

fn mat(p: &[f64], off: usize, r: usize, c: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((r, c), &p[off..off + r * c]).expect("layout")
}

fn vector(p: &[f64], off: usize, n: usize) -> ArrayView1<'_, f64> {
    ArrayView1::from(&p[off..off + n])
}

fn accumulate<'a>(g: &mut [f64], off: usize, values: impl IntoIterator<Item = &'a f64>) {
    for (slot, v) in g[off..].iter_mut().zip(values) {
        *slot += v;
    }
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

fn ln_forward(x: &Array2<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let (t, d) = x.dim();
    let mut xhat = Array2::zeros((t, d));
    let mut rstd = Array1::zeros(t);
    for i in 0..t {
        let row = x.row(i);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        xhat.row_mut(i).assign(&row.mapv(|v| (v - mean) * r));
    }
    let y = &xhat * &g + &b;
    (y, LnCache { xhat, rstd })
}

/// Returns dx and accumulates dγ, dβ into `grad`.
fn ln_backward(dy: &Array2<f64>, c: &LnCache, g: ArrayView1<f64>, grad: &mut [f64], g_off: usize, b_off: usize) -> Array2<f64> {
    let (t, d) = dy.dim();
    accumulate(grad, g_off, (dy * &c.xhat).sum_axis(Axis(0)).iter());
    accumulate(grad, b_off, dy.sum_axis(Axis(0)).iter());
    let dxhat = dy * &g;
    let mut dx = Array2::zeros((t, d));
    for i in 0..t {
        let dh = dxhat.row(i);
        let xh = c.xhat.row(i);
        let mean_dh = dh.sum() / d as f64;
        let mean_dh_xh = dh.dot(&xh) / d as f64;
        let r = c.rstd[i];
        dx.row_mut(i)
            .assign(&ndarray::Zip::from(&dh).and(&xh).map_collect(|&a, &b| r * (a - mean_dh - b * mean_dh_xh)));
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

struct LayerCache {
    ln1: LnCache,
    a: Array2<f64>,
    qkv: Array2<f64>,
    probs: Vec<Array2<f64>>,
    o: Array2<f64>,
    ln2: LnCache,
    m: Array2<f64>,
    h: Array2<f64>,
    act: Array2<f64>,
}

struct Forward {
    layers: Vec<LayerCache>,
    lnf: LnCache,
    xf: Array2<f64>,
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyPrm {
    pub config: ModelConfig,
    pub params: Vec<f64>,
    layout_total: usize,
}

impl ToyPrm {
    /// Deterministic initialization: Gaussian weights, unit LayerNorm
    /// gains, zero biases. Residual output projections are scaled down by
    /// the square root of twice the depth.
    pub fn init(config: ModelConfig, seed: u64) -> Result<ToyPrm, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.total];
        let std = config.init_std;
        let resid_std = std / (2.0 * config.n_layers as f64).sqrt();
        let (v, d, f) = (config.vocab_size, config.d_model, config.d_ff);
        let mut fill = |params: &mut [f64], off: usize, n: usize, sd: f64| {
            let normal = Normal::new(0.0, sd).expect("positive std");
            for x in &mut params[off..off + n] {
                *x = normal.sample(&mut rng);
            }
        };
        fill(&mut params, layout.wte, v * d, std);
        fill(&mut params, layout.wpe, config.context * d, std);
        for l in &layout.layers {
            params[l.ln1_g..l.ln1_g + d].fill(1.0);
            params[l.ln2_g..l.ln2_g + d].fill(1.0);
            fill(&mut params, l.w_qkv, d * 3 * d, std);
            fill(&mut params, l.w_o, d * d, resid_std);
            fill(&mut params, l.w_fc, d * f, std);
            fill(&mut params, l.w_proj, f * d, resid_std);
        }
        params[layout.lnf_g..layout.lnf_g + d].fill(1.0);
        fill(&mut params, layout.w_out, d * v, std);
        Ok(ToyPrm {
            config,
            params,
            layout_total: layout.total,
        })
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<ToyPrm, ModelError> {
        config.validate()?;
        let total = Layout::new(&config).total;
        if params.len() != total {
            return Err(ModelError::InvalidConfig(format!(
                "expected {total} parameters, found {}",
                params.len()
            )));
        }
        Ok(ToyPrm {
            config,
            params,
            layout_total: total,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.layout_total
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<(), ModelError> {
        if tokens.len() > self.config.context {
            return Err(ModelError::ContextOverflow {
                length: tokens.len(),
                context: self.config.context,
            });
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(ModelError::InvalidConfig(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    fn forward(&self, layout: &Layout, tokens: &[u32]) -> Forward {
        let c = &self.config;
        let p = &self.params;
        let (t, d, v, f) = (tokens.len(), c.d_model, c.vocab_size, c.d_ff);
        let dh = d / c.n_heads;
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        let wte = mat(p, layout.wte, v, d);
        let wpe = mat(p, layout.wpe, c.context, d);
        let mut x = Array2::zeros((t, d));
        for (i, &tok) in tokens.iter().enumerate() {
            x.row_mut(i).assign(&(&wte.row(tok as usize) + &wpe.row(i)));
        }
        let mut layers = Vec::with_capacity(c.n_layers);
        for l in &layout.layers {
            let (a, ln1) = ln_forward(&x, vector(p, l.ln1_g, d), vector(p, l.ln1_b, d));
            let qkv = a.dot(&mat(p, l.w_qkv, d, 3 * d)) + &vector(p, l.b_qkv, 3 * d);
            let mut o = Array2::zeros((t, d));
            let mut probs = Vec::with_capacity(c.n_heads);
            for h in 0..c.n_heads {
                let q = qkv.slice(s![.., h * dh..(h + 1) * dh]);
                let k = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
                let val = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
                let mut sc = q.dot(&k.t());
                for i in 0..t {
                    let mut row = sc.row_mut(i);
                    let max = (0..=i).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max) * inv_sqrt;
                    let mut sum = 0.0;
                    for j in 0..=i {
                        let e = (row[j] * inv_sqrt - max).exp();
                        row[j] = e;
                        sum += e;
                    }
                    for j in 0..=i {
                        row[j] /= sum;
                    }
                    for j in i + 1..t {
                        row[j] = 0.0;
                    }
                }
                o.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&sc.dot(&val));
                probs.push(sc);
            }
            x = x + o.dot(&mat(p, l.w_o, d, d)) + &vector(p, l.b_o, d);
            let (m, ln2) = ln_forward(&x, vector(p, l.ln2_g, d), vector(p, l.ln2_b, d));
            let h = m.dot(&mat(p, l.w_fc, d, f)) + &vector(p, l.b_fc, f);
            let act = h.mapv(gelu);
            x = x + act.dot(&mat(p, l.w_proj, f, d)) + &vector(p, l.b_proj, d);
            layers.push(LayerCache {
                ln1,
                a,
                qkv,
                probs,
                o,
                ln2,
                m,
                h,
                act,
            });
        }
        let (xf, lnf) = ln_forward(&x, vector(p, layout.lnf_g, d), vector(p, layout.lnf_b, d));
        Forward { layers, lnf, xf }
    }

    /// Next-token distributions read at the given rows.
    fn distributions(&self, layout: &Layout, fwd: &Forward, rows: &[usize]) -> Array2<f64> {
        let (d, v) = (self.config.d_model, self.config.vocab_size);
        let sel = fwd.xf.select(Axis(0), rows);
        let mut logits = sel.dot(&mat(&self.params, layout.w_out, d, v)) + &vector(&self.params, layout.b_out, v);
        softmax_rows(&mut logits);
        logits
    }

    /// Next-token distribution at every position (row i predicts token i+1).
    pub fn predict(&self, tokens: &[u32]) -> Result<Array2<f64>, ModelError> {
        self.check_tokens(tokens)?;
        let layout = self.layout();
        let fwd = self.forward(&layout, tokens);
        let rows: Vec<usize> = (0..tokens.len()).collect();
        Ok(self.distributions(&layout, &fwd, &rows))
    }

    /// Sum of clamped negative log-likelihoods of `labels[i]` over
    /// `positions` (position 0 has no context and is skipped). When `grad`
    /// is given, adds `weight` times the gradient of that sum.
    fn nll(
        &self,
        layout: &Layout,
        tokens: &[u32],
        labels: &[u32],
        positions: &[usize],
        weight: f64,
        grad: Option<&mut [f64]>,
    ) -> (f64, usize) {
        let targets: Vec<usize> = positions.iter().copied().filter(|&i| i >= 1 && i < tokens.len()).collect();
        if targets.is_empty() {
            return (0.0, 0);
        }
        let fwd = self.forward(layout, tokens);
        let rows: Vec<usize> = targets.iter().map(|i| i - 1).collect();
        let probs = self.distributions(layout, &fwd, &rows);
        let mut total = 0.0;
        let mut dlogits = probs.clone();
        for (r, &i) in targets.iter().enumerate() {
            let y = labels[i] as usize;
            let py = probs[[r, y]];
            total -= py.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR).ln();
            let mut row = dlogits.row_mut(r);
            if py > PROB_FLOOR && py < 1.0 - PROB_FLOOR {
                row[y] -= 1.0;
                row.mapv_inplace(|g| g * weight);
            } else {
                row.fill(0.0);
            }
        }
        if let Some(grad) = grad {
            self.backward(layout, tokens, &fwd, &rows, &dlogits, grad);
        }
        (total, targets.len())
    }

    fn backward(&self, layout: &Layout, tokens: &[u32], fwd: &Forward, rows: &[usize], dlogits: &Array2<f64>, grad: &mut [f64]) {
        let c = &self.config;
        let p = &self.params;
        let (t, d, v, f) = (tokens.len(), c.d_model, c.vocab_size, c.d_ff);
        let dh = d / c.n_heads;
        let inv_sqrt = 1.0 / (dh as f64).sqrt();

        let sel = fwd.xf.select(Axis(0), rows);
        accumulate(grad, layout.w_out, sel.t().dot(dlogits).iter());
        accumulate(grad, layout.b_out, dlogits.sum_axis(Axis(0)).iter());
        let dsel = dlogits.dot(&mat(p, layout.w_out, d, v).t());
        let mut dxf = Array2::zeros((t, d));
        for (r, &row) in rows.iter().enumerate() {
            dxf.row_mut(row).assign(&dsel.row(r));
        }
        let mut dx = ln_backward(&dxf, &fwd.lnf, vector(p, layout.lnf_g, d), grad, layout.lnf_g, layout.lnf_b);

        for (l, cache) in layout.layers.iter().zip(&fwd.layers).rev() {
            // feed-forward branch
            accumulate(grad, l.w_proj, cache.act.t().dot(&dx).iter());
            accumulate(grad, l.b_proj, dx.sum_axis(Axis(0)).iter());
            let dact = dx.dot(&mat(p, l.w_proj, f, d).t());
            let dh_pre = ndarray::Zip::from(&dact).and(&cache.h).map_collect(|&g, &h| g * gelu_grad(h));
            accumulate(grad, l.w_fc, cache.m.t().dot(&dh_pre).iter());
            accumulate(grad, l.b_fc, dh_pre.sum_axis(Axis(0)).iter());
            let dm = dh_pre.dot(&mat(p, l.w_fc, d, f).t());
            dx = dx + ln_backward(&dm, &cache.ln2, vector(p, l.ln2_g, d), grad, l.ln2_g, l.ln2_b);

            // attention branch
            accumulate(grad, l.w_o, cache.o.t().dot(&dx).iter());
            accumulate(grad, l.b_o, dx.sum_axis(Axis(0)).iter());
            let d_o = dx.dot(&mat(p, l.w_o, d, d).t());
            let mut dqkv = Array2::zeros((t, 3 * d));
            for h in 0..c.n_heads {
                let hs = h * dh..(h + 1) * dh;
                let q = cache.qkv.slice(s![.., hs.clone()]);
                let k = cache.qkv.slice(s![.., d + hs.start..d + hs.end]);
                let val = cache.qkv.slice(s![.., 2 * d + hs.start..2 * d + hs.end]);
                let dout = d_o.slice(s![.., hs.clone()]);
                let pr = &cache.probs[h];
                let dp = dout.dot(&val.t());
                let dv = pr.t().dot(&dout);
                let mut ds = Array2::zeros((t, t));
                for i in 0..t {
                    let s_i: f64 = (0..=i).map(|j| pr[[i, j]] * dp[[i, j]]).sum();
                    for j in 0..=i {
                        ds[[i, j]] = pr[[i, j]] * (dp[[i, j]] - s_i) * inv_sqrt;
                    }
                }
                let dq = ds.dot(&k);
                let dk = ds.t().dot(&q);
                dqkv.slice_mut(s![.., hs.clone()]).assign(&dq);
                dqkv.slice_mut(s![.., d + hs.start..d + hs.end]).assign(&dk);
                dqkv.slice_mut(s![.., 2 * d + hs.start..2 * d + hs.end]).assign(&dv);
            }
            accumulate(grad, l.w_qkv, cache.a.t().dot(&dqkv).iter());
            accumulate(grad, l.b_qkv, dqkv.sum_axis(Axis(0)).iter());
            let da = dqkv.dot(&mat(p, l.w_qkv, d, 3 * d).t());
            dx = dx + ln_backward(&da, &cache.ln1, vector(p, l.ln1_g, d), grad, l.ln1_g, l.ln1_b);
        }

        for (i, &tok) in tokens.iter().enumerate() {
            let row = dx.row(i);
            accumulate(grad, layout.wte + tok as usize * d, row.iter());
            accumulate(grad, layout.wpe + i * d, row.iter());
        }
    }

    /// Mean masked cross-entropy over a batch, multiplied by `scale`.
    pub fn loss(&self, batch: &[(TokenStream, LossMask)], scale: f64) -> Result<f64, ModelError> {
        let layout = self.layout();
        let mut sum = 0.0;
        let mut count = 0;
        for (stream, mask) in batch {
            self.check_tokens(&stream.tokens)?;
            let (s, n) = self.nll(&layout, &stream.tokens, &stream.tokens, &mask.positions, 0.0, None);
            sum += s;
            count += n;
        }
        Ok(if count == 0 { 0.0 } else { scale * sum / count as f64 })
    }

    /// Masked mean cross-entropy with targets decoupled from the inputs:
    /// row `i - 1` of the forward pass over `inputs` is scored against
    /// `targets[i]`.
    pub fn loss_with_targets(&self, inputs: &[u32], targets: &[u32], mask: &LossMask) -> Result<f64, ModelError> {
        self.check_tokens(inputs)?;
        self.check_tokens(targets)?;
        if inputs.len() != targets.len() {
            return Err(ModelError::Input(format!("{} inputs but {} targets", inputs.len(), targets.len())));
        }
        let (s, n) = self.nll(&self.layout(), inputs, targets, &mask.positions, 0.0, None);
        Ok(if n == 0 { 0.0 } else { s / n as f64 })
    }

    /// Loss as in [`loss`](Self::loss) together with its gradient.
    pub fn loss_and_grad(&self, batch: &[(TokenStream, LossMask)], scale: f64) -> Result<(f64, Vec<f64>), ModelError> {
        let layout = self.layout();
        let mut grad = vec![0.0; layout.total];
        let count: usize = batch
            .iter()
            .map(|(s, m)| m.positions.iter().filter(|&&i| i >= 1 && i < s.len()).count())
            .sum();
        if count == 0 {
            return Ok((0.0, grad));
        }
        let weight = scale / count as f64;
        let mut sum = 0.0;
        for (stream, mask) in batch {
            self.check_tokens(&stream.tokens)?;
            sum += self.nll(&layout, &stream.tokens, &stream.tokens, &mask.positions, weight, Some(&mut grad)).0;
        }
        Ok((scale * sum / count as f64, grad))
    }

    /// Per-step probabilities of the "+" label for a placeholder-masked
    /// stream, read from the distribution that predicts each score token.
    pub fn forward_step_scores(&self, stream: &TokenStream, normalization: ScoreNormalization) -> Result<StepScoreVector, ModelError> {
        self.check_tokens(&stream.tokens)?;
        let positions = stream.score_positions();
        let roles = stream.score_roles()?;
        if positions.first() == Some(&0) {
            return Err(ModelError::InvalidConfig("score token at position 0".into()));
        }
        let layout = self.layout();
        let fwd = self.forward(&layout, &stream.tokens);
        let rows: Vec<usize> = positions.iter().map(|i| i - 1).collect();
        let probs = self.distributions(&layout, &fwd, &rows);
        let mut plus = Vec::with_capacity(rows.len());
        let mut minus = Vec::with_capacity(rows.len());
        for r in 0..rows.len() {
            let (pp, pm) = (probs[[r, PLUS as usize]], probs[[r, MINUS as usize]]);
            match normalization {
                ScoreNormalization::Raw => {
                    plus.push(pp);
                    minus.push(pm);
                }
                ScoreNormalization::TwoWay => {
                    let z = pp + pm;
                    plus.push(pp / z);
                    minus.push(pm / z);
                }
            }
        }
        Ok(StepScoreVector {
            scores: plus,
            minus,
            roles,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Rescales the gradient when its global norm exceeds this value.
    pub grad_clip: Option<f64>,
    /// Linear warm-up followed by cosine decay to 10% of the peak rate.
    pub warmup_steps: usize,
    pub cosine_decay: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 200,
            learning_rate: 0.05,
            batch_size: 4,
            seed: 0,
            optimizer: Optimizer::Sgd,
            grad_clip: None,
            warmup_steps: 0,
            cosine_decay: false,
        }
    }
}

impl TrainConfig {
    /// Adam with clipping; trains the toy model on a few hundred cases in
    /// well under a minute per hundred steps.
    pub fn toy() -> Self {
        TrainConfig {
            steps: 400,
            learning_rate: 0.003,
            batch_size: 4,
            seed: 0,
            optimizer: Optimizer::adam(),
            grad_clip: Some(1.0),
            warmup_steps: 20,
            cosine_decay: true,
        }
    }

    fn rate_at(&self, step: usize) -> f64 {
        let lr = self.learning_rate;
        if step < self.warmup_steps {
            return lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        if !self.cosine_decay || self.steps <= self.warmup_steps {
            return lr;
        }
        let progress = (step - self.warmup_steps) as f64 / (self.steps - self.warmup_steps) as f64;
        let floor = 0.1 * lr;
        floor + 0.5 * (lr - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_trace: Vec<f64>,
    pub elapsed_secs: f64,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.loss_trace.iter().enumerate() {
            out.push_str(&format!("{},{l}\n", i + 1));
        }
        out
    }
}

/// Trains on streams with masks built from `variant`.
pub fn train(model: &mut ToyPrm, streams: &[TokenStream], variant: MaskVariant, config: &TrainConfig) -> Result<TrainReport, ModelError> {
    let pairs: Vec<(TokenStream, LossMask)> = streams.iter().map(|s| (s.clone(), build_loss_mask(s, variant))).collect();
    train_pairs(model, &pairs, config)
}

/// Mini-batch training over explicit (stream, mask) pairs. Batches are
/// drawn without replacement from a seeded shuffle of the corpus.
pub fn train_pairs(model: &mut ToyPrm, data: &[(TokenStream, LossMask)], config: &TrainConfig) -> Result<TrainReport, ModelError> {
    let start = Instant::now();
    if config.steps == 0 {
        return Ok(TrainReport {
            loss_trace: Vec::new(),
            elapsed_secs: 0.0,
        });
    }
    if data.is_empty() {
        return Err(ModelError::InvalidConfig("empty training corpus".into()));
    }
    if config.batch_size == 0 {
        return Err(ModelError::InvalidConfig("batch size must be positive".into()));
    }
    if let Some(longest) = data.iter().map(|(s, _)| s.len()).max().filter(|&n| n > model.config.context) {
        return Err(ModelError::InvalidConfig(format!(
            "context {} is shorter than the longest stream ({longest})",
            model.config.context
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let n = model.params.len();
    let (mut m1, mut m2) = (vec![0.0; n], vec![0.0; n]);
    let mut trace = Vec::with_capacity(config.steps);
    let mut batch = Vec::with_capacity(config.batch_size);
    for step in 0..config.steps {
        batch.clear();
        while batch.len() < config.batch_size.min(data.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(data[order[cursor]].clone());
            cursor += 1;
        }
        let (loss, mut grad) = model.loss_and_grad(&batch, 1.0)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(ModelError::NonFiniteLoss {
                step,
                loss,
                detail: format!(
                    "max |param| = {:.3e}",
                    model.params.iter().fold(0.0f64, |a, p| a.max(p.abs()))
                ),
            });
        }
        trace.push(loss);
        if let Some(clip) = config.grad_clip {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > clip {
                grad.iter_mut().for_each(|g| *g *= clip / norm);
            }
        }
        let lr = config.rate_at(step);
        match config.optimizer {
            Optimizer::Sgd => {
                for (p, g) in model.params.iter_mut().zip(&grad) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let t = (step + 1) as i32;
                let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
                for i in 0..n {
                    let g = grad[i];
                    m1[i] = beta1 * m1[i] + (1.0 - beta1) * g;
                    m2[i] = beta2 * m2[i] + (1.0 - beta2) * g * g;
                    model.params[i] -= lr * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps);
                }
            }
        }
    }
    Ok(TrainReport {
        loss_trace: trace,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Largest relative error between the analytic gradient and fourth-order
/// central differences over `samples` randomly chosen parameters (all
/// parameters when `samples` is at least the parameter count).
pub fn grad_check(model: &ToyPrm, batch: &[(TokenStream, LossMask)], samples: usize, seed: u64) -> Result<f64, ModelError> {
    const EPS: f64 = 1e-4;
    const FLOOR: f64 = 1e-6;
    let (_, analytic) = model.loss_and_grad(batch, 1.0)?;
    let mut idx: Vec<usize> = (0..model.params.len()).collect();
    if samples < idx.len() {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(samples);
    }
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in idx {
        let orig = probe.params[i];
        let mut at = |k: f64| {
            probe.params[i] = orig + k * EPS;
            probe.loss(batch, 1.0)
        };
        let numeric = (8.0 * (at(1.0)? - at(-1.0)?) - (at(2.0)? - at(-2.0)?)) / (12.0 * EPS);
        probe.params[i] = orig;
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(FLOOR);
        worst = worst.max(err);
    }
    Ok(worst)
}

pub const CHECKPOINT_FORMAT: &str = "clinic-prm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ModelConfig,
    vocab_hash: String,
    vocab: Vocabulary,
    params: Vec<f64>,
}

impl ToyPrm {
    /// JSON container with config, vocabulary and parameters. Floats are
    /// written in shortest round-trip form, so reloading is bit exact.
    pub fn to_checkpoint(&self, vocab: &Vocabulary) -> Result<String, ModelError> {
        if vocab.len() != self.config.vocab_size {
            return Err(ModelError::VocabMismatch(format!(
                "model expects {} symbols, vocabulary has {}",
                self.config.vocab_size,
                vocab.len()
            )));
        }
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config,
            vocab_hash: vocab.hash(),
            vocab: vocab.clone(),
            params: self.params.clone(),
        };
        serde_json::to_string(&file).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn from_checkpoint(text: &str) -> Result<(ToyPrm, Vocabulary), ModelError> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported checkpoint {} v{}", file.format, file.version)));
        }
        if file.vocab.hash() != file.vocab_hash {
            return Err(ModelError::VocabMismatch("checkpoint vocabulary hash does not match its table".into()));
        }
        let model = ToyPrm::from_params(file.config, file.params)?;
        Ok((model, file.vocab))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{mask_for_inference, serialize_note, MaskVariant};
    use crate::note::StructuredNote;

    fn vocab() -> Vocabulary {
        Vocabulary::toy()
    }

    fn stream(label_minus: bool) -> TokenStream {
        let mut note = StructuredNote::from_parts([("left knee pain", vec!["Order MRI of the left knee.".to_string()])]);
        if label_minus {
            note.problems[0].steps[0].label = crate::note::ScoreLabel::Minus;
            note.sync_end_of_note();
        }
        serialize_note("doctor: any fever? patient: no.", &note, &vocab()).unwrap()
    }

    fn tiny() -> ToyPrm {
        ToyPrm::init(ModelConfig::tiny(vocab().len(), 64), 11).unwrap()
    }

    #[test]
    fn same_seed_same_parameters() {
        let c = ModelConfig::tiny(vocab().len(), 32);
        assert_eq!(ToyPrm::init(c, 5).unwrap().params, ToyPrm::init(c, 5).unwrap().params);
        assert_ne!(ToyPrm::init(c, 5).unwrap().params, ToyPrm::init(c, 6).unwrap().params);
        assert!(c.parameter_count() < 10_000);
    }

    #[test]
    fn rows_are_distributions() {
        let probs = tiny().predict(&stream(false).tokens).unwrap();
        for row in probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = tiny();
        let s = stream(true);
        for v in MaskVariant::ALL {
            let batch = vec![(s.clone(), build_loss_mask(&s, v))];
            let err = grad_check(&m, &batch, 400, 1).unwrap();
            assert!(err < 1e-4, "{v}: {err}");
        }
    }

    #[test]
    fn empty_mask_has_zero_gradient_and_scale_is_linear() {
        let m = tiny();
        let s = stream(false);
        let empty = vec![(s.clone(), LossMask { variant: MaskVariant::ScoreOnly, positions: vec![] })];
        let (l, g) = m.loss_and_grad(&empty, 1.0).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
        let batch = vec![(s.clone(), build_loss_mask(&s, MaskVariant::Special))];
        let (l1, g1) = m.loss_and_grad(&batch, 1.0).unwrap();
        let (l2, g2) = m.loss_and_grad(&batch, 2.0).unwrap();
        assert!((l2 - 2.0 * l1).abs() < 1e-12);
        assert!(g1.iter().zip(&g2).all(|(a, b)| (2.0 * a - b).abs() <= 1e-12 * a.abs().max(1e-300)));
    }

    #[test]
    fn zero_steps_leave_parameters_unchanged() {
        let mut m = tiny();
        let before = m.params.clone();
        let cfg = TrainConfig { steps: 0, ..Default::default() };
        let report = train(&mut m, &[stream(false)], MaskVariant::NotesOnly, &cfg).unwrap();
        assert!(report.loss_trace.is_empty());
        assert_eq!(m.params, before);
    }

    #[test]
    fn overflowing_context_is_rejected() {
        let mut m = ToyPrm::init(ModelConfig::tiny(vocab().len(), 8), 0).unwrap();
        let err = train(&mut m, &[stream(false)], MaskVariant::NotesOnly, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, ModelError::InvalidConfig(_)));
        let err = m.forward_step_scores(&mask_for_inference(&stream(false)), ScoreNormalization::Raw).unwrap_err();
        assert!(matches!(err, ModelError::ContextOverflow { .. }));
    }

    #[test]
    fn overfitting_one_sample_recovers_its_labels() {
        let mut m = tiny();
        let s = stream(true);
        let cfg = TrainConfig {
            steps: 300,
            learning_rate: 0.02,
            batch_size: 1,
            optimizer: Optimizer::adam(),
            ..Default::default()
        };
        train(&mut m, &[s.clone()], MaskVariant::ScoreOnly, &cfg).unwrap();
        let scores = m.forward_step_scores(&s, ScoreNormalization::Raw).unwrap();
        let labels = s.score_labels();
        for (p, l) in scores.scores.iter().zip(&labels) {
            match l {
                crate::note::ScoreLabel::Plus => assert!(*p > 0.9, "{p}"),
                _ => assert!(*p < 0.1, "{p}"),
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = tiny();
        let text = m.to_checkpoint(&vocab()).unwrap();
        let (back, v) = ToyPrm::from_checkpoint(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(v, vocab());
    }
}
