//! Pre-norm decoder forward and backward passes.
//!
//! One block routine serves training (whole sequence, activations recorded),
//! prefill and single-token decoding (keys and values appended to a cache).

use log::info;

use crate::data::Image;
use crate::error::{PipeError, Result};
use crate::tensor::{gemm, matmul, Matrix, Real, View, ViewMut};

use super::input::{ModelInput, TokenSlot};
use super::params::{LayerSlots, ParamSlot, Params};
use super::vocab::CharVocabulary;
use super::ModelConfig;

const LN_EPS: f64 = 1e-5;
/// Query rows processed together in causal attention.
const ATTN_CHUNK: usize = 128;

/// Keys and values of every processed position, per layer.
#[derive(Debug, Clone)]
pub struct KvCache<T> {
    pub len: usize,
    k: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
}

impl<T: Real> KvCache<T> {
    pub fn new(cfg: &ModelConfig, capacity: usize) -> Self {
        Self {
            len: 0,
            k: (0..cfg.n_layers).map(|_| Matrix::zeros(capacity, cfg.d_model)).collect(),
            v: (0..cfg.n_layers).map(|_| Matrix::zeros(capacity, cfg.d_model)).collect(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.k.first().map_or(0, |m| m.rows)
    }

    /// Copy with room for `capacity` positions.
    pub fn resized(&self, capacity: usize) -> Self {
        assert!(capacity >= self.len);
        let grow = |ms: &[Matrix<T>]| {
            ms.iter()
                .map(|m| {
                    let mut out = Matrix::zeros(capacity, m.cols);
                    let n = self.len * m.cols;
                    out.data[..n].copy_from_slice(&m.data[..n]);
                    out
                })
                .collect()
        };
        Self {
            len: self.len,
            k: grow(&self.k),
            v: grow(&self.v),
        }
    }
}

#[derive(Debug, Clone)]
struct Norm<T> {
    xhat: Matrix<T>,
    rstd: Vec<T>,
}

#[derive(Debug, Clone)]
struct LayerTrace<T> {
    ln1: Norm<T>,
    a: Matrix<T>,
    q: Matrix<T>,
    /// Causal attention probabilities per head, `n x n`.
    probs: Vec<Matrix<T>>,
    o: Matrix<T>,
    ln2: Norm<T>,
    b: Matrix<T>,
    u: Matrix<T>,
    g: Matrix<T>,
}

/// Activations of a full-sequence forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    layers: Vec<LayerTrace<T>>,
    lnf: Norm<T>,
    f: Matrix<T>,
    cache: KvCache<T>,
    pub logits: Matrix<T>,
}

impl<T: Real> Trace<T> {
    /// Head-averaged attention of every layer, `n x n`, rows summing to one.
    pub fn attention_maps(&self) -> Vec<Matrix<f64>> {
        self.layers
            .iter()
            .map(|l| {
                let n = l.probs[0].rows;
                let mut avg = Matrix::<f64>::zeros(n, n);
                for p in &l.probs {
                    for (a, v) in avg.data.iter_mut().zip(&p.data) {
                        *a += v.f64();
                    }
                }
                let h = l.probs.len() as f64;
                avg.data.iter_mut().for_each(|a| *a /= h);
                avg
            })
            .collect()
    }
}

fn add_bias<T: Real>(m: &mut Matrix<T>, bias: &[T]) {
    for r in 0..m.rows {
        for (x, b) in m.row_mut(r).iter_mut().zip(bias) {
            *x += *b;
        }
    }
}

fn sum_rows_into<T: Real>(m: &Matrix<T>, out: &mut [T]) {
    for r in 0..m.rows {
        for (o, x) in out.iter_mut().zip(m.row(r)) {
            *o += *x;
        }
    }
}

fn add_into<T: Real>(dst: &mut Matrix<T>, src: &Matrix<T>) {
    for (d, s) in dst.data.iter_mut().zip(&src.data) {
        *d += *s;
    }
}

fn layer_norm<T: Real>(x: &Matrix<T>, g: &[T], b: &[T]) -> (Matrix<T>, Norm<T>) {
    let d = x.cols;
    let inv_d = T::of(1.0 / d as f64);
    let eps = T::of(LN_EPS);
    let mut y = Matrix::zeros(x.rows, d);
    let mut xhat = Matrix::zeros(x.rows, d);
    let mut rstd = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let rs = T::one() / (var + eps).sqrt();
        rstd.push(rs);
        let xh = xhat.row_mut(r);
        for (h, &v) in xh.iter_mut().zip(row) {
            *h = (v - mean) * rs;
        }
        let xh = xhat.row(r).to_vec();
        for ((o, h), (gg, bb)) in y.row_mut(r).iter_mut().zip(&xh).zip(g.iter().zip(b)) {
            *o = *h * *gg + *bb;
        }
    }
    (y, Norm { xhat, rstd })
}

fn layer_norm_backward<T: Real>(
    dy: &Matrix<T>,
    norm: &Norm<T>,
    g: &[T],
    dg: &mut [T],
    db: &mut [T],
) -> Matrix<T> {
    let d = dy.cols;
    let inv_d = T::of(1.0 / d as f64);
    let mut dx = Matrix::zeros(dy.rows, d);
    let mut dxhat = vec![T::zero(); d];
    for r in 0..dy.rows {
        let (dyr, xh) = (dy.row(r), norm.xhat.row(r));
        for j in 0..d {
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
            dxhat[j] = dyr[j] * g[j];
        }
        let mean_dxhat = dxhat.iter().copied().sum::<T>() * inv_d;
        let mean_dxhat_xhat = dxhat.iter().zip(xh).map(|(a, b)| *a * *b).sum::<T>() * inv_d;
        let rs = norm.rstd[r];
        for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = rs * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_A: f64 = 0.044_715;

fn gelu<T: Real>(u: T) -> T {
    let (c, a, half) = (T::of(GELU_C), T::of(GELU_A), T::of(0.5));
    half * u * (T::one() + (c * (u + a * u * u * u)).tanh())
}

fn gelu_grad<T: Real>(u: T) -> T {
    let (c, a, half) = (T::of(GELU_C), T::of(GELU_A), T::of(0.5));
    let t = (c * (u + a * u * u * u)).tanh();
    half * (T::one() + t) + half * u * (T::one() - t * t) * c * (T::one() + T::of(3.0) * a * u * u)
}

fn linear<T: Real>(x: &Matrix<T>, p: &Params<T>, w: ParamSlot) -> Matrix<T> {
    matmul(x.view(), p.view(w))
}

/// Causal softmax in place over rows `[0, rows)` of `s`, whose row `i` is
/// the query at absolute position `first_pos + i`; entries beyond the query
/// position are zeroed.
fn causal_softmax<T: Real>(s: &mut Matrix<T>, row0: usize, rows: usize, keys: usize, first_pos: usize) {
    for i in 0..rows {
        let visible = first_pos + i + 1;
        let row = &mut s.row_mut(row0 + i)[..keys];
        let max = row[..visible].iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in &mut row[..visible] {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in &mut row[..visible] {
            *v /= sum;
        }
        row[visible..].fill(T::zero());
    }
}

/// Multi-head causal attention of `q` (rows at absolute positions
/// `start..start + n`) over the first `start + n` cached keys and values.
fn attention<T: Real>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    start: usize,
    n_heads: usize,
    record: bool,
) -> (Matrix<T>, Vec<Matrix<T>>) {
    let (n, d) = (q.rows, q.cols);
    let hd = d / n_heads;
    let scale = T::of(1.0 / (hd as f64).sqrt());
    let total = start + n;
    let mut o = Matrix::zeros(n, d);
    let mut probs = Vec::new();
    let mut scratch = Matrix::zeros(if record { 0 } else { ATTN_CHUNK.min(n) }, total);
    for h in 0..n_heads {
        let mut full = Matrix::zeros(if record { n } else { 0 }, total);
        let (qh, kh, vh) = (
            q.cols_view(h * hd, hd),
            k.cols_view(h * hd, hd),
            v.cols_view(h * hd, hd),
        );
        for r0 in (0..n).step_by(ATTN_CHUNK) {
            let rows = ATTN_CHUNK.min(n - r0);
            let keys = start + r0 + rows;
            let (buf, b0) = if record { (&mut full, r0) } else { (&mut scratch, 0) };
            gemm(
                scale,
                qh.rows(r0, rows),
                kh.rows(0, keys).t(),
                T::zero(),
                ViewMut::block(buf, b0, rows, 0, keys),
            );
            causal_softmax(buf, b0, rows, keys, start + r0);
            gemm(
                T::one(),
                buf.view().rows(b0, rows).cols(0, keys),
                vh.rows(0, keys),
                T::zero(),
                ViewMut::block(&mut o, r0, rows, h * hd, hd),
            );
        }
        if record {
            probs.push(full);
        }
    }
    (o, probs)
}

fn check_input<T: Real>(cfg: &ModelConfig, input: &ModelInput, slots: &[TokenSlot], start: usize) -> Result<()> {
    if start + slots.len() > input.capacity() {
        return Err(PipeError::Shape(format!(
            "{} positions requested but the input only has {}",
            start + slots.len(),
            input.capacity()
        )));
    }
    if input.patches.cols != cfg.image.patch_len() && input.patches.rows > 0 {
        return Err(PipeError::Shape(format!(
            "patches have {} values, the model expects {}",
            input.patches.cols,
            cfg.image.patch_len()
        )));
    }
    for s in slots {
        match *s {
            TokenSlot::Text(id) if id as usize >= cfg.vocab_size => {
                return Err(PipeError::Shape(format!("token id {id} is out of range")))
            }
            TokenSlot::Vision(i) if i >= input.patches.rows => {
                return Err(PipeError::Shape(format!("patch {i} does not exist")))
            }
            _ => {}
        }
    }
    if let Some(pe) = &input.pe {
        if pe.cols != cfg.d_model || pe.rows < start + slots.len() {
            return Err(PipeError::Shape("positional embedding does not cover the input".into()));
        }
    }
    Ok(())
}

fn embed<T: Real>(
    cfg: &ModelConfig,
    p: &Params<T>,
    input: &ModelInput,
    slots: &[TokenSlot],
    start: usize,
) -> Matrix<T> {
    let d = cfg.d_model;
    let l = &p.layout;
    let mut x = Matrix::zeros(slots.len(), d);
    let vision: Vec<(usize, usize)> = slots
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match s {
            TokenSlot::Vision(pi) => Some((i, *pi)),
            TokenSlot::Text(_) => None,
        })
        .collect();
    for (i, s) in slots.iter().enumerate() {
        if let TokenSlot::Text(id) = s {
            let id = *id as usize;
            x.row_mut(i)
                .copy_from_slice(&p.get(l.tok_emb)[id * d..(id + 1) * d]);
        }
    }
    if cfg.use_vision && !vision.is_empty() {
        let pm = gather_patches::<T>(input, &vision);
        let mut e = matmul(pm.view(), p.view(l.patch_w));
        add_bias(&mut e, p.get(l.patch_b));
        for (j, &(i, _)) in vision.iter().enumerate() {
            x.row_mut(i).copy_from_slice(e.row(j));
        }
    } else {
        for &(i, _) in &vision {
            x.row_mut(i).copy_from_slice(p.get(l.null_emb));
        }
    }
    if let Some(pe) = &input.pe {
        let inv_d = 1.0 / d as f64;
        for i in 0..slots.len() {
            for (v, &e) in x.row_mut(i).iter_mut().zip(pe.row(start + i)) {
                *v += T::of(e * inv_d);
            }
        }
    }
    x
}

fn gather_patches<T: Real>(input: &ModelInput, vision: &[(usize, usize)]) -> Matrix<T> {
    let plen = input.patches.cols;
    let mut pm = Matrix::zeros(vision.len(), plen);
    for (j, &(_, pi)) in vision.iter().enumerate() {
        for (dst, &src) in pm.row_mut(j).iter_mut().zip(input.patches.row(pi)) {
            *dst = T::of(src as f64);
        }
    }
    pm
}

/// Process `slots` at positions `cache.len..`, append their keys and values
/// to `cache`, and return their logits. With `record`, also return the
/// activations needed for the backward pass.
fn forward_block<T: Real>(
    cfg: &ModelConfig,
    p: &Params<T>,
    input: &ModelInput,
    slots: &[TokenSlot],
    cache: &mut KvCache<T>,
    record: bool,
) -> Result<(Matrix<T>, Option<(Vec<LayerTrace<T>>, Norm<T>, Matrix<T>)>)> {
    let start = cache.len;
    check_input::<T>(cfg, input, slots, start)?;
    if start + slots.len() > cache.capacity() {
        return Err(PipeError::Shape("key/value cache is full".into()));
    }
    let n = slots.len();
    let d = cfg.d_model;
    let mut x = embed(cfg, p, input, slots, start);
    let mut traces = Vec::new();
    for (li, ls) in p.layout.layers.iter().enumerate() {
        let (a, ln1) = layer_norm(&x, p.get(ls.ln1_g), p.get(ls.ln1_b));
        let mut q = linear(&a, p, ls.wq);
        let mut k = linear(&a, p, ls.wk);
        let v = linear(&a, p, ls.wv);
        input.rope.rotate(&mut q, start, false);
        input.rope.rotate(&mut k, start, false);
        cache.k[li].data[start * d..(start + n) * d].copy_from_slice(&k.data);
        cache.v[li].data[start * d..(start + n) * d].copy_from_slice(&v.data);
        let (o, probs) = attention(&q, &cache.k[li], &cache.v[li], start, cfg.n_heads, record);
        gemm(T::one(), o.view(), p.view(ls.wo), T::one(), ViewMut::of(&mut x));

        let (b, ln2) = layer_norm(&x, p.get(ls.ln2_g), p.get(ls.ln2_b));
        let mut u = linear(&b, p, ls.w1);
        add_bias(&mut u, p.get(ls.b1));
        let g = u.map(gelu);
        gemm(T::one(), g.view(), p.view(ls.w2), T::one(), ViewMut::of(&mut x));
        add_bias(&mut x, p.get(ls.b2));
        if record {
            traces.push(LayerTrace {
                ln1,
                a,
                q,
                probs,
                o,
                ln2,
                b,
                u,
                g,
            });
        }
    }
    cache.len = start + n;
    let l = &p.layout;
    let (f, lnf) = layer_norm(&x, p.get(l.lnf_g), p.get(l.lnf_b));
    let mut logits = linear(&f, p, l.head_w);
    add_bias(&mut logits, p.get(l.head_b));
    Ok((logits, record.then_some((traces, lnf, f))))
}

/// Full-sequence forward pass with recorded activations.
pub fn forward_trace<T: Real>(cfg: &ModelConfig, p: &Params<T>, input: &ModelInput) -> Result<Trace<T>> {
    let mut cache = KvCache::new(cfg, input.len());
    let (logits, rec) = forward_block(cfg, p, input, &input.slots, &mut cache, true)?;
    let (layers, lnf, f) = rec.expect("recorded");
    Ok(Trace {
        layers,
        lnf,
        f,
        cache,
        logits,
    })
}

/// Logits for every slot of `input`.
pub fn forward<T: Real>(cfg: &ModelConfig, p: &Params<T>, input: &ModelInput) -> Result<Matrix<T>> {
    let mut cache = KvCache::new(cfg, input.len());
    Ok(forward_block(cfg, p, input, &input.slots, &mut cache, false)?.0)
}

/// Run `slots` through the network on top of `cache`.
pub fn extend<T: Real>(
    cfg: &ModelConfig,
    p: &Params<T>,
    input: &ModelInput,
    slots: &[TokenSlot],
    cache: &mut KvCache<T>,
) -> Result<Matrix<T>> {
    Ok(forward_block(cfg, p, input, slots, cache, false)?.0)
}

/// Mean cross-entropy over masked positions and its gradient w.r.t. logits.
fn masked_cross_entropy<T: Real>(logits: &Matrix<T>, input: &ModelInput) -> Result<(f64, Matrix<T>)> {
    let count = input.masked_count();
    if count == 0 {
        return Err(PipeError::Data("input has no label tokens to score".into()));
    }
    let inv = 1.0 / count as f64;
    let mut dlogits = Matrix::zeros(logits.rows, logits.cols);
    let mut loss = 0.0;
    for i in 0..logits.rows {
        if !input.loss_mask[i] {
            continue;
        }
        let row = logits.row(i);
        let max = row.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.f64() - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let t = input.targets[i] as usize;
        loss -= (exps[t] / sum).ln();
        for (j, g) in dlogits.row_mut(i).iter_mut().enumerate() {
            let pj = exps[j] / sum;
            let y = if j == t { 1.0 } else { 0.0 };
            *g = T::of((pj - y) * inv);
        }
    }
    Ok((loss * inv, dlogits))
}

pub fn loss<T: Real>(cfg: &ModelConfig, p: &Params<T>, input: &ModelInput) -> Result<f64> {
    let logits = forward(cfg, p, input)?;
    Ok(masked_cross_entropy(&logits, input)?.0)
}

/// Masked cross-entropy and its gradient w.r.t. every parameter.
pub fn loss_and_grad<T: Real>(cfg: &ModelConfig, p: &Params<T>, input: &ModelInput) -> Result<(f64, Vec<T>)> {
    let trace = forward_trace(cfg, p, input)?;
    let (loss, dlogits) = masked_cross_entropy(&trace.logits, input)?;
    let mut grads = vec![T::zero(); p.count()];
    backward(cfg, p, input, &trace, &dlogits, &mut grads);
    Ok((loss, grads))
}

struct GradSlots<'a, T> {
    buf: &'a mut [T],
}

impl<T: Real> GradSlots<'_, T> {
    fn slot(&mut self, s: ParamSlot) -> &mut [T] {
        &mut self.buf[s.range()]
    }

    fn matrix(&mut self, s: ParamSlot) -> ViewMut<'_, T> {
        ViewMut::from_slice(&mut self.buf[s.range()], s.rows, s.cols)
    }

    fn pair(&mut self, a: ParamSlot, b: ParamSlot) -> (&mut [T], &mut [T]) {
        assert!(a.offset + a.len() <= b.offset);
        let (lo, hi) = self.buf.split_at_mut(b.offset);
        (&mut lo[a.range()], &mut hi[..b.len()])
    }
}

/// Accumulate `d loss / d params` into `grads`.
fn backward<T: Real>(
    cfg: &ModelConfig,
    p: &Params<T>,
    input: &ModelInput,
    trace: &Trace<T>,
    dlogits: &Matrix<T>,
    grads: &mut [T],
) {
    let l = &p.layout;
    let mut gs = GradSlots { buf: grads };
    let one = T::one();

    gemm(one, trace.f.t(), dlogits.view(), one, gs.matrix(l.head_w));
    sum_rows_into(dlogits, gs.slot(l.head_b));
    let df = matmul(dlogits.view(), p.view(l.head_w).t());
    let (dg, db) = gs.pair(l.lnf_g, l.lnf_b);
    let mut dx = layer_norm_backward(&df, &trace.lnf, p.get(l.lnf_g), dg, db);

    for (li, ls) in l.layers.iter().enumerate().rev() {
        let t = &trace.layers[li];
        dx = layer_backward(cfg, p, ls, t, &trace.cache, li, input, dx, &mut gs);
    }
    embed_backward(cfg, p, input, &dx, &mut gs);
}

#[allow(clippy::too_many_arguments)]
fn layer_backward<T: Real>(
    cfg: &ModelConfig,
    p: &Params<T>,
    ls: &LayerSlots,
    t: &LayerTrace<T>,
    cache: &KvCache<T>,
    li: usize,
    input: &ModelInput,
    dx: Matrix<T>,
    gs: &mut GradSlots<'_, T>,
) -> Matrix<T> {
    let one = T::one();
    // MLP
    gemm(one, t.g.t(), dx.view(), one, gs.matrix(ls.w2));
    sum_rows_into(&dx, gs.slot(ls.b2));
    let mut du = matmul(dx.view(), p.view(ls.w2).t());
    for (d, &u) in du.data.iter_mut().zip(&t.u.data) {
        *d *= gelu_grad(u);
    }
    gemm(one, t.b.t(), du.view(), one, gs.matrix(ls.w1));
    sum_rows_into(&du, gs.slot(ls.b1));
    let dbn = matmul(du.view(), p.view(ls.w1).t());
    let (dg, db) = gs.pair(ls.ln2_g, ls.ln2_b);
    let mut dmid = layer_norm_backward(&dbn, &t.ln2, p.get(ls.ln2_g), dg, db);
    add_into(&mut dmid, &dx);

    // attention
    gemm(one, t.o.t(), dmid.view(), one, gs.matrix(ls.wo));
    let d_o = matmul(dmid.view(), p.view(ls.wo).t());
    let n = dmid.rows;
    let d = cfg.d_model;
    let k = &cache.k[li];
    let v = &cache.v[li];
    let (mut dq, mut dk, dv) = attention_backward(&d_o, &t.q, k, v, &t.probs, n, cfg.n_heads);
    input.rope.rotate(&mut dq, 0, true);
    input.rope.rotate(&mut dk, 0, true);
    gemm(one, t.a.t(), dq.view(), one, gs.matrix(ls.wq));
    gemm(one, t.a.t(), dk.view(), one, gs.matrix(ls.wk));
    gemm(one, t.a.t(), dv.view(), one, gs.matrix(ls.wv));
    let mut da = matmul(dq.view(), p.view(ls.wq).t());
    gemm(one, dk.view(), p.view(ls.wk).t(), one, ViewMut::of(&mut da));
    gemm(one, dv.view(), p.view(ls.wv).t(), one, ViewMut::of(&mut da));
    debug_assert_eq!(da.cols, d);
    let (dg, db) = gs.pair(ls.ln1_g, ls.ln1_b);
    let mut dxin = layer_norm_backward(&da, &t.ln1, p.get(ls.ln1_g), dg, db);
    add_into(&mut dxin, &dmid);
    dxin
}

fn attention_backward<T: Real>(
    d_o: &Matrix<T>,
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    probs: &[Matrix<T>],
    n: usize,
    n_heads: usize,
) -> (Matrix<T>, Matrix<T>, Matrix<T>) {
    let d = q.cols;
    let hd = d / n_heads;
    let scale = T::of(1.0 / (hd as f64).sqrt());
    let (one, zero) = (T::one(), T::zero());
    let mut dq = Matrix::zeros(n, d);
    let mut dk = Matrix::zeros(n, d);
    let mut dv = Matrix::zeros(n, d);
    let mut ds = Matrix::zeros(ATTN_CHUNK.min(n), n);
    let kv = View::from_slice(&k.data, n, d);
    let vv = View::from_slice(&v.data, n, d);
    for (h, ph) in probs.iter().enumerate() {
        let c = h * hd;
        for r0 in (0..n).step_by(ATTN_CHUNK) {
            let rows = ATTN_CHUNK.min(n - r0);
            let keys = r0 + rows;
            let pc = ph.view().rows(r0, rows).cols(0, keys);
            let doc = d_o.view().rows(r0, rows).cols(c, hd);
            gemm(one, doc, vv.rows(0, keys).cols(c, hd).t(), zero, ViewMut::block(&mut ds, 0, rows, 0, keys));
            gemm(one, pc.t(), doc, one, ViewMut::block(&mut dv, 0, keys, c, hd));
            for i in 0..rows {
                let prow = &ph.row(r0 + i)[..keys];
                let drow = &mut ds.row_mut(i)[..keys];
                let dot: T = prow.iter().zip(drow.iter()).map(|(a, b)| *a * *b).sum();
                for (dsv, &pv) in drow.iter_mut().zip(prow) {
                    *dsv = pv * (*dsv - dot);
                }
            }
            let dsv = ds.view().rows(0, rows).cols(0, keys);
            gemm(scale, dsv, kv.rows(0, keys).cols(c, hd), zero, ViewMut::block(&mut dq, r0, rows, c, hd));
            gemm(scale, dsv.t(), q.view().rows(r0, rows).cols(c, hd), one, ViewMut::block(&mut dk, 0, keys, c, hd));
        }
    }
    (dq, dk, dv)
}

fn embed_backward<T: Real>(
    cfg: &ModelConfig,
    p: &Params<T>,
    input: &ModelInput,
    dx: &Matrix<T>,
    gs: &mut GradSlots<'_, T>,
) {
    let d = cfg.d_model;
    let l = &p.layout;
    let mut vision = Vec::new();
    for (i, s) in input.slots.iter().enumerate() {
        match *s {
            TokenSlot::Text(id) => {
                let id = id as usize;
                let dst = &mut gs.slot(l.tok_emb)[id * d..(id + 1) * d];
                for (g, &v) in dst.iter_mut().zip(dx.row(i)) {
                    *g += v;
                }
            }
            TokenSlot::Vision(pi) => vision.push((i, pi)),
        }
    }
    if vision.is_empty() {
        return;
    }
    if cfg.use_vision {
        let pm = gather_patches::<T>(input, &vision);
        let mut dv = Matrix::zeros(vision.len(), d);
        for (j, &(i, _)) in vision.iter().enumerate() {
            dv.row_mut(j).copy_from_slice(dx.row(i));
        }
        gemm(T::one(), pm.t(), dv.view(), T::one(), gs.matrix(l.patch_w));
        sum_rows_into(&dv, gs.slot(l.patch_b));
    } else {
        for &(i, _) in &vision {
            for (g, &v) in gs.slot(l.null_emb).iter_mut().zip(dx.row(i)) {
                *g += v;
            }
        }
    }
}

/// Character-level multimodal forecaster with `f32` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecaster {
    pub cfg: ModelConfig,
    pub params: Params<f32>,
    pub vocab: CharVocabulary,
}

impl Forecaster {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let params = Params::init(&cfg);
        info!("initialized forecaster with {} parameters", params.count());
        Ok(Self {
            cfg,
            params,
            vocab: CharVocabulary::default(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Patch embeddings of one image, `(n_row * n_col) x d_model`, row-major
    /// patch order.
    pub fn embed_patches(&self, image: &Image) -> Result<Matrix<f32>> {
        let patches = image.patches(&self.cfg.image)?;
        let rows: Vec<Vec<f32>> = patches;
        let pm = Matrix::from_rows(&rows);
        let l = &self.params.layout;
        let mut e = matmul(pm.view(), self.params.view(l.patch_w));
        add_bias(&mut e, self.params.get(l.patch_b));
        Ok(e)
    }

    pub fn forward(&self, input: &ModelInput) -> Result<Matrix<f32>> {
        forward(&self.cfg, &self.params, input)
    }

    pub fn loss(&self, input: &ModelInput) -> Result<f64> {
        loss(&self.cfg, &self.params, input)
    }

    pub fn loss_and_grad(&self, input: &ModelInput) -> Result<(f64, Vec<f32>)> {
        loss_and_grad(&self.cfg, &self.params, input)
    }

    pub fn trace(&self, input: &ModelInput) -> Result<Trace<f32>> {
        forward_trace(&self.cfg, &self.params, input)
    }

    pub fn new_cache(&self, capacity: usize) -> KvCache<f32> {
        KvCache::new(&self.cfg, capacity)
    }

    pub fn extend(
        &self,
        input: &ModelInput,
        slots: &[TokenSlot],
        cache: &mut KvCache<f32>,
    ) -> Result<Matrix<f32>> {
        extend(&self.cfg, &self.params, input, slots, cache)
    }
}
