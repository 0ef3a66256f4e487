//! Forward and reverse passes.
//!
//! Activations are row-major with one row per token: a batch of B samples
//! becomes a (B·seq_len)×d_model matrix, and a weight `W` (out×in) acts as
//! `Y = X·Wᵀ`. The flattened final-norm token states (B×seq_len·d_model)
//! are the features read by the head.

use std::collections::BTreeMap;

use super::{param_group, Checkpoint, ParamGroup};
use crate::domgen::SampleSet;
use crate::error::{dim_err, invalid, Error, Result};
use crate::{LoraAdapter, Matrix};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Gradients keyed by parameter name (adapters as `<proj>.lora_a|lora_b`).
pub type Grads = BTreeMap<String, Matrix>;

struct LnCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

struct LayerCache {
    ln1: LnCache,
    a1: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// `X·Aᵀ` for each adapted projection, in q, k, v, o order.
    lows: [Option<Matrix>; 4],
    probs: Vec<f64>,
    ctx: Matrix,
    ln2: LnCache,
    a2: Matrix,
    z: Matrix,
    g: Matrix,
}

pub(crate) struct BackboneCache {
    batch: usize,
    tokens: Matrix,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    /// B × (seq_len·d_model)
    pub(crate) feats: Matrix,
}

/// Everything the reverse pass needs from a forward pass.
pub struct ForwardCache {
    backbone: BackboneCache,
    head_z: Matrix,
    head_a: Matrix,
    pub logits: Vec<f64>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.backbone.batch
    }

    pub fn features(&self) -> &Matrix {
        &self.backbone.feats
    }
}

/// tanh through a single exponential; saturates beyond |x| = 20.
#[inline]
fn tanh_exp(x: f64) -> f64 {
    if x > 20.0 {
        1.0
    } else if x < -20.0 {
        -1.0
    } else {
        let e = (2.0 * x).exp();
        (e - 1.0) / (e + 1.0)
    }
}

#[inline]
pub(crate) fn gelu(x: f64) -> f64 {
    let t = tanh_exp(GELU_C * (x + 0.044715 * x * x * x));
    0.5 * x * (1.0 + t)
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    let t = tanh_exp(GELU_C * (x + 0.044715 * x * x * x));
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + eᶻ) without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn p<'a>(ck: &'a Checkpoint, name: &str) -> &'a Matrix {
    ck.params
        .get(name)
        .unwrap_or_else(|| panic!("validated checkpoint lacks {name}"))
}

fn add_bias(y: &mut Matrix, bias: &Matrix) {
    let b = bias.as_slice();
    for i in 0..y.rows() {
        for (x, &bv) in y.row_mut(i).iter_mut().zip(b) {
            *x += bv;
        }
    }
}

fn column_sums(m: &Matrix) -> Matrix {
    let mut out = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (o, &x) in out.iter_mut().zip(m.row(i)) {
            *o += x;
        }
    }
    Matrix::from_fn(1, m.cols(), |_, j| out[j])
}

fn layer_norm(x: &Matrix, gain: &Matrix, bias: &Matrix) -> (Matrix, LnCache) {
    let (rows, d) = x.shape();
    let mut xhat = Matrix::zeros(rows, d);
    let mut y = Matrix::zeros(rows, d);
    let mut inv_std = Vec::with_capacity(rows);
    let (g, b) = (gain.as_slice(), bias.as_slice());
    for i in 0..rows {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(inv);
        let xh = xhat.row_mut(i);
        for (o, &v) in xh.iter_mut().zip(row) {
            *o = (v - mean) * inv;
        }
        let xh = xhat.row(i).to_vec();
        for (j, o) in y.row_mut(i).iter_mut().enumerate() {
            *o = g[j] * xh[j] + b[j];
        }
    }
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward(dy: &Matrix, cache: &LnCache, gain: &Matrix) -> (Matrix, Matrix, Matrix) {
    let (rows, d) = dy.shape();
    let g = gain.as_slice();
    let mut dx = Matrix::zeros(rows, d);
    let mut dgain = vec![0.0; d];
    let mut dbias = vec![0.0; d];
    let mut dxhat = vec![0.0; d];
    for i in 0..rows {
        let dyr = dy.row(i);
        let xh = cache.xhat.row(i);
        let mut sum = 0.0;
        let mut sum_x = 0.0;
        for j in 0..d {
            dgain[j] += dyr[j] * xh[j];
            dbias[j] += dyr[j];
            dxhat[j] = dyr[j] * g[j];
            sum += dxhat[j];
            sum_x += dxhat[j] * xh[j];
        }
        let inv = cache.inv_std[i];
        let n = d as f64;
        for (j, o) in dx.row_mut(i).iter_mut().enumerate() {
            *o = inv / n * (n * dxhat[j] - sum - xh[j] * sum_x);
        }
    }
    (
        dx,
        Matrix::from_fn(1, d, |_, j| dgain[j]),
        Matrix::from_fn(1, d, |_, j| dbias[j]),
    )
}

/// `X·Wᵀ (+ s·(X·Aᵀ)·Bᵀ)`; returns the output and the low-rank activation.
fn project(x: &Matrix, w: &Matrix, ad: Option<&LoraAdapter>) -> (Matrix, Option<Matrix>) {
    let mut y = x.matmul_t(w).expect("projection shapes");
    let low = ad.map(|ad| {
        let low = x.matmul_t(&ad.a).expect("adapter shapes");
        let up = low.matmul_t(&ad.b).expect("adapter shapes");
        y.axpy(ad.scaling(), &up).expect("adapter shapes");
        low
    });
    (y, low)
}

struct ProjectionGrad<'a> {
    name: &'a str,
    weight_trainable: bool,
    adapter_trainable: bool,
    need_dx: bool,
}

fn project_backward(
    dy: &Matrix,
    x: &Matrix,
    w: &Matrix,
    ad: Option<&LoraAdapter>,
    low: Option<&Matrix>,
    spec: ProjectionGrad<'_>,
    grads: &mut Grads,
) -> Option<Matrix> {
    if spec.weight_trainable {
        grads.insert(spec.name.to_string(), dy.t_matmul(x).expect("grad shapes"));
    }
    let mut dx = spec.need_dx.then(|| dy.matmul(w).expect("grad shapes"));
    if let (Some(ad), Some(low)) = (ad, low) {
        let s = ad.scaling();
        let dlow = dy.matmul(&ad.b).expect("grad shapes").scale(s);
        if spec.adapter_trainable {
            grads.insert(
                format!("{}.lora_b", spec.name),
                dy.t_matmul(low).expect("grad shapes").scale(s),
            );
            grads.insert(
                format!("{}.lora_a", spec.name),
                dlow.t_matmul(x).expect("grad shapes"),
            );
        }
        if let Some(dx) = dx.as_mut() {
            dx.axpy(1.0, &dlow.matmul(&ad.a).expect("grad shapes"))
                .expect("grad shapes");
        }
    }
    dx
}

struct AttnDims {
    batch: usize,
    seq: usize,
    heads: usize,
    dh: usize,
}

fn attention(q: &Matrix, k: &Matrix, v: &Matrix, dims: &AttnDims) -> (Matrix, Vec<f64>) {
    let AttnDims {
        batch,
        seq,
        heads,
        dh,
    } = *dims;
    let d = heads * dh;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut probs = vec![0.0; batch * heads * seq * seq];
    let mut ctx = Matrix::zeros(batch * seq, d);
    let (qs, ks, vs) = (q.as_slice(), k.as_slice(), v.as_slice());
    let out = ctx.as_mut_slice();
    for b in 0..batch {
        for h in 0..heads {
            let off = h * dh;
            for i in 0..seq {
                let qi = &qs[(b * seq + i) * d + off..][..dh];
                let prow = &mut probs[((b * heads + h) * seq + i) * seq..][..seq];
                let mut max = f64::NEG_INFINITY;
                for (j, pj) in prow.iter_mut().enumerate() {
                    let kj = &ks[(b * seq + j) * d + off..][..dh];
                    let s: f64 = qi.iter().zip(kj).map(|(a, c)| a * c).sum::<f64>() * scale;
                    *pj = s;
                    max = max.max(s);
                }
                let mut z = 0.0;
                for pj in prow.iter_mut() {
                    *pj = (*pj - max).exp();
                    z += *pj;
                }
                let ci = &mut out[(b * seq + i) * d + off..][..dh];
                for (j, pj) in prow.iter_mut().enumerate() {
                    *pj /= z;
                    let vj = &vs[(b * seq + j) * d + off..][..dh];
                    for (c, &vv) in ci.iter_mut().zip(vj) {
                        *c += *pj * vv;
                    }
                }
            }
        }
    }
    (ctx, probs)
}

fn attention_backward(
    dctx: &Matrix,
    cache: &LayerCache,
    dims: &AttnDims,
) -> (Matrix, Matrix, Matrix) {
    let AttnDims {
        batch,
        seq,
        heads,
        dh,
    } = *dims;
    let d = heads * dh;
    let scale = 1.0 / (dh as f64).sqrt();
    let rows = batch * seq;
    let (mut dq, mut dk, mut dv) = (
        Matrix::zeros(rows, d),
        Matrix::zeros(rows, d),
        Matrix::zeros(rows, d),
    );
    let (qs, ks, vs, dc) = (
        cache.q.as_slice(),
        cache.k.as_slice(),
        cache.v.as_slice(),
        dctx.as_slice(),
    );
    let mut dp = vec![0.0; seq];
    for b in 0..batch {
        for h in 0..heads {
            let off = h * dh;
            for i in 0..seq {
                let prow = &cache.probs[((b * heads + h) * seq + i) * seq..][..seq];
                let dci = &dc[(b * seq + i) * d + off..][..dh];
                let mut dot_pd = 0.0;
                for j in 0..seq {
                    let vj = &vs[(b * seq + j) * d + off..][..dh];
                    dp[j] = dci.iter().zip(vj).map(|(a, c)| a * c).sum();
                    dot_pd += prow[j] * dp[j];
                    let dvj = &mut dv.as_mut_slice()[(b * seq + j) * d + off..][..dh];
                    for (o, &g) in dvj.iter_mut().zip(dci) {
                        *o += prow[j] * g;
                    }
                }
                let qi = &qs[(b * seq + i) * d + off..][..dh];
                for j in 0..seq {
                    let ds = prow[j] * (dp[j] - dot_pd) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let kj = &ks[(b * seq + j) * d + off..][..dh];
                    let dqi = &mut dq.as_mut_slice()[(b * seq + i) * d + off..][..dh];
                    for (o, &kv) in dqi.iter_mut().zip(kj) {
                        *o += ds * kv;
                    }
                    let dkj = &mut dk.as_mut_slice()[(b * seq + j) * d + off..][..dh];
                    for (o, &qv) in dkj.iter_mut().zip(qi) {
                        *o += ds * qv;
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

fn ensure_finite(m: &Matrix, stage: &str) -> Result<()> {
    if m.as_slice().iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "non-finite activation in {stage}"
        )))
    }
}

/// Backbone pass over `x` (B × d_feature, one sample per row).
pub(crate) fn backbone_forward(ck: &Checkpoint, x: &Matrix) -> Result<BackboneCache> {
    let cfg = &ck.config;
    if x.cols() != cfg.d_feature {
        return dim_err(format!(
            "batch has {} features, model expects {}",
            x.cols(),
            cfg.d_feature
        ));
    }
    let (batch, seq, d) = (x.rows(), cfg.seq_len, cfg.d_model);
    let dims = AttnDims {
        batch,
        seq,
        heads: cfg.n_heads,
        dh: cfg.head_dim(),
    };
    let tokens = x.clone().reshape(batch * seq, cfg.token_dim())?;
    let mut h = tokens.matmul_t(p(ck, "embed.weight"))?;
    add_bias(&mut h, p(ck, "embed.bias"));
    let pos = p(ck, "pos");
    for r in 0..batch * seq {
        for (o, &pv) in h.row_mut(r).iter_mut().zip(pos.row(r % seq)) {
            *o += pv;
        }
    }
    ensure_finite(&h, "embedding")?;

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let name = |s: &str| format!("layers.{l}.{s}");
        let (a1, ln1) = layer_norm(&h, p(ck, &name("ln1.gain")), p(ck, &name("ln1.bias")));
        let proj = |which: &str, input: &Matrix| {
            let n = name(&format!("attn.{which}"));
            project(input, p(ck, &n), ck.adapters.get(&n))
        };
        let (q, lq) = proj("q", &a1);
        let (k, lk) = proj("k", &a1);
        let (v, lv) = proj("v", &a1);
        let (ctx, probs) = attention(&q, &k, &v, &dims);
        let (attn_out, lo) = proj("o", &ctx);
        h.axpy(1.0, &attn_out)?;

        let (a2, ln2) = layer_norm(&h, p(ck, &name("ln2.gain")), p(ck, &name("ln2.bias")));
        let mut z = a2.matmul_t(p(ck, &name("mlp.fc1.weight")))?;
        add_bias(&mut z, p(ck, &name("mlp.fc1.bias")));
        let g = z.map(gelu);
        let mut m = g.matmul_t(p(ck, &name("mlp.fc2.weight")))?;
        add_bias(&mut m, p(ck, &name("mlp.fc2.bias")));
        h.axpy(1.0, &m)?;
        ensure_finite(&h, &format!("layer {l}"))?;

        layers.push(LayerCache {
            ln1,
            a1,
            q,
            k,
            v,
            lows: [lq, lk, lv, lo],
            probs,
            ctx,
            ln2,
            a2,
            z,
            g,
        });
    }
    let (out, lnf) = layer_norm(&h, p(ck, "final_ln.gain"), p(ck, "final_ln.bias"));
    let feats = out.reshape(batch, seq * d)?;
    Ok(BackboneCache {
        batch,
        tokens,
        layers,
        lnf,
        feats,
    })
}

fn wants_backbone_grads(ck: &Checkpoint) -> bool {
    ck.trainable_names()
        .iter()
        .any(|n| param_group(n) != ParamGroup::Head)
}

/// Stores the gradient of `name`, computing it only when the parameter trains.
fn put(
    ck: &Checkpoint,
    grads: &mut Grads,
    name: String,
    g: impl FnOnce() -> Result<Matrix>,
) -> Result<()> {
    if ck.is_trainable(&name) {
        grads.insert(name, g()?);
    }
    Ok(())
}

/// Reverse pass through the backbone, given the gradient of the features.
pub(crate) fn backbone_backward(
    ck: &Checkpoint,
    cache: &BackboneCache,
    dfeats: &Matrix,
    grads: &mut Grads,
) -> Result<()> {
    if !wants_backbone_grads(ck) {
        return Ok(());
    }
    let cfg = &ck.config;
    let (batch, seq, d) = (cache.batch, cfg.seq_len, cfg.d_model);
    let dims = AttnDims {
        batch,
        seq,
        heads: cfg.n_heads,
        dh: cfg.head_dim(),
    };
    let train = |n: &str| ck.is_trainable(n);

    let dout = dfeats.clone().reshape(batch * seq, d)?;
    let (mut dh, dg, db) = layer_norm_backward(&dout, &cache.lnf, p(ck, "final_ln.gain"));
    put(ck, grads, "final_ln.gain".into(), || Ok(dg))?;
    put(ck, grads, "final_ln.bias".into(), || Ok(db))?;

    let embed_trainable = train("embed.weight") || train("embed.bias") || train("pos");
    for l in (0..cfg.n_layers).rev() {
        let lc = &cache.layers[l];
        let name = |s: &str| format!("layers.{l}.{s}");
        let need_input = l > 0 || embed_trainable || train(&name("ln1.gain"));

        // MLP branch
        let w2 = p(ck, &name("mlp.fc2.weight"));
        put(ck, grads, name("mlp.fc2.weight"), || dh.t_matmul(&lc.g))?;
        put(ck, grads, name("mlp.fc2.bias"), || Ok(column_sums(&dh)))?;
        let mut dz = dh.matmul(w2)?;
        for (o, &zv) in dz.as_mut_slice().iter_mut().zip(lc.z.as_slice()) {
            *o *= gelu_grad(zv);
        }
        put(ck, grads, name("mlp.fc1.weight"), || dz.t_matmul(&lc.a2))?;
        put(ck, grads, name("mlp.fc1.bias"), || Ok(column_sums(&dz)))?;
        let da2 = dz.matmul(p(ck, &name("mlp.fc1.weight")))?;
        let (dx2, dg2, db2) = layer_norm_backward(&da2, &lc.ln2, p(ck, &name("ln2.gain")));
        put(ck, grads, name("ln2.gain"), || Ok(dg2))?;
        put(ck, grads, name("ln2.bias"), || Ok(db2))?;
        dh.axpy(1.0, &dx2)?;

        // attention branch
        let pg = |which: &str, need_dx: bool| {
            let n = name(&format!("attn.{which}"));
            let weight_trainable = train(&n);
            let adapter_trainable = train(&format!("{n}.lora_a"));
            (n, weight_trainable, adapter_trainable, need_dx)
        };
        let [lq, lk, lv, lo] = &lc.lows;
        let (n_o, wt, at, _) = pg("o", true);
        let dctx = project_backward(
            &dh,
            &lc.ctx,
            p(ck, &n_o),
            ck.adapters.get(&n_o),
            lo.as_ref(),
            ProjectionGrad {
                name: &n_o,
                weight_trainable: wt,
                adapter_trainable: at,
                need_dx: true,
            },
            grads,
        )
        .expect("dx requested");
        let (dq, dk, dv) = attention_backward(&dctx, lc, &dims);
        let mut da1: Option<Matrix> = None;
        for (which, dy, low) in [("q", &dq, lq), ("k", &dk, lk), ("v", &dv, lv)] {
            let (n, wt, at, need) = pg(which, need_input);
            if let Some(dx) = project_backward(
                dy,
                &lc.a1,
                p(ck, &n),
                ck.adapters.get(&n),
                low.as_ref(),
                ProjectionGrad {
                    name: &n,
                    weight_trainable: wt,
                    adapter_trainable: at,
                    need_dx: need,
                },
                grads,
            ) {
                match da1.as_mut() {
                    Some(acc) => acc.axpy(1.0, &dx)?,
                    None => da1 = Some(dx),
                }
            }
        }
        if let Some(da1) = da1 {
            let (dx1, dg1, db1) = layer_norm_backward(&da1, &lc.ln1, p(ck, &name("ln1.gain")));
            put(ck, grads, name("ln1.gain"), || Ok(dg1))?;
            put(ck, grads, name("ln1.bias"), || Ok(db1))?;
            dh.axpy(1.0, &dx1)?;
        }
    }

    if embed_trainable {
        put(ck, grads, "embed.weight".into(), || {
            dh.t_matmul(&cache.tokens)
        })?;
        put(ck, grads, "embed.bias".into(), || Ok(column_sums(&dh)))?;
        let mut dpos = Matrix::zeros(seq, d);
        for r in 0..batch * seq {
            for (o, &g) in dpos.row_mut(r % seq).iter_mut().zip(dh.row(r)) {
                *o += g;
            }
        }
        put(ck, grads, "pos".into(), || Ok(dpos))?;
    }
    Ok(())
}

/// Binary head over flattened features: logits plus pre/post activations.
fn head_forward(ck: &Checkpoint, feats: &Matrix) -> Result<(Matrix, Matrix, Vec<f64>)> {
    let mut z = feats.matmul_t(p(ck, "head.fc1.weight"))?;
    add_bias(&mut z, p(ck, "head.fc1.bias"));
    let a = z.map(gelu);
    let mut out = a.matmul_t(p(ck, "head.fc2.weight"))?;
    add_bias(&mut out, p(ck, "head.fc2.bias"));
    let logits = out.into_vec();
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite logit in head".into()));
    }
    Ok((z, a, logits))
}

pub(crate) fn forward_rows(ck: &Checkpoint, x: &Matrix) -> Result<ForwardCache> {
    let backbone = backbone_forward(ck, x)?;
    let (head_z, head_a, logits) = head_forward(ck, &backbone.feats)?;
    Ok(ForwardCache {
        backbone,
        head_z,
        head_a,
        logits,
    })
}

/// Logits for a batch given as d_feature × batch (one sample per column).
pub fn forward(ck: &Checkpoint, batch: &Matrix) -> Result<(Vec<f64>, ForwardCache)> {
    let cache = forward_rows(ck, &batch.transpose())?;
    Ok((cache.logits.clone(), cache))
}

/// Mean binary cross-entropy over the batch and gradients for the
/// parameters the checkpoint's regime trains.
pub fn backward(ck: &Checkpoint, cache: &ForwardCache, labels: &[u8]) -> Result<(f64, Grads)> {
    let n = cache.logits.len();
    if labels.len() != n {
        return dim_err(format!("{} labels for a batch of {n}", labels.len()));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return invalid(format!("label {bad} is not 0 or 1"));
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut dlogit = Vec::with_capacity(n);
    for (&z, &y) in cache.logits.iter().zip(labels) {
        let y = f64::from(y);
        loss += softplus(z) - y * z;
        dlogit.push((sigmoid(z) - y) * inv_n);
    }
    loss *= inv_n;

    let mut grads = Grads::new();
    let dl = Matrix::from_vec(n, 1, dlogit)?;
    grads.insert("head.fc2.weight".into(), dl.t_matmul(&cache.head_a)?);
    grads.insert("head.fc2.bias".into(), column_sums(&dl));
    let mut dz = dl.matmul(p(ck, "head.fc2.weight"))?;
    for (o, &zv) in dz.as_mut_slice().iter_mut().zip(cache.head_z.as_slice()) {
        *o *= gelu_grad(zv);
    }
    grads.insert(
        "head.fc1.weight".into(),
        dz.t_matmul(&cache.backbone.feats)?,
    );
    grads.insert("head.fc1.bias".into(), column_sums(&dz));
    if wants_backbone_grads(ck) {
        let dfeats = dz.matmul(p(ck, "head.fc1.weight"))?;
        backbone_backward(ck, &cache.backbone, &dfeats, &mut grads)?;
    }
    Ok((loss, grads))
}

/// Stacks the features of `idx` into a B × d_feature matrix.
pub(crate) fn gather(data: &SampleSet, idx: &[usize]) -> Result<Matrix> {
    let d = data.d_feature;
    let mut buf = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        buf.extend_from_slice(&data.samples[i].features);
    }
    Matrix::from_vec(idx.len(), d, buf)
}

pub(crate) const EVAL_BATCH: usize = 512;

/// Sigmoid scores, one per sample, in data order.
pub fn predict_scores(ck: &Checkpoint, data: &SampleSet) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in all.chunks(EVAL_BATCH) {
        let cache = forward_rows(ck, &gather(data, chunk)?)?;
        out.extend(cache.logits.iter().map(|&z| sigmoid(z)));
    }
    Ok(out)
}
