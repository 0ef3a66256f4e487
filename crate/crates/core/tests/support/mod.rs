//! Independent reference implementations used as test oracles. None of them
//! call into the routines they check.

#![allow(dead_code)]

use rand::Rng;
use sica_core::nanovit::{backward, forward, AdapterConfig, Checkpoint, ModelConfig, Regime};
use sica_core::{seeds, Matrix};

pub fn uniform_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = seeds::rng(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Product of random rows × rank and rank × cols factors.
pub fn low_rank_matrix(rows: usize, cols: usize, rank: usize, seed: u64) -> Matrix {
    let a = uniform_matrix(rows, rank, seed);
    let b = uniform_matrix(rank, cols, seed ^ 0x5555);
    naive_matmul(&a, &b)
}

pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        let mut s = 0.0;
        for k in 0..a.cols() {
            s += a[(i, k)] * b[(k, j)];
        }
        s
    })
}

pub fn naive_transpose(a: &Matrix) -> Matrix {
    Matrix::from_fn(a.cols(), a.rows(), |i, j| a[(j, i)])
}

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations,
/// sorted descending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ev
}

/// Residual energy of the columns of `delta` after removing their
/// components along the columns of `basis`, re-orthonormalized by modified
/// Gram-Schmidt.
pub fn gram_schmidt_residual(delta: &Matrix, basis: &Matrix) -> f64 {
    let mut q: Vec<Vec<f64>> = Vec::new();
    for j in 0..basis.cols() {
        let mut v: Vec<f64> = (0..basis.rows()).map(|i| basis[(i, j)]).collect();
        for u in &q {
            let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(x, &ui)| *x -= d * ui);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        q.push(v.into_iter().map(|x| x / n).collect());
    }
    let mut total = 0.0;
    for j in 0..delta.cols() {
        let mut c: Vec<f64> = (0..delta.rows()).map(|i| delta[(i, j)]).collect();
        for u in &q {
            let d: f64 = u.iter().zip(&c).map(|(a, b)| a * b).sum();
            c.iter_mut().zip(u).for_each(|(x, &ui)| *x -= d * ui);
        }
        total += c.iter().map(|x| x * x).sum::<f64>();
    }
    total
}

pub fn frob_sq(m: &Matrix) -> f64 {
    m.as_slice().iter().map(|x| x * x).sum()
}

/// Pairwise Mann-Whitney count, ties one half.
pub fn brute_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let mut twice = 0u64;
    let mut pairs = 0u64;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1;
                twice += if si > sj {
                    2
                } else if si == sj {
                    1
                } else {
                    0
                };
            }
        }
    }
    (pairs > 0).then(|| twice as f64 / (2 * pairs) as f64)
}

/// Step sum over every distinct threshold, counting the confusion matrix
/// from scratch at each one.
pub fn brute_ap(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let p = labels.iter().filter(|&&l| l == 1).count();
    if p == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_tp = 0usize;
    for t in thresholds {
        let tp = scores
            .iter()
            .zip(labels)
            .filter(|(&s, &l)| s >= t && l == 1)
            .count();
        let predicted = scores.iter().filter(|&&s| s >= t).count();
        if tp > prev_tp {
            ap += ((tp - prev_tp) as f64 / p as f64) * (tp as f64 / predicted as f64);
        }
        prev_tp = tp;
    }
    Some(ap)
}

/// (tp, fp, fn, tn) at `score >= threshold`.
pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> (usize, usize, usize, usize) {
    let mut c = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, 1) => c.0 += 1,
            (true, _) => c.1 += 1,
            (false, 1) => c.2 += 1,
            (false, _) => c.3 += 1,
        }
    }
    c
}

pub fn brute_f1(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let (tp, fp, fn_, _) = confusion(scores, labels, threshold);
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn brute_acc(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let (tp, _, _, tn) = confusion(scores, labels, threshold);
    (tp + tn) as f64 / scores.len() as f64
}

fn p<'a>(ck: &'a Checkpoint, name: &str) -> &'a Matrix {
    &ck.params[name]
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh())
}

/// y = W·x + b for one vector.
fn affine(w: &Matrix, b: Option<&Matrix>, x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|i| {
            let mut s = 0.0;
            for (j, &xj) in x.iter().enumerate() {
                s += w[(i, j)] * xj;
            }
            s + b.map_or(0.0, |b| b[(0, i)])
        })
        .collect()
}

fn layer_norm(x: &[f64], gain: &Matrix, bias: &Matrix) -> Vec<f64> {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
    let sd = (var + 1e-5).sqrt();
    x.iter()
        .enumerate()
        .map(|(j, v)| gain[(0, j)] * (v - mean) / sd + bias[(0, j)])
        .collect()
}

/// Adapted projection of one token: W₀x + (α/r)·B(Ax), with dense loops.
fn projection(ck: &Checkpoint, name: &str, x: &[f64]) -> Vec<f64> {
    let mut y = affine(p(ck, name), None, x);
    if let Some(ad) = ck.adapters.get(name) {
        let low = affine(&ad.a, None, x);
        let up = affine(&ad.b, None, &low);
        let s = ad.alpha / ad.rank as f64;
        y.iter_mut().zip(up).for_each(|(o, u)| *o += s * u);
    }
    y
}

/// Logit of one sample computed token by token with plain loops.
pub fn reference_logit(ck: &Checkpoint, features: &[f64]) -> f64 {
    let cfg = &ck.config;
    let (s, d, t) = (cfg.seq_len, cfg.d_model, cfg.d_feature / cfg.seq_len);
    let heads = cfg.n_heads;
    let dh = d / heads;
    let mut h: Vec<Vec<f64>> = (0..s)
        .map(|i| {
            let mut e = affine(
                p(ck, "embed.weight"),
                Some(p(ck, "embed.bias")),
                &features[i * t..(i + 1) * t],
            );
            e.iter_mut()
                .enumerate()
                .for_each(|(j, v)| *v += p(ck, "pos")[(i, j)]);
            e
        })
        .collect();
    for l in 0..cfg.n_layers {
        let n = |x: &str| format!("layers.{l}.{x}");
        let a: Vec<Vec<f64>> = h
            .iter()
            .map(|x| layer_norm(x, p(ck, &n("ln1.gain")), p(ck, &n("ln1.bias"))))
            .collect();
        let q: Vec<Vec<f64>> = a.iter().map(|x| projection(ck, &n("attn.q"), x)).collect();
        let k: Vec<Vec<f64>> = a.iter().map(|x| projection(ck, &n("attn.k"), x)).collect();
        let v: Vec<Vec<f64>> = a.iter().map(|x| projection(ck, &n("attn.v"), x)).collect();
        let mut ctx = vec![vec![0.0; d]; s];
        for hd in 0..heads {
            let r = hd * dh..(hd + 1) * dh;
            for i in 0..s {
                let logits: Vec<f64> = (0..s)
                    .map(|j| {
                        let dot: f64 = r.clone().map(|c| q[i][c] * k[j][c]).sum();
                        dot / (dh as f64).sqrt()
                    })
                    .collect();
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
                let z: f64 = w.iter().sum();
                for c in r.clone() {
                    ctx[i][c] = (0..s).map(|j| w[j] / z * v[j][c]).sum();
                }
            }
        }
        for i in 0..s {
            let o = projection(ck, &n("attn.o"), &ctx[i]);
            h[i].iter_mut().zip(o).for_each(|(x, y)| *x += y);
        }
        for x in h.iter_mut() {
            let a2 = layer_norm(x, p(ck, &n("ln2.gain")), p(ck, &n("ln2.bias")));
            let z: Vec<f64> = affine(
                p(ck, &n("mlp.fc1.weight")),
                Some(p(ck, &n("mlp.fc1.bias"))),
                &a2,
            )
            .into_iter()
            .map(gelu)
            .collect();
            let m = affine(
                p(ck, &n("mlp.fc2.weight")),
                Some(p(ck, &n("mlp.fc2.bias"))),
                &z,
            );
            x.iter_mut().zip(m).for_each(|(a, b)| *a += b);
        }
    }
    let feats: Vec<f64> = h
        .iter()
        .flat_map(|x| layer_norm(x, p(ck, "final_ln.gain"), p(ck, "final_ln.bias")))
        .collect();
    let hidden: Vec<f64> = affine(
        p(ck, "head.fc1.weight"),
        Some(p(ck, "head.fc1.bias")),
        &feats,
    )
    .into_iter()
    .map(gelu)
    .collect();
    affine(
        p(ck, "head.fc2.weight"),
        Some(p(ck, "head.fc2.bias")),
        &hidden,
    )[0]
}

/// Φ(x) from the Abramowitz and Stegun 7.1.26 erfc approximation, absolute
/// error below 1.5e-7.
pub fn normal_cdf(x: f64) -> f64 {
    let z = x.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.327_591_1 * z);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736
                + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    let erfc = poly * (-z * z).exp();
    if x >= 0.0 {
        1.0 - 0.5 * erfc
    } else {
        0.5 * erfc
    }
}

const EPS: f64 = 1e-4;
const REL_TOL: f64 = 1e-4;
const ABS_FLOOR: f64 = 1e-6;

pub fn fixture_config() -> ModelConfig {
    ModelConfig {
        d_feature: 16,
        seq_len: 4,
        d_model: 16,
        n_heads: 2,
        n_layers: 2,
        mlp_hidden: 24,
        head_hidden: 8,
        seed: 5,
    }
}

fn batch(cfg: &ModelConfig) -> (Matrix, Vec<u8>) {
    let mut rng = seeds::rng(99);
    let x = Matrix::from_fn(cfg.d_feature, 6, |_, _| rng.random_range(-1.5..1.5));
    (x, vec![0, 1, 1, 0, 1, 0])
}

fn loss(ck: &Checkpoint, x: &Matrix, y: &[u8]) -> f64 {
    let (_, cache) = forward(ck, x).unwrap();
    backward(ck, &cache, y).unwrap().0
}

/// Checkpoint for `regime` with non-trivial adapters and perturbed norms.
pub fn gradient_fixture(regime: Regime) -> Checkpoint {
    let cfg = fixture_config();
    let base = Checkpoint::init(&cfg, Regime::Fft).unwrap();
    let mut ck = Checkpoint::adapt_from(
        &base,
        regime,
        AdapterConfig {
            rank: 3,
            alpha: 6.0,
        },
        21,
    )
    .unwrap();
    let mut rng = seeds::rng(4);
    if regime == Regime::Sica {
        for ad in ck.adapters.values_mut() {
            ad.b = Matrix::from_fn(ad.b.rows(), ad.b.cols(), |_, _| rng.random_range(-0.3..0.3));
        }
    }
    for (name, m) in ck.params.iter_mut() {
        if name.ends_with(".gain") || name.ends_with(".bias") {
            for v in m.as_mut_slice() {
                *v += rng.random_range(-0.2..0.2);
            }
        }
    }
    ck
}

/// Compares every analytic gradient entry of `regime` on the 2-layer
/// fixture with central differences; returns the number of entries checked.
pub fn gradient_check(regime: Regime) -> Result<usize, String> {
    let ck = gradient_fixture(regime);
    let (x, y) = batch(&ck.config);
    let (_, cache) = forward(&ck, &x).unwrap();
    let (_, grads) = backward(&ck, &cache, &y).unwrap();
    let names = ck.trainable_names();
    if grads.keys().cloned().collect::<Vec<_>>() != names {
        return Err(format!(
            "gradient set for {regime} differs from the trainable set"
        ));
    }
    let mut checked = 0;
    for name in &names {
        let g = &grads[name];
        let (rows, cols) = g.shape();
        for i in 0..rows {
            for j in 0..cols {
                let mut plus = ck.clone();
                plus.param_mut(name).unwrap().as_mut_slice()[i * cols + j] += EPS;
                let mut minus = ck.clone();
                minus.param_mut(name).unwrap().as_mut_slice()[i * cols + j] -= EPS;
                let numeric = (loss(&plus, &x, &y) - loss(&minus, &x, &y)) / (2.0 * EPS);
                let analytic = g[(i, j)];
                let diff = (numeric - analytic).abs();
                let scale = numeric.abs().max(analytic.abs());
                if diff > ABS_FLOOR && diff > REL_TOL * scale {
                    return Err(format!(
                        "{regime} {name}[{i},{j}]: analytic {analytic:e} numeric {numeric:e}"
                    ));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}
