use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{
    backbone_backward, backbone_forward, forward_rows, gather, sigmoid, EVAL_BATCH,
};
use super::{AdamW, Checkpoint, Grads, ModelConfig, Regime};
use crate::domgen::SampleSet;
use crate::error::{invalid, Error, Result};
use crate::{seeds, Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            lr_start: 1e-3,
            lr_end: 1e-5,
            seed: 7,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return invalid("batch_size must be positive");
        }
        if !(self.lr_end > 0.0 && self.lr_start >= self.lr_end && self.lr_start.is_finite()) {
            return invalid(format!(
                "learning rates must satisfy lr_start >= lr_end > 0, got {} and {}",
                self.lr_start, self.lr_end
            ));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }

    pub fn total_steps(&self, n: usize) -> usize {
        self.epochs * self.steps_per_epoch(n)
    }
}

/// Cosine decay from `lr_start` at step 0 to `lr_end` at `total`.
pub fn cosine_lr(step: usize, total: usize, lr_start: f64, lr_end: f64) -> f64 {
    if total == 0 {
        return lr_start;
    }
    let t = step.min(total) as f64 / total as f64;
    lr_end + 0.5 * (lr_start - lr_end) * (1.0 + (std::f64::consts::PI * t).cos())
}

/// One row per epoch; epoch 0 is the untrained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    /// Rate used by the last step of the epoch.
    pub lr: f64,
    /// Mean loss over the epoch's batches (evaluation loss for epoch 0).
    pub loss: f64,
    pub acc: f64,
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeds::rng(seeds::derive_ints(seed, &[epoch as u64])));
    idx
}

fn check_labels(data: &SampleSet) -> Result<()> {
    match data.samples.iter().find(|s| s.label > 1) {
        Some(s) => invalid(format!("sample {} has label {}", s.id, s.label)),
        None => Ok(()),
    }
}

/// Mean loss and accuracy of `ck` over `data` without updating.
pub fn evaluate(ck: &Checkpoint, data: &SampleSet) -> Result<(f64, f64)> {
    let all: Vec<usize> = (0..data.len()).collect();
    let (mut loss, mut correct) = (0.0, 0usize);
    for chunk in all.chunks(EVAL_BATCH) {
        let cache = forward_rows(ck, &gather(data, chunk)?)?;
        for (&z, &i) in cache.logits.iter().zip(chunk) {
            let y = data.samples[i].label;
            loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - f64::from(y) * z;
            correct += usize::from((sigmoid(z) >= 0.5) == (y == 1));
        }
    }
    let n = data.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains the parameters `ck.regime` leaves free. Deterministic given
/// (checkpoint, spec, data).
pub fn train(
    ck: &Checkpoint,
    spec: &TrainSpec,
    data: &SampleSet,
) -> Result<(Checkpoint, Vec<TrainLogRow>)> {
    spec.validate()?;
    ck.validate()?;
    check_labels(data)?;
    if data.is_empty() {
        return invalid("training set is empty");
    }
    let mut ck = ck.clone();
    let (loss0, acc0) = evaluate(&ck, data)?;
    let mut log = vec![TrainLogRow {
        epoch: 0,
        step: 0,
        lr: spec.lr_start,
        loss: loss0,
        acc: acc0,
    }];
    let total = spec.total_steps(data.len());
    let mut opt = AdamW::default();
    let mut step = 0;
    for epoch in 1..=spec.epochs {
        let order = epoch_order(data.len(), spec.seed, epoch);
        let (mut loss_sum, mut correct, mut lr) = (0.0, 0usize, spec.lr_start);
        let mut batches = 0usize;
        for chunk in order.chunks(spec.batch_size) {
            let x = gather(data, chunk)?;
            let labels: Vec<u8> = chunk.iter().map(|&i| data.samples[i].label).collect();
            let cache = forward_rows(&ck, &x).map_err(|e| at_step(e, epoch, step))?;
            let (loss, grads) = super::backward(&ck, &cache, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "loss diverged at epoch {epoch} step {step}"
                )));
            }
            correct += cache
                .logits
                .iter()
                .zip(&labels)
                .filter(|(&z, &y)| (z >= 0.0) == (y == 1))
                .count();
            lr = cosine_lr(step, total, spec.lr_start, spec.lr_end);
            opt.step(&mut ck, &grads, lr)?;
            loss_sum += loss;
            batches += 1;
            step += 1;
        }
        log.push(TrainLogRow {
            epoch,
            step,
            lr,
            loss: loss_sum / batches as f64,
            acc: correct as f64 / data.len() as f64,
        });
    }
    Ok((ck, log))
}

fn at_step(e: Error, epoch: usize, step: usize) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("{msg} at epoch {epoch} step {step}")),
        other => other,
    }
}

/// Backbone trained to classify domains, plus the held-out accuracy of the
/// linear domain head.
#[derive(Clone, Debug)]
pub struct Pretrained {
    pub checkpoint: Checkpoint,
    pub domain_accuracy: f64,
    pub log: Vec<TrainLogRow>,
}

struct DomainHead {
    w: Matrix,
    b: Matrix,
}

impl DomainHead {
    fn logits(&self, feats: &Matrix) -> Result<Matrix> {
        let mut z = feats.matmul_t(&self.w)?;
        for i in 0..z.rows() {
            for (o, &bv) in z.row_mut(i).iter_mut().zip(self.b.as_slice()) {
                *o += bv;
            }
        }
        Ok(z)
    }
}

fn softmax_row(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

fn domain_accuracy(
    ck: &Checkpoint,
    head: &DomainHead,
    data: &SampleSet,
    classes: &[usize],
) -> Result<f64> {
    let all: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0;
    for chunk in all.chunks(EVAL_BATCH) {
        let feats = backbone_forward(ck, &gather(data, chunk)?)?.feats;
        let z = head.logits(&feats)?;
        for (r, &i) in chunk.iter().enumerate() {
            correct += usize::from(classes[argmax(z.row(r))] == data.samples[i].domain);
        }
    }
    Ok(correct as f64 / data.len().max(1) as f64)
}

/// Supervised K-way domain classification on real samples. A tenth of the
/// samples (seeded) is held out to measure domain accuracy; the returned
/// checkpoint carries a fresh binary head.
pub fn pretrain_backbone(
    config: &ModelConfig,
    data: &SampleSet,
    spec: &TrainSpec,
) -> Result<Pretrained> {
    spec.validate()?;
    if let Some(s) = data.samples.iter().find(|s| s.label != 0) {
        return invalid(format!(
            "backbone pretraining takes real samples only, sample {} is fake",
            s.id
        ));
    }
    let classes: Vec<usize> = data.domains().into_iter().collect();
    if classes.len() < 2 {
        return invalid(format!(
            "backbone pretraining needs at least 2 domains, got {}",
            classes.len()
        ));
    }
    if data.d_feature != config.d_feature {
        return invalid(format!(
            "data has {} features, config expects {}",
            data.d_feature, config.d_feature
        ));
    }
    let class_of = |domain: usize| classes.binary_search(&domain).expect("domain listed");

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seeds::rng(seeds::derive(
        spec.seed,
        "pretrain/holdout",
    )));
    let n_val = (data.len() / 10).max(1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let pick = |idx: &[usize]| {
        SampleSet::new(
            data.d_feature,
            idx.iter().map(|&i| data.samples[i].clone()).collect(),
        )
    };
    let (train_set, val_set) = (pick(train_idx), pick(val_idx));

    let mut ck = Checkpoint::init(config, Regime::Fft)?;
    let k = classes.len();
    let width = config.feature_width();
    let mut rng = seeds::rng(seeds::derive(config.seed, "init/domain_head"));
    let dist = rand_distr::Normal::new(0.0, 1.0 / (width as f64).sqrt()).expect("valid std");
    let mut head = DomainHead {
        w: Matrix::from_fn(k, width, |_, _| {
            rand_distr::Distribution::sample(&dist, &mut rng)
        }),
        b: Matrix::zeros(1, k),
    };

    let total = spec.total_steps(train_set.len());
    let mut opt = AdamW::default();
    let mut log = Vec::new();
    let mut step = 0;
    for epoch in 1..=spec.epochs {
        let order = epoch_order(train_set.len(), spec.seed, epoch);
        let (mut loss_sum, mut correct, mut lr, mut batches) = (0.0, 0usize, spec.lr_start, 0usize);
        for chunk in order.chunks(spec.batch_size) {
            let cache = backbone_forward(&ck, &gather(&train_set, chunk)?)
                .map_err(|e| at_step(e, epoch, step))?;
            let z = head.logits(&cache.feats)?;
            let n = chunk.len() as f64;
            let mut dz = Matrix::zeros(chunk.len(), k);
            let mut loss = 0.0;
            for (r, &i) in chunk.iter().enumerate() {
                let target = class_of(train_set.samples[i].domain);
                let p = softmax_row(z.row(r));
                loss -= p[target].max(f64::MIN_POSITIVE).ln();
                correct += usize::from(argmax(z.row(r)) == target);
                for (c, o) in dz.row_mut(r).iter_mut().enumerate() {
                    *o = (p[c] - if c == target { 1.0 } else { 0.0 }) / n;
                }
            }
            loss /= n;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "pretraining loss diverged at epoch {epoch} step {step}"
                )));
            }
            let gw = dz.t_matmul(&cache.feats)?;
            let gb = Matrix::from_fn(1, k, |_, c| (0..dz.rows()).map(|r| dz[(r, c)]).sum());
            let dfeats = dz.matmul(&head.w)?;
            let mut grads = Grads::new();
            backbone_backward(&ck, &cache, &dfeats, &mut grads)?;
            lr = cosine_lr(step, total, spec.lr_start, spec.lr_end);
            opt.step(&mut ck, &grads, lr)?;
            opt.apply("domain_head.weight", &mut head.w, &gw, lr)?;
            opt.apply("domain_head.bias", &mut head.b, &gb, lr)?;
            loss_sum += loss;
            batches += 1;
            step += 1;
        }
        log.push(TrainLogRow {
            epoch,
            step,
            lr,
            loss: loss_sum / batches.max(1) as f64,
            acc: correct as f64 / train_set.len().max(1) as f64,
        });
    }
    let domain_accuracy = domain_accuracy(&ck, &head, &val_set, &classes)?;
    ck.reset_head(seeds::derive(config.seed, "init/head"));
    Ok(Pretrained {
        checkpoint: ck,
        domain_accuracy,
        log,
    })
}
