//! Binary classification metrics over scores and 0/1 labels.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Error, Result};
use crate::scalar::Scalar;

fn check<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<()> {
    if scores.is_empty() {
        return invalid("metric over an empty sample");
    }
    if scores.len() != labels.len() {
        return dim_err(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        ));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return invalid(format!("label {l} is not 0 or 1"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return invalid("non-finite score");
    }
    Ok(())
}

fn class_counts(labels: &[u8]) -> (u64, u64) {
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    (pos, labels.len() as u64 - pos)
}

/// Positive/negative counts of each group of tied scores, highest score first.
fn tie_groups<T: Scalar>(scores: &[T], labels: &[u8]) -> Vec<(u64, u64)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut prev: Option<T> = None;
    for i in idx {
        if prev != Some(scores[i]) {
            groups.push((0, 0));
            prev = Some(scores[i]);
        }
        let g = groups.last_mut().expect("group pushed");
        if labels[i] == 1 {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Fraction of samples where `score >= threshold` agrees with the label.
pub fn accuracy<T: Scalar>(scores: &[T], labels: &[u8], threshold: T) -> Result<f64> {
    check(scores, labels)?;
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| (s >= threshold) == (l == 1))
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<f64> {
    check(scores, labels)?;
    let (p, n) = class_counts(labels);
    if p == 0 || n == 0 {
        return Err(Error::Undefined("AUC needs both classes".into()));
    }
    // twice the Mann-Whitney count, kept integral
    let mut twice: u128 = 0;
    let mut neg_below = n;
    for (gp, gn) in tie_groups(scores, labels) {
        neg_below -= gn;
        twice += 2 * u128::from(gp) * u128::from(neg_below) + u128::from(gp) * u128::from(gn);
    }
    Ok(twice as f64 / (2 * u128::from(p) * u128::from(n)) as f64)
}

/// Non-interpolated average precision; tied scores form one step.
pub fn average_precision<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<f64> {
    check(scores, labels)?;
    let (p, _) = class_counts(labels);
    if p == 0 {
        return Err(Error::Undefined(
            "average precision needs a positive".into(),
        ));
    }
    let (mut tp, mut pp, mut ap) = (0u64, 0u64, 0.0);
    for (gp, gn) in tie_groups(scores, labels) {
        tp += gp;
        pp += gp + gn;
        if gp > 0 {
            ap += (gp as f64 / p as f64) * (tp as f64 / pp as f64);
        }
    }
    Ok(ap)
}

/// F1 at `score >= threshold`; 0 when nothing is both predicted and positive.
pub fn f1<T: Scalar>(scores: &[T], labels: &[u8], threshold: T) -> Result<f64> {
    check(scores, labels)?;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    Ok((2 * tp) as f64 / (2 * tp + fp + fn_) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Acc,
    Auc,
    Ap,
    F1,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "acc" => Ok(Metric::Acc),
            "auc" => Ok(Metric::Auc),
            "ap" => Ok(Metric::Ap),
            "f1" => Ok(Metric::F1),
            other => invalid(format!("unknown metric {other:?}")),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Acc => "acc",
            Metric::Auc => "auc",
            Metric::Ap => "ap",
            Metric::F1 => "f1",
        })
    }
}

/// All four metrics on one sample. Ranking metrics are absent when a class
/// is missing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub acc: f64,
    pub auc: Option<f64>,
    pub ap: Option<f64>,
    pub f1: f64,
    pub n: usize,
}

impl MetricBundle {
    pub fn compute<T: Scalar>(scores: &[T], labels: &[u8], threshold: T) -> Result<Self> {
        let defined = |r: Result<f64>| match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::Undefined(_)) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(Self {
            acc: accuracy(scores, labels, threshold)?,
            auc: defined(auc(scores, labels))?,
            ap: defined(average_precision(scores, labels))?,
            f1: f1(scores, labels, threshold)?,
            n: scores.len(),
        })
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Acc => Some(self.acc),
            Metric::Auc => self.auc,
            Metric::Ap => self.ap,
            Metric::F1 => Some(self.f1),
        }
    }
}
