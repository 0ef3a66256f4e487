use std::collections::BTreeMap;

use super::model::{backbone_forward, gather, EVAL_BATCH};
use super::Checkpoint;
use crate::domgen::SampleSet;
use crate::error::{dim_err, invalid, Result};
use crate::matcore::svd;
use crate::Matrix;

/// Head-input features (one row per sample) and their 2-D PCA coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExport {
    pub features: Matrix,
    pub pca: Matrix,
}

pub fn export_features(ck: &Checkpoint, data: &SampleSet) -> Result<FeatureExport> {
    if data.is_empty() {
        return invalid("no samples to export");
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let width = ck.config.feature_width();
    let mut buf = Vec::with_capacity(data.len() * width);
    for chunk in all.chunks(EVAL_BATCH) {
        let cache = backbone_forward(ck, &gather(data, chunk)?)?;
        buf.extend_from_slice(cache.feats.as_slice());
    }
    let features = Matrix::from_vec(data.len(), width, buf)?;
    let pca = pca_2d(&features)?;
    Ok(FeatureExport { features, pca })
}

/// Projection of the centered rows onto the two leading principal axes,
/// found from the SVD of the covariance matrix.
pub fn pca_2d(x: &Matrix) -> Result<Matrix> {
    let (n, d) = x.shape();
    let mut means = vec![0.0; d];
    for i in 0..n {
        for (m, &v) in means.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let centered = Matrix::from_fn(n, d, |i, j| x[(i, j)] - means[j]);
    let cov = centered.t_matmul(&centered)?.scale(1.0 / n as f64);
    let f = svd(&cov)?;
    let k = 2.min(d);
    let mut out = centered.matmul(&f.v.leading_columns(k))?;
    if k < 2 {
        out = Matrix::from_fn(n, 2, |i, j| if j == 0 { out[(i, 0)] } else { 0.0 });
    }
    // remove roundoff so the column means are zero to machine precision
    for j in 0..2 {
        let mean = (0..n).map(|i| out[(i, j)]).sum::<f64>() / n as f64;
        for i in 0..n {
            out.row_mut(i)[j] -= mean;
        }
    }
    Ok(out)
}

/// Mean silhouette coefficient with Euclidean distance. Points alone in
/// their cluster score 0.
pub fn silhouette_score(points: &Matrix, labels: &[usize]) -> Result<f64> {
    let n = points.rows();
    if labels.len() != n {
        return dim_err(format!("{} labels for {n} points", labels.len()));
    }
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *sizes.entry(l).or_default() += 1;
    }
    if sizes.len() < 2 {
        return invalid("silhouette needs at least two clusters");
    }
    let clusters: Vec<usize> = sizes.keys().copied().collect();
    let slot = |l: usize| clusters.binary_search(&l).expect("known label");
    let mut total = 0.0;
    let mut sums = vec![0.0; clusters.len()];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let pi = points.row(i);
        for j in 0..n {
            if i == j {
                continue;
            }
            let d2: f64 = pi
                .iter()
                .zip(points.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            sums[slot(labels[j])] += d2.sqrt();
        }
        let own = slot(labels[i]);
        let own_size = sizes[&labels[i]];
        if own_size < 2 {
            continue;
        }
        let a = sums[own] / (own_size - 1) as f64;
        let b = clusters
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != own)
            .map(|(c, l)| sums[c] / sizes[l] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}
