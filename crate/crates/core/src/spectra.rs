//! Where does a weight update live relative to the principal singular
//! subspace of the frozen weight?
//!
//! For a frozen `W₀ = UΣVᵀ` and an update `ΔW`, the top-`k` left/right
//! singular vectors define orthogonal projectors `P_L = U_k U_kᵀ` and
//! `P_R = V_k V_kᵀ`. The outside-energy ratio is the share of `‖ΔW‖²_F` left
//! in the residual after projection, and the subspace cosine is the cosine
//! between `vec(ΔW)` and its projection. For an orthogonal projector the two
//! are tied by `sim² + r = 1` on each side.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adapt::LoraAdapter;
use crate::error::{dim_err, invalid, Error, Result};
use crate::matcore::{orthonormal_check, svd, top_k, Matrix, SubspaceBasis, SvdFactors};
use crate::scalar::Scalar;
use crate::seeds;

/// Update scheme being analyzed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Fft,
    Effort,
    Sica,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fft" => Ok(Scheme::Fft),
            "effort" => Ok(Scheme::Effort),
            "sica" => Ok(Scheme::Sica),
            other => invalid(format!("unknown scheme {other:?}")),
        }
    }
}

/// The data needed to rebuild ΔW for one scheme.
#[derive(Clone, Debug)]
pub enum DeltaSpec<T> {
    /// Fully fine-tuned weight; ΔW = W_fft − W₀.
    Fft(Matrix<T>),
    /// Update confined to the residual singular directions of W₀:
    /// ΔW = U[:, k:]·diag(σ̂)·V[:, k:]ᵀ with `sigma_hat.len() == d − k`.
    Effort { sigma_hat: Vec<T>, k: usize },
    /// ΔW = (α/r)·B·A
    Sica(LoraAdapter<T>),
}

impl<T> DeltaSpec<T> {
    pub fn scheme(&self) -> Scheme {
        match self {
            DeltaSpec::Fft(_) => Scheme::Fft,
            DeltaSpec::Effort { .. } => Scheme::Effort,
            DeltaSpec::Sica(_) => Scheme::Sica,
        }
    }
}

pub fn build_delta<T: Scalar>(w0: &Matrix<T>, spec: &DeltaSpec<T>) -> Result<Matrix<T>> {
    match spec {
        DeltaSpec::Fft(w) => {
            if w.shape() != w0.shape() {
                return dim_err(format!(
                    "fine-tuned weight {:?} vs W0 {:?}",
                    w.shape(),
                    w0.shape()
                ));
            }
            w.sub(w0)
        }
        DeltaSpec::Effort { sigma_hat, k } => {
            let f = svd(w0)?;
            effort_delta(&f, sigma_hat, *k)
        }
        DeltaSpec::Sica(ad) => {
            if ad.dims() != w0.shape() {
                return dim_err(format!("adapter {:?} vs W0 {:?}", ad.dims(), w0.shape()));
            }
            Ok(ad.delta())
        }
    }
}

/// Residual-subspace update from precomputed factors of W₀.
pub fn effort_delta<T: Scalar>(f: &SvdFactors<T>, sigma_hat: &[T], k: usize) -> Result<Matrix<T>> {
    let d = f.rank_dim();
    if k >= d {
        return invalid(format!("effort k = {k} must be below d = {d}"));
    }
    if sigma_hat.len() != d - k {
        return dim_err(format!(
            "effort needs {} residual values, got {}",
            d - k,
            sigma_hat.len()
        ));
    }
    let mut ur = f.u.trailing_columns(k);
    let vr = f.v.trailing_columns(k);
    for i in 0..ur.rows() {
        for (x, &s) in ur.row_mut(i).iter_mut().zip(sigma_hat) {
            *x = *x * s;
        }
    }
    ur.matmul_t(&vr)
}

/// Draws σ̂ uniformly in [0.5, 1.5] × the mean of the excluded singular values.
pub fn effort_sigma_hat<T: Scalar>(f: &SvdFactors<T>, k: usize, seed: u64) -> Result<Vec<T>> {
    let d = f.rank_dim();
    if k >= d {
        return invalid(format!("effort k = {k} must be below d = {d}"));
    }
    let tail = &f.s[k..];
    let mean = tail.iter().map(|x| x.as_f64()).sum::<f64>() / tail.len() as f64;
    // an all-zero tail still needs a non-zero update
    let base = if mean > 0.0 { mean } else { 1.0 };
    let mut rng = seeds::rng(seed);
    Ok(tail
        .iter()
        .map(|_| T::lit(rng.random_range(0.5..=1.5) * base))
        .collect())
}

/// `(P_L, P_R) = (U_k U_kᵀ, V_k V_kᵀ)`.
pub fn projectors<T: Scalar>(basis: &SubspaceBasis<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    let tol = T::lit(1e-8);
    if !orthonormal_check(&basis.uk, tol) || !orthonormal_check(&basis.vk, tol) {
        return invalid("subspace basis is not orthonormal");
    }
    Ok((basis.uk.matmul_t(&basis.uk)?, basis.vk.matmul_t(&basis.vk)?))
}

/// Projections of ΔW onto the left/right subspaces and their residuals.
#[derive(Clone, Debug)]
pub struct Decomposition<T> {
    pub pi_left: Matrix<T>,
    pub res_left: Matrix<T>,
    pub pi_right: Matrix<T>,
    pub res_right: Matrix<T>,
}

fn check_delta<T: Scalar>(delta: &Matrix<T>, basis: &SubspaceBasis<T>) -> Result<()> {
    if delta.rows() != basis.uk.rows() || delta.cols() != basis.vk.rows() {
        return dim_err(format!(
            "update {:?} against bases for {}x{}",
            delta.shape(),
            basis.uk.rows(),
            basis.vk.rows()
        ));
    }
    Ok(())
}

/// `U_k(U_kᵀΔW)`, never forming the m×m projector.
fn left_projection<T: Scalar>(delta: &Matrix<T>, uk: &Matrix<T>) -> Result<Matrix<T>> {
    uk.matmul(&uk.t_matmul(delta)?)
}

/// `(ΔW V_k)V_kᵀ`
fn right_projection<T: Scalar>(delta: &Matrix<T>, vk: &Matrix<T>) -> Result<Matrix<T>> {
    delta.matmul(vk)?.matmul_t(vk)
}

pub fn project_and_residual<T: Scalar>(
    delta: &Matrix<T>,
    basis: &SubspaceBasis<T>,
) -> Result<Decomposition<T>> {
    check_delta(delta, basis)?;
    let pi_left = left_projection(delta, &basis.uk)?;
    let pi_right = right_projection(delta, &basis.vk)?;
    Ok(Decomposition {
        res_left: delta.sub(&pi_left)?,
        res_right: delta.sub(&pi_right)?,
        pi_left,
        pi_right,
    })
}

fn energy<T: Scalar>(delta: &Matrix<T>) -> Result<T> {
    let e = delta.frobenius_norm_sq();
    if e == T::zero() {
        return Err(Error::Undefined(
            "update has zero Frobenius norm; energy ratios are undefined".into(),
        ));
    }
    Ok(e)
}

/// `(r_L, r_R)`: share of ‖ΔW‖²_F outside the top-k left/right subspaces,
/// clipped to 1 against roundoff.
pub fn outside_energy<T: Scalar>(delta: &Matrix<T>, basis: &SubspaceBasis<T>) -> Result<(T, T)> {
    check_delta(delta, basis)?;
    let total = energy(delta)?;
    let res_l = delta.sub(&left_projection(delta, &basis.uk)?)?;
    let res_r = delta.sub(&right_projection(delta, &basis.vk)?)?;
    let one = T::lit(1.0);
    let clip = |x: T| if x > one { one } else { x };
    Ok((
        clip(res_l.frobenius_norm_sq() / total),
        clip(res_r.frobenius_norm_sq() / total),
    ))
}

/// `(sim_L, sim_R)`: cosine between vec(ΔW) and vec of its projection.
///
/// Because the projectors are orthogonal, `⟨ΔW, PΔW⟩ = ‖PΔW‖²` and the
/// cosine reduces to `‖PΔW‖_F / ‖ΔW‖_F`, which is what is evaluated. A side
/// whose projection is exactly zero reports 0 (the limit of the cosine).
/// Roundoff above 1 is clipped.
pub fn subspace_cosine<T: Scalar>(delta: &Matrix<T>, basis: &SubspaceBasis<T>) -> Result<(T, T)> {
    check_delta(delta, basis)?;
    let norm = energy(delta)?.sqrt();
    let pl = left_projection(delta, &basis.uk)?.frobenius_norm();
    let pr = right_projection(delta, &basis.vk)?.frobenius_norm();
    let one = T::lit(1.0);
    let clip = |x: T| if x > one { one } else { x };
    Ok((clip(pl / norm), clip(pr / norm)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralRecord {
    pub matrix: String,
    pub k: usize,
    pub r_left: f64,
    pub r_right: f64,
    pub sim_left: f64,
    pub sim_right: f64,
}

/// Per-k means over the analyzed matrix set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralAverage {
    pub k: usize,
    pub count: usize,
    pub r_left: f64,
    pub r_right: f64,
    pub sim_left: f64,
    pub sim_right: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub scheme: Scheme,
    pub k_grid: Vec<usize>,
    pub records: Vec<SpectralRecord>,
    pub averages: Vec<SpectralAverage>,
}

/// `{1, 2, 4, …, 64, d/2}` clipped to `1..=d` where d = min(m, n).
pub fn default_k_grid(m: usize, n: usize) -> Vec<usize> {
    let d = m.min(n);
    let mut grid: Vec<usize> = [1, 2, 4, 8, 16, 32, 64, d / 2]
        .into_iter()
        .filter(|&k| k >= 1 && k <= d)
        .collect();
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// Analyzes every named update against the matching frozen weight at every
/// k in the grid, then averages per k over the matrix set.
pub fn analyze_checkpoint<T: Scalar>(
    w0_set: &BTreeMap<String, Matrix<T>>,
    deltas: &BTreeMap<String, DeltaSpec<T>>,
    k_grid: &[usize],
) -> Result<SpectralReport> {
    if deltas.is_empty() {
        return invalid("no matrices to analyze");
    }
    if k_grid.is_empty() {
        return invalid("empty k grid");
    }
    let mut grid = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();

    let schemes: Vec<Scheme> = deltas.values().map(DeltaSpec::scheme).collect();
    let scheme = schemes[0];
    if schemes.iter().any(|&s| s != scheme) {
        return invalid("all updates in one report must share a scheme");
    }

    let mut records = Vec::with_capacity(deltas.len() * grid.len());
    for (name, spec) in deltas {
        let w0 = w0_set
            .get(name)
            .ok_or_else(|| Error::InvalidInput(format!("no frozen weight named {name:?}")))?;
        let factors = svd(w0)?;
        let d = factors.rank_dim();
        if let Some(&bad) = grid.iter().find(|&&k| k == 0 || k > d) {
            return invalid(format!("k = {bad} invalid for {name:?} with d = {d}"));
        }
        let delta = match spec {
            DeltaSpec::Effort { sigma_hat, k } => effort_delta(&factors, sigma_hat, *k)?,
            other => build_delta(w0, other)?,
        };
        for &k in &grid {
            let basis = top_k(&factors, k)?;
            let (r_left, r_right) = outside_energy(&delta, &basis)?;
            let (sim_left, sim_right) = subspace_cosine(&delta, &basis)?;
            records.push(SpectralRecord {
                matrix: name.clone(),
                k,
                r_left: r_left.as_f64(),
                r_right: r_right.as_f64(),
                sim_left: sim_left.as_f64(),
                sim_right: sim_right.as_f64(),
            });
        }
    }

    let averages = grid
        .iter()
        .map(|&k| {
            let rows: Vec<&SpectralRecord> = records.iter().filter(|r| r.k == k).collect();
            let n = rows.len() as f64;
            let mean = |f: fn(&SpectralRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            SpectralAverage {
                k,
                count: rows.len(),
                r_left: mean(|r| r.r_left),
                r_right: mean(|r| r.r_right),
                sim_left: mean(|r| r.sim_left),
                sim_right: mean(|r| r.sim_right),
            }
        })
        .collect();

    Ok(SpectralReport {
        scheme,
        k_grid: grid,
        records,
        averages,
    })
}

pub const RECORD_CSV_HEADER: &str = "matrix,k,r_left,r_right,sim_left,sim_right";
pub const AVERAGE_CSV_HEADER: &str = "k,count,r_left,r_right,sim_left,sim_right";

impl SpectralReport {
    /// Shortest round-trip decimal for every value.
    pub fn records_csv(&self) -> String {
        let mut out = String::from(RECORD_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{:?},{:?},{:?},{:?}",
                r.matrix, r.k, r.r_left, r.r_right, r.sim_left, r.sim_right
            );
        }
        out
    }

    pub fn averages_csv(&self) -> String {
        let mut out = String::from(AVERAGE_CSV_HEADER);
        out.push('\n');
        for a in &self.averages {
            let _ = writeln!(
                out,
                "{},{},{:?},{:?},{:?},{:?}",
                a.k, a.count, a.r_left, a.r_right, a.sim_left, a.sim_right
            );
        }
        out
    }
}

pub fn parse_records_csv(text: &str) -> Result<Vec<SpectralRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(RECORD_CSV_HEADER) {
        return Err(Error::Format("unexpected spectral report header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::Format(format!("bad spectral row {line:?}")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Format(format!("{s:?}: {e}")))
            };
            Ok(SpectralRecord {
                matrix: f[0].to_string(),
                k: f[1]
                    .parse()
                    .map_err(|e| Error::Format(format!("{:?}: {e}", f[1])))?,
                r_left: num(f[2])?,
                r_right: num(f[3])?,
                sim_left: num(f[4])?,
                sim_right: num(f[5])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::lora_init;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = seeds::rng(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn fft_identity_gives_zero_update() {
        let w0 = random(4, 3, 1);
        let d = build_delta(&w0, &DeltaSpec::Fft(w0.clone())).unwrap();
        assert_eq!(d.max_abs(), 0.0);
    }

    #[test]
    fn sica_with_zero_b_gives_zero_update() {
        let w0 = random(4, 3, 1);
        let ad = lora_init(4, 3, 2, 16.0, 3).unwrap();
        assert_eq!(
            build_delta(&w0, &DeltaSpec::Sica(ad)).unwrap().max_abs(),
            0.0
        );
    }

    #[test]
    fn effort_on_diagonal() {
        let w0 = Matrix::diag(&[3.0, 2.0, 1.0]);
        let spec = DeltaSpec::Effort {
            sigma_hat: vec![5.0, 7.0],
            k: 1,
        };
        let d = build_delta(&w0, &spec).unwrap();
        assert_eq!(d, Matrix::diag(&[0.0, 5.0, 7.0]));
        let bad = DeltaSpec::Effort {
            sigma_hat: vec![],
            k: 3,
        };
        assert!(build_delta(&w0, &bad).is_err());
        let short = DeltaSpec::Effort {
            sigma_hat: vec![1.0],
            k: 1,
        };
        assert!(build_delta(&w0, &short).is_err());
    }

    #[test]
    fn projector_cases() {
        let f = svd(&Matrix::<f64>::identity(4)).unwrap();
        let (pl, pr) = projectors(&top_k(&f, 4).unwrap()).unwrap();
        assert_eq!(pl, Matrix::identity(4));
        assert_eq!(pr, Matrix::identity(4));
        let f = svd(&Matrix::diag(&[3.0, 2.0, 1.0])).unwrap();
        let (pl, _) = projectors(&top_k(&f, 1).unwrap()).unwrap();
        assert_eq!(pl, Matrix::diag(&[1.0, 0.0, 0.0]));
        let bad = SubspaceBasis {
            uk: Matrix::identity(3).scale(2.0),
            vk: Matrix::identity(3),
            k: 3,
        };
        assert!(projectors(&bad).is_err());
    }

    #[test]
    fn first_excluded_dyad_has_no_projection() {
        let w0 = random(7, 5, 4);
        let f = svd(&w0).unwrap();
        let k = 2;
        let u = f.u.column(k);
        let v = f.v.column(k);
        let delta = Matrix::from_fn(7, 5, |i, j| u[i] * v[j]);
        let basis = top_k(&f, k).unwrap();
        let dec = project_and_residual(&delta, &basis).unwrap();
        assert!(dec.pi_left.max_abs() <= 1e-14);
        assert!(dec.pi_right.max_abs() <= 1e-14);
        let (rl, rr) = outside_energy(&delta, &basis).unwrap();
        assert!((rl - 1.0).abs() <= 1e-12 && (rr - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn inside_update_has_no_residual() {
        let w0 = random(6, 6, 5);
        let f = svd(&w0).unwrap();
        let basis = top_k(&f, 3).unwrap();
        let coeffs = random(3, 6, 6);
        let delta = basis.uk.matmul(&coeffs).unwrap();
        let dec = project_and_residual(&delta, &basis).unwrap();
        assert!(dec.res_left.max_abs() <= 1e-12);
        let (rl, _) = outside_energy(&delta, &basis).unwrap();
        assert!(rl <= 1e-24);
        let (sl, _) = subspace_cosine(&delta, &basis).unwrap();
        assert!((sl - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn additivity_of_decomposition() {
        let f = svd(&random(8, 6, 7)).unwrap();
        let basis = top_k(&f, 2).unwrap();
        let delta = random(8, 6, 8);
        let dec = project_and_residual(&delta, &basis).unwrap();
        let back = dec.pi_left.add(&dec.res_left).unwrap();
        assert!(back.sub(&delta).unwrap().max_abs() <= 1e-14);
        let back = dec.pi_right.add(&dec.res_right).unwrap();
        assert!(back.sub(&delta).unwrap().max_abs() <= 1e-14);
    }

    #[test]
    fn zero_update_is_undefined() {
        let f = svd(&random(4, 4, 9)).unwrap();
        let basis = top_k(&f, 2).unwrap();
        let z = Matrix::zeros(4, 4);
        assert!(matches!(
            outside_energy(&z, &basis),
            Err(Error::Undefined(_))
        ));
        assert!(matches!(
            subspace_cosine(&z, &basis),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn zero_projection_reports_zero_cosine() {
        let f = svd(&Matrix::diag(&[3.0, 2.0, 1.0])).unwrap();
        let basis = top_k(&f, 1).unwrap();
        let delta = Matrix::diag(&[0.0, 1.0, 1.0]);
        assert_eq!(subspace_cosine(&delta, &basis).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn averages_and_grid() {
        assert_eq!(default_k_grid(32, 32), vec![1, 2, 4, 8, 16, 32]);
        assert_eq!(default_k_grid(6, 3), vec![1, 2]);
        assert_eq!(default_k_grid(256, 200), vec![1, 2, 4, 8, 16, 32, 64, 100]);

        let mut w0 = BTreeMap::new();
        let mut deltas = BTreeMap::new();
        // residual energy at k = 1 of 0.2 and 0.6 by construction
        w0.insert("a".to_string(), Matrix::diag(&[2.0, 1.0]));
        w0.insert("b".to_string(), Matrix::diag(&[2.0, 1.0]));
        deltas.insert(
            "a".to_string(),
            DeltaSpec::Fft(
                Matrix::diag(&[2.0, 1.0])
                    .add(&Matrix::diag(&[0.8f64.sqrt(), 0.2f64.sqrt()]))
                    .unwrap(),
            ),
        );
        deltas.insert(
            "b".to_string(),
            DeltaSpec::Fft(
                Matrix::diag(&[2.0, 1.0])
                    .add(&Matrix::diag(&[0.4f64.sqrt(), 0.6f64.sqrt()]))
                    .unwrap(),
            ),
        );
        let rep = analyze_checkpoint(&w0, &deltas, &[1]).unwrap();
        assert_eq!(rep.records.len(), 2);
        assert!((rep.averages[0].r_left - 0.4).abs() <= 1e-12);
        assert_eq!(rep.averages[0].count, 2);

        let single: BTreeMap<_, _> = deltas.into_iter().take(1).collect();
        let rep = analyze_checkpoint(&w0, &single, &[1, 2]).unwrap();
        for (rec, avg) in rep.records.iter().zip(&rep.averages) {
            assert_eq!(rec.r_left, avg.r_left);
            assert_eq!(rec.sim_right, avg.sim_right);
        }
        assert!(analyze_checkpoint(&w0, &single, &[3]).is_err());
    }

    #[test]
    fn name_mismatch_is_rejected() {
        let mut w0 = BTreeMap::new();
        w0.insert("a".to_string(), Matrix::<f64>::identity(2));
        let mut deltas = BTreeMap::new();
        deltas.insert("z".to_string(), DeltaSpec::Fft(Matrix::diag(&[2.0, 1.0])));
        assert!(analyze_checkpoint(&w0, &deltas, &[1]).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let rep = SpectralReport {
            scheme: Scheme::Sica,
            k_grid: vec![1],
            records: vec![SpectralRecord {
                matrix: "layers.0.attn.q".into(),
                k: 1,
                r_left: 0.1 + 0.2,
                r_right: 1.0 / 3.0,
                sim_left: 5e-324,
                sim_right: 0.0,
            }],
            averages: vec![],
        };
        assert_eq!(parse_records_csv(&rep.records_csv()).unwrap(), rep.records);
    }
}
