//! Thin SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! For an m×n input with m ≥ n the columns are rotated pairwise until every
//! pair is orthogonal to within a relative tolerance; the column norms are
//! then the singular values and the accumulated rotations form V. Wide inputs
//! are handled through the transpose.

use crate::error::{invalid, Error, Result};
use crate::matcore::matrix::{dot, Matrix};
use crate::scalar::Scalar;

/// Sweep cap before reporting non-convergence.
pub const MAX_SWEEPS: usize = 60;

/// W = U·diag(s)·Vᵀ with d = min(m, n) columns in U and V.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdFactors<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

/// Leading `k` left and right singular vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis<T> {
    pub uk: Matrix<T>,
    pub vk: Matrix<T>,
    pub k: usize,
}

impl<T: Scalar> SvdFactors<T> {
    pub fn rank_dim(&self) -> usize {
        self.s.len()
    }

    /// U·diag(s)·Vᵀ
    pub fn reconstruct(&self) -> Matrix<T> {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (x, &s) in us.row_mut(i).iter_mut().zip(&self.s) {
                *x = *x * s;
            }
        }
        us.matmul_t(&self.v).expect("consistent factors")
    }

    /// Number of singular values above `rel_tol · s₁`.
    pub fn numerical_rank(&self, rel_tol: T) -> usize {
        let top = self.s.first().copied().unwrap_or_else(T::zero);
        self.s.iter().filter(|&&x| x > rel_tol * top).count()
    }
}

/// Computes the thin SVD of `w`.
///
/// Columns are sorted by non-increasing singular value (ties keep their
/// original order) and each U column is signed so that its largest-magnitude
/// entry is non-negative, with the paired V column flipped to match.
pub fn svd<T: Scalar>(w: &Matrix<T>) -> Result<SvdFactors<T>> {
    if w.as_slice().iter().any(|x| !x.is_finite()) {
        return invalid("svd input contains non-finite entries");
    }
    let (mut u, s, mut v) = if w.rows() >= w.cols() {
        jacobi_tall(w)?
    } else {
        let (u, s, v) = jacobi_tall(&w.transpose())?;
        (v, s, u)
    };
    fix_signs(&mut u, &mut v);
    Ok(SvdFactors { u, s, v })
}

/// First `k` columns of U and V.
pub fn top_k<T: Scalar>(f: &SvdFactors<T>, k: usize) -> Result<SubspaceBasis<T>> {
    let d = f.rank_dim();
    if k == 0 || k > d {
        return invalid(format!("subspace size k = {k} outside 1..={d}"));
    }
    Ok(SubspaceBasis {
        uk: f.u.leading_columns(k),
        vk: f.v.leading_columns(k),
        k,
    })
}

type Factors<T> = (Matrix<T>, Vec<T>, Matrix<T>);

fn jacobi_tall<T: Scalar>(w: &Matrix<T>) -> Result<Factors<T>> {
    let (m, n) = w.shape();
    let mut a: Vec<Vec<T>> = (0..n).map(|j| w.column(j)).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| {
            (0..n)
                .map(|i| if i == j { T::one() } else { T::zero() })
                .collect()
        })
        .collect();

    let frob = w.frobenius_norm();
    // Columns whose energy sits at rounding level carry no direction.
    let null_norm = T::epsilon() * T::from_count(m.max(n)) * frob;
    let null_sq = null_norm * null_norm;
    let tol = T::jacobi_tol();

    let mut norms: Vec<T> = a.iter().map(|c| dot(c, c)).collect();
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let alpha = norms[i];
                let beta = norms[j];
                if alpha <= null_sq || beta <= null_sq {
                    continue;
                }
                let gamma = dot(&a[i], &a[j]);
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, i, j, c, s);
                rotate(&mut v, i, j, c, s);
                norms[i] = dot(&a[i], &a[i]);
                norms[j] = dot(&a[j], &a[j]);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "one-sided Jacobi did not converge within {MAX_SWEEPS} sweeps ({m}x{n})"
        )));
    }

    let sv: Vec<T> = norms.iter().map(|x| x.sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal values keep ascending original index
    order.sort_by(|&x, &y| sv[y].partial_cmp(&sv[x]).expect("finite singular values"));

    let mut ucols: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut null_slots = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        if norms[j] <= null_sq || sv[j] == T::zero() {
            null_slots.push(slot);
            ucols.push(vec![T::zero(); m]);
        } else {
            let inv = T::one() / sv[j];
            ucols.push(a[j].iter().map(|&x| x * inv).collect());
        }
    }
    complete_basis(&mut ucols, &null_slots);

    let s: Vec<T> = order.iter().map(|&j| sv[j]).collect();
    let vcols: Vec<Vec<T>> = order.iter().map(|&j| v[j].clone()).collect();
    Ok((
        Matrix::from_columns(&ucols)?,
        s,
        Matrix::from_columns(&vcols)?,
    ))
}

#[inline]
fn rotate<T: Scalar>(cols: &mut [Vec<T>], i: usize, j: usize, c: T, s: T) {
    let (lo, hi) = cols.split_at_mut(j);
    for (x, y) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// Fills the listed slots with unit vectors orthogonal to every other column.
/// Each slot takes the standard basis vector with the largest residual after
/// twice-applied Gram–Schmidt, which is at least 1/√m in norm.
fn complete_basis<T: Scalar>(cols: &mut [Vec<T>], slots: &[usize]) {
    if slots.is_empty() {
        return;
    }
    let m = cols[0].len();
    let mut filled: Vec<usize> = (0..cols.len()).filter(|i| !slots.contains(i)).collect();
    for &slot in slots {
        let mut best: Option<(T, Vec<T>)> = None;
        for candidate in 0..m {
            let mut e = vec![T::zero(); m];
            e[candidate] = T::one();
            for _ in 0..2 {
                for &f in &filled {
                    let proj = dot(&e, &cols[f]);
                    for (x, &q) in e.iter_mut().zip(&cols[f]) {
                        *x = *x - proj * q;
                    }
                }
            }
            let norm = dot(&e, &e).sqrt();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, e));
            }
        }
        let (norm, e) = best.expect("at least one candidate");
        assert!(
            norm > T::zero(),
            "basis completion found no independent direction"
        );
        cols[slot] = e.iter().map(|&x| x / norm).collect();
        filled.push(slot);
    }
}

fn fix_signs<T: Scalar>(u: &mut Matrix<T>, v: &mut Matrix<T>) {
    for j in 0..u.cols() {
        let mut best = T::zero();
        let mut sign_neg = false;
        for i in 0..u.rows() {
            let x = u[(i, j)];
            if x.abs() > best {
                best = x.abs();
                sign_neg = x < T::zero();
            }
        }
        if sign_neg {
            for i in 0..u.rows() {
                u[(i, j)] = -u[(i, j)];
            }
            for i in 0..v.rows() {
                v[(i, j)] = -v[(i, j)];
            }
        }
    }
}
