use std::ops::{Index, IndexMut};

use crate::error::{dim_err, invalid, Error, Result};
use crate::scalar::Scalar;

/// Dense row-major real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    /// Builds a matrix from row-major entries, rejecting empty shapes and
    /// non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid(format!("matrix shape must be positive, got {rows}x{cols}"));
        }
        if data.len() != rows * cols {
            return dim_err(format!("{} entries for a {rows}x{cols} matrix", data.len()));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return dim_err("ragged rows");
        }
        Self::from_vec(r, c, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape must be positive");
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn diag(values: &[T]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { T::zero() })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<T>]) -> Result<Self> {
        let c = cols.len();
        let r = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|col| col.len() != r) {
            return dim_err("ragged columns");
        }
        if r == 0 || c == 0 {
            return invalid("matrix shape must be positive");
        }
        Ok(Self::from_fn(r, c, |i, j| cols[j][i]))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Matrix<T> {
        assert!(k >= 1 && k <= self.cols);
        Self::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    /// Columns `start..` (zero-based).
    pub fn trailing_columns(&self, start: usize) -> Matrix<T> {
        assert!(start < self.cols);
        Self::from_fn(self.rows, self.cols - start, |i, j| self[(i, start + j)])
    }

    pub fn transpose(&self) -> Matrix<T> {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Reinterprets the row-major buffer under a new shape.
    pub fn reshape(self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.data.len() || rows == 0 || cols == 0 {
            return dim_err(format!(
                "cannot reshape {}x{} into {rows}x{cols}",
                self.rows, self.cols
            ));
        }
        Ok(Self {
            rows,
            cols,
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, c: T) -> Matrix<T> {
        self.map(|x| x * c)
    }

    fn zip_with(&self, other: &Matrix<T>, op: &str, f: impl Fn(T, T) -> T) -> Result<Matrix<T>> {
        if self.shape() != other.shape() {
            return dim_err(format!(
                "{op} of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        self.zip_with(other, "sum", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        self.zip_with(other, "difference", |a, b| a - b)
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: T, other: &Matrix<T>) -> Result<()> {
        if self.shape() != other.shape() {
            return dim_err("axpy shape mismatch");
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + c * b;
        }
        Ok(())
    }

    /// Standard product `self · other`.
    pub fn matmul(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != other.rows {
            return dim_err(format!(
                "product of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        let n = other.cols;
        let kk = self.cols;
        let mut out = vec![T::zero(); self.rows * n];
        let mut i = 0;
        while i + 2 <= self.rows {
            let (top, bottom) = out[i * n..(i + 2) * n].split_at_mut(n);
            let (a, c) = (self.row(i), self.row(i + 1));
            let mut k = 0;
            while k + 4 <= kk {
                let b = [
                    other.row(k),
                    other.row(k + 1),
                    other.row(k + 2),
                    other.row(k + 3),
                ];
                fused4x2(
                    top,
                    bottom,
                    [a[k], a[k + 1], a[k + 2], a[k + 3]],
                    [c[k], c[k + 1], c[k + 2], c[k + 3]],
                    b,
                );
                k += 4;
            }
            for k in k..kk {
                for ((d, e), &bv) in top.iter_mut().zip(bottom.iter_mut()).zip(other.row(k)) {
                    *d = *d + a[k] * bv;
                    *e = *e + c[k] * bv;
                }
            }
            i += 2;
        }
        if i < self.rows {
            let dst = &mut out[i * n..];
            let a = self.row(i);
            let mut k = 0;
            while k + 4 <= kk {
                let b = [
                    other.row(k),
                    other.row(k + 1),
                    other.row(k + 2),
                    other.row(k + 3),
                ];
                fused4(dst, [a[k], a[k + 1], a[k + 2], a[k + 3]], b);
                k += 4;
            }
            for k in k..kk {
                for (d, &bv) in dst.iter_mut().zip(other.row(k)) {
                    *d = *d + a[k] * bv;
                }
            }
        }
        Ok(Self {
            rows: self.rows,
            cols: other.cols,
            data: out,
        })
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        if self.rows != other.rows {
            return dim_err(format!(
                "transposed product of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        let (m, n) = (self.cols, other.cols);
        let mut out = vec![T::zero(); m * n];
        let mut r = 0;
        while r + 4 <= self.rows {
            let (a0, a1, a2, a3) = (
                self.row(r),
                self.row(r + 1),
                self.row(r + 2),
                self.row(r + 3),
            );
            let (b0, b1, b2, b3) = (
                other.row(r),
                other.row(r + 1),
                other.row(r + 2),
                other.row(r + 3),
            );
            for i in 0..m {
                let (c0, c1, c2, c3) = (a0[i], a1[i], a2[i], a3[i]);
                fused4(
                    &mut out[i * n..(i + 1) * n],
                    [c0, c1, c2, c3],
                    [b0, b1, b2, b3],
                );
            }
            r += 4;
        }
        for r in r..self.rows {
            let b = other.row(r);
            for (i, &a) in self.row(r).iter().enumerate() {
                for (d, &bv) in out[i * n..(i + 1) * n].iter_mut().zip(b) {
                    *d = *d + a * bv;
                }
            }
        }
        Ok(Self {
            rows: m,
            cols: n,
            data: out,
        })
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != other.cols {
            return dim_err(format!(
                "product with transpose of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        self.matmul(&other.transpose())
    }

    /// Σᵢⱼ aᵢⱼ²
    pub fn frobenius_norm_sq(&self) -> T {
        self.data.iter().map(|&x| x * x).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.frobenius_norm_sq().sqrt()
    }

    /// Frobenius inner product ⟨A, B⟩ = Σ aᵢⱼ bᵢⱼ.
    pub fn inner(&self, other: &Matrix<T>) -> Result<T> {
        if self.shape() != other.shape() {
            return dim_err("inner product shape mismatch");
        }
        Ok(dot(&self.data, &other.data))
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(
            T::zero(),
            |acc, &x| if x.abs() > acc { x.abs() } else { acc },
        )
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Converts entry-wise to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&x| U::from_f64(x.as_f64()).expect("representable"))
                .collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// `dst += Σ c[t]·b[t]` over four rows of equal length.
#[inline(always)]
fn fused4<T: Scalar>(dst: &mut [T], c: [T; 4], b: [&[T]; 4]) {
    let n = dst.len();
    let (b0, b1, b2, b3) = (&b[0][..n], &b[1][..n], &b[2][..n], &b[3][..n]);
    for j in 0..n {
        dst[j] = dst[j] + (c[0] * b0[j] + c[1] * b1[j]) + (c[2] * b2[j] + c[3] * b3[j]);
    }
}

/// `fused4` for two destination rows sharing the same four rows of `b`.
#[inline(always)]
fn fused4x2<T: Scalar>(d0: &mut [T], d1: &mut [T], c0: [T; 4], c1: [T; 4], b: [&[T]; 4]) {
    let n = d0.len();
    let d1 = &mut d1[..n];
    let (b0, b1, b2, b3) = (&b[0][..n], &b[1][..n], &b[2][..n], &b[3][..n]);
    for j in 0..n {
        let (x0, x1, x2, x3) = (b0[j], b1[j], b2[j], b3[j]);
        d0[j] = d0[j] + (c0[0] * x0 + c0[1] * x1) + (c0[2] * x2 + c0[3] * x3);
        d1[j] = d1[j] + (c1[0] * x0 + c1[1] * x1) + (c1[2] * x2 + c1[3] * x3);
    }
}

/// Inner product with four independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] = acc[0] + a[i] * b[i];
        acc[1] = acc[1] + a[i + 1] * b[i + 1];
        acc[2] = acc[2] + a[i + 2] * b[i + 2];
        acc[3] = acc[3] + a[i + 3] * b[i + 3];
    }
    let mut tail = T::zero();
    for i in 4 * chunks..n {
        tail = tail + a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Standard product; free-function form of [`Matrix::matmul`].
pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    a.matmul(b)
}

pub fn frobenius_norm_sq<T: Scalar>(a: &Matrix<T>) -> T {
    a.frobenius_norm_sq()
}

/// True iff ‖bᵀb − I‖_max ≤ tol.
pub fn orthonormal_check<T: Scalar>(b: &Matrix<T>, tol: T) -> bool {
    let gram = match b.t_matmul(b) {
        Ok(g) => g,
        Err(_) => return false,
    };
    (0..gram.rows()).all(|i| {
        (0..gram.cols()).all(|j| {
            let target = if i == j { T::one() } else { T::zero() };
            (gram[(i, j)] - target).abs() <= tol
        })
    })
}
