//! Low-rank adapters: `h_out = W₀·h + (α/r)·B·(A·h)` with a frozen `W₀`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Result};
use crate::matcore::Matrix;
use crate::scalar::Scalar;
use crate::seeds;

/// Rank-`r` update `(α/r)·B·A` for an m×n weight.
#[derive(Clone, Debug, PartialEq)]
pub struct LoraAdapter<T> {
    /// r×n down-projection.
    pub a: Matrix<T>,
    /// m×r up-projection.
    pub b: Matrix<T>,
    pub alpha: T,
    pub rank: usize,
}

/// JSON sidecar stored next to the two adapter factor files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterSidecar {
    pub name: String,
    pub alpha: f64,
    pub rank: usize,
}

impl<T: Scalar> LoraAdapter<T> {
    pub fn new(a: Matrix<T>, b: Matrix<T>, alpha: T) -> Result<Self> {
        let rank = a.rows();
        if b.cols() != rank {
            return dim_err(format!("A has {rank} rows but B has {} columns", b.cols()));
        }
        if rank > b.rows().min(a.cols()) {
            return invalid(format!(
                "rank {rank} exceeds min({}, {})",
                b.rows(),
                a.cols()
            ));
        }
        if !(alpha > T::zero()) {
            return invalid("adapter alpha must be positive");
        }
        Ok(Self { a, b, alpha, rank })
    }

    /// Output and input dimensions (m, n) of the adapted weight.
    pub fn dims(&self) -> (usize, usize) {
        (self.b.rows(), self.a.cols())
    }

    /// α / r
    pub fn scaling(&self) -> T {
        self.alpha / T::from_count(self.rank)
    }

    /// Dense `(α/r)·B·A`.
    pub fn delta(&self) -> Matrix<T> {
        self.b
            .matmul(&self.a)
            .expect("adapter factors are consistent")
            .scale(self.scaling())
    }

    fn check_against(&self, w0: &Matrix<T>) -> Result<()> {
        if self.dims() != w0.shape() {
            return dim_err(format!(
                "adapter is {:?} but weight is {:?}",
                self.dims(),
                w0.shape()
            ));
        }
        Ok(())
    }
}

/// Adapter with `A` uniform in ±1/√n and `B = 0`, so the adapted layer starts
/// as an exact copy of the frozen one.
pub fn lora_init<T: Scalar>(
    m: usize,
    n: usize,
    r: usize,
    alpha: T,
    seed: u64,
) -> Result<LoraAdapter<T>> {
    if m == 0 || n == 0 {
        return invalid("adapter dimensions must be positive");
    }
    if r == 0 || r > m.min(n) {
        return invalid(format!("rank {r} outside 1..={}", m.min(n)));
    }
    let bound = 1.0 / (n as f64).sqrt();
    let mut rng = seeds::rng(seed);
    let a = Matrix::from_fn(r, n, |_, _| T::lit(rng.random_range(-bound..=bound)));
    LoraAdapter::new(a, Matrix::zeros(m, r), alpha)
}

/// `W₀·h + (α/r)·B·(A·h)` for `h` of shape n×batch, never forming `B·A`.
pub fn adapted_forward<T: Scalar>(
    w0: &Matrix<T>,
    ad: &LoraAdapter<T>,
    h_in: &Matrix<T>,
) -> Result<Matrix<T>> {
    ad.check_against(w0)?;
    let mut out = w0.matmul(h_in)?;
    let low = ad.a.matmul(h_in)?;
    let up = ad.b.matmul(&low)?;
    out.axpy(ad.scaling(), &up)?;
    Ok(out)
}

/// Dense `W₀ + (α/r)·B·A`.
pub fn merge<T: Scalar>(w0: &Matrix<T>, ad: &LoraAdapter<T>) -> Result<Matrix<T>> {
    ad.check_against(w0)?;
    w0.add(&ad.delta())
}
