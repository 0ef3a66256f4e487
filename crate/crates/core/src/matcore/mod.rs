//! Dense real linear algebra: matrices, norms, SVD and orthonormal bases.

pub mod matb;
mod matrix;
mod svd;

pub use matrix::{frobenius_norm_sq, matmul, orthonormal_check, Matrix};
pub use svd::{svd, top_k, SubspaceBasis, SvdFactors, MAX_SWEEPS};
