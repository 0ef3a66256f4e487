//! Scalar abstraction shared by the linear algebra, spectral and metric code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// A real floating-point scalar usable throughout the numerical core.
///
/// Implemented for `f32` and `f64`. The tolerances below are scaled to the
/// precision of the type so that iterative routines terminate for both.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Relative off-diagonal threshold for the one-sided Jacobi sweep.
    fn jacobi_tol() -> Self;

    /// Shorthand for lossless-enough conversion from `f64` literals.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("representable count")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f64 {
    fn jacobi_tol() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn jacobi_tol() -> Self {
        // f32 cannot resolve 1e-12; a few ulps of headroom keeps sweeps finite.
        4.0 * f32::EPSILON
    }
}
