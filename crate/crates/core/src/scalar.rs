//! Floating-point abstraction shared by every formula in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the closed forms, extremizers and moment integrals are written over.
///
/// Implemented for `f32` and `f64`. The numerical oracle is `f64` only.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Relative slack used by strip-membership tests, `tol·(1 + |x₂|)`.
    fn strip_tol() -> Self;

    /// Converts a literal. Panics only if the literal is not representable,
    /// which cannot happen for the finite constants used in this crate.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }

    #[inline]
    fn e() -> Self {
        Self::one().exp()
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    #[inline]
    fn strip_tol() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    #[inline]
    fn strip_tol() -> Self {
        // 64 ulps at 1.0; 1e-12 is below f32 resolution.
        f32::EPSILON * 64.0
    }
}

/// `+1` for nonnegative input, `-1` otherwise.
#[inline]
pub(crate) fn sign<T: Scalar>(v: T) -> T {
    if v < T::zero() {
        -T::one()
    } else {
        T::one()
    }
}
