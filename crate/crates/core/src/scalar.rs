//! Scalar abstraction: every numerical routine in this crate is generic over
//! the floating-point type through [`Scalar`].

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable by all estimators: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + ScalarOperand
    + LinalgScalar
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Lossy cast from an `f64` literal into the working scalar type.
#[inline]
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal must be representable")
}

/// Strict validation tolerance for row sums and simplex constraints.
///
/// Equals 1e-12 for `f64`; widens with machine epsilon so `f32` inputs remain
/// constructible.
pub fn strict_tol<T: Scalar>() -> T {
    cast::<T>(1e-12).max(T::epsilon() * cast(256.0))
}

/// Upper bound on row-sum violations that are silently renormalized (with a
/// warning) instead of rejected. 1e-9 for `f64`.
pub fn renorm_tol<T: Scalar>() -> T {
    cast::<T>(1e-9).max(T::epsilon() * cast(8192.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_tolerances_are_the_documented_values() {
        assert_eq!(strict_tol::<f64>(), 1e-12);
        assert_eq!(renorm_tol::<f64>(), 1e-9);
    }

    #[test]
    fn f32_tolerances_scale_with_epsilon() {
        assert!(strict_tol::<f32>() > f32::EPSILON);
        assert!(renorm_tol::<f32>() > strict_tol::<f32>());
    }
}
