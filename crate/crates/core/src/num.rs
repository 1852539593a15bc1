//! Scalar abstraction. All planner math is generic over [`Real`], which is
//! implemented for `f32` and `f64`. nalgebra's `RealField` is intentionally
//! not a supertrait; mixing it with `num_traits::Float` makes method calls
//! like `sqrt` ambiguous, so norms go through the helpers below.

use std::fmt::{Debug, Display};
use std::ops::Neg;

use nalgebra::Vector3;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar type the planner is generic over.
pub trait Real:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + Neg<Output = Self>
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` constant into the generic scalar.
///
/// Panics only if the scalar type cannot represent any `f64`, which neither
/// implementor does.
#[inline]
pub fn real<R: Real>(x: f64) -> R {
    R::from_f64(x).expect("f64 constant must be representable")
}

/// Squared Euclidean norm of a 3-vector.
#[inline]
pub fn norm_sq3<R: Real>(v: &Vector3<R>) -> R {
    v.dot(v)
}

/// Euclidean norm of a 3-vector.
#[inline]
pub fn norm3<R: Real>(v: &Vector3<R>) -> R {
    v.dot(v).sqrt()
}

/// Rescales `v` so its norm does not exceed `limit`; zero vectors pass through.
#[inline]
pub fn clamp_norm3<R: Real>(v: &Vector3<R>, limit: R) -> Vector3<R> {
    let n = norm3(v);
    if n > limit && n > R::zero() {
        v * (limit / n)
    } else {
        *v
    }
}

/// True when every component is finite.
#[inline]
pub fn finite3<R: Real>(v: &Vector3<R>) -> bool {
    v.iter().all(|c| c.is_finite())
}
