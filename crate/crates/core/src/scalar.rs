use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the analytic core is written against.
///
/// Implemented for `f32` and `f64`. All reported tolerances assume `f64`;
/// the `f32` instantiation is usable but tolerances are clamped to the
/// precision the type can deliver.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` constant into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    #[inline]
    fn of_i64(n: i64) -> Self {
        Self::from_i64(n).expect("i64 representable in scalar type")
    }

    /// Lossy view as `f64`, used when handing values to `f64`-only samplers.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Returns `Some(n)` when the value is an exact integer that fits `i64`.
    #[inline]
    fn as_integer(self) -> Option<i64> {
        if self.is_finite() && self.fract() == Self::zero() {
            self.to_i64()
        } else {
            None
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
