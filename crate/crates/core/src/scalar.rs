//! Floating-point abstraction shared by the model, training and evaluation code.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used for proxy codes, parameters and gradients.
///
/// Implemented for `f32` and `f64`. Reductions (neighbor sums, inner
/// products) are carried out in `f64` regardless of the storage type, so
/// results only differ between the two at the final rounding step.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    /// Lossless widening to `f64`.
    fn to_f64_lossless(self) -> f64;

    /// Nearest representable value.
    fn from_f64_round(v: f64) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self as f64
    }

    #[inline]
    fn from_f64_round(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self
    }

    #[inline]
    fn from_f64_round(v: f64) -> Self {
        v
    }
}
