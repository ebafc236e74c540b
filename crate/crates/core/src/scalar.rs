//! Scalar abstraction for the numerical core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the solver, metrics, and statistics operate on.
///
/// Implemented by `f32` and `f64`; everything numeric in this crate is
/// written against this trait so precision is a caller choice.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossless-enough conversion from `f64` literals and counts.
    fn from_f64_lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }

    fn from_usize_lit(v: usize) -> Self {
        Self::from_usize(v).expect("usize conversion")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
