use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;
use num_traits::NumAssignOps;

/// Floating-point scalar the whole stack is generic over.
///
/// Everything numeric in this crate works for any `Scalar`; the shipped
/// experiments pin `f64` (see the aliases at the crate root) because the
/// finite-difference gradient oracles need more headroom than `f32` offers.
pub trait Scalar: Float + NumAssignOps + Sum + Debug + Display + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn from_usize(n: usize) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_usize(n: usize) -> Self {
        n as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_usize(n: usize) -> Self {
        n as f64
    }
}
