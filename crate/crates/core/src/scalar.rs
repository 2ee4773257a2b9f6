//! Scalar abstraction shared by the geometry, Gaussian and metric code.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<S: Real>(x: f64) -> S {
    nalgebra::convert(x)
}

/// Lossy conversion back to `f64`, used at I/O boundaries.
#[inline]
pub fn to_f64<S: Real>(x: S) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
