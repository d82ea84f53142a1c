//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Absolute mass tolerance used by admissibility checks.
    fn mass_tolerance() -> Self;
}

impl Real for f64 {
    fn mass_tolerance() -> Self {
        1e-12
    }
}

impl Real for f32 {
    fn mass_tolerance() -> Self {
        2e-6
    }
}

/// Lossy conversion of an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("usize representable")
}

/// Surface measure of the unit sphere in dimension `dim` (`vol(∂B)`).
pub fn unit_sphere_area<T: Real>(dim: usize) -> T {
    match dim {
        1 => lit(2.0),
        2 => lit(2.0 * std::f64::consts::PI),
        3 => lit(4.0 * std::f64::consts::PI),
        _ => panic!("dimension {dim} unsupported"),
    }
}
