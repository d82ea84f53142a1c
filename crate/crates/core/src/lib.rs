//! Numerical toolkit for nonlocal Hamilton-Jacobi equations driven by
//! Lévy-type integro-differential operators.
//!
//! Everything is generic over the scalar type ([`Real`], implemented for `f32`
//! and `f64`); the `*64` aliases below cover the common case.

// `!(x > 0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assumptions;
pub mod error;
pub mod expr;
pub mod measure;
pub mod operators;
pub mod point;
pub mod quadrature;
pub mod scalar;
pub mod solver;
pub mod transport;

pub use error::{Error, Result};
pub use measure::{DiscretizedMeasure, LevyFamily, PolarGrid};
pub use point::Point;
pub use scalar::Real;

pub type Point64 = Point<f64>;
pub type Family64 = LevyFamily<f64>;
pub type Grid64 = PolarGrid<f64>;
pub type Measure64 = DiscretizedMeasure<f64>;
