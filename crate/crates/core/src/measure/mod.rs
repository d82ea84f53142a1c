//! Lévy measure families, their truncated moments and polar discretizations.

mod discrete;
mod family;
mod grid;
mod integrate;
pub mod spec;

pub use discrete::{Atom, DiscretizedMeasure};
pub use family::{AtomsFn, JumpFn, KernelFn, LevyFamily, OrderFn, Variant};
pub use grid::{GridId, PolarGrid, Ray, DEFAULT_R_INNER, DEFAULT_R_OUTER};
pub use integrate::{Node, NodeKind, Region};
pub(crate) use integrate::jump_radius;
