//! Small fixed-capacity points in dimension 1, 2 or 3.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::{lit, Real};

pub const MAX_DIM: usize = 3;

/// A point (or vector) in ℝᴺ with N ≤ 3. Unused trailing coordinates are zero.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    coords: [T; MAX_DIM],
    dim: u8,
}

impl<T: Real> Point<T> {
    pub fn zero(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} unsupported");
        Self {
            coords: [T::zero(); MAX_DIM],
            dim: dim as u8,
        }
    }

    pub fn from_slice(xs: &[T]) -> Self {
        let mut p = Self::zero(xs.len());
        p.coords[..xs.len()].copy_from_slice(xs);
        p
    }

    pub fn from_f64(xs: &[f64]) -> Self {
        let mut p = Self::zero(xs.len());
        for (c, &x) in p.coords.iter_mut().zip(xs) {
            *c = lit(x);
        }
        p
    }

    pub fn scalar(x: T) -> Self {
        Self::from_slice(&[x])
    }

    pub fn xy(x: T, y: T) -> Self {
        Self::from_slice(&[x, y])
    }

    /// Unit vector of angle `theta` in the plane.
    pub fn polar(theta: T) -> Self {
        Self::xy(theta.cos(), theta.sin())
    }

    /// The `axis`-th canonical basis vector.
    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut p = Self::zero(dim);
        p.coords[axis] = T::one();
        p
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn get(&self, i: usize) -> T {
        self.coords[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: T) {
        self.coords[i] = v;
    }

    #[inline]
    pub fn dot(&self, other: &Self) -> T {
        debug_assert_eq!(self.dim, other.dim);
        self.coords[0] * other.coords[0]
            + self.coords[1] * other.coords[1]
            + self.coords[2] * other.coords[2]
    }

    #[inline]
    pub fn norm2(&self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.norm2().sqrt()
    }

    pub fn dist(&self, other: &Self) -> T {
        (*self - *other).norm()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let mut p = *self;
        for c in p.coords[..self.dim()].iter_mut() {
            *c = f(*c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.as_slice().iter().all(|c| c.is_zero())
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|c| c.is_finite())
    }

    /// Angle in (−π, π] of a planar point.
    pub fn angle(&self) -> T {
        self.coords[1].atan2(self.coords[0])
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.as_slice()
            .iter()
            .map(|c| c.to_f64().unwrap_or(f64::NAN))
            .collect()
    }

    pub fn cast<U: Real>(&self) -> Point<U> {
        let mut p = Point::<U>::zero(self.dim());
        for i in 0..self.dim() {
            p.coords[i] = U::from(self.coords[i]).unwrap_or_else(U::nan);
        }
        p
    }
}

impl<T: Real> Add for Point<T> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        for i in 0..MAX_DIM {
            self.coords[i] = self.coords[i] + rhs.coords[i];
        }
        self
    }
}

impl<T: Real> Sub for Point<T> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        for i in 0..MAX_DIM {
            self.coords[i] = self.coords[i] - rhs.coords[i];
        }
        self
    }
}

impl<T: Real> Mul<T> for Point<T> {
    type Output = Self;
    #[inline]
    fn mul(mut self, s: T) -> Self {
        for c in self.coords.iter_mut() {
            *c = *c * s;
        }
        self
    }
}

impl<T: Real> Neg for Point<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self * -T::one()
    }
}

impl<T: fmt::Debug> fmt::Debug for Point<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.coords[..usize::from(self.dim)]).finish()
    }
}

impl<T: Real> fmt::Display for Point<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.as_slice().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_and_norms() {
        let a = Point::<f64>::xy(3.0, 4.0);
        assert_eq!(a.norm(), 5.0);
        let b = a - Point::xy(3.0, 0.0);
        assert_eq!(b.as_slice(), &[0.0, 4.0]);
        assert_eq!((a * 2.0).norm2(), 100.0);
        assert_eq!(a.dist(&Point::xy(0.0, 0.0)), 5.0);
    }

    #[test]
    fn angle_range() {
        let p = Point::<f64>::xy(-1.0, 0.0);
        assert!((p.angle() - std::f64::consts::PI).abs() < 1e-15);
    }
}
