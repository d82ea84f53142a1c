use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::operators::Field;
use crate::point::Point;
use crate::scalar::{lit, Real};

/// Symmetric matrix in the leading `dim × dim` block.
pub type Matrix<T> = [[T; 3]; 3];

type ValueFn<T> = Arc<dyn Fn(&Point<T>) -> T + Send + Sync>;
type GradFn<T> = Arc<dyn Fn(&Point<T>) -> Point<T> + Send + Sync>;
type HessFn<T> = Arc<dyn Fn(&Point<T>) -> Matrix<T> + Send + Sync>;

/// `w · A w`.
pub fn quad_form<T: Real>(a: &Matrix<T>, w: &Point<T>) -> T {
    let n = w.dim();
    let mut s = T::zero();
    for (i, row) in a.iter().enumerate().take(n) {
        for (j, aij) in row.iter().enumerate().take(n) {
            s = s + *aij * w.get(i) * w.get(j);
        }
    }
    s
}

/// A C² function with its derivatives.
#[derive(Clone)]
pub struct TestFunction<T> {
    value: ValueFn<T>,
    grad: GradFn<T>,
    hess: HessFn<T>,
    sup: T,
    far: Option<T>,
    scale: Option<T>,
}

impl<T: Real> fmt::Debug for TestFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("sup", &self.sup)
            .field("far", &self.far)
            .field("scale", &self.scale)
            .finish_non_exhaustive()
    }
}

impl<T: Real> TestFunction<T> {
    pub fn new(
        value: impl Fn(&Point<T>) -> T + Send + Sync + 'static,
        grad: impl Fn(&Point<T>) -> Point<T> + Send + Sync + 'static,
        hess: impl Fn(&Point<T>) -> Matrix<T> + Send + Sync + 'static,
        sup: T,
    ) -> Self {
        Self {
            value: Arc::new(value),
            grad: Arc::new(grad),
            hess: Arc::new(hess),
            sup,
            far: None,
            scale: None,
        }
    }

    /// Declares the limit of φ at infinity (or the mean value it oscillates around).
    pub fn with_far_field(mut self, c: T) -> Self {
        self.far = Some(c);
        self
    }

    pub fn with_feature_scale(mut self, h: T) -> Self {
        self.scale = Some(h);
        self
    }

    pub fn value_at(&self, x: &Point<T>) -> T {
        (self.value)(x)
    }

    pub fn grad(&self, x: &Point<T>) -> Point<T> {
        (self.grad)(x)
    }

    pub fn hess(&self, x: &Point<T>) -> Matrix<T> {
        (self.hess)(x)
    }

    pub fn sup(&self) -> T {
        self.sup
    }

    /// `a·x + c`.
    pub fn affine(a: Point<T>, c: T) -> Self {
        Self::new(move |x| a.dot(x) + c, move |_| a, |_| [[T::zero(); 3]; 3], T::infinity())
    }

    /// `|x|²`.
    pub fn quadratic() -> Self {
        let two: T = lit(2.0);
        Self::new(
            |x| x.norm2(),
            move |x| *x * two,
            move |x| {
                let mut h = [[T::zero(); 3]; 3];
                for (i, row) in h.iter_mut().enumerate().take(x.dim()) {
                    row[i] = two;
                }
                h
            },
            T::infinity(),
        )
    }

    /// `cos(e·x)`, oscillating around 0.
    pub fn cosine(e: Point<T>) -> Self {
        let scale = lit::<T>(0.25) / e.norm().max(T::epsilon());
        Self::new(
            move |x| e.dot(x).cos(),
            move |x| e * -e.dot(x).sin(),
            move |x| outer(&e, &e, -e.dot(x).cos()),
            T::one(),
        )
        .with_far_field(T::zero())
        .with_feature_scale(scale)
    }

    /// `a exp(−|x|²)`, vanishing at infinity.
    pub fn gaussian(a: T) -> Self {
        let two: T = lit(2.0);
        Self::new(
            move |x| a * (-x.norm2()).exp(),
            move |x| *x * (-two * a * (-x.norm2()).exp()),
            move |x| {
                let g = a * (-x.norm2()).exp();
                let mut h = outer(x, x, lit::<T>(4.0) * g);
                for (i, row) in h.iter_mut().enumerate().take(x.dim()) {
                    row[i] = row[i] - two * g;
                }
                h
            },
            a.abs(),
        )
        .with_far_field(T::zero())
        .with_feature_scale(lit(0.25))
    }

    /// Largest relative mismatch between the declared derivatives and central
    /// differences at the given points; errors if it exceeds `1e-4`.
    pub fn check_derivatives(&self, points: &[Point<T>]) -> Result<T> {
        let mut worst = T::zero();
        let tol: T = lit(1e-4);
        for x in points {
            let n = x.dim();
            let h = lit::<T>(1e-4) * x.norm().max(T::one());
            let g = self.grad(x);
            let hs = self.hess(x);
            let scale_g = g.norm().max(T::one());
            let scale_h = hs.iter().flatten().fold(T::one(), |m, v| m.max(v.abs()));
            for k in 0..n {
                let e = Point::basis(n, k) * h;
                let d = (self.value_at(&(*x + e)) - self.value_at(&(*x - e))) / (h + h);
                worst = worst.max((d - g.get(k)).abs() / scale_g);
                let dg = (self.grad(&(*x + e)) - self.grad(&(*x - e))) * (T::one() / (h + h));
                for (i, row) in hs.iter().enumerate().take(n) {
                    worst = worst.max((dg.get(i) - row[k]).abs() / scale_h);
                }
            }
        }
        if worst > tol {
            return Err(Error::invalid(format!("derivatives inconsistent with values (relative error {worst})")));
        }
        Ok(worst)
    }
}

fn outer<T: Real>(a: &Point<T>, b: &Point<T>, s: T) -> Matrix<T> {
    let mut h = [[T::zero(); 3]; 3];
    for (i, row) in h.iter_mut().enumerate().take(a.dim()) {
        for (j, v) in row.iter_mut().enumerate().take(b.dim()) {
            *v = a.get(i) * b.get(j) * s;
        }
    }
    h
}

impl<T: Real> Field<T> for TestFunction<T> {
    fn value(&self, x: &Point<T>) -> T {
        (self.value)(x)
    }

    fn far_field(&self) -> Option<T> {
        self.far
    }

    fn feature_scale(&self) -> Option<T> {
        self.scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_derivatives_are_consistent() {
        let pts = [Point::<f64>::xy(0.3, -0.7), Point::xy(1.2, 0.4)];
        TestFunction::gaussian(1.5).check_derivatives(&pts).unwrap();
        TestFunction::cosine(Point::xy(1.0, 2.0)).check_derivatives(&pts).unwrap();
        TestFunction::quadratic().check_derivatives(&pts).unwrap();
        let bad = TestFunction::new(|x: &Point<f64>| x.norm2(), |x| *x, |_| [[0.0; 3]; 3], 1.0);
        assert!(bad.check_derivatives(&pts).is_err());
    }
}
