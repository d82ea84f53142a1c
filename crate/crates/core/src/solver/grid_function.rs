use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::Field;
use crate::point::Point;
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Extension of a grid function outside its box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum FarField<T> {
    /// Constant extension by the nearest boundary value.
    Boundary,
    /// A fixed value outside the box.
    Constant(T),
    /// Periodic with period `n h` along every axis.
    Periodic,
}

/// Node values on the uniform grid `{−L + i h}^N`, `i = 0..n`, `h = 2L/(n−1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<T> {
    dim: usize,
    n: usize,
    extent: T,
    h: T,
    pub values: Vec<T>,
    pub far: FarField<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn new(dim: usize, n: usize, extent: T, far: FarField<T>) -> Result<Self> {
        Self::constant(dim, n, extent, T::zero(), far)
    }

    pub fn constant(dim: usize, n: usize, extent: T, c: T, far: FarField<T>) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::invalid("the solver supports dimensions 1 and 2"));
        }
        if n < 3 {
            return Err(Error::invalid("a grid needs at least 3 nodes per axis"));
        }
        if !(extent > T::zero()) || !c.is_finite() {
            return Err(Error::invalid("extent must be positive and values finite"));
        }
        if let FarField::Constant(v) = far {
            if !v.is_finite() {
                return Err(Error::invalid("far-field constant must be finite"));
            }
        }
        let h = lit::<T>(2.0) * extent / from_usize(n - 1);
        Ok(Self { dim, n, extent, h, values: vec![c; n.pow(dim as u32)], far })
    }

    /// Samples `f` at the nodes.
    pub fn from_fn(dim: usize, n: usize, extent: T, far: FarField<T>, f: impl Fn(&Point<T>) -> T) -> Result<Self> {
        let mut g = Self::new(dim, n, extent, far)?;
        for k in 0..g.len() {
            g.values[k] = f(&g.node(k));
        }
        g.check_finite()?;
        Ok(g)
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::invalid("value count does not match the grid"));
        }
        let g = Self { values, ..self.clone() };
        g.check_finite()?;
        Ok(g)
    }

    fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::invalid(format!("non-finite value at node {k}"))),
            None => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn extent(&self) -> T {
        self.extent
    }

    pub fn spacing(&self) -> T {
        self.h
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.extent == other.extent
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// `sup |u − v|` on a shared grid.
    pub fn sup_distance(&self, other: &Self) -> Result<T> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        Ok(self.values.iter().zip(&other.values).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs())))
    }

    pub(crate) fn index_of(&self, idx: &[usize]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] + self.n * idx[1]
        }
    }

    pub(crate) fn multi_index(&self, k: usize) -> [usize; 2] {
        [k % self.n, k / self.n]
    }

    pub fn node(&self, k: usize) -> Point<T> {
        let m = self.multi_index(k);
        let c = |i: usize| -self.extent + self.h * from_usize::<T>(i);
        if self.dim == 1 {
            Point::scalar(c(m[0]))
        } else {
            Point::xy(c(m[0]), c(m[1]))
        }
    }

    /// Neighbor of node `k` shifted by `step` along `axis`: a node index or a fixed value.
    pub(crate) fn neighbor(&self, k: usize, axis: usize, step: isize) -> Neighbor<T> {
        let mut m = self.multi_index(k);
        let i = m[axis] as isize + step;
        let n = self.n as isize;
        if (0..n).contains(&i) {
            m[axis] = i as usize;
            return Neighbor::Node(self.index_of(&m));
        }
        match self.far {
            FarField::Boundary => {
                m[axis] = i.clamp(0, n - 1) as usize;
                Neighbor::Node(self.index_of(&m))
            }
            FarField::Constant(c) => Neighbor::Fixed(c),
            FarField::Periodic => {
                m[axis] = i.rem_euclid(n) as usize;
                Neighbor::Node(self.index_of(&m))
            }
        }
    }

    /// Multilinear interpolation stencil at `x`: nonnegative node weights summing to 1,
    /// or a fixed value when `x` lies outside a constant-extended box.
    pub(crate) fn stencil(&self, x: &Point<T>) -> Stencil<T> {
        let mut axes: [[(usize, T); 2]; 2] = [[(0, T::one()), (0, T::zero())]; 2];
        let last = self.n - 1;
        for (d, axis) in axes.iter_mut().enumerate().take(self.dim) {
            let t = (x.get(d) + self.extent) / self.h;
            let (i, frac) = match self.far {
                FarField::Boundary => {
                    let t = t.max(T::zero()).min(from_usize(last));
                    let i = t.floor().to_usize().unwrap_or(0).min(last - 1);
                    (i, t - from_usize(i))
                }
                FarField::Constant(c) => {
                    if t < -lit::<T>(1e-12) || t > from_usize::<T>(last) + lit(1e-12) {
                        return Stencil::Fixed(c);
                    }
                    let t = t.max(T::zero()).min(from_usize(last));
                    let i = t.floor().to_usize().unwrap_or(0).min(last - 1);
                    (i, t - from_usize(i))
                }
                FarField::Periodic => {
                    let period: T = from_usize(self.n);
                    let t = t - (t / period).floor() * period;
                    let i = t.floor().to_usize().unwrap_or(0).min(self.n - 1);
                    (i, t - from_usize(i))
                }
            };
            let j = if i + 1 < self.n { i + 1 } else { 0 };
            *axis = [(i, T::one() - frac), (j, frac)];
        }
        let mut out = Vec::with_capacity(1 << self.dim);
        if self.dim == 1 {
            for &(i, w) in &axes[0] {
                if w != T::zero() {
                    out.push((i, w));
                }
            }
        } else {
            for &(j, wy) in &axes[1] {
                for &(i, wx) in &axes[0] {
                    let w = wx * wy;
                    if w != T::zero() {
                        out.push((i + self.n * j, w));
                    }
                }
            }
        }
        Stencil::Nodes(out)
    }

    pub fn interpolate(&self, x: &Point<T>) -> T {
        match self.stencil(x) {
            Stencil::Fixed(c) => c,
            Stencil::Nodes(ws) => ws.iter().fold(T::zero(), |acc, (k, w)| acc + self.values[*k] * *w),
        }
    }

    /// CSV with columns `x` (and `y`) and `u`, preceded by an optional `#` comment line.
    pub fn write_csv<W: Write>(&self, out: W, header_comment: Option<&str>) -> Result<()> {
        let mut out = out;
        if let Some(c) = header_comment {
            writeln!(out, "# {c}").map_err(io)?;
        }
        let mut w = csv::Writer::from_writer(out);
        let head: &[&str] = if self.dim == 1 { &["x", "u"] } else { &["x", "y", "u"] };
        w.write_record(head).map_err(csv_err)?;
        for k in 0..self.len() {
            let mut rec: Vec<String> = self.node(k).to_f64_vec().iter().map(|c| format!("{c:.12e}")).collect();
            rec.push(format!("{:.12e}", to_f64(self.values[k])));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }
}

pub(crate) fn io(e: std::io::Error) -> Error {
    Error::Config(format!("write failed: {e}"))
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv write failed: {e}"))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Neighbor<T> {
    Node(usize),
    Fixed(T),
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Stencil<T> {
    Nodes(Vec<(usize, T)>),
    Fixed(T),
}

impl<T: Real> Field<T> for GridFunction<T> {
    fn value(&self, x: &Point<T>) -> T {
        self.interpolate(x)
    }

    fn far_field(&self) -> Option<T> {
        match self.far {
            FarField::Constant(c) => Some(c),
            _ => None,
        }
    }

    fn feature_scale(&self) -> Option<T> {
        Some(self.h)
    }
}
