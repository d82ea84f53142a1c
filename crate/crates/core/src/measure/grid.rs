//! Geometric polar shell grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::Point;
use crate::quadrature::GaussRule;
use crate::scalar::{from_usize, lit, Real};

/// Identity of a grid layout; measures discretized on equal ids have aligned atoms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridId {
    pub dim: usize,
    pub shells_per_octave: u32,
    pub k_min: i32,
    pub k_max: i32,
    pub azimuthal: usize,
    pub polar: usize,
}

/// One quadrature direction: unit vector, angular weight, angular cell.
#[derive(Clone, Copy, Debug)]
pub struct Ray<T> {
    pub dir: Point<T>,
    pub weight: T,
    pub cell: usize,
}

/// Shells `(r_k, r_{k+1}]` with `r_k = 2^{k/s}` for `k_min <= k < k_max`,
/// crossed with an angular partition of the unit sphere.
#[derive(Clone, Debug)]
pub struct PolarGrid<T> {
    dim: usize,
    shells_per_octave: u32,
    k_min: i32,
    k_max: i32,
    azimuthal: usize,
    polar: usize,
    radial_nodes: usize,
    angular_nodes: usize,
    tolerance: T,
    edges: Vec<T>,
}

pub const DEFAULT_R_INNER: f64 = 1e-4;
pub const DEFAULT_R_OUTER: f64 = 32.0;

impl<T: Real> PolarGrid<T> {
    /// Grid whose edges are the powers of `2^{1/4}` covering `(r_inner, r_outer]`.
    pub fn new(dim: usize, r_inner: T, r_outer: T) -> Result<Self> {
        Self::with_ratio(dim, r_inner, r_outer, 4)
    }

    /// Default grid: `r0 = 1e-4`, `R = 32`, 32 angular cells in 2-D, 8x4 in 3-D.
    pub fn default_for(dim: usize) -> Result<Self> {
        Self::new(dim, lit(DEFAULT_R_INNER), lit(DEFAULT_R_OUTER))
    }

    pub fn with_ratio(dim: usize, r_inner: T, r_outer: T, shells_per_octave: u32) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::invalid(format!("dimension {dim} not in 1..=3")));
        }
        if !(r_inner > T::zero() && r_outer > r_inner) {
            return Err(Error::invalid("grid radii must satisfy 0 < r_inner < r_outer"));
        }
        if shells_per_octave == 0 {
            return Err(Error::invalid("shells per octave must be positive"));
        }
        let s = f64::from(shells_per_octave);
        let lo = (s * r_inner.to_f64().unwrap_or(f64::NAN).log2() + 1e-9).floor() as i32;
        let hi = (s * r_outer.to_f64().unwrap_or(f64::NAN).log2() - 1e-9).ceil() as i32;
        let (azimuthal, polar) = match dim {
            1 => (2, 1),
            2 => (32, 1),
            _ => (8, 4),
        };
        let mut g = Self {
            dim,
            shells_per_octave,
            k_min: lo,
            k_max: hi.max(lo + 1),
            azimuthal,
            polar,
            radial_nodes: 4,
            angular_nodes: 3,
            tolerance: lit(1e-6),
            edges: Vec::new(),
        };
        g.rebuild();
        Ok(g)
    }

    fn rebuild(&mut self) {
        let s = f64::from(self.shells_per_octave);
        self.edges = (self.k_min..=self.k_max)
            .map(|k| lit(2f64.powf(f64::from(k) / s)))
            .collect();
    }

    /// Sets the angular resolution (2-D: cells on the circle; 3-D: azimuthal cells,
    /// with half as many polar cells). Ignored in 1-D.
    pub fn with_angular(mut self, cells: usize) -> Self {
        match self.dim {
            2 => self.azimuthal = cells.max(1),
            3 => {
                self.azimuthal = cells.max(1);
                self.polar = (cells / 2).max(1);
            }
            _ => {}
        }
        self
    }

    pub fn with_nodes(mut self, radial: usize, angular: usize) -> Self {
        self.radial_nodes = radial.max(1);
        self.angular_nodes = angular.max(1);
        self
    }

    pub fn with_tolerance(mut self, tol: T) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn id(&self) -> GridId {
        GridId {
            dim: self.dim,
            shells_per_octave: self.shells_per_octave,
            k_min: self.k_min,
            k_max: self.k_max,
            azimuthal: self.azimuthal,
            polar: self.polar,
        }
    }

    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    pub fn r_inner(&self) -> T {
        self.edges[0]
    }

    pub fn r_outer(&self) -> T {
        *self.edges.last().expect("nonempty edges")
    }

    pub fn ratio(&self) -> T {
        lit(2f64.powf(1.0 / f64::from(self.shells_per_octave)))
    }

    pub fn shells_per_octave(&self) -> u32 {
        self.shells_per_octave
    }

    pub fn shell_count(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn angular_cells(&self) -> usize {
        self.azimuthal * self.polar
    }

    pub fn cell_count(&self) -> usize {
        self.shell_count() * self.angular_cells()
    }

    pub fn radial_nodes(&self) -> usize {
        self.radial_nodes
    }

    pub fn angular_nodes(&self) -> usize {
        self.angular_nodes
    }

    pub fn tolerance(&self) -> T {
        self.tolerance
    }

    /// Shell `i` with `|z|` in `(r_i, r_{i+1}]`.
    pub fn shell_of(&self, rho: T) -> Option<usize> {
        let j = self.edges.partition_point(|&e| e < rho);
        (j >= 1 && j < self.edges.len()).then(|| j - 1)
    }

    pub fn angular_cell_of(&self, z: &Point<T>) -> usize {
        match self.dim {
            1 => usize::from(z.get(0) >= T::zero()),
            2 => self.azimuth_cell(z.get(1).atan2(z.get(0))),
            _ => {
                let a = self.azimuth_cell(z.get(1).atan2(z.get(0)));
                let u = z.get(2) / z.norm();
                let p = ((u + T::one()) * lit(0.5) * from_usize::<T>(self.polar))
                    .floor()
                    .to_usize()
                    .unwrap_or(0)
                    .min(self.polar - 1);
                p * self.azimuthal + a
            }
        }
    }

    fn azimuth_cell(&self, mut theta: T) -> usize {
        let two_pi: T = lit(std::f64::consts::TAU);
        if theta < T::zero() {
            theta = theta + two_pi;
        }
        (theta / two_pi * from_usize::<T>(self.azimuthal))
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(self.azimuthal - 1)
    }

    /// Cell index `shell * angular_cells + angular` for a nonzero point in the annulus.
    pub fn cell_of(&self, z: &Point<T>) -> Option<usize> {
        let shell = self.shell_of(z.norm())?;
        Some(shell * self.angular_cells() + self.angular_cell_of(z))
    }

    pub fn shell_of_cell(&self, cell: usize) -> usize {
        cell / self.angular_cells()
    }

    /// Center direction of an angular cell.
    pub fn angular_center(&self, a: usize) -> Point<T> {
        let two_pi = std::f64::consts::TAU;
        match self.dim {
            1 => Point::scalar(if a == 0 { -T::one() } else { T::one() }),
            2 => Point::polar(lit((a as f64 + 0.5) * two_pi / self.azimuthal as f64)),
            _ => {
                let az = a % self.azimuthal;
                let p = a / self.azimuthal;
                let th = (az as f64 + 0.5) * two_pi / self.azimuthal as f64;
                let u = -1.0 + (p as f64 + 0.5) * 2.0 / self.polar as f64;
                let s = (1.0 - u * u).sqrt();
                Point::from_f64(&[s * th.cos(), s * th.sin(), u])
            }
        }
    }

    /// Atom location of a cell: geometric mid-radius along the cell center direction.
    pub fn cell_center(&self, cell: usize) -> Point<T> {
        let shell = self.shell_of_cell(cell);
        let rho = (self.edges[shell] * self.edges[shell + 1]).sqrt();
        self.angular_center(cell % self.angular_cells()) * rho
    }

    /// Angular quadrature. `support` restricts 2-D directions to the arc
    /// `[a, a + w]` (radians); `refine` multiplies the nodes per cell.
    pub fn rays(&self, support: Option<(T, T)>, refine: usize) -> Vec<Ray<T>> {
        let g = GaussRule::<T>::new(self.angular_nodes * refine.max(1));
        match self.dim {
            1 => vec![
                Ray { dir: Point::scalar(-T::one()), weight: T::one(), cell: 0 },
                Ray { dir: Point::scalar(T::one()), weight: T::one(), cell: 1 },
            ],
            2 => {
                let two_pi: T = lit(std::f64::consts::TAU);
                let arcs: Vec<(T, T)> = match support {
                    None => vec![(T::zero(), two_pi)],
                    Some((a, w)) => {
                        let mut a = a % two_pi;
                        if a < T::zero() {
                            a = a + two_pi;
                        }
                        let b = a + w.min(two_pi);
                        if b <= two_pi {
                            vec![(a, b)]
                        } else {
                            vec![(T::zero(), b - two_pi), (a, two_pi)]
                        }
                    }
                };
                let step = two_pi / from_usize::<T>(self.azimuthal);
                let mut out = Vec::new();
                for c in 0..self.azimuthal {
                    let lo = step * from_usize::<T>(c);
                    let hi = if c + 1 == self.azimuthal { two_pi } else { lo + step };
                    for &(a, b) in &arcs {
                        let (p, q) = (lo.max(a), hi.min(b));
                        if q > p {
                            out.extend(g.on(p, q).map(|(t, w)| Ray {
                                dir: Point::polar(t),
                                weight: w,
                                cell: c,
                            }));
                        }
                    }
                }
                out
            }
            _ => {
                let two_pi = std::f64::consts::TAU;
                let mut out = Vec::new();
                for p in 0..self.polar {
                    let u0 = -1.0 + 2.0 * p as f64 / self.polar as f64;
                    let u1 = -1.0 + 2.0 * (p + 1) as f64 / self.polar as f64;
                    for a in 0..self.azimuthal {
                        let t0 = two_pi * a as f64 / self.azimuthal as f64;
                        let t1 = two_pi * (a + 1) as f64 / self.azimuthal as f64;
                        for (u, wu) in g.on(lit(u0), lit(u1)) {
                            for (t, wt) in g.on(lit(t0), lit(t1)) {
                                let s = (T::one() - u * u).max(T::zero()).sqrt();
                                out.push(Ray {
                                    dir: Point::from_slice(&[s * t.cos(), s * t.sin(), u]),
                                    weight: wu * wt,
                                    cell: p * self.azimuthal + a,
                                });
                            }
                        }
                    }
                }
                out
            }
        }
    }

    /// Lattice points `2^{k/s}` strictly inside `(a, b)`, extending past the grid range.
    pub fn lattice_between(&self, a: T, b: T) -> Vec<T> {
        let s = f64::from(self.shells_per_octave);
        let (af, bf) = (a.to_f64().unwrap_or(0.0), b.to_f64().unwrap_or(0.0));
        if !(af > 0.0 && bf > af && bf.is_finite()) {
            return Vec::new();
        }
        let k0 = (s * af.log2()).floor() as i64;
        let k1 = (s * bf.log2()).ceil() as i64;
        (k0..=k1)
            .map(|k| lit::<T>(2f64.powf(k as f64 / s)))
            .filter(|&e| e > a && e < b)
            .collect()
    }
}
