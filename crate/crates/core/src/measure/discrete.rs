//! Atomic stand-ins for Lévy measures.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::family::{check_jump, LevyFamily, Variant};
use crate::measure::grid::{GridId, PolarGrid};
use crate::measure::integrate::{NodeKind, Region};
use crate::point::Point;
use crate::scalar::{lit, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom<T> {
    pub location: Point<T>,
    pub mass: T,
    pub shell: Option<usize>,
    /// Grid cell, present when the measure is grid-aligned.
    pub cell: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedMeasure<T> {
    dim: usize,
    atoms: Vec<Atom<T>>,
    r_inner: T,
    r_outer: T,
    grid: Option<GridId>,
}

impl<T: Real> DiscretizedMeasure<T> {
    /// Free atoms (no grid alignment). Zero locations and negative masses are rejected.
    pub fn from_atoms(dim: usize, atoms: &[(Point<T>, T)]) -> Result<Self> {
        let mut out = Vec::with_capacity(atoms.len());
        for &(z, m) in atoms {
            if z.dim() != dim {
                return Err(Error::invalid("atom dimension mismatch"));
            }
            if z.is_zero() {
                return Err(Error::invalid("atoms at the origin are not allowed"));
            }
            if !(m >= T::zero()) || !m.is_finite() {
                return Err(Error::invalid(format!("atom mass {m} must be finite and nonnegative")));
            }
            out.push(Atom { location: z, mass: m, shell: None, cell: None });
        }
        let (lo, hi) = radius_range(&out);
        Ok(Self {
            dim,
            atoms: out,
            r_inner: lo,
            r_outer: hi,
            grid: None,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            atoms: Vec::new(),
            r_inner: T::zero(),
            r_outer: T::zero(),
            grid: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom<T>] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn grid(&self) -> Option<GridId> {
        self.grid
    }

    /// Inner and outer truncation radii.
    pub fn radii(&self) -> (T, T) {
        (self.r_inner, self.r_outer)
    }

    pub fn total_mass(&self) -> T {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// Atoms with `|z| <= r`.
    pub fn restricted(&self, r: T) -> Self {
        let mut out = self.clone();
        out.atoms.retain(|a| a.location.norm() <= r);
        out.r_outer = out.r_outer.min(r);
        out
    }

    /// Mass in `r < |z| <= R`.
    pub fn annulus_mass(&self, r: T, big_r: T) -> T {
        self.atoms
            .iter()
            .filter(|a| {
                let n = a.location.norm();
                n > r && n <= big_r
            })
            .map(|a| a.mass)
            .sum()
    }

    /// `Σ_{|z|<=r} |z|^2 m`.
    pub fn moment2(&self, r: T) -> T {
        self.atoms
            .iter()
            .filter(|a| a.location.norm() <= r)
            .map(|a| a.location.norm2() * a.mass)
            .sum()
    }

    /// Pairs the atoms of two measures: by grid cell when both are aligned on the same
    /// grid, otherwise by exact location. Unmatched atoms pair with mass 0.
    pub fn paired(&self, other: &Self) -> Result<Vec<(Point<T>, T, T)>> {
        if self.dim != other.dim {
            return Err(Error::GridMismatch);
        }
        let by_cell = match (self.grid, other.grid) {
            (Some(a), Some(b)) if a != b => return Err(Error::GridMismatch),
            (Some(_), Some(_)) => true,
            _ => false,
        };
        let key = |a: &Atom<T>| -> (u64, [u64; 3]) {
            if by_cell {
                (a.cell.map_or(u64::MAX, |c| c as u64), [0; 3])
            } else {
                let c = a.location.to_f64_vec();
                let mut k = [0u64; 3];
                for (i, v) in c.iter().enumerate() {
                    k[i] = v.to_bits();
                }
                (u64::MAX, k)
            }
        };
        let mut index: HashMap<(u64, [u64; 3]), usize> = HashMap::new();
        let mut out: Vec<(Point<T>, T, T)> = Vec::new();
        for a in &self.atoms {
            let k = key(a);
            match index.get(&k) {
                Some(&i) => out[i].1 = out[i].1 + a.mass,
                None => {
                    index.insert(k, out.len());
                    out.push((a.location, a.mass, T::zero()));
                }
            }
        }
        for a in &other.atoms {
            let k = key(a);
            match index.get(&k) {
                Some(&i) => out[i].2 = out[i].2 + a.mass,
                None => {
                    index.insert(k, out.len());
                    out.push((a.location, T::zero(), a.mass));
                }
            }
        }
        Ok(out)
    }
}

fn radius_range<T: Real>(atoms: &[Atom<T>]) -> (T, T) {
    let mut lo = T::infinity();
    let mut hi = T::zero();
    for a in atoms {
        let n = a.location.norm();
        lo = lo.min(n);
        hi = hi.max(n);
    }
    if atoms.is_empty() {
        (T::zero(), T::zero())
    } else {
        (lo, hi)
    }
}

fn cell_masses<T: Real>(family: &LevyFamily<T>, xi: &Point<T>, grid: &PolarGrid<T>, refine: usize) -> Result<Vec<T>> {
    let mut masses = vec![T::zero(); grid.cell_count()];
    let region = Region::annulus(grid.r_inner(), grid.r_outer()).aligned().refined(refine);
    family.visit(xi, &region, grid, &mut |n| {
        if n.kind == NodeKind::Interior {
            if let Some(c) = grid.cell_of(&n.w) {
                masses[c] = masses[c] + n.weight;
            }
        }
    })?;
    Ok(masses)
}

impl<T: Real> LevyFamily<T> {
    /// Cell masses of `ν_ξ` on the grid annulus, each placed at its cell center.
    /// Atomic families keep their atoms unchanged.
    pub fn discretize(&self, xi: &Point<T>, grid: &PolarGrid<T>) -> Result<DiscretizedMeasure<T>> {
        if grid.dim() != self.dim() {
            return Err(Error::invalid("grid and family dimensions differ"));
        }
        if self.is_atomic() {
            let atoms = self
                .atoms_at(xi)?
                .into_iter()
                .map(|(z, m)| Atom {
                    location: z,
                    mass: m,
                    shell: grid.shell_of(z.norm()),
                    cell: None,
                })
                .collect();
            return Ok(DiscretizedMeasure {
                dim: self.dim(),
                atoms,
                r_inner: grid.r_inner(),
                r_outer: grid.r_outer(),
                grid: None,
            });
        }
        let coarse = cell_masses(self, xi, grid, 1)?;
        let fine = cell_masses(self, xi, grid, 2)?;
        let total: T = fine.iter().copied().sum();
        let floor = total * lit(1e-12) + T::min_positive_value();
        let mut worst = T::zero();
        for (c, f) in coarse.iter().zip(&fine) {
            let rel = (*c - *f).abs() / f.abs().max(floor);
            worst = worst.max(rel);
        }
        if worst > grid.tolerance() {
            return Err(Error::GridTooCoarse {
                relative_error: worst.to_f64().unwrap_or(f64::NAN),
                tolerance: grid.tolerance().to_f64().unwrap_or(f64::NAN),
            });
        }
        let atoms = fine
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > T::zero())
            .map(|(c, &m)| Atom {
                location: grid.cell_center(c),
                mass: m,
                shell: Some(grid.shell_of_cell(c)),
                cell: Some(c),
            })
            .collect();
        Ok(DiscretizedMeasure {
            dim: self.dim(),
            atoms,
            r_inner: grid.r_inner(),
            r_outer: grid.r_outer(),
            grid: Some(grid.id()),
        })
    }

    /// Discretizes the base measure and moves each atom to `j(ξ, z)`.
    pub fn pushforward_discretize(&self, xi: &Point<T>, grid: &PolarGrid<T>) -> Result<DiscretizedMeasure<T>> {
        let Variant::LevyIto { base, jump, c0, c1 } = self.variant() else {
            return Err(Error::NotLevyIto);
        };
        let origin = Point::zero(self.dim());
        let src = base.discretize(&origin, grid)?;
        let mut atoms = Vec::with_capacity(src.len());
        for a in src.atoms() {
            let w = check_jump(jump, xi, &a.location, *c0, *c1)?;
            atoms.push(Atom {
                location: w,
                mass: a.mass,
                shell: grid.shell_of(w.norm()),
                cell: None,
            });
        }
        Ok(DiscretizedMeasure {
            dim: self.dim(),
            atoms,
            r_inner: src.r_inner * *c0,
            r_outer: src.r_outer * *c1,
            grid: None,
        })
    }

    /// Discretization suited to transport: push-forward families move their base atoms,
    /// the rotated quadrant rotates the atoms of the unrotated quadrant, all others use
    /// the aligned cell discretization.
    pub fn transport_discretize(&self, xi: &Point<T>, grid: &PolarGrid<T>) -> Result<DiscretizedMeasure<T>> {
        match self.variant() {
            Variant::LevyIto { .. } => self.pushforward_discretize(xi, grid),
            Variant::RotatedQuadrant { .. } => {
                let mut m = self.discretize(&Point::xy(T::one(), T::zero()), grid)?;
                let alpha = Self::quadrant_angle(xi);
                let (s, c) = alpha.sin_cos();
                for a in &mut m.atoms {
                    let (x, y) = (a.location.get(0), a.location.get(1));
                    a.location = Point::xy(c * x - s * y, s * x + c * y);
                    a.cell = None;
                }
                m.grid = None;
                Ok(m)
            }
            _ => self.discretize(xi, grid),
        }
    }
}
