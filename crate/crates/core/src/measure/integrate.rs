//! Ray quadrature against `ν_ξ`: log-radial Gauss-Legendre on shell pieces,
//! analytic power-law completion inside the inner cutoff and beyond the outer one.

use crate::error::{Error, Result};
use crate::measure::family::{JumpFn, LevyFamily, Variant};
use crate::measure::grid::PolarGrid;
use crate::point::Point;
use crate::quadrature::GaussRule;
use crate::scalar::{lit, Real};

/// Role of a quadrature node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    /// Ordinary node: `weight` is the ν-mass it represents.
    Interior,
    /// Stands for `(0, r_c]` along its ray; exact for integrands vanishing like `|z|^2`.
    InnerTail,
    /// Stands for `(R_c, ∞)` along its ray; exact for integrands constant far out.
    OuterTail,
}

#[derive(Clone, Copy, Debug)]
pub struct Node<T> {
    pub kind: NodeKind,
    /// Location in the jump space (`j(ξ, z)` for Lévy-Itô families).
    pub w: Point<T>,
    pub weight: T,
}

/// Integration region `lo < |w| <= hi` (`hi = None` means unbounded).
/// `lo = 0` adds the inner completion.
#[derive(Clone, Copy, Debug)]
pub struct Region<T> {
    pub lo: T,
    pub hi: Option<T>,
    /// Largest radial node spacing, for integrands with short-scale structure.
    pub max_step: Option<T>,
    /// Split push-forward rays where `|j|` crosses a grid edge.
    pub align: bool,
    /// Multiplier on radial and angular node counts.
    pub refine: usize,
}

impl<T: Real> Region<T> {
    pub fn new(lo: T, hi: Option<T>) -> Self {
        Self {
            lo,
            hi,
            max_step: None,
            align: false,
            refine: 1,
        }
    }

    pub fn ball(r: T) -> Self {
        Self::new(T::zero(), Some(r))
    }

    pub fn annulus(r: T, big_r: T) -> Self {
        Self::new(r, Some(big_r))
    }

    pub fn exterior(r: T) -> Self {
        Self::new(r, None)
    }

    pub fn everything() -> Self {
        Self::new(T::zero(), None)
    }

    pub fn with_max_step(mut self, h: T) -> Self {
        self.max_step = Some(h);
        self
    }

    pub fn aligned(mut self) -> Self {
        self.align = true;
        self
    }

    pub fn refined(mut self, k: usize) -> Self {
        self.refine = k.max(1);
        self
    }

    fn contains(&self, rho: T) -> bool {
        rho > self.lo && self.hi.is_none_or(|h| rho <= h)
    }
}

struct PushForward<'a, T> {
    jump: &'a JumpFn<T>,
    xi: &'a Point<T>,
    c0: T,
    c1: T,
}

impl<T: Real> PushForward<'_, T> {
    /// Radius along `dir` where `|j(ξ, ρ dir)| = t`, assuming monotonicity in ρ.
    fn radius_for(&self, dir: &Point<T>, t: T) -> T {
        let g = |rho: T| (self.jump)(self.xi, &(*dir * rho)).norm();
        let widen: T = lit(1e-9);
        let mut a = t / self.c1 * (T::one() - widen);
        let mut b = t / self.c0 * (T::one() + widen);
        if g(a) >= t {
            return a;
        }
        if g(b) <= t {
            return b;
        }
        for _ in 0..200 {
            let m = (a + b) * lit(0.5);
            if m <= a || m >= b {
                break;
            }
            if g(m) < t {
                a = m;
            } else {
                b = m;
            }
        }
        (a + b) * lit(0.5)
    }
}

/// Radius along `dir` where `|j(ξ, ρ dir)| = t`.
pub(crate) fn jump_radius<T: Real>(jump: &JumpFn<T>, xi: &Point<T>, dir: &Point<T>, t: T, c0: T, c1: T) -> T {
    PushForward { jump, xi, c0, c1 }.radius_for(dir, t)
}

impl<T: Real> LevyFamily<T> {
    /// Calls `f` on every quadrature node of `ν_ξ` restricted to `region`.
    pub fn visit(&self, xi: &Point<T>, region: &Region<T>, grid: &PolarGrid<T>, f: &mut dyn FnMut(&Node<T>)) -> Result<()> {
        if grid.dim() != self.dim() {
            return Err(Error::invalid("grid and family dimensions differ"));
        }
        if self.is_atomic() {
            for (w, m) in self.atoms_at(xi)? {
                if region.contains(w.norm()) {
                    f(&Node { kind: NodeKind::Interior, w, weight: m });
                }
            }
            return Ok(());
        }
        match self.variant() {
            Variant::LevyIto { base, jump, c0, c1 } => {
                let origin = Point::zero(self.dim());
                let density = |z: &Point<T>| base.ray_density(&origin, z);
                let pf = PushForward { jump, xi, c0: *c0, c1: *c1 };
                visit_rays(self.dim(), &density, base.support_arc(&origin), Some(&pf), region, grid, f)
            }
            _ => {
                let density = |z: &Point<T>| self.ray_density(xi, z);
                visit_rays(self.dim(), &density, self.support_arc(xi), None, region, grid, f)
            }
        }
    }

    /// `∫_region f dν_ξ`. Near the origin `f` must vanish quadratically; far out it is
    /// treated as constant.
    pub fn integrate(&self, xi: &Point<T>, region: &Region<T>, grid: &PolarGrid<T>, f: impl Fn(&Point<T>) -> T) -> Result<T> {
        let mut acc = T::zero();
        self.visit(xi, region, grid, &mut |n| {
            if n.weight != T::zero() {
                acc = acc + f(&n.w) * n.weight;
            }
        })?;
        Ok(acc)
    }

    /// `∫_{B_r} |z|^2 ν_ξ(dz)` over the closed ball.
    pub fn moment2_ball(&self, xi: &Point<T>, r: T, grid: &PolarGrid<T>) -> Result<T> {
        if !(r > T::zero()) {
            return Err(Error::invalid("radius must be positive"));
        }
        self.integrate(xi, &Region::ball(r), grid, |w| w.norm2())
    }

    /// `ν_ξ(B_R^c)`.
    pub fn tail_mass(&self, xi: &Point<T>, big_r: T, grid: &PolarGrid<T>) -> Result<T> {
        if !(big_r > T::zero()) {
            return Err(Error::invalid("radius must be positive"));
        }
        self.integrate(xi, &Region::exterior(big_r), grid, |_| T::one())
    }

    /// `ν_ξ(B_R \ B_r)` with `r < |z| <= R`.
    pub fn annulus_mass(&self, xi: &Point<T>, r: T, big_r: T, grid: &PolarGrid<T>) -> Result<T> {
        if !(r > T::zero() && big_r > r) {
            return Err(Error::invalid("annulus needs 0 < r < R"));
        }
        self.integrate(xi, &Region::annulus(r, big_r), grid, |_| T::one())
    }

    /// `∫ min(1, |z|^2) ν_ξ(dz)`, the Lévy constant at ξ.
    pub fn levy_constant(&self, xi: &Point<T>, grid: &PolarGrid<T>) -> Result<T> {
        Ok(self.moment2_ball(xi, T::one(), grid)? + self.tail_mass(xi, T::one(), grid)?)
    }

    /// `∫_region z ν_ξ(dz)` (no completion needed for bounded regions away from 0).
    pub fn first_moment(&self, xi: &Point<T>, region: &Region<T>, grid: &PolarGrid<T>) -> Result<Point<T>> {
        let mut acc = Point::zero(self.dim());
        self.visit(xi, region, grid, &mut |n| {
            if n.kind == NodeKind::Interior {
                acc = acc + n.w * n.weight;
            }
        })?;
        Ok(acc)
    }
}

fn log_pieces<T: Real>(a: T, b: T, max_step: Option<T>, out: &mut Vec<(T, T)>) {
    let parts = match max_step {
        Some(h) if h > T::zero() && b - a > h => ((b - a) / h).ceil().to_usize().unwrap_or(1).max(1),
        _ => 1,
    };
    let step = (b - a) / crate::scalar::from_usize(parts);
    for i in 0..parts {
        let lo = a + step * crate::scalar::from_usize(i);
        let hi = if i + 1 == parts { b } else { lo + step };
        out.push((lo, hi));
    }
}

fn visit_rays<T: Real>(
    dim: usize,
    density: &dyn Fn(&Point<T>) -> T,
    support: Option<(T, T)>,
    push: Option<&PushForward<'_, T>>,
    region: &Region<T>,
    grid: &PolarGrid<T>,
    f: &mut dyn FnMut(&Node<T>),
) -> Result<()> {
    let n: T = crate::scalar::from_usize(dim);
    let two: T = lit(2.0);
    let rule = GaussRule::<T>::new(grid.radial_nodes() * region.refine);
    let rays = grid.rays(support, region.refine);
    let step_scale = push.map_or(T::one(), |p| p.c1);
    let mut bps: Vec<T> = Vec::new();
    let mut pieces: Vec<(T, T)> = Vec::new();
    for ray in &rays {
        let dir = ray.dir;
        let at = |rho: T| -> Point<T> {
            match push {
                Some(p) => (p.jump)(p.xi, &(dir * rho)),
                None => dir * rho,
            }
        };
        let radius = |t: T| -> T {
            match push {
                Some(p) => p.radius_for(&dir, t),
                None => t,
            }
        };
        let rho_lo = if region.lo > T::zero() { radius(region.lo) } else { T::zero() };
        let rho_hi = region.hi.map(&radius);
        if rho_hi.is_some_and(|h| h <= rho_lo) {
            continue;
        }

        let mut start = rho_lo;
        if region.lo == T::zero() {
            let rc = rho_hi.map_or(grid.r_inner(), |h| h.min(grid.r_inner()));
            let k1 = density(&(dir * rc));
            if k1 > T::zero() {
                let k2 = density(&(dir * (rc / two)));
                if k2 > T::zero() {
                    let order = (k2 / k1).log2() - n;
                    if order >= two {
                        return Err(Error::QuadratureDivergence {
                            order: order.to_f64().unwrap_or(f64::NAN),
                        });
                    }
                    f(&Node {
                        kind: NodeKind::InnerTail,
                        w: at(rc),
                        weight: k1 * rc.powf(n) / (two - order) * ray.weight,
                    });
                }
            }
            start = rc;
        }
        let end = match rho_hi {
            Some(h) => h,
            None => {
                let rc = grid.r_outer().max(start);
                let k1 = density(&(dir * rc));
                if k1 > T::zero() {
                    let k2 = density(&(dir * (rc * two)));
                    if k2 > T::zero() {
                        let order = (k1 / k2).log2() - n;
                        if order <= T::zero() {
                            return Err(Error::TailDivergence {
                                order: order.to_f64().unwrap_or(f64::NAN),
                            });
                        }
                        f(&Node {
                            kind: NodeKind::OuterTail,
                            w: at(rc),
                            weight: k1 * rc.powf(n) / order * ray.weight,
                        });
                    }
                }
                rc
            }
        };
        if !(end > start) {
            continue;
        }

        bps.clear();
        bps.push(start);
        bps.extend(grid.lattice_between(start, end));
        if let (true, Some(p)) = (region.align, push) {
            for &e in grid.edges() {
                let lo_ok = e > region.lo;
                let hi_ok = region.hi.is_none_or(|h| e < h);
                if lo_ok && hi_ok {
                    let rho = p.radius_for(&dir, e);
                    if rho > start && rho < end {
                        bps.push(rho);
                    }
                }
            }
        }
        bps.push(end);
        bps.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        bps.dedup();

        pieces.clear();
        for w in bps.windows(2) {
            log_pieces(w[0], w[1], region.max_step.map(|h| h / step_scale), &mut pieces);
        }
        for &(a, b) in &pieces {
            if !(b > a) {
                continue;
            }
            for (s, ws) in rule.on(a.ln(), b.ln()) {
                let rho = s.exp();
                let z = dir * rho;
                let k = density(&z);
                if k != T::zero() {
                    f(&Node {
                        kind: NodeKind::Interior,
                        w: at(rho),
                        weight: ws * rho.powf(n) * k * ray.weight,
                    });
                }
            }
        }
    }
    Ok(())
}
