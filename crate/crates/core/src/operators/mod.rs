//! Nonlocal operators split into the inner ball `B_δ`, the crown `B \ B_δ` and the
//! exterior `B^c`, plus the Lévy-Itô form and its drift.

mod localization;
mod test_function;

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::{jump_radius, LevyFamily, NodeKind, PolarGrid, Region, Variant};
use crate::point::Point;
use crate::quadrature::GaussRule;
use crate::scalar::{from_usize, lit, to_f64, Real};

pub use localization::{infimum_modulus, localization_estimates, LocalizationEstimates, LocalizationFunction};
pub use test_function::{quad_form, Matrix, TestFunction};

/// Anything that can be sampled at arbitrary points: test functions, grid functions.
pub trait Field<T: Real>: Sync {
    fn value(&self, x: &Point<T>) -> T;

    /// Limit value used for mass beyond the outer quadrature radius.
    fn far_field(&self) -> Option<T>;

    /// Length below which the field has structure; bounds the radial step.
    fn feature_scale(&self) -> Option<T> {
        None
    }
}

fn check_delta<T: Real>(delta: T) -> Result<()> {
    if delta > T::zero() && delta <= T::one() {
        Ok(())
    } else {
        Err(Error::invalid(format!("split radius {delta} must lie in (0, 1]")))
    }
}

fn with_scale<T: Real>(region: Region<T>, scale: Option<T>) -> Region<T> {
    match scale {
        Some(h) if h > T::zero() => region.with_max_step(h),
        _ => region,
    }
}

/// `∫_{B_δ} (φ(x+z) − φ(x) − Dφ(x)·z) ν_x(dz)`.
pub fn eval_inner<T: Real>(family: &LevyFamily<T>, x: &Point<T>, phi: &TestFunction<T>, delta: T, grid: &PolarGrid<T>) -> Result<T> {
    check_delta(delta)?;
    let fx = phi.value_at(x);
    let g = phi.grad(x);
    let hess = phi.hess(x);
    let half: T = lit(0.5);
    let mut acc = T::zero();
    let region = with_scale(Region::ball(delta), phi.feature_scale());
    family.visit(x, &region, grid, &mut |n| {
        let v = match n.kind {
            NodeKind::Interior => phi.value_at(&(*x + n.w)) - fx - g.dot(&n.w),
            NodeKind::InnerTail => half * quad_form(&hess, &n.w),
            NodeKind::OuterTail => T::zero(),
        };
        acc = acc + v * n.weight;
    })?;
    Ok(acc)
}

/// Crown `∫_{B \ B_δ} (u(x+z) − u(x) − p·z) ν_x(dz)` and exterior `∫_{B^c} (u(x+z) − u(x)) ν_x(dz)`.
pub fn eval_outer_parts<T: Real>(
    family: &LevyFamily<T>,
    x: &Point<T>,
    p: &Point<T>,
    u: &dyn Field<T>,
    delta: T,
    grid: &PolarGrid<T>,
) -> Result<(T, T)> {
    if !(delta > T::zero()) {
        return Err(Error::invalid("split radius must be positive"));
    }
    let ux = u.value(x);
    let mut crown = T::zero();
    if delta < T::one() {
        let region = with_scale(Region::annulus(delta, T::one()), u.feature_scale());
        family.visit(x, &region, grid, &mut |n| {
            crown = crown + (u.value(&(*x + n.w)) - ux - p.dot(&n.w)) * n.weight;
        })?;
    }
    let mut exterior = T::zero();
    let mut missing = false;
    let region = with_scale(Region::exterior(delta.max(T::one())), u.feature_scale());
    family.visit(x, &region, grid, &mut |n| {
        let far = match n.kind {
            NodeKind::OuterTail => match u.far_field() {
                Some(c) => c,
                None => {
                    missing = true;
                    return;
                }
            },
            _ => u.value(&(*x + n.w)),
        };
        exterior = exterior + (far - ux) * n.weight;
    })?;
    if missing {
        return Err(Error::MissingFarField);
    }
    Ok((crown, exterior))
}

/// `∫_{B_δ^c} (u(x+z) − u(x) − 1_B(z) p·z) ν_x(dz)`.
pub fn eval_outer<T: Real>(family: &LevyFamily<T>, x: &Point<T>, p: &Point<T>, u: &dyn Field<T>, delta: T, grid: &PolarGrid<T>) -> Result<T> {
    let (c, e) = eval_outer_parts(family, x, p, u, delta, grid)?;
    Ok(c + e)
}

/// Full operator `𝓘_x φ(x)` split at δ.
pub fn eval_full<T: Real>(family: &LevyFamily<T>, x: &Point<T>, phi: &TestFunction<T>, delta: T, grid: &PolarGrid<T>) -> Result<T> {
    let inner = eval_inner(family, x, phi, delta, grid)?;
    Ok(inner + eval_outer(family, x, &phi.grad(x), phi, delta, grid)?)
}

/// `∫ (φ(x + j(x,z)) − φ(x) − 1_B(z) Dφ(x)·j(x,z)) ν(dz)` evaluated on the base measure.
pub fn levy_ito_eval<T: Real>(family: &LevyFamily<T>, x: &Point<T>, phi: &TestFunction<T>, delta: T, grid: &PolarGrid<T>) -> Result<T> {
    let Variant::LevyIto { base, jump, .. } = family.variant() else {
        return Err(Error::NotLevyIto);
    };
    check_delta(delta)?;
    let origin = Point::zero(family.dim());
    let fx = phi.value_at(x);
    let g = phi.grad(x);
    let hess = phi.hess(x);
    let half: T = lit(0.5);
    let scale = phi.feature_scale();
    let mut acc = T::zero();
    base.visit(&origin, &with_scale(Region::ball(delta), scale), grid, &mut |n| {
        let w = jump(x, &n.w);
        let v = match n.kind {
            NodeKind::InnerTail => half * quad_form(&hess, &w),
            _ => phi.value_at(&(*x + w)) - fx - g.dot(&w),
        };
        acc = acc + v * n.weight;
    })?;
    if delta < T::one() {
        base.visit(&origin, &with_scale(Region::annulus(delta, T::one()), scale), grid, &mut |n| {
            let w = jump(x, &n.w);
            acc = acc + (phi.value_at(&(*x + w)) - fx - g.dot(&w)) * n.weight;
        })?;
    }
    let mut missing = false;
    base.visit(&origin, &with_scale(Region::exterior(T::one()), scale), grid, &mut |n| {
        let far = match n.kind {
            NodeKind::OuterTail => match phi.far_field() {
                Some(c) => c,
                None => {
                    missing = true;
                    return;
                }
            },
            _ => phi.value_at(&(*x + jump(x, &n.w))),
        };
        acc = acc + (far - fx) * n.weight;
    })?;
    if missing {
        return Err(Error::MissingFarField);
    }
    Ok(acc)
}

/// `b^j(ξ) = ∫ (1_B(j(ξ,z)) − 1_B(z)) j(ξ,z) ν(dz)`, integrated ray by ray between
/// `|z| = 1` and the radius where `|j| = 1`.
pub fn levy_ito_drift<T: Real>(family: &LevyFamily<T>, xi: &Point<T>, grid: &PolarGrid<T>) -> Result<Point<T>> {
    let Variant::LevyIto { base, jump, c0, c1 } = family.variant() else {
        return Err(Error::NotLevyIto);
    };
    let dim = family.dim();
    let origin = Point::zero(dim);
    let mut b = Point::zero(dim);
    if base.is_atomic() {
        for (z, m) in base.atoms_at(&origin)? {
            let w = jump(xi, &z);
            let inside_w = w.norm() <= T::one();
            let inside_z = z.norm() <= T::one();
            if inside_w != inside_z {
                let s = if inside_w { T::one() } else { -T::one() };
                b = b + w * (m * s);
            }
        }
        return Ok(b);
    }
    let n: T = from_usize(dim);
    let rule = GaussRule::<T>::new(grid.radial_nodes() * 4);
    for ray in grid.rays(base.support_arc(&origin), 2) {
        let rho_star = jump_radius(jump, xi, &ray.dir, T::one(), *c0, *c1);
        let (a, hi, sign) = if rho_star > T::one() {
            (T::one(), rho_star, T::one())
        } else {
            (rho_star, T::one(), -T::one())
        };
        if !(hi > a) {
            continue;
        }
        for (s, ws) in rule.on(a.ln(), hi.ln()) {
            let rho = s.exp();
            let z = ray.dir * rho;
            let k = base.ray_density(&origin, &z);
            if k != T::zero() {
                b = b + jump(xi, &z) * (sign * ws * rho.powf(n) * k * ray.weight);
            }
        }
    }
    Ok(b)
}

/// `c₁ max(1, 1/c₀) ν(B_{max(1,1/c₀)} \ B_{min(1,1/c₁)})`, a bound on `|b^j(ξ)|`.
pub fn drift_bound<T: Real>(family: &LevyFamily<T>, grid: &PolarGrid<T>) -> Result<T> {
    let Variant::LevyIto { base, c0, c1, .. } = family.variant() else {
        return Err(Error::NotLevyIto);
    };
    let lo = T::one().min(c1.recip());
    let hi = T::one().max(c0.recip());
    if !(hi > lo) {
        return Ok(T::zero());
    }
    let origin = Point::zero(family.dim());
    let mass = if base.is_atomic() {
        base.atoms_at(&origin)?
            .iter()
            .filter(|(z, _)| z.norm() > lo && z.norm() <= hi)
            .map(|(_, m)| *m)
            .sum()
    } else {
        base.annulus_mass(&origin, lo, hi, grid)?
    };
    Ok(*c1 * hi * mass)
}

/// One row of an operator trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow<T> {
    pub x: Point<T>,
    pub inner: T,
    pub crown: T,
    pub outer: T,
}

/// Inner, crown and exterior values at each point, evaluated in parallel.
pub fn operator_trace<T: Real>(
    family: &LevyFamily<T>,
    xs: &[Point<T>],
    phi: &TestFunction<T>,
    delta: T,
    grid: &PolarGrid<T>,
) -> Result<Vec<TraceRow<T>>> {
    xs.par_iter()
        .map(|x| {
            let inner = eval_inner(family, x, phi, delta, grid)?;
            let (crown, outer) = eval_outer_parts(family, x, &phi.grad(x), phi, delta, grid)?;
            Ok(TraceRow { x: *x, inner, crown, outer })
        })
        .collect()
}

pub fn write_trace_csv<T: Real, W: Write>(rows: &[TraceRow<T>], mut out: W, header_comment: Option<&str>) -> Result<()> {
    let io = |e: std::io::Error| Error::invalid(format!("write failed: {e}"));
    if let Some(h) = header_comment {
        writeln!(out, "# {h}").map_err(io)?;
    }
    let dim = rows.first().map_or(1, |r| r.x.dim());
    let cols: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    writeln!(out, "{},inner,crown,outer", cols.join(",")).map_err(io)?;
    for r in rows {
        let xs: Vec<String> = r.x.to_f64_vec().iter().map(|v| format!("{v:e}")).collect();
        writeln!(
            out,
            "{},{:e},{:e},{:e}",
            xs.join(","),
            to_f64(r.inner),
            to_f64(r.crown),
            to_f64(r.outer)
        )
        .map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn grid1() -> PolarGrid<f64> {
        PolarGrid::default_for(1).unwrap()
    }

    #[test]
    fn affine_is_annihilated_and_quadratic_gives_second_moment() {
        let grid = grid1();
        let f = LevyFamily::power_law(1, 1.0, 1.0).unwrap();
        let x = Point::scalar(0.4);
        let a = eval_inner(&f, &x, &TestFunction::affine(Point::scalar(3.0), 1.0), 0.5, &grid).unwrap();
        assert!(a.abs() < 1e-10);
        let q = eval_inner(&f, &x, &TestFunction::quadratic(), 0.5, &grid).unwrap();
        assert!((q - f.moment2_ball(&x, 0.5, &grid).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn constants_vanish_outside() {
        let grid = grid1();
        let f = LevyFamily::power_law(1, 1.0, 1.0).unwrap();
        let u = TestFunction::affine(Point::scalar(0.0), 2.0).with_far_field(2.0);
        let v = eval_outer(&f, &Point::scalar(0.1), &Point::scalar(5.0), &u, 0.3, &grid).unwrap();
        assert!(v.abs() < 1e-10);
        let no_far = TestFunction::affine(Point::scalar(0.0), 2.0);
        assert_eq!(
            eval_outer(&f, &Point::scalar(0.1), &Point::scalar(0.0), &no_far, 0.3, &grid),
            Err(Error::MissingFarField)
        );
    }

    #[test]
    fn identity_jump_has_no_drift() {
        let grid = grid1();
        let base = LevyFamily::power_law(1, 0.5, 1.0).unwrap();
        let f = LevyFamily::levy_ito(base, Arc::new(|_, z| *z), 1.0, 1.0).unwrap();
        let b = levy_ito_drift(&f, &Point::scalar(0.7), &grid).unwrap();
        assert_eq!(b.norm(), 0.0);
        assert_eq!(drift_bound(&f, &grid).unwrap(), 0.0);
        let plain = LevyFamily::<f64>::power_law(1, 0.5, 1.0).unwrap();
        assert_eq!(levy_ito_drift(&plain, &Point::scalar(0.0), &grid), Err(Error::NotLevyIto));
    }

    #[test]
    fn one_sided_drift_matches_closed_form() {
        // base 1_{z>0} |z|^{-3/2}, j = 1.5 z: b = -1.5 ∫_{2/3}^1 z^{-1/2} dz
        let grid = grid1();
        let k: crate::measure::KernelFn<f64> =
            Arc::new(|_, z| if z.get(0) > 0.0 { z.norm().powf(-1.5) } else { 0.0 });
        let base = LevyFamily::density(1, k, 1.0, 0.5, 0.0).unwrap();
        let f = LevyFamily::levy_ito(base, Arc::new(|_, z| *z * 1.5), 1.5, 1.5).unwrap();
        let b = levy_ito_drift(&f, &Point::scalar(0.0), &grid).unwrap();
        let exact = -3.0 * (1.0 - (2.0f64 / 3.0).sqrt());
        assert!((b.get(0) - exact).abs() < 1e-10, "{} vs {exact}", b.get(0));
        assert!(b.norm() <= drift_bound(&f, &grid).unwrap());
    }
}
