//! The plateau function `ψ_β` used to localize suprema, and its operator estimates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{LevyFamily, PolarGrid};
use crate::operators::{eval_inner, eval_outer_parts, TestFunction};
use crate::point::Point;
use crate::scalar::{from_usize, lit, Real};

/// Quintic smoothstep `6t⁵ − 15t⁴ + 10t³` and its first two derivatives, clamped to [0, 1].
fn smoothstep<T: Real>(t: T) -> (T, T, T) {
    if t <= T::zero() {
        return (T::zero(), T::zero(), T::zero());
    }
    if t >= T::one() {
        return (T::one(), T::zero(), T::zero());
    }
    let (t2, t3) = (t * t, t * t * t);
    let s = t3 * (lit::<T>(10.0) - lit::<T>(15.0) * t + lit::<T>(6.0) * t2);
    let ds = lit::<T>(30.0) * t2 * (t - T::one()) * (t - T::one());
    let d2s = lit::<T>(60.0) * t * (T::one() - t) * (T::one() - lit::<T>(2.0) * t);
    (s, ds, d2s)
}

/// `ψ_β(x) = c S(β|x| − 1)`: zero on `B_{1/β}`, equal to `c` outside `B_{2/β}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalizationFunction<T> {
    pub c: T,
    pub beta: T,
    /// Common bound on `‖ψ‖∞`, `‖Dψ‖∞`, `‖D²ψ‖∞` for β = 1.
    pub c0: T,
}

impl<T: Real> LocalizationFunction<T> {
    pub fn new(c: T, beta: T) -> Result<Self> {
        if !(c > T::zero()) || !(beta > T::zero() && beta < T::one()) {
            return Err(Error::invalid("localization needs c > 0 and beta in (0, 1)"));
        }
        Ok(Self { c, beta, c0: profile_constant(c) })
    }

    pub fn value(&self, x: &Point<T>) -> T {
        self.c * smoothstep(self.beta * x.norm() - T::one()).0
    }

    pub fn test_function(&self) -> TestFunction<T> {
        let Self { c, beta, .. } = *self;
        TestFunction::new(
            move |x| c * smoothstep(beta * x.norm() - T::one()).0,
            move |x| {
                let r = x.norm();
                let (_, ds, _) = smoothstep(beta * r - T::one());
                if ds == T::zero() {
                    Point::zero(x.dim())
                } else {
                    *x * (c * ds * beta / r)
                }
            },
            move |x| {
                let n = x.dim();
                let mut h = [[T::zero(); 3]; 3];
                let r = x.norm();
                let (_, ds, d2s) = smoothstep(beta * r - T::one());
                if ds == T::zero() && d2s == T::zero() {
                    return h;
                }
                let u = *x * (T::one() / r);
                let b2 = c * beta * beta;
                let tangential = ds / (beta * r);
                for (i, row) in h.iter_mut().enumerate().take(n) {
                    for (j, v) in row.iter_mut().enumerate().take(n) {
                        let uu = u.get(i) * u.get(j);
                        let id = if i == j { T::one() } else { T::zero() };
                        *v = b2 * (d2s * uu + tangential * (id - uu));
                    }
                }
                h
            },
            c,
        )
        .with_far_field(c)
        .with_feature_scale(lit::<T>(0.125) / beta)
    }
}

/// `max(c, c sup S', c sup max(|S''(t)|, S'(t)/(1+t)))`, by dense sampling of the profile.
fn profile_constant<T: Real>(c: T) -> T {
    let n = 20_000;
    let mut m = T::one();
    for i in 0..=n {
        let t: T = from_usize::<T>(i) / from_usize::<T>(n);
        let (_, ds, d2s) = smoothstep(t);
        m = m.max(ds).max(d2s.abs()).max(ds / (T::one() + t));
    }
    c * m
}

/// Measured operator values on `ψ_β` next to their analytic upper bounds.
#[derive(Clone, Debug, Serialize)]
pub struct LocalizationEstimates<T> {
    pub beta: T,
    pub delta: T,
    pub c0: T,
    pub c_nu: T,
    pub inner: T,
    pub inner_bound: T,
    pub outer: T,
    pub outer_bound: T,
}

impl<T: Real> LocalizationEstimates<T> {
    pub fn inner_ok(&self) -> bool {
        within(self.inner, self.inner_bound)
    }

    pub fn outer_ok(&self) -> bool {
        within(self.outer, self.outer_bound)
    }

    pub fn holds(&self) -> bool {
        self.inner_ok() && self.outer_ok()
    }
}

fn within<T: Real>(v: T, bound: T) -> bool {
    v <= bound + bound.abs() * lit(1e-9) + lit(1e-14)
}

/// Inner bound `½C₀β² min(C_ν, ∫_{B_δ}|z|²ν)`; outer bound
/// `½C₀β²∫_{B\B_δ}|z|²ν + C₀ inf_{R≥1}(C_ν β R + 2ν(B_R^c))`.
pub fn localization_estimates<T: Real>(
    loc: &LocalizationFunction<T>,
    family: &LevyFamily<T>,
    x: &Point<T>,
    delta: T,
    grid: &PolarGrid<T>,
) -> Result<LocalizationEstimates<T>> {
    let phi = loc.test_function();
    let inner = eval_inner(family, x, &phi, delta, grid)?;
    let (crown, exterior) = eval_outer_parts(family, x, &phi.grad(x), &phi, delta, grid)?;
    let c_nu = family.levy_constant(x, grid)?;
    let m2_delta = family.moment2_ball(x, delta, grid)?;
    let m2_one = family.moment2_ball(x, T::one(), grid)?;
    let half: T = lit(0.5);
    let b2 = loc.beta * loc.beta;
    let inner_bound = half * loc.c0 * b2 * c_nu.min(m2_delta);
    let two: T = lit(2.0);
    let mut failure = None;
    let g = |r: T| -> T {
        match family.tail_mass(x, r, grid) {
            Ok(t) if c_nu > T::zero() => two * t / c_nu,
            Ok(_) => T::zero(),
            Err(e) => {
                failure.get_or_insert(e);
                T::infinity()
            }
        }
    };
    let f = infimum_modulus(g, loc.beta);
    if let Some(e) = failure {
        return Err(e);
    }
    let outer_bound = half * loc.c0 * b2 * (m2_one - m2_delta).max(T::zero()) + loc.c0 * c_nu * f;
    Ok(LocalizationEstimates {
        beta: loc.beta,
        delta,
        c0: loc.c0,
        c_nu,
        inner,
        inner_bound,
        outer: crown + exterior,
        outer_bound,
    })
}

/// `inf_{R≥1} (g(R) + Rβ)` by a log-spaced sweep on `[1, 10⁸]` refined by golden section.
pub fn infimum_modulus<T: Real>(mut g: impl FnMut(T) -> T, beta: T) -> T {
    let steps = 320;
    let ten: T = lit(10.0);
    let at = |k: T| ten.powf(k / lit(40.0));
    let mut h = |r: T| g(r) + r * beta;
    let mut best = (0usize, h(T::one()));
    for k in 1..=steps {
        let v = h(at(from_usize(k)));
        if v < best.1 {
            best = (k, v);
        }
    }
    let lo: T = from_usize(best.0.saturating_sub(1));
    let hi: T = from_usize((best.0 + 1).min(steps));
    let ratio: T = lit(0.618_033_988_749_894_8);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - (b - a) * ratio;
    let mut d = a + (b - a) * ratio;
    let (mut fc, mut fd) = (h(at(c)), h(at(d)));
    for _ in 0..100 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * ratio;
            fc = h(at(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * ratio;
            fd = h(at(d));
        }
    }
    best.1.min(fc).min(fd)
}
