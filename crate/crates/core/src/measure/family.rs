//! Base-point-indexed Lévy measure families.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::point::Point;
use crate::scalar::{from_usize, lit, Real};

pub type KernelFn<T> = Arc<dyn Fn(&Point<T>, &Point<T>) -> T + Send + Sync>;
pub type OrderFn<T> = Arc<dyn Fn(&Point<T>) -> T + Send + Sync>;
pub type JumpFn<T> = Arc<dyn Fn(&Point<T>, &Point<T>) -> Point<T> + Send + Sync>;
pub type AtomsFn<T> = Arc<dyn Fn(&Point<T>) -> Vec<(Point<T>, T)> + Send + Sync>;

#[derive(Clone)]
pub enum Variant<T> {
    /// `ν_ξ(dz) = K(ξ, z) dz` with `0 <= K <= Λ|z|^{-(N+σ)}` and Lipschitz constant `C_K` in ξ.
    Density {
        kernel: KernelFn<T>,
        lambda: T,
        sigma: T,
        c_k: T,
    },
    /// `c |z|^{-(N+σ(ξ))}` with `σ1 <= σ(ξ) <= σ2`.
    VariableOrder {
        order: OrderFn<T>,
        sigma1: T,
        sigma2: T,
        c_sigma: T,
        normalization: T,
    },
    /// Push-forward `(j_ξ)_# ν` of a ξ-independent base measure.
    LevyIto {
        base: Box<LevyFamily<T>>,
        jump: JumpFn<T>,
        c0: T,
        c1: T,
    },
    /// `1_{Q_ξ}(z) |z|^{-(2+σ)}`, the positive quadrant rotated by `sqrt|arg ξ|`.
    RotatedQuadrant { sigma: T },
    /// Finitely many atoms, optionally moving with ξ.
    FiniteAtomic {
        atoms: Vec<(Point<T>, T)>,
        moving: Option<AtomsFn<T>>,
    },
}

#[derive(Clone)]
pub struct LevyFamily<T> {
    dim: usize,
    variant: Variant<T>,
}

impl<T: Real> fmt::Debug for LevyFamily<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("LevyFamily");
        d.field("dim", &self.dim).field("variant", &self.variant_name());
        match &self.variant {
            Variant::Density { lambda, sigma, c_k, .. } => {
                d.field("lambda", lambda).field("sigma", sigma).field("c_k", c_k)
            }
            Variant::VariableOrder { sigma1, sigma2, c_sigma, normalization, .. } => d
                .field("sigma1", sigma1)
                .field("sigma2", sigma2)
                .field("c_sigma", c_sigma)
                .field("normalization", normalization),
            Variant::LevyIto { base, c0, c1, .. } => {
                d.field("base", base).field("c0", c0).field("c1", c1)
            }
            Variant::RotatedQuadrant { sigma } => d.field("sigma", sigma),
            Variant::FiniteAtomic { atoms, moving } => {
                d.field("atoms", &atoms.len()).field("moving", &moving.is_some())
            }
        };
        d.finish()
    }
}

fn check_order<T: Real>(name: &str, s: T) -> Result<()> {
    if s > T::zero() && s < lit(2.0) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} = {s} must lie in (0, 2)")))
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=3).contains(&dim) {
        Ok(())
    } else {
        Err(Error::invalid(format!("dimension {dim} not in 1..=3")))
    }
}

impl<T: Real> LevyFamily<T> {
    pub fn density(dim: usize, kernel: KernelFn<T>, lambda: T, sigma: T, c_k: T) -> Result<Self> {
        check_dim(dim)?;
        check_order("sigma", sigma)?;
        if !(lambda > T::zero()) || c_k < T::zero() {
            return Err(Error::invalid("density needs lambda > 0 and C_K >= 0"));
        }
        Ok(Self {
            dim,
            variant: Variant::Density { kernel, lambda, sigma, c_k },
        })
    }

    /// `Λ |z|^{-(N+σ)}`, independent of ξ. With `Λ = C(N,σ)` this is the
    /// fractional Laplacian kernel; the normalization is left to the caller.
    pub fn power_law(dim: usize, sigma: T, lambda: T) -> Result<Self> {
        let e = from_usize::<T>(dim) + sigma;
        let kernel: KernelFn<T> = Arc::new(move |_xi, z| lambda * z.norm().powf(-e));
        Self::density(dim, kernel, lambda, sigma, T::zero())
    }

    pub fn variable_order(dim: usize, order: OrderFn<T>, sigma1: T, sigma2: T, c_sigma: T) -> Result<Self> {
        check_dim(dim)?;
        check_order("sigma1", sigma1)?;
        check_order("sigma2", sigma2)?;
        if sigma1 > sigma2 || c_sigma < T::zero() {
            return Err(Error::invalid("variable order needs sigma1 <= sigma2 and C_sigma >= 0"));
        }
        Ok(Self {
            dim,
            variant: Variant::VariableOrder {
                order,
                sigma1,
                sigma2,
                c_sigma,
                normalization: T::one(),
            },
        })
    }

    /// Multiplies a variable-order kernel by a constant (default 1).
    pub fn with_normalization(mut self, c: T) -> Result<Self> {
        match &mut self.variant {
            Variant::VariableOrder { normalization, .. } if c > T::zero() => {
                *normalization = c;
                Ok(self)
            }
            _ => Err(Error::invalid("normalization applies to variable-order kernels with c > 0")),
        }
    }

    pub fn levy_ito(base: LevyFamily<T>, jump: JumpFn<T>, c0: T, c1: T) -> Result<Self> {
        if matches!(base.variant, Variant::LevyIto { .. }) {
            return Err(Error::invalid("the base of a Levy-Ito family cannot itself be Levy-Ito"));
        }
        if !(c0 > T::zero() && c1 >= c0) {
            return Err(Error::invalid("Levy-Ito bounds need 0 < c0 <= c1"));
        }
        Ok(Self {
            dim: base.dim,
            variant: Variant::LevyIto { base: Box::new(base), jump, c0, c1 },
        })
    }

    pub fn rotated_quadrant(sigma: T) -> Result<Self> {
        check_order("sigma", sigma)?;
        Ok(Self {
            dim: 2,
            variant: Variant::RotatedQuadrant { sigma },
        })
    }

    pub fn finite_atomic(dim: usize, atoms: Vec<(Point<T>, T)>) -> Result<Self> {
        check_dim(dim)?;
        for (z, m) in &atoms {
            check_atom(dim, z, *m)?;
        }
        Ok(Self {
            dim,
            variant: Variant::FiniteAtomic { atoms, moving: None },
        })
    }

    /// Atoms given as a function of the base point.
    pub fn moving_atoms(dim: usize, atoms: AtomsFn<T>) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            variant: Variant::FiniteAtomic { atoms: Vec::new(), moving: Some(atoms) },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn variant(&self) -> &Variant<T> {
        &self.variant
    }

    pub fn variant_name(&self) -> &'static str {
        match self.variant {
            Variant::Density { .. } => "density",
            Variant::VariableOrder { .. } => "variable_order",
            Variant::LevyIto { .. } => "levy_ito",
            Variant::RotatedQuadrant { .. } => "rotated_quadrant",
            Variant::FiniteAtomic { .. } => "finite_atomic",
        }
    }

    pub fn is_atomic(&self) -> bool {
        match &self.variant {
            Variant::FiniteAtomic { .. } => true,
            Variant::LevyIto { base, .. } => base.is_atomic(),
            _ => false,
        }
    }

    /// Atoms of an atomic family at ξ (mapped through the jump for Lévy-Itô).
    pub fn atoms_at(&self, xi: &Point<T>) -> Result<Vec<(Point<T>, T)>> {
        match &self.variant {
            Variant::FiniteAtomic { atoms, moving: None } => Ok(atoms.clone()),
            Variant::FiniteAtomic { moving: Some(f), .. } => {
                let atoms = f(xi);
                for (z, m) in &atoms {
                    check_atom(self.dim, z, *m)?;
                }
                Ok(atoms)
            }
            Variant::LevyIto { base, jump, .. } => {
                let origin = Point::zero(self.dim);
                Ok(base
                    .atoms_at(&origin)?
                    .into_iter()
                    .map(|(z, m)| (jump(xi, &z), m))
                    .collect())
            }
            _ => Err(Error::invalid("family has no atoms")),
        }
    }

    /// Rotation angle `sqrt|θ_ξ|` of the rotated quadrant, `θ_ξ = arg ξ ∈ (-π, π]`.
    pub fn quadrant_angle(xi: &Point<T>) -> T {
        let theta = if xi.dim() >= 2 { xi.angle() } else { T::zero() };
        theta.abs().sqrt()
    }

    /// Density of `ν_ξ` at `z != 0`.
    pub fn density_at(&self, xi: &Point<T>, z: &Point<T>) -> Result<T> {
        if z.is_zero() {
            return Err(Error::ZeroPoint);
        }
        match &self.variant {
            Variant::FiniteAtomic { .. } => Err(Error::NoDensity("finite_atomic")),
            Variant::LevyIto { base, jump, c0, c1 } => {
                if base.is_atomic() {
                    return Err(Error::NoDensity("levy_ito over an atomic base"));
                }
                let origin = Point::zero(self.dim);
                let (pre, det) = invert_jump(jump, xi, z, *c0, *c1)?;
                Ok(base.density_at(&origin, &pre)? / det.abs())
            }
            _ => Ok(self.ray_density(xi, z)),
        }
    }

    /// Density for the continuous non-push-forward variants (0 for the rest).
    pub(crate) fn ray_density(&self, xi: &Point<T>, z: &Point<T>) -> T {
        let n = from_usize::<T>(self.dim);
        match &self.variant {
            Variant::Density { kernel, .. } => kernel(xi, z),
            Variant::VariableOrder { order, normalization, .. } => {
                *normalization * z.norm().powf(-(n + order(xi)))
            }
            Variant::RotatedQuadrant { sigma } => {
                let alpha = Self::quadrant_angle(xi);
                if in_arc(z.angle(), alpha, lit(std::f64::consts::FRAC_PI_2)) {
                    z.norm().powf(-(lit::<T>(2.0) + *sigma))
                } else {
                    T::zero()
                }
            }
            _ => T::zero(),
        }
    }

    /// Angular support arc `(start, width)` in 2-D, when restricted.
    pub(crate) fn support_arc(&self, xi: &Point<T>) -> Option<(T, T)> {
        match &self.variant {
            Variant::RotatedQuadrant { .. } => {
                Some((Self::quadrant_angle(xi), lit(std::f64::consts::FRAC_PI_2)))
            }
            _ => None,
        }
    }

    /// Samples the structural invariants of the variant on the given points.
    pub fn check_invariants(&self, xis: &[Point<T>], zs: &[Point<T>]) -> Result<()> {
        let n = from_usize::<T>(self.dim);
        let slack: T = lit(1e-9);
        match &self.variant {
            Variant::Density { kernel, lambda, sigma, .. } => {
                for xi in xis {
                    for z in zs.iter().filter(|z| !z.is_zero()) {
                        let k = kernel(xi, z);
                        let bound = *lambda * z.norm().powf(-(n + *sigma));
                        if !(k >= T::zero()) || k > bound * (T::one() + slack) {
                            return Err(Error::invalid(format!(
                                "kernel {k} at xi = {xi}, z = {z} outside [0, {bound}]"
                            )));
                        }
                    }
                }
            }
            Variant::VariableOrder { order, sigma1, sigma2, .. } => {
                for xi in xis {
                    let s = order(xi);
                    if !(s >= *sigma1 - slack && s <= *sigma2 + slack) {
                        return Err(Error::invalid(format!(
                            "order {s} at xi = {xi} outside [{sigma1}, {sigma2}]"
                        )));
                    }
                }
            }
            Variant::LevyIto { jump, c0, c1, .. } => {
                for xi in xis {
                    for z in zs.iter().filter(|z| !z.is_zero()) {
                        check_jump(jump, xi, z, *c0, *c1)?;
                    }
                }
            }
            Variant::FiniteAtomic { .. } => {
                for xi in xis {
                    self.atoms_at(xi)?;
                }
            }
            Variant::RotatedQuadrant { .. } => {}
        }
        Ok(())
    }
}

fn check_atom<T: Real>(dim: usize, z: &Point<T>, m: T) -> Result<()> {
    if z.dim() != dim {
        return Err(Error::invalid("atom dimension mismatch"));
    }
    if z.is_zero() {
        return Err(Error::invalid("atoms at the origin are not allowed"));
    }
    if !(m >= T::zero()) || !m.is_finite() {
        return Err(Error::invalid(format!("atom mass {m} must be finite and nonnegative")));
    }
    Ok(())
}

pub(crate) fn check_jump<T: Real>(jump: &JumpFn<T>, xi: &Point<T>, z: &Point<T>, c0: T, c1: T) -> Result<Point<T>> {
    let w = jump(xi, z);
    let ratio = w.norm() / z.norm();
    let slack: T = lit(1e-9);
    if !(ratio >= c0 * (T::one() - slack) && ratio <= c1 * (T::one() + slack)) {
        return Err(Error::JumpOutOfBounds {
            z: z.to_f64_vec(),
            ratio: ratio.to_f64().unwrap_or(f64::NAN),
            c0: c0.to_f64().unwrap_or(f64::NAN),
            c1: c1.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(w)
}

/// True when angle `t` lies in the arc `[a, a + w]` modulo 2π.
pub(crate) fn in_arc<T: Real>(t: T, a: T, w: T) -> bool {
    let two_pi: T = lit(std::f64::consts::TAU);
    let mut d = (t - a) % two_pi;
    if d < T::zero() {
        d = d + two_pi;
    }
    d <= w
}

fn jacobian<T: Real>(jump: &JumpFn<T>, xi: &Point<T>, z: &Point<T>) -> [[T; 3]; 3] {
    let n = z.dim();
    let h = z.norm() * lit(1e-6);
    let mut jac = [[T::zero(); 3]; 3];
    for k in 0..n {
        let e = Point::basis(n, k) * h;
        let d = (jump(xi, &(*z + e)) - jump(xi, &(*z - e))) * (lit::<T>(0.5) / h);
        for (i, row) in jac.iter_mut().enumerate().take(n) {
            row[k] = d.get(i);
        }
    }
    jac
}

fn det<T: Real>(a: &[[T; 3]; 3], n: usize) -> T {
    match n {
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        _ => {
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        }
    }
}

/// Solves `J x = b` by Cramer's rule (n <= 3).
fn solve<T: Real>(a: &[[T; 3]; 3], b: &Point<T>) -> Option<Point<T>> {
    let n = b.dim();
    let d = det(a, n);
    if d == T::zero() || !d.is_finite() {
        return None;
    }
    let mut x = Point::zero(n);
    for k in 0..n {
        let mut m = *a;
        for (i, row) in m.iter_mut().enumerate().take(n) {
            row[k] = b.get(i);
        }
        x.set(k, det(&m, n) / d);
    }
    Some(x)
}

/// Newton inversion of `j(ξ, ·)` at `w`; returns the preimage and the Jacobian determinant there.
pub(crate) fn invert_jump<T: Real>(jump: &JumpFn<T>, xi: &Point<T>, w: &Point<T>, c0: T, c1: T) -> Result<(Point<T>, T)> {
    let mut z = *w * (lit::<T>(2.0) / (c0 + c1));
    let tol = w.norm() * lit(1e3) * T::epsilon();
    for _ in 0..100 {
        let r = jump(xi, &z) - *w;
        if r.norm() <= tol {
            let jac = jacobian(jump, xi, &z);
            return Ok((z, det(&jac, z.dim())));
        }
        let jac = jacobian(jump, xi, &z);
        let step = solve(&jac, &r).ok_or_else(|| Error::invalid("singular jump Jacobian"))?;
        z = z - step;
        if z.is_zero() || !z.is_finite() {
            break;
        }
    }
    Err(Error::invalid(format!("jump inversion did not converge at w = {w}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_examples() {
        let f = LevyFamily::<f64>::power_law(1, 1.0, 1.0).unwrap();
        let v = f.density_at(&Point::scalar(0.0), &Point::scalar(0.5)).unwrap();
        assert!((v - 1.0 / (0.5f64 * 0.5)).abs() < 1e-12);
        assert_eq!(f.density_at(&Point::scalar(0.0), &Point::scalar(0.0)), Err(Error::ZeroPoint));

        let vo = LevyFamily::<f64>::variable_order(2, Arc::new(|_| 1.5), 0.5, 1.5, 0.0).unwrap();
        assert_eq!(vo.density_at(&Point::xy(0.3, 0.1), &Point::polar(0.7)).unwrap(), 1.0);

        let q = LevyFamily::<f64>::rotated_quadrant(1.0).unwrap();
        assert_eq!(q.density_at(&Point::xy(1.0, 0.0), &Point::xy(-0.5, -0.5)).unwrap(), 0.0);
        assert!(q.density_at(&Point::xy(1.0, 0.0), &Point::xy(0.5, 0.5)).unwrap() > 0.0);

        let a = LevyFamily::<f64>::finite_atomic(1, vec![(Point::scalar(0.5), 1.0)]).unwrap();
        assert_eq!(a.density_at(&Point::scalar(0.0), &Point::scalar(0.5)), Err(Error::NoDensity("finite_atomic")));
        assert!(LevyFamily::<f64>::finite_atomic(1, vec![(Point::scalar(0.0), 1.0)]).is_err());
    }

    #[test]
    fn push_forward_density_matches_change_of_variables() {
        let base = LevyFamily::<f64>::power_law(2, 1.0, 1.0).unwrap();
        let jump: JumpFn<f64> = Arc::new(|_, z| *z * 2.0);
        let f = LevyFamily::levy_ito(base, jump, 2.0, 2.0).unwrap();
        let w = Point::<f64>::xy(0.6, 0.2);
        // K(w/2)/4 for the linear map z -> 2z in the plane
        let expected = (w * 0.5).norm().powf(-3.0) / 4.0;
        let got = f.density_at(&Point::zero(2), &w).unwrap();
        assert!((got - expected).abs() < 1e-6 * expected);
    }
}
