use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::assumptions::HamiltonianSpec;
use crate::error::{Error, Result};
use crate::measure::{LevyFamily, NodeKind, PolarGrid, Region, Variant};
use crate::operators::levy_ito_drift;
use crate::point::Point;
use crate::scalar::{from_usize, lit, Real};
use crate::solver::grid_function::{GridFunction, Neighbor, Stencil};

/// One row of the discrete nonlocal operator:
/// `𝓘u(x_k) ≈ Σ c_j u_j + constant + diag u_k − drift·D^{up}u(x_k)`.
#[derive(Clone, Debug)]
struct Row<T> {
    entries: Vec<(usize, T)>,
    constant: T,
    diag: T,
    drift: Point<T>,
    /// `∂(−𝓘u)(x_k)/∂u_k`, including the upwind drift.
    self_weight: T,
}

/// Monotone discretization of `𝓘_x` on a grid-function layout: exact quadrature of the
/// interpolant outside `B_δ`, second differences weighted by `∫_{B_δ} z zᵀ ν_x` inside,
/// and the crown first moment (plus the Lévy-Itô drift) as an upwind transport term.
#[derive(Clone, Debug)]
pub struct DiscreteOperator<T> {
    rows: Vec<Row<T>>,
    delta: T,
    /// Largest `∂(−𝓘u)(x_k)/∂u_k` over nodes.
    pub max_weight: T,
    /// A cross second moment had to be reduced to keep the stencil monotone.
    pub cross_clamped: bool,
}

fn add_stencil<T: Real>(acc: &mut BTreeMap<usize, T>, constant: &mut T, s: Stencil<T>, weight: T) {
    match s {
        Stencil::Fixed(c) => *constant = *constant + c * weight,
        Stencil::Nodes(ws) => {
            for (j, w) in ws {
                let e = acc.entry(j).or_insert(T::zero());
                *e = *e + w * weight;
            }
        }
    }
}

fn add_neighbor<T: Real>(acc: &mut BTreeMap<usize, T>, constant: &mut T, nb: Neighbor<T>, weight: T) {
    match nb {
        Neighbor::Node(j) => {
            let e = acc.entry(j).or_insert(T::zero());
            *e = *e + weight;
        }
        Neighbor::Fixed(c) => *constant = *constant + c * weight,
    }
}

fn diagonal<T: Real>(u: &GridFunction<T>, k: usize, sx: isize, sy: isize) -> Neighbor<T> {
    match u.neighbor(k, 0, sx) {
        Neighbor::Node(j) => u.neighbor(j, 1, sy),
        f => f,
    }
}

impl<T: Real> DiscreteOperator<T> {
    /// `delta` must exceed the grid spacing and lie in `(0, 1]`.
    pub fn assemble(family: &LevyFamily<T>, layout: &GridFunction<T>, delta: T, grid: &PolarGrid<T>, max_step: Option<T>) -> Result<Self> {
        if family.dim() != layout.dim() {
            return Err(Error::invalid("family and grid function dimensions differ"));
        }
        let h = layout.spacing();
        if !(delta > h) {
            return Err(Error::GridTooCoarse { relative_error: crate::scalar::to_f64(h / delta), tolerance: 1.0 });
        }
        if delta > T::one() {
            return Err(Error::invalid("split radius must not exceed 1"));
        }
        let levy_ito = matches!(family.variant(), Variant::LevyIto { .. });
        let scaled = |r: Region<T>| match max_step {
            Some(s) if s > T::zero() => r.with_max_step(s),
            _ => r,
        };
        let rows: Vec<Result<(Row<T>, bool)>> = (0..layout.len())
            .into_par_iter()
            .map(|k| {
                let x = layout.node(k);
                let dim = layout.dim();
                let mut acc: BTreeMap<usize, T> = BTreeMap::new();
                let mut constant = T::zero();
                let mut mass = T::zero();
                let mut m1 = Point::zero(dim);
                if delta < T::one() {
                    family.visit(&x, &scaled(Region::annulus(delta, T::one())), grid, &mut |n| {
                        m1 = m1 + n.w * n.weight;
                        mass = mass + n.weight;
                        add_stencil(&mut acc, &mut constant, layout.stencil(&(x + n.w)), n.weight);
                    })?;
                }
                family.visit(&x, &scaled(Region::exterior(T::one())), grid, &mut |n| {
                    mass = mass + n.weight;
                    add_stencil(&mut acc, &mut constant, layout.stencil(&(x + n.w)), n.weight);
                })?;
                let mut a = [[T::zero(); 2]; 2];
                family.visit(&x, &Region::ball(delta), grid, &mut |n| {
                    if matches!(n.kind, NodeKind::Interior | NodeKind::InnerTail) {
                        for (i, row) in a.iter_mut().enumerate().take(dim) {
                            for (j, v) in row.iter_mut().enumerate().take(dim) {
                                *v = *v + n.w.get(i) * n.w.get(j) * n.weight;
                            }
                        }
                    }
                })?;
                let drift = if levy_ito { m1 - levy_ito_drift(family, &x, grid)? } else { m1 };

                // ½ Σ a_ij ∂_ij u with monotone second differences
                let h2 = h * h;
                let half: T = lit(0.5);
                let mut diag = -mass;
                let mut clamped = false;
                if dim == 1 {
                    let c = half * a[0][0] / h2;
                    add_neighbor(&mut acc, &mut constant, layout.neighbor(k, 0, 1), c);
                    add_neighbor(&mut acc, &mut constant, layout.neighbor(k, 0, -1), c);
                    diag = diag - c - c;
                } else {
                    let bound = a[0][0].min(a[1][1]);
                    let mut cross = a[0][1];
                    if cross.abs() > bound {
                        clamped = true;
                        cross = cross.signum() * bound;
                    }
                    let q = half / h2;
                    let ac = cross.abs();
                    for (axis, aii) in [(0usize, a[0][0]), (1, a[1][1])] {
                        let c = q * (aii - ac);
                        add_neighbor(&mut acc, &mut constant, layout.neighbor(k, axis, 1), c);
                        add_neighbor(&mut acc, &mut constant, layout.neighbor(k, axis, -1), c);
                    }
                    let s: isize = if cross >= T::zero() { 1 } else { -1 };
                    add_neighbor(&mut acc, &mut constant, diagonal(layout, k, 1, s), q * ac);
                    add_neighbor(&mut acc, &mut constant, diagonal(layout, k, -1, -s), q * ac);
                    diag = diag - q * (lit::<T>(2.0) * (a[0][0] + a[1][1]) - lit::<T>(2.0) * ac);
                }
                let own = acc.remove(&k).unwrap_or(T::zero());
                let diag = diag + own;
                let upwind = (0..dim).fold(T::zero(), |s, d| s + drift.get(d).abs()) / h;
                let row = Row {
                    entries: acc.into_iter().filter(|(_, c)| *c != T::zero()).collect(),
                    constant,
                    diag,
                    drift,
                    self_weight: -diag + upwind,
                };
                Ok((row, clamped))
            })
            .collect();
        let mut out = Vec::with_capacity(rows.len());
        let mut cross_clamped = false;
        for r in rows {
            let (row, c) = r?;
            cross_clamped |= c;
            out.push(row);
        }
        let max_weight = out.iter().fold(T::zero(), |m, r| m.max(r.self_weight));
        Ok(Self { rows: out, delta, max_weight, cross_clamped })
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `𝓘u(x_k)`.
    pub fn apply_at(&self, u: &GridFunction<T>, k: usize) -> T {
        let r = &self.rows[k];
        let mut v = r.constant + r.diag * u.values[k];
        for (j, c) in &r.entries {
            v = v + *c * u.values[*j];
        }
        let h = u.spacing();
        for d in 0..u.dim() {
            let b = r.drift.get(d);
            if b > T::zero() {
                v = v - b * (u.values[k] - value_of(u, u.neighbor(k, d, -1))) / h;
            } else if b < T::zero() {
                v = v - b * (value_of(u, u.neighbor(k, d, 1)) - u.values[k]) / h;
            }
        }
        v
    }

    pub fn apply(&self, u: &GridFunction<T>) -> Vec<T> {
        (0..self.len()).into_par_iter().map(|k| self.apply_at(u, k)).collect()
    }
}

pub(crate) fn value_of<T: Real>(u: &GridFunction<T>, n: Neighbor<T>) -> T {
    match n {
        Neighbor::Node(j) => u.values[j],
        Neighbor::Fixed(c) => c,
    }
}

/// Monotone numerical Hamiltonian.
#[derive(Clone, Debug)]
enum Flux<T> {
    /// `b(x)(Σ max(D⁻u, −D⁺u, 0)²)^{m/2} − f(x)` with `b`, `f` cached per node.
    Godunov { b: Vec<T>, f: Vec<T>, b_max: T },
    /// `H(x, t, (D⁺u + D⁻u)/2) − Σ θ (D⁺u − D⁻u)/2`.
    LaxFriedrichs { theta: T },
}

/// Residual `λu − 𝓘u + Ĥ(x, t, D⁻u, D⁺u)` on a fixed layout.
pub struct Scheme<T> {
    pub operator: DiscreteOperator<T>,
    ham: HamiltonianSpec<T>,
    flux: Flux<T>,
    nodes: Vec<Point<T>>,
    pub lambda: T,
    /// Gradients are clamped to `[−G, G]` componentwise before entering `Ĥ`.
    pub gradient_clamp: T,
    h: T,
    dim: usize,
}

/// Residual values plus whether the gradient clamp was hit and the largest one-sided slope.
pub struct ResidualEval<T> {
    pub values: Vec<T>,
    pub clamp_active: bool,
    pub gradient_range: T,
}

impl<T: Real> Scheme<T> {
    pub fn new(operator: DiscreteOperator<T>, ham: &HamiltonianSpec<T>, layout: &GridFunction<T>, lambda: T, gradient_clamp: T) -> Result<Self> {
        if ham.dim != layout.dim() {
            return Err(Error::invalid("Hamiltonian and grid function dimensions differ"));
        }
        if operator.len() != layout.len() {
            return Err(Error::invalid("operator was assembled on a different layout"));
        }
        if !(lambda >= T::zero()) || !(gradient_clamp > T::zero()) {
            return Err(Error::invalid("need lambda >= 0 and a positive gradient clamp"));
        }
        let nodes: Vec<Point<T>> = (0..layout.len()).map(|k| layout.node(k)).collect();
        let flux = match &ham.eikonal {
            Some(e) => {
                let b: Vec<T> = nodes.iter().map(|x| (e.b)(x)).collect();
                let f: Vec<T> = nodes.iter().map(|x| (e.f)(x)).collect();
                if let Some(k) = b.iter().position(|v| !(*v > T::zero() && v.is_finite())) {
                    return Err(Error::invalid(format!("b is not positive and finite at node {k}")));
                }
                if let Some(k) = f.iter().position(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("f is not finite at node {k}")));
                }
                let b_max = b.iter().copied().fold(T::zero(), T::max);
                Flux::Godunov { b, f, b_max }
            }
            None => Flux::LaxFriedrichs { theta: lf_viscosity(ham, &nodes, gradient_clamp) },
        };
        Ok(Self {
            operator,
            ham: ham.clone(),
            flux,
            nodes,
            lambda,
            gradient_clamp,
            h: layout.spacing(),
            dim: layout.dim(),
        })
    }

    /// Bound on `|∂Ĥ/∂u_k|` when one-sided slopes stay below `g`.
    pub fn hamiltonian_weight(&self, g: T) -> T {
        let n: T = from_usize(self.dim);
        let g = g.min(self.gradient_clamp);
        match &self.flux {
            // |∂_{u_k}(Σa_d²)^{m/2}| ≤ m|a|^{m−2}Σ|a_d|/h with |a| ≤ √N g
            Flux::Godunov { b_max, .. } => *b_max * self.ham.m * n.powf(self.ham.m / lit(2.0)) * g.powf(self.ham.m - T::one()) / self.h,
            Flux::LaxFriedrichs { theta } => n * *theta / self.h,
        }
    }

    /// Largest step `τ` for which `u − τ R(u)` is nondecreasing in every node value,
    /// for iterates whose one-sided slopes stay below `g`.
    pub fn step_bound(&self, lambda: T, g: T) -> T {
        T::one() / (lambda + self.operator.max_weight + self.hamiltonian_weight(g))
    }

    fn node_residual(&self, u: &GridFunction<T>, k: usize, t: T, lambda: T) -> (T, bool, T) {
        let uk = u.values[k];
        let g = self.gradient_clamp;
        let mut clamp = false;
        let mut range = T::zero();
        let mut minus = [T::zero(); 2];
        let mut plus = [T::zero(); 2];
        for d in 0..self.dim {
            let dm = (uk - value_of(u, u.neighbor(k, d, -1))) / self.h;
            let dp = (value_of(u, u.neighbor(k, d, 1)) - uk) / self.h;
            range = range.max(dm.abs()).max(dp.abs());
            if dm.abs() > g || dp.abs() > g {
                clamp = true;
            }
            minus[d] = dm.max(-g).min(g);
            plus[d] = dp.max(-g).min(g);
        }
        let hamiltonian = match &self.flux {
            Flux::Godunov { b, f, .. } => {
                let mut s = T::zero();
                for d in 0..self.dim {
                    let a = minus[d].max(-plus[d]).max(T::zero());
                    s = s + a * a;
                }
                b[k] * s.powf(self.ham.m / lit(2.0)) - f[k]
            }
            Flux::LaxFriedrichs { theta } => {
                let mut p = Point::zero(self.dim);
                let mut visc = T::zero();
                for d in 0..self.dim {
                    p.set(d, (minus[d] + plus[d]) / lit(2.0));
                    visc = visc + *theta * (plus[d] - minus[d]) / lit(2.0);
                }
                self.ham.eval(&self.nodes[k], t, &p) - visc
            }
        };
        (lambda * uk - self.operator.apply_at(u, k) + hamiltonian, clamp, range)
    }

    /// `λu − 𝓘u + Ĥ` at every node.
    pub fn residual(&self, u: &GridFunction<T>, t: T) -> ResidualEval<T> {
        self.residual_with(u, t, self.lambda)
    }

    pub(crate) fn residual_with(&self, u: &GridFunction<T>, t: T, lambda: T) -> ResidualEval<T> {
        let parts: Vec<(T, bool, T)> = (0..u.len()).into_par_iter().map(|k| self.node_residual(u, k, t, lambda)).collect();
        let mut clamp_active = false;
        let mut gradient_range = T::zero();
        let values = parts
            .into_iter()
            .map(|(v, c, g)| {
                clamp_active |= c;
                gradient_range = gradient_range.max(g);
                v
            })
            .collect();
        ResidualEval { values, clamp_active, gradient_range }
    }
}

/// Lax-Friedrichs viscosity: the largest sampled `|∂H/∂p_d|` over `|p_d| <= G`, with a
/// quarter of safety margin.
fn lf_viscosity<T: Real>(ham: &HamiltonianSpec<T>, nodes: &[Point<T>], g: T) -> T {
    let stride = (nodes.len() / 256).max(1);
    let dim = ham.dim;
    let levels: Vec<T> = (0..=4).map(|i| g * lit::<T>(-1.0 + 0.5 * i as f64)).collect();
    let times: Vec<T> = match ham.horizon {
        None => vec![T::zero()],
        Some(h) => (0..=4).map(|k| h * lit::<T>(k as f64 / 4.0)).collect(),
    };
    let eta = g * lit::<T>(1e-3) + lit(1e-9);
    let combos = levels.len().pow(dim as u32);
    let mut theta = T::zero();
    for x in nodes.iter().step_by(stride) {
        for &t in &times {
            for c in 0..combos {
                let mut p = Point::zero(dim);
                let mut r = c;
                for d in 0..dim {
                    p.set(d, levels[r % levels.len()]);
                    r /= levels.len();
                }
                for d in 0..dim {
                    let mut hi = p;
                    let mut lo = p;
                    hi.set(d, p.get(d) + eta);
                    lo.set(d, p.get(d) - eta);
                    let s = (ham.eval(x, t, &hi) - ham.eval(x, t, &lo)).abs() / (eta + eta);
                    if s.is_finite() {
                        theta = theta.max(s);
                    }
                }
            }
        }
    }
    theta * lit(1.25) + lit(1e-12)
}
