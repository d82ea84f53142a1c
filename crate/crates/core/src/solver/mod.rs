//! Monotone grid scheme for `λu − 𝓘ₓu + H(x, Du) = 0` and its parabolic counterpart,
//! with discrete sub/supersolution certificates and comparison experiments.

mod grid_function;
mod scheme;

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assumptions::{HamiltonianSpec, ScalarField};
use crate::error::{Error, Result};
use crate::measure::{LevyFamily, PolarGrid};
use crate::operators::{eval_full, TestFunction};
use crate::point::Point;
use crate::scalar::{lit, to_f64, Real};

pub use grid_function::{FarField, GridFunction};
pub use scheme::{DiscreteOperator, ResidualEval, Scheme};

use grid_function::{csv_err, io};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub lambda: f64,
    /// Split radius; defaults to `min(2h, 1)`.
    pub delta: Option<f64>,
    /// Pseudo-time step of the stationary iteration; defaults to `damping` times the
    /// monotonicity bound, re-evaluated every sweep.
    pub tau: Option<f64>,
    /// Time step of the parabolic scheme; defaults to `damping` times the bound at the
    /// gradient clamp.
    pub dt: Option<f64>,
    /// Parabolic horizon.
    pub horizon: f64,
    /// Discount added to the parabolic equation, `u_t + κu − 𝓘u + H = 0`; zero by default.
    pub discount: f64,
    pub max_iterations: usize,
    /// Sup-norm residual tolerance.
    pub tolerance: f64,
    pub damping: f64,
    /// Componentwise bound on discrete gradients; derived from the data when absent.
    pub gradient_clamp: Option<f64>,
    /// Largest radial quadrature step when assembling the operator.
    pub quadrature_step: Option<f64>,
    /// Keep every k-th parabolic step (0: only the first and last).
    pub snapshot_every: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            delta: None,
            tau: None,
            dt: None,
            horizon: 1.0,
            discount: 0.0,
            max_iterations: 200_000,
            tolerance: 1e-10,
            damping: 0.9,
            gradient_clamp: None,
            quadrature_step: None,
            snapshot_every: 0,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be finite and nonnegative"));
        }
        if !(self.discount >= 0.0 && self.discount.is_finite()) {
            return Err(Error::invalid("discount must be finite and nonnegative"));
        }
        if !pos(self.tolerance) || !(self.damping > 0.0 && self.damping <= 1.0) || !pos(self.horizon) {
            return Err(Error::invalid("need tolerance > 0, damping in (0, 1] and horizon > 0"));
        }
        for (name, v) in [
            ("delta", self.delta),
            ("tau", self.tau),
            ("dt", self.dt),
            ("gradient_clamp", self.gradient_clamp),
            ("quadrature_step", self.quadrature_step),
        ] {
            if let Some(v) = v {
                if !pos(v) {
                    return Err(Error::invalid(format!("{name} must be positive")));
                }
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        Ok(())
    }

    fn delta_for<T: Real>(&self, layout: &GridFunction<T>) -> T {
        match self.delta {
            Some(d) => lit(d),
            None => (layout.spacing() * lit(2.0)).min(T::one()),
        }
    }
}

/// Gradient clamp derived from the data: four times
/// `max(1, ((sup|H(x,0)| + λ‖u₀‖∞ + 1)/b_m)^{1/m})`, and at least twice the initial slopes.
pub fn default_gradient_clamp<T: Real>(ham: &HamiltonianSpec<T>, lambda: T, init: &GridFunction<T>) -> T {
    let zero = Point::zero(init.dim());
    let h0 = (0..init.len()).fold(T::zero(), |m, k| m.max(ham.eval(&init.node(k), T::zero(), &zero).abs()));
    let scale = ((h0 + lambda * init.sup_norm() + T::one()) / ham.b_m).powf(ham.m.recip()).max(T::one());
    let mut slope = T::zero();
    for k in 0..init.len() {
        for d in 0..init.dim() {
            for s in [-1isize, 1] {
                let v = scheme::value_of(init, init.neighbor(k, d, s));
                slope = slope.max((v - init.values[k]).abs() / init.spacing());
            }
        }
    }
    (scale * lit(4.0)).max(slope * lit(2.0))
}

/// Builds the operator and numerical Hamiltonian on the layout of `template`.
pub fn build_scheme<T: Real>(
    family: &LevyFamily<T>,
    ham: &HamiltonianSpec<T>,
    cfg: &SolveConfig,
    template: &GridFunction<T>,
    grid: &PolarGrid<T>,
) -> Result<Scheme<T>> {
    cfg.validate()?;
    let op = DiscreteOperator::assemble(family, template, cfg.delta_for(template), grid, cfg.quadrature_step.map(lit))?;
    let lambda: T = lit(cfg.lambda);
    let clamp = match cfg.gradient_clamp {
        Some(g) => lit(g),
        None => default_gradient_clamp(ham, lambda, template),
    };
    Scheme::new(op, ham, template, lambda, clamp)
}

/// `λu − 𝓘u + Ĥ(x, D⁻u, D⁺u)` at every node of `u`.
pub fn residual<T: Real>(
    u: &GridFunction<T>,
    family: &LevyFamily<T>,
    ham: &HamiltonianSpec<T>,
    cfg: &SolveConfig,
    grid: &PolarGrid<T>,
) -> Result<GridFunction<T>> {
    let scheme = build_scheme(family, ham, cfg, u, grid)?;
    u.with_values(scheme.residual(u, T::zero()).values)
}

#[derive(Clone, Debug)]
pub struct SolveOutcome<T> {
    pub solution: GridFunction<T>,
    pub iterations: usize,
    /// Sup-norm residual before each update, then the final one.
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
    pub last_tau: f64,
    pub gradient_clamp: f64,
    /// The clamp was hit at some sweep: the run is not trustworthy.
    pub clamp_active: bool,
    pub cross_clamped: bool,
}

impl<T: Real> SolveOutcome<T> {
    pub fn write_history_csv<W: Write>(&self, out: W, header_comment: Option<&str>) -> Result<()> {
        let mut out = out;
        if let Some(c) = header_comment {
            writeln!(out, "# {c}").map_err(io)?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "residual"]).map_err(csv_err)?;
        for (i, r) in self.residual_history.iter().enumerate() {
            w.write_record([i.to_string(), format!("{r:.12e}")]).map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }
}

fn sup(values: &[impl Real]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(to_f64(v.abs())))
}

/// Damped fixed-point iteration `u ← u − τ R(u)` until `‖R(u)‖∞ < tolerance`.
pub fn solve_stationary<T: Real>(scheme: &Scheme<T>, cfg: &SolveConfig, init: &GridFunction<T>) -> Result<SolveOutcome<T>> {
    cfg.validate()?;
    if !(scheme.lambda > T::zero()) {
        return Err(Error::invalid("the stationary problem needs lambda > 0"));
    }
    if init.len() != scheme.operator.len() {
        return Err(Error::invalid("initial data lives on a different layout"));
    }
    let mut u = init.clone();
    let mut history = Vec::new();
    let mut clamp_active = false;
    let damping: T = lit(cfg.damping);
    let mut tau = T::zero();
    for it in 0..cfg.max_iterations {
        let r = scheme.residual(&u, T::zero());
        clamp_active |= r.clamp_active;
        let norm = sup(&r.values);
        history.push(norm);
        if norm < cfg.tolerance {
            return Ok(SolveOutcome {
                solution: u,
                iterations: it,
                final_residual: norm,
                residual_history: history,
                last_tau: to_f64(tau),
                gradient_clamp: to_f64(scheme.gradient_clamp),
                clamp_active,
                cross_clamped: scheme.operator.cross_clamped,
            });
        }
        let bound = scheme.step_bound(scheme.lambda, r.gradient_range);
        tau = match cfg.tau {
            Some(t) => {
                let t: T = lit(t);
                if t > bound {
                    return Err(Error::CflViolation { dt: to_f64(t), bound: to_f64(bound) });
                }
                t
            }
            None => damping * bound,
        };
        for (v, r) in u.values.iter_mut().zip(&r.values) {
            *v = *v - tau * *r;
        }
    }
    let r = scheme.residual(&u, T::zero());
    Err(Error::NoConvergence { iterations: cfg.max_iterations, residual: sup(&r.values) })
}

/// Builds the scheme on the layout of `init` and runs [`solve_stationary`].
pub fn solve<T: Real>(
    family: &LevyFamily<T>,
    ham: &HamiltonianSpec<T>,
    cfg: &SolveConfig,
    grid: &PolarGrid<T>,
    init: &GridFunction<T>,
) -> Result<SolveOutcome<T>> {
    solve_stationary(&build_scheme(family, ham, cfg, init, grid)?, cfg, init)
}

#[derive(Clone, Debug)]
pub struct ParabolicRun<T> {
    /// `(t, u(t))` pairs, always including the initial and final states.
    pub snapshots: Vec<(T, GridFunction<T>)>,
    pub steps: usize,
    pub dt: f64,
    pub clamp_active: bool,
}

/// Largest explicit time step keeping the parabolic update monotone for slopes below `g`.
pub fn parabolic_dt_bound<T: Real>(scheme: &Scheme<T>, discount: T, g: T) -> T {
    scheme.step_bound(discount, g)
}

/// Explicit Euler `u ← u + dt (𝓘u − κu − H(x, t, Du))` up to the horizon.
pub fn solve_parabolic<T: Real>(scheme: &Scheme<T>, cfg: &SolveConfig, u0: &GridFunction<T>) -> Result<ParabolicRun<T>> {
    cfg.validate()?;
    if u0.len() != scheme.operator.len() {
        return Err(Error::invalid("initial data lives on a different layout"));
    }
    let horizon: T = lit(cfg.horizon);
    let kappa: T = lit(cfg.discount);
    let dt: T = match cfg.dt {
        Some(d) => lit(d),
        None => parabolic_dt_bound(scheme, kappa, scheme.gradient_clamp) * lit(cfg.damping),
    };
    let steps = (horizon / dt).ceil().to_usize().unwrap_or(usize::MAX).max(1);
    if steps > 50_000_000 {
        return Err(Error::invalid("time step too small for the horizon"));
    }
    let dt = horizon / crate::scalar::from_usize(steps);
    let mut u = u0.clone();
    let mut snapshots = vec![(T::zero(), u.clone())];
    let mut clamp_active = false;
    for n in 0..steps {
        let t = dt * crate::scalar::from_usize(n);
        let r = scheme.residual_with(&u, t, kappa);
        clamp_active |= r.clamp_active;
        let bound = parabolic_dt_bound(scheme, kappa, r.gradient_range);
        if dt > bound * (T::one() + lit(1e-12)) {
            return Err(Error::CflViolation { dt: to_f64(dt), bound: to_f64(bound) });
        }
        for (v, r) in u.values.iter_mut().zip(&r.values) {
            *v = *v - dt * *r;
        }
        if let Some(k) = u.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("parabolic iterate is not finite at node {k}")));
        }
        let last = n + 1 == steps;
        if last || (cfg.snapshot_every > 0 && (n + 1) % cfg.snapshot_every == 0) {
            snapshots.push((t + dt, u.clone()));
        }
    }
    Ok(ParabolicRun { snapshots, steps, dt: to_f64(dt), clamp_active })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub ok: bool,
    pub worst_node: usize,
    /// Largest residual (subsolution) or smallest residual (supersolution).
    pub worst_value: f64,
}

/// Discrete subsolution: `R(u) <= tol` at every node.
pub fn certify_subsolution<T: Real>(scheme: &Scheme<T>, u: &GridFunction<T>, tol: f64) -> Certificate {
    let r = scheme.residual(u, T::zero());
    let (k, v) = r
        .values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if to_f64(*v) > acc.1 { (k, to_f64(*v)) } else { acc });
    Certificate { ok: v <= tol, worst_node: k, worst_value: v }
}

/// Discrete supersolution: `R(u) >= −tol` at every node.
pub fn certify_supersolution<T: Real>(scheme: &Scheme<T>, u: &GridFunction<T>, tol: f64) -> Certificate {
    let r = scheme.residual(u, T::zero());
    let (k, v) = r
        .values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, v)| if to_f64(*v) < acc.1 { (k, to_f64(*v)) } else { acc });
    Certificate { ok: v >= -tol, worst_node: k, worst_value: v }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub sub_certificate: Certificate,
    pub super_certificate: Certificate,
    /// Largest `sub − super` over nodes (nonpositive when ordered).
    pub ordering_gap: f64,
    pub iterations_from_sub: usize,
    pub iterations_from_super: usize,
    /// `sup |u_sub − u_super|` between the two converged runs.
    pub agreement: f64,
    pub agreement_tolerance: f64,
    pub agree: bool,
    /// Largest excursion of either solution outside `[sub, super]`.
    pub sandwich_excess: f64,
    pub sandwich_tolerance: f64,
    pub clamp_active: bool,
    pub lambda: f64,
    pub tolerance: f64,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Certifies both bounds, checks their order, solves from each and checks that both
/// solutions stay between them and agree.
pub fn comparison_experiment<T: Real>(
    scheme: &Scheme<T>,
    cfg: &SolveConfig,
    sub: &GridFunction<T>,
    sup_fn: &GridFunction<T>,
) -> Result<ComparisonReport> {
    if !sub.same_grid(sup_fn) {
        return Err(Error::GridMismatch);
    }
    let tol = cfg.tolerance;
    let cs = certify_subsolution(scheme, sub, tol);
    if !cs.ok {
        return Err(Error::CertificationFailed(format!(
            "lower bound has residual {:.3e} > {tol:.1e} at node {}",
            cs.worst_value, cs.worst_node
        )));
    }
    let cp = certify_supersolution(scheme, sup_fn, tol);
    if !cp.ok {
        return Err(Error::CertificationFailed(format!(
            "upper bound has residual {:.3e} < -{tol:.1e} at node {}",
            cp.worst_value, cp.worst_node
        )));
    }
    let lambda = to_f64(scheme.lambda);
    // a residual below ε puts the iterate within ε/λ of the discrete solution
    let slack = 2.0 * tol / lambda + 1e-12 * (1.0 + to_f64(sub.sup_norm().max(sup_fn.sup_norm())));
    let mut gap = f64::NEG_INFINITY;
    for k in 0..sub.len() {
        let (a, b) = (to_f64(sub.values[k]), to_f64(sup_fn.values[k]));
        gap = gap.max(a - b);
        if a > b + slack {
            return Err(Error::OrderingViolation { node: k, lower: a, upper: b });
        }
    }
    let lo = solve_stationary(scheme, cfg, sub)?;
    let hi = solve_stationary(scheme, cfg, sup_fn)?;
    let mut excess = 0.0f64;
    for u in [&lo.solution, &hi.solution] {
        for k in 0..u.len() {
            let v = to_f64(u.values[k]);
            let (a, b) = (to_f64(sub.values[k]), to_f64(sup_fn.values[k]));
            let e = (a - v).max(v - b).max(0.0);
            if e > slack {
                let (lower, upper) = if v < a { (a, v) } else { (v, b) };
                return Err(Error::OrderingViolation { node: k, lower, upper });
            }
            excess = excess.max(e);
        }
    }
    let agreement = to_f64(lo.solution.sup_distance(&hi.solution)?);
    Ok(ComparisonReport {
        sub_certificate: cs,
        super_certificate: cp,
        ordering_gap: gap,
        iterations_from_sub: lo.iterations,
        iterations_from_super: hi.iterations,
        agreement,
        agreement_tolerance: slack,
        agree: agreement <= slack,
        sandwich_excess: excess,
        sandwich_tolerance: slack,
        clamp_active: lo.clamp_active || hi.clamp_active,
        lambda,
        tolerance: tol,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncationSensitivity {
    pub extent: f64,
    pub doubled_extent: f64,
    /// `sup |u_L − u_{2L}|` over the nodes of the smaller box.
    pub sup_difference: f64,
    /// Same, restricted to the middle half of the smaller box.
    pub interior_difference: f64,
}

/// Solves on `[−L, L]^N` and on `[−2L, 2L]^N` at the same spacing, starting from the
/// constant `init`, and compares the two on the smaller box.
pub fn truncation_sensitivity<T: Real>(
    family: &LevyFamily<T>,
    ham: &HamiltonianSpec<T>,
    cfg: &SolveConfig,
    grid: &PolarGrid<T>,
    layout: &GridFunction<T>,
    init: T,
) -> Result<TruncationSensitivity> {
    let n = layout.n();
    let small = GridFunction::constant(layout.dim(), n, layout.extent(), init, layout.far)?;
    let big = GridFunction::constant(layout.dim(), 2 * n - 1, layout.extent() * lit(2.0), init, layout.far)?;
    let mut cfg = cfg.clone();
    if cfg.delta.is_none() {
        cfg.delta = Some(to_f64(cfg.delta_for(&small)));
    }
    let a = solve_stationary(&build_scheme(family, ham, &cfg, &small, grid)?, &cfg, &small)?.solution;
    let b = solve_stationary(&build_scheme(family, ham, &cfg, &big, grid)?, &cfg, &big)?.solution;
    let half = layout.extent() / lit(2.0);
    let (mut all, mut mid) = (0.0f64, 0.0f64);
    for k in 0..a.len() {
        let x = a.node(k);
        let d = to_f64((a.values[k] - b.interpolate(&x)).abs());
        all = all.max(d);
        if (0..x.dim()).all(|i| x.get(i).abs() <= half) {
            mid = mid.max(d);
        }
    }
    Ok(TruncationSensitivity {
        extent: to_f64(layout.extent()),
        doubled_extent: to_f64(layout.extent()) * 2.0,
        sup_difference: all,
        interior_difference: mid,
    })
}

/// Source `f = λw − 𝓘w + b|Dw|^m` for which `w` solves `λu − 𝓘u + b|Du|^m − f = 0`.
/// Evaluation failures surface as NaN, which the scheme rejects.
pub fn manufactured_source<T: Real>(
    family: LevyFamily<T>,
    w: TestFunction<T>,
    lambda: T,
    b: T,
    m: T,
    grid: PolarGrid<T>,
) -> ScalarField<T> {
    Arc::new(move |x: &Point<T>| {
        let i = eval_full(&family, x, &w, lit(0.5), &grid).unwrap_or(T::nan());
        lambda * w.value_at(x) - i + b * w.grad(x).norm().powf(m)
    })
}
