use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assumptions::{
    log_spaced, max_by_separation, AssumptionReport, ModulusEstimate, PairSample, SamplePlan, Verdict, Violation,
};
use crate::error::{Error, Result};
use crate::point::Point;
use crate::scalar::{lit, to_f64, Real};

pub type HamiltonianFn<T> = Arc<dyn Fn(&Point<T>, T, &Point<T>) -> T + Send + Sync>;
pub type ScalarField<T> = Arc<dyn Fn(&Point<T>) -> T + Send + Sync>;

/// `b(x)|p|^m − f(x)`.
#[derive(Clone)]
pub struct Eikonal<T> {
    pub b: ScalarField<T>,
    pub f: ScalarField<T>,
}

/// A Hamiltonian `H(x, t, p)` with its declared growth constants.
#[derive(Clone)]
pub struct HamiltonianSpec<T> {
    h: HamiltonianFn<T>,
    pub dim: usize,
    pub m: T,
    pub b_m: T,
    pub b0: T,
    pub r0: T,
    pub mu0: T,
    pub eikonal: Option<Eikonal<T>>,
    /// Time horizon for time-dependent Hamiltonians.
    pub horizon: Option<T>,
}

impl<T: Real> fmt::Debug for HamiltonianSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianSpec")
            .field("dim", &self.dim)
            .field("m", &self.m)
            .field("b_m", &self.b_m)
            .field("b0", &self.b0)
            .field("r0", &self.r0)
            .field("mu0", &self.mu0)
            .field("eikonal", &self.eikonal.is_some())
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl<T: Real> HamiltonianSpec<T> {
    pub fn new(dim: usize, h: HamiltonianFn<T>, m: T, b_m: T, b0: T, r0: T, mu0: T) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::invalid("dimension must be 1, 2 or 3"));
        }
        if !(m > T::one()) {
            return Err(Error::invalid(format!("growth exponent m = {m} must exceed 1")));
        }
        if !(b_m > T::zero()) || !(b0 >= T::zero()) || !(r0 > T::zero()) {
            return Err(Error::invalid("need b_m > 0, b0 >= 0 and r0 > 0"));
        }
        if !(mu0 > T::zero() && mu0 < T::one()) {
            return Err(Error::invalid("mu0 must lie in (0, 1)"));
        }
        Ok(Self { h, dim, m, b_m, b0, r0, mu0, eikonal: None, horizon: None })
    }

    /// `b(x)|p|^m − f(x)` with the constants it satisfies when `b >= b_min > 0`:
    /// `b_m = (m−1) b_min`, `b0 = max(sup(−f), 0)`.
    pub fn eikonal(dim: usize, b: ScalarField<T>, f: ScalarField<T>, m: T, b_min: T, f_min: T) -> Result<Self> {
        if !(b_min > T::zero()) {
            return Err(Error::invalid("eikonal Hamiltonians need b >= b_min > 0"));
        }
        let (bb, ff) = (b.clone(), f.clone());
        let h: HamiltonianFn<T> = Arc::new(move |x, _t, p| bb(x) * p.norm().powf(m) - ff(x));
        let mut spec = Self::new(dim, h, m, (m - T::one()) * b_min, (-f_min).max(T::zero()), T::one(), lit(0.5))?;
        spec.eikonal = Some(Eikonal { b, f });
        Ok(spec)
    }

    pub fn with_horizon(mut self, t: T) -> Result<Self> {
        if !(t > T::zero()) {
            return Err(Error::invalid("horizon must be positive"));
        }
        self.horizon = Some(t);
        Ok(self)
    }

    pub fn with_constants(mut self, b_m: T, b0: T, r0: T, mu0: T) -> Result<Self> {
        let s = Self::new(self.dim, self.h.clone(), self.m, b_m, b0, r0, mu0)?;
        self.b_m = s.b_m;
        self.b0 = s.b0;
        self.r0 = s.r0;
        self.mu0 = s.mu0;
        Ok(self)
    }

    #[inline]
    pub fn eval(&self, x: &Point<T>, t: T, p: &Point<T>) -> T {
        (self.h)(x, t, p)
    }

    pub fn function(&self) -> HamiltonianFn<T> {
        self.h.clone()
    }

    fn times(&self) -> Vec<T> {
        match self.horizon {
            None => vec![T::zero()],
            Some(h) => (0..=4).map(|k| h * lit::<T>(k as f64 / 4.0)).collect(),
        }
    }
}

/// Gradient samples with magnitudes log-spaced in `[0.05, 50]` and seeded directions.
pub fn default_p_samples<T: Real>(dim: usize, seed: u64) -> Vec<Point<T>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    log_spaced(0.05, 50.0, 16)
        .into_iter()
        .map(|m| {
            let v: Vec<f64> = loop {
                let v: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..=1.0)).collect();
                let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                if n > 1e-3 && n <= 1.0 {
                    break v.iter().map(|c| c / n * m).collect();
                }
            };
            Point::from_f64(&v)
        })
        .collect()
}

/// Eight scalings from `mu0` up to 0.999.
pub fn default_mu_samples(mu0: f64) -> Vec<f64> {
    (0..8).map(|k| mu0 + (0.999 - mu0) * k as f64 / 7.0).collect()
}

fn pnorm<T: Real>(p: &Point<T>) -> f64 {
    to_f64(p.norm())
}

/// Checks boundedness at `p = 0`, the two continuity moduli, superlinear coercivity and
/// its consequence `H(x,p) ≥ C|p|^m − |p|/C`.
pub fn check_h<T: Real>(spec: &HamiltonianSpec<T>, plan: &SamplePlan, p_samples: &[Point<T>], mu_samples: &[f64]) -> Result<AssumptionReport> {
    plan.validate()?;
    let id = if spec.horizon.is_some() { "H-t" } else { "H" };
    let mut rep = AssumptionReport::new(id, if spec.eikonal.is_some() { "eikonal" } else { "general" }, plan.seed);
    let m = to_f64(spec.m);
    let times = spec.times();
    let xs = plan.base_point_list::<T>(spec.dim);
    let zero = Point::zero(spec.dim);
    let h = |x: &Point<T>, t: T, p: &Point<T>| to_f64(spec.eval(x, t, p));

    if let Some(e) = &spec.eikonal {
        if let Some(x) = xs.iter().find(|x| !((e.b)(x) > T::zero())) {
            rep.part("eikonal", Verdict::Fails);
            rep.violate(Violation {
                description: "b(x) is not positive".into(),
                x: x.to_f64_vec(),
                y: None,
                s: None,
                value: to_f64((e.b)(x)),
                threshold: 0.0,
            });
        }
    }

    // H0
    let mut h0 = 0.0f64;
    for x in &xs {
        for &t in &times {
            h0 = h0.max(h(x, t, &zero).abs());
        }
    }
    rep.set("h0", h0);
    rep.part("H0", if h0.is_finite() { Verdict::Holds } else { Verdict::Fails });

    // H1: one modulus from x-variations at fixed p, one from p-variations at fixed x
    let pairs: Vec<PairSample<T>> = plan.point_pairs(spec.dim);
    let mut v1 = Vec::with_capacity(pairs.len());
    let mut v2 = Vec::with_capacity(pairs.len());
    for pr in &pairs {
        let q = pr.y - pr.x;
        let (mut a, mut b) = (0.0f64, 0.0f64);
        for p in p_samples {
            let pn = pnorm(p);
            for &t in &times {
                let d = (h(&pr.y, t, p) - h(&pr.x, t, p)).abs();
                a = a.max(d / (1.0 + pn.powf(m)));
                let base = h(&pr.x, t, p);
                let up = (h(&pr.x, t, &(*p + q)) - base).max(h(&pr.x, t, &(*p - q)) - base);
                b = b.max(up.max(0.0) / (1.0 + pn.powf(m - 1.0)));
            }
        }
        v1.push(a);
        v2.push(b);
    }
    let fit1 = ModulusEstimate::fit(max_by_separation(&pairs, &v1).iter().map(|(s, v, _)| (*s, *v)).collect())?;
    let fit2 = ModulusEstimate::fit(max_by_separation(&pairs, &v2).iter().map(|(s, v, _)| (*s, *v)).collect())?;
    let env = |f: &ModulusEstimate| -> (f64, f64) {
        match f.alpha {
            None => (0.0, 0.0),
            Some(a) => (a, f.envelope(a)),
        }
    };
    let (a1, c1) = env(&fit1);
    let (a2, c2) = env(&fit2);
    // mixed samples: how much the separately fitted envelopes must be scaled
    let n_sep = plan.separations;
    let mut scale = 1.0f64;
    let mut mixed_violation = None;
    for pr in &pairs {
        let other = &pairs[pr.anchor * n_sep + (pr.separation + 3) % n_sep];
        let q = other.y - other.x;
        let qn = other.s;
        for p in p_samples {
            let pn = pnorm(p);
            for &t in &times {
                let lhs = h(&pr.y, t, &(*p + q)) - h(&pr.x, t, p);
                if lhs <= 0.0 {
                    continue;
                }
                let rhs = c1 * pr.s.powf(a1) * (1.0 + pn.powf(m)) + c2 * qn.powf(a2) * (1.0 + pn.powf(m - 1.0));
                if rhs > 0.0 {
                    scale = scale.max(lhs / rhs);
                } else if lhs > 1e-12 {
                    scale = f64::INFINITY;
                    mixed_violation.get_or_insert(Violation {
                        description: "positive increment with vanishing moduli".into(),
                        x: pr.x.to_f64_vec(),
                        y: Some(pr.y.to_f64_vec()),
                        s: Some(pr.s),
                        value: lhs,
                        threshold: 0.0,
                    });
                }
            }
        }
    }
    rep.set("omega1_alpha", if fit1.vanishes() { f64::INFINITY } else { a1 });
    rep.set("omega1_c", c1);
    rep.set("omega2_alpha", if fit2.vanishes() { f64::INFINITY } else { a2 });
    rep.set("omega2_c", c2);
    rep.set("h1_scale", scale);
    let mut h1 = fit1.vanishing_verdict().and(fit2.vanishing_verdict());
    if h1 == Verdict::Fails {
        let (fit, name) = if fit1.vanishing_verdict() == Verdict::Fails { (&fit1, "x") } else { (&fit2, "p") };
        let (s, v) = fit.samples[0];
        rep.violate(Violation {
            description: format!("the {name}-modulus does not vanish at small separations"),
            x: pairs[0].x.to_f64_vec(),
            y: None,
            s: Some(s),
            value: v,
            threshold: 0.0,
        });
    }
    if let Some(v) = mixed_violation {
        h1 = Verdict::Fails;
        rep.violate(v);
    }
    rep.moduli.insert("omega_h1".into(), fit1);
    rep.moduli.insert("omega_h2".into(), fit2);
    rep.part("H1", h1);

    // H2 and the coercivity bound it implies
    let r0 = to_f64(spec.r0);
    let mu0 = to_f64(spec.mu0);
    let (bm, b0) = (to_f64(spec.b_m), to_f64(spec.b0));
    let large: Vec<&Point<T>> = p_samples.iter().filter(|p| pnorm(p) >= r0).collect();
    let mus: Vec<f64> = mu_samples.iter().copied().filter(|mu| *mu >= mu0 && *mu < 1.0).collect();
    if large.is_empty() || mus.is_empty() {
        rep.part("H2", Verdict::Inconclusive);
        rep.note("no gradient samples above r0 or no scalings in [mu0, 1)");
        return Ok(rep.finish());
    }
    let mut margin = f64::INFINITY;
    let mut h2 = Verdict::Holds;
    for x in &xs {
        for &t in &times {
            for p in &large {
                let pn = pnorm(p);
                let hp = h(x, t, p);
                for &mu in &mus {
                    let lhs = mu * h(x, t, &(**p * lit::<T>(1.0 / mu))) - hp;
                    let rhs = (1.0 - mu) * (bm * pn.powf(m) - b0);
                    let slack = 1e-9 * (lhs.abs() + rhs.abs() + 1.0);
                    margin = margin.min((lhs - rhs) / (1.0 - mu));
                    if lhs < rhs - slack {
                        h2 = Verdict::Fails;
                        rep.violate(Violation {
                            description: format!("superlinear growth fails at mu = {mu:.4}, |p| = {pn:.4e}"),
                            x: x.to_f64_vec(),
                            y: None,
                            s: Some(pn),
                            value: lhs,
                            threshold: rhs,
                        });
                    }
                }
            }
        }
    }
    rep.set("h2_min_margin", margin);
    rep.part("H2", h2);

    let feasible = |c: f64| {
        xs.iter().all(|x| {
            times.iter().all(|&t| {
                large.iter().all(|p| {
                    let pn = pnorm(p);
                    let v = h(x, t, p);
                    v >= c * pn.powf(m) - pn / c - 1e-9 * (v.abs() + 1.0)
                })
            })
        })
    };
    let scan: Vec<f64> = (-120..=120).map(|k| 10f64.powf(k as f64 / 20.0)).collect();
    match scan.iter().rposition(|c| feasible(*c)) {
        None => {
            rep.part("coercivity", Verdict::Fails);
            rep.violate(Violation {
                description: "no constant C satisfies the coercivity lower bound".into(),
                x: xs[0].to_f64_vec(),
                y: None,
                s: None,
                value: f64::NAN,
                threshold: f64::NAN,
            });
        }
        Some(k) => {
            let mut lo = scan[k];
            if k + 1 < scan.len() {
                let mut hi = scan[k + 1];
                for _ in 0..60 {
                    let mid = (lo * hi).sqrt();
                    if feasible(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
            }
            rep.set("coercivity_c", lo);
            rep.part("coercivity", Verdict::Holds);
        }
    }
    Ok(rep.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eikonal(f: f64) -> HamiltonianSpec<f64> {
        HamiltonianSpec::eikonal(1, Arc::new(|_| 1.0), Arc::new(move |_| f), 2.0, 1.0, f).unwrap()
    }

    #[test]
    fn squared_gradient_minus_one_holds() {
        let spec = eikonal(1.0).with_constants(1.0, 0.0, 0.5, 0.5).unwrap();
        let plan = SamplePlan::default();
        let rep = check_h(&spec, &plan, &default_p_samples(1, 3), &default_mu_samples(0.5)).unwrap();
        assert_eq!(rep.verdict, Verdict::Holds, "{}", rep.to_table());
        assert!((rep.constant("h0").unwrap() - 1.0).abs() < 1e-15);
        let c = rep.constant("coercivity_c").unwrap();
        assert!(c > 0.0);
    }

    #[test]
    fn overstated_growth_constant_is_caught() {
        let spec = eikonal(1.0).with_constants(10.0, 0.0, 0.5, 0.5).unwrap();
        let rep = check_h(&spec, &SamplePlan::default(), &default_p_samples(1, 3), &default_mu_samples(0.5)).unwrap();
        assert_eq!(rep.parts["H2"], Verdict::Fails);
        assert!(rep.violation.is_some());
    }

    #[test]
    fn invalid_constants_are_rejected() {
        let h: HamiltonianFn<f64> = Arc::new(|_, _, p| p.norm2());
        assert!(HamiltonianSpec::new(1, h.clone(), 1.0, 1.0, 0.0, 1.0, 0.5).is_err());
        assert!(HamiltonianSpec::new(1, h.clone(), 2.0, 0.0, 0.0, 1.0, 0.5).is_err());
        assert!(HamiltonianSpec::new(1, h, 2.0, 1.0, 0.0, 1.0, 1.0).is_err());
    }
}
