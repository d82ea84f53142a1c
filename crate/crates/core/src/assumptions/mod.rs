//! Sampling checks of the structural assumptions on measure families and Hamiltonians.
//!
//! Every check draws its points from a seeded [`SamplePlan`], fits power-law moduli
//! `C s^α` on a log-log scale and returns an [`AssumptionReport`].

mod hamiltonian;
mod jump;
mod levy;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{LevyFamily, Variant};
use crate::point::Point;
use crate::scalar::Real;

pub use hamiltonian::{check_h, default_mu_samples, default_p_samples, Eikonal, HamiltonianFn, HamiltonianSpec, ScalarField};
pub use jump::check_j;
pub use levy::{check_m1, check_m2, check_m3, check_m4, check_m4_doubleprime, check_m4_prime, check_m_unified, default_r_list, default_tail_radii, reference_levy_constant};

/// Tolerance on fitted exponents.
pub const ALPHA_TOLERANCE: f64 = 0.1;
/// Largest log-space residual RMS for a fit to be trusted.
pub const RMS_THRESHOLD: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Inconclusive,
    Fails,
}

impl Verdict {
    /// The worse of two verdicts.
    pub fn and(self, other: Verdict) -> Verdict {
        self.max(other)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Fails => "fails",
        }
    }
}

/// A power law `C s^α` fitted to `(s, value)` samples by least squares on log-log scale.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModulusEstimate {
    pub samples: Vec<(f64, f64)>,
    pub c: f64,
    /// `None` when every sample is zero.
    pub alpha: Option<f64>,
    pub rms: f64,
}

const ZERO_FLOOR: f64 = 1e-300;

impl ModulusEstimate {
    /// Requires at least 8 samples spanning at least two decades of `s`.
    pub fn fit(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 8 {
            return Err(Error::invalid(format!("a modulus fit needs at least 8 samples, got {}", samples.len())));
        }
        let (lo, hi) = samples
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), (s, _)| (lo.min(*s), hi.max(*s)));
        if !(lo > 0.0) || hi / lo < 100.0 * (1.0 - 1e-9) {
            return Err(Error::invalid("a modulus fit needs samples spanning two decades"));
        }
        if samples.iter().any(|(_, v)| !(*v >= 0.0)) {
            return Err(Error::invalid("modulus samples must be nonnegative"));
        }
        let pts: Vec<(f64, f64)> = samples
            .iter()
            .filter(|(_, v)| *v > ZERO_FLOOR)
            .map(|(s, v)| (s.ln(), v.ln()))
            .collect();
        if pts.is_empty() {
            return Ok(Self { samples, c: 0.0, alpha: None, rms: 0.0 });
        }
        let (alpha, logc, rms) = least_squares(&pts);
        Ok(Self { samples, c: logc.exp(), alpha: Some(alpha), rms })
    }

    pub fn vanishes(&self) -> bool {
        self.alpha.is_none()
    }

    /// Smallest `C` with `value <= C s^α` on every sample.
    pub fn envelope(&self, alpha: f64) -> f64 {
        self.samples
            .iter()
            .map(|(s, v)| v / s.powf(alpha))
            .fold(0.0, f64::max)
    }

    /// Intercept of the least-squares fit with the slope pinned to `alpha`.
    pub fn constant_at(&self, alpha: f64) -> f64 {
        let logs: Vec<f64> = self
            .samples
            .iter()
            .filter(|(_, v)| *v > ZERO_FLOOR)
            .map(|(s, v)| v.ln() - alpha * s.ln())
            .collect();
        if logs.is_empty() {
            0.0
        } else {
            (logs.iter().sum::<f64>() / logs.len() as f64).exp()
        }
    }

    /// Verdict for "the modulus is at least of order `s^need`".
    pub fn verdict(&self, need: f64) -> Verdict {
        match self.alpha {
            None => Verdict::Holds,
            Some(_) if self.rms > RMS_THRESHOLD => Verdict::Inconclusive,
            Some(a) if a >= need - ALPHA_TOLERANCE => Verdict::Holds,
            Some(_) => Verdict::Fails,
        }
    }

    /// Verdict for "the modulus tends to zero" (`α > 0`).
    pub fn vanishing_verdict(&self) -> Verdict {
        match self.alpha {
            None => Verdict::Holds,
            Some(_) if self.rms > RMS_THRESHOLD => Verdict::Inconclusive,
            Some(a) if a > 0.0 => Verdict::Holds,
            Some(_) => Verdict::Fails,
        }
    }
}

/// Slope, intercept and residual RMS of a straight-line fit.
fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum();
    (slope, icpt, (rss / n).sqrt())
}

/// A concrete sample that breaks the assumption.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub description: String,
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub s: Option<f64>,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub id: String,
    pub family: String,
    pub verdict: Verdict,
    pub constants: BTreeMap<String, f64>,
    pub modulus: Option<ModulusEstimate>,
    pub moduli: BTreeMap<String, ModulusEstimate>,
    pub reference_bound: Option<f64>,
    pub violation: Option<Violation>,
    pub parts: BTreeMap<String, Verdict>,
    pub notes: Vec<String>,
    pub seed: u64,
}

impl AssumptionReport {
    pub fn new(id: &str, family: &str, seed: u64) -> Self {
        Self {
            id: id.to_string(),
            family: family.to_string(),
            verdict: Verdict::Holds,
            constants: BTreeMap::new(),
            modulus: None,
            moduli: BTreeMap::new(),
            reference_bound: None,
            violation: None,
            parts: BTreeMap::new(),
            notes: Vec::new(),
            seed,
        }
    }

    pub fn constant(&self, key: &str) -> Option<f64> {
        self.constants.get(key).copied()
    }

    pub(crate) fn set(&mut self, key: &str, v: f64) {
        self.constants.insert(key.to_string(), v);
    }

    pub(crate) fn note(&mut self, msg: impl Into<String>) {
        self.notes.push(msg.into());
    }

    pub(crate) fn part(&mut self, name: &str, v: Verdict) {
        self.parts.insert(name.to_string(), v);
        self.verdict = self.verdict.and(v);
    }

    /// Records the first violation seen.
    pub(crate) fn violate(&mut self, v: Violation) {
        if self.violation.is_none() {
            self.violation = Some(v);
        }
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<14} {}", "assumption", self.id);
        let _ = writeln!(s, "{:<14} {}", "family", self.family);
        let _ = writeln!(s, "{:<14} {}", "verdict", self.verdict.as_str());
        let _ = writeln!(s, "{:<14} {}", "seed", self.seed);
        for (k, v) in &self.parts {
            let _ = writeln!(s, "  part {:<10} {}", k, v.as_str());
        }
        for (k, v) in &self.constants {
            let _ = writeln!(s, "  {:<24} {:.6e}", k, v);
        }
        if let Some(m) = &self.modulus {
            let _ = writeln!(s, "  {:<24} {}", "modulus", describe(m));
        }
        for (k, m) in &self.moduli {
            let _ = writeln!(s, "  {:<24} {}", k, describe(m));
        }
        if let Some(b) = self.reference_bound {
            let _ = writeln!(s, "  {:<24} {:.6e}", "reference bound", b);
        }
        if let Some(v) = &self.violation {
            let _ = writeln!(s, "  violation: {} (value {:.6e}, threshold {:.6e})", v.description, v.value, v.threshold);
        }
        for n in &self.notes {
            let _ = writeln!(s, "  note: {n}");
        }
        s
    }

    /// Makes sure a failing report carries a violation.
    pub(crate) fn finish(mut self) -> Self {
        if self.verdict == Verdict::Fails && self.violation.is_none() {
            self.violation = Some(Violation {
                description: "failing part without a located sample".into(),
                x: Vec::new(),
                y: None,
                s: None,
                value: f64::NAN,
                threshold: f64::NAN,
            });
        }
        self
    }
}

fn describe(m: &ModulusEstimate) -> String {
    match m.alpha {
        None => "identically zero".to_string(),
        Some(a) => format!("C = {:.4e}, alpha = {:.4}, rms = {:.3}", m.c, a, m.rms),
    }
}

/// Two base points at distance `s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairSample<T> {
    pub x: Point<T>,
    pub y: Point<T>,
    pub s: f64,
    pub anchor: usize,
    pub separation: usize,
}

/// Seeded sampling plan shared by all checks.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplePlan {
    pub seed: u64,
    pub anchors: usize,
    pub separations: usize,
    pub s_min: f64,
    pub s_max: f64,
    pub base_points: usize,
    /// Half width of the box base points are drawn from.
    pub spread: f64,
}

impl Default for SamplePlan {
    fn default() -> Self {
        Self {
            seed: 7,
            anchors: 6,
            separations: 9,
            s_min: 1e-3,
            s_max: 1e-1,
            base_points: 8,
            spread: 2.0,
        }
    }
}

impl SamplePlan {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors == 0 || self.separations < 8 || self.base_points == 0 {
            return Err(Error::invalid("sample plan needs anchors >= 1, separations >= 8, base points >= 1"));
        }
        if !(self.s_min > 0.0 && self.s_max / self.s_min >= 100.0 * (1.0 - 1e-9)) {
            return Err(Error::invalid("separations must span two decades"));
        }
        if !(self.spread > 0.0) {
            return Err(Error::invalid("spread must be positive"));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream);
        r
    }

    /// Log-spaced separations in `[s_min, s_max]`.
    pub fn separation_list(&self) -> Vec<f64> {
        log_spaced(self.s_min, self.s_max, self.separations)
    }

    /// Base points uniform in `[-spread, spread]^N`.
    pub fn base_point_list<T: Real>(&self, dim: usize) -> Vec<Point<T>> {
        let mut r = self.rng(1);
        (0..self.base_points)
            .map(|_| {
                let c: Vec<f64> = (0..dim).map(|_| r.gen_range(-self.spread..=self.spread)).collect();
                Point::from_f64(&c)
            })
            .collect()
    }

    /// Pairs at every separation around every anchor. For the rotated quadrant the
    /// anchors sit on the unit circle (one of them on the positive axis, where the
    /// rotation angle is least regular) and partners move along the circle.
    pub fn pairs<T: Real>(&self, family: &LevyFamily<T>) -> Vec<PairSample<T>> {
        if matches!(family.variant(), Variant::RotatedQuadrant { .. }) {
            self.circle_pairs()
        } else {
            self.point_pairs(family.dim())
        }
    }

    /// Anchors uniform in the box, partners at distance `s` in a random direction.
    pub fn point_pairs<T: Real>(&self, dim: usize) -> Vec<PairSample<T>> {
        let seps = self.separation_list();
        let mut r = self.rng(2);
        let mut out = Vec::with_capacity(self.anchors * seps.len());
        for a in 0..self.anchors {
            let x: Vec<f64> = (0..dim).map(|_| r.gen_range(-self.spread..=self.spread)).collect();
            for (k, &s) in seps.iter().enumerate() {
                let u = random_unit(&mut r, dim);
                let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + s * b).collect();
                out.push(PairSample {
                    x: Point::from_f64(&x),
                    y: Point::from_f64(&y),
                    s,
                    anchor: a,
                    separation: k,
                });
            }
        }
        out
    }

    fn circle_pairs<T: Real>(&self) -> Vec<PairSample<T>> {
        let seps = self.separation_list();
        let mut r = self.rng(3);
        let mut out = Vec::with_capacity(self.anchors * seps.len());
        for a in 0..self.anchors {
            let theta = if a == 0 {
                0.0
            } else {
                let m: f64 = r.gen_range(1.0..std::f64::consts::PI - 0.2);
                if r.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            };
            for (k, &s) in seps.iter().enumerate() {
                let dt = 2.0 * (s / 2.0).asin() * if theta < 0.0 { -1.0 } else { 1.0 };
                let t2 = theta + dt;
                out.push(PairSample {
                    x: Point::from_f64(&[theta.cos(), theta.sin()]),
                    y: Point::from_f64(&[t2.cos(), t2.sin()]),
                    s,
                    anchor: a,
                    separation: k,
                });
            }
        }
        out
    }
}

fn random_unit(r: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..=1.0)).collect();
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.iter().map(|c| c / n).collect();
        }
    }
}

pub(crate) fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Per separation, the largest value over anchors and the index of the pair attaining it.
pub(crate) fn max_by_separation<T>(pairs: &[PairSample<T>], values: &[f64]) -> Vec<(f64, f64, usize)> {
    let mut best: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    for (i, (p, v)) in pairs.iter().zip(values).enumerate() {
        let e = best.entry(p.separation).or_insert((p.s, *v, i));
        if *v > e.1 {
            *e = (p.s, *v, i);
        }
    }
    best.into_values().collect()
}

/// The sample that most exceeds `C s^need` for the smallest envelope `C` of the
/// larger half of separations; used to locate exponent failures.
pub(crate) fn exponent_violation<T: Real>(
    what: &str,
    pairs: &[PairSample<T>],
    maxima: &[(f64, f64, usize)],
    need: f64,
) -> Violation {
    let ratios: Vec<f64> = maxima.iter().map(|(s, v, _)| v / s.powf(need)).collect();
    let (k, _) = ratios
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, r)| if *r > acc.1 { (i, *r) } else { acc });
    let (s, v, idx) = maxima[k];
    let reference = ratios[ratios.len() - 1] * s.powf(need);
    let p = &pairs[idx];
    Violation {
        description: format!("{what} at |x-y| = {s:.3e} exceeds the s^{need} envelope of the largest separation"),
        x: p.x.to_f64_vec(),
        y: Some(p.y.to_f64_vec()),
        s: Some(s),
        value: v,
        threshold: reference,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_power_law() {
        let samples: Vec<(f64, f64)> = log_spaced(1e-3, 1e-1, 9).into_iter().map(|s| (s, 3.0 * s.powf(0.7))).collect();
        let m = ModulusEstimate::fit(samples).unwrap();
        assert!((m.alpha.unwrap() - 0.7).abs() < 1e-12);
        assert!((m.c - 3.0).abs() < 1e-10);
        assert!(m.rms < 1e-12);
        assert_eq!(m.verdict(0.5), Verdict::Holds);
        assert_eq!(m.verdict(1.0), Verdict::Fails);
    }

    #[test]
    fn fit_preconditions() {
        let short: Vec<(f64, f64)> = log_spaced(1e-3, 1e-1, 5).into_iter().map(|s| (s, s)).collect();
        assert!(ModulusEstimate::fit(short).is_err());
        let narrow: Vec<(f64, f64)> = log_spaced(1e-2, 1e-1, 9).into_iter().map(|s| (s, s)).collect();
        assert!(ModulusEstimate::fit(narrow).is_err());
        let zeros: Vec<(f64, f64)> = log_spaced(1e-3, 1e-1, 9).into_iter().map(|s| (s, 0.0)).collect();
        let m = ModulusEstimate::fit(zeros).unwrap();
        assert!(m.vanishes());
        assert_eq!(m.c, 0.0);
    }

    #[test]
    fn plans_are_deterministic() {
        let plan = SamplePlan::default();
        let f = LevyFamily::<f64>::power_law(2, 1.0, 1.0).unwrap();
        assert_eq!(plan.pairs(&f), plan.pairs(&f));
        for p in plan.pairs(&f) {
            assert!((p.x.dist(&p.y) - p.s).abs() < 1e-12);
        }
        let q = LevyFamily::<f64>::rotated_quadrant(1.0).unwrap();
        for p in plan.pairs(&q) {
            assert!((p.x.norm() - 1.0).abs() < 1e-12);
            assert!((p.x.dist(&p.y) - p.s).abs() < 1e-12);
        }
    }
}
