//! Total variation and origin-reservoir Wasserstein distances between discretized
//! Lévy measures restricted to balls.

mod simplex;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use simplex::solve_transportation;

use crate::error::{Error, Result};
use crate::measure::DiscretizedMeasure;
use crate::point::Point;
use crate::scalar::{lit, to_f64, Real};

/// Default cap on atoms per side for the exact solver.
pub const DEFAULT_ATOM_LIMIT: usize = 2000;
/// Costs, measured in units of the ball radius, are scaled by this factor and rounded
/// to integers before solving.
pub const COST_SCALE: f64 = 1e9;

/// Either end of a transport triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum End {
    Origin,
    Atom(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transfer<T> {
    pub src: End,
    pub dst: End,
    pub mass: T,
}

/// Sparse transport plan between `ν1|_{B_r}` and `ν2|_{B_r}`; atom indices refer
/// to the restricted measures stored alongside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling<T> {
    pub source: DiscretizedMeasure<T>,
    pub target: DiscretizedMeasure<T>,
    pub r: T,
    pub transfers: Vec<Transfer<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    /// One side was empty; everything goes through the origin.
    Trivial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportResult<T> {
    /// `∫|z1 - z2|^p dγ` for the optimal plan.
    pub cost: T,
    pub p: T,
    pub coupling: Coupling<T>,
    pub status: SolverStatus,
    pub pivots: usize,
}

impl<T: Real> TransportResult<T> {
    /// `W_p = cost^{1/p}`.
    pub fn distance(&self) -> T {
        self.cost.powf(T::one() / self.p)
    }

    /// Summary record as JSON: cost, p, r, atom counts, status.
    pub fn to_json(&self) -> String {
        let v = serde_json::json!({
            "cost": to_f64(self.cost),
            "distance": to_f64(self.distance()),
            "p": to_f64(self.p),
            "r": to_f64(self.coupling.r),
            "source_atoms": self.coupling.source.len(),
            "target_atoms": self.coupling.target.len(),
            "transfers": self.coupling.transfers.len(),
            "pivots": self.pivots,
            "status": self.status,
        });
        serde_json::to_string_pretty(&v).expect("json")
    }
}

fn check_radius<T: Real>(r: T) -> Result<()> {
    if r > T::zero() && r.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("radius {r} must be positive and finite")))
    }
}

/// `|ν1 - ν2|(B_R \ B_r)` on aligned measures.
pub fn tv_annulus<T: Real>(mu1: &DiscretizedMeasure<T>, mu2: &DiscretizedMeasure<T>, r: T, big_r: T) -> Result<T> {
    check_radius(r)?;
    if !(big_r > r) {
        return Err(Error::invalid("annulus needs r < R"));
    }
    Ok(mu1
        .paired(mu2)?
        .iter()
        .filter(|(z, _, _)| {
            let n = z.norm();
            n > r && n <= big_r
        })
        .map(|(_, a, b)| (*a - *b).abs())
        .sum())
}

/// `∫_{B_r} |z|^2 |ν1 - ν2|(dz)` on aligned measures.
pub fn tv_second_moment_ball<T: Real>(mu1: &DiscretizedMeasure<T>, mu2: &DiscretizedMeasure<T>, r: T) -> Result<T> {
    check_radius(r)?;
    weighted_tv(mu1, mu2, r, |z| z.norm2())
}

/// `∫_{B_r} w(z) |ν1 - ν2|(dz)` on aligned measures.
pub fn weighted_tv<T: Real>(mu1: &DiscretizedMeasure<T>, mu2: &DiscretizedMeasure<T>, r: T, w: impl Fn(&Point<T>) -> T) -> Result<T> {
    Ok(mu1
        .paired(mu2)?
        .iter()
        .filter(|(z, _, _)| z.norm() <= r)
        .map(|(z, a, b)| w(z) * (*a - *b).abs())
        .sum())
}

/// Keeps the common mass in place, sends the excess of `ν1` to the origin and
/// draws the excess of `ν2` from it.
pub fn explicit_coupling<T: Real>(mu1: &DiscretizedMeasure<T>, mu2: &DiscretizedMeasure<T>, r: T) -> Result<Coupling<T>> {
    check_radius(r)?;
    let a = mu1.restricted(r);
    let b = mu2.restricted(r);
    // group atom indices of both sides under the pairing key
    let pairs = a.paired(&b)?;
    let mut groups: Vec<(Vec<usize>, Vec<usize>)> = vec![(Vec::new(), Vec::new()); pairs.len()];
    let mut lookup = std::collections::HashMap::new();
    for (k, (z, _, _)) in pairs.iter().enumerate() {
        lookup.insert(key_of(z), k);
    }
    // aligned measures share cell centers, so location keys group them as well
    for (i, atom) in a.atoms().iter().enumerate() {
        groups[lookup[&key_of(&atom.location)]].0.push(i);
    }
    for (j, atom) in b.atoms().iter().enumerate() {
        groups[lookup[&key_of(&atom.location)]].1.push(j);
    }
    let mut transfers = Vec::new();
    for (src, dst) in &groups {
        let mut left: Vec<T> = src.iter().map(|&i| a.atoms()[i].mass).collect();
        let mut right: Vec<T> = dst.iter().map(|&j| b.atoms()[j].mass).collect();
        let (mut p, mut q) = (0, 0);
        while p < left.len() && q < right.len() {
            let m = left[p].min(right[q]);
            if m > T::zero() {
                transfers.push(Transfer { src: End::Atom(src[p]), dst: End::Atom(dst[q]), mass: m });
            }
            left[p] = left[p] - m;
            right[q] = right[q] - m;
            if left[p] <= T::zero() {
                p += 1;
            } else {
                q += 1;
            }
        }
        for (k, &i) in src.iter().enumerate() {
            if left[k] > T::zero() {
                transfers.push(Transfer { src: End::Atom(i), dst: End::Origin, mass: left[k] });
            }
        }
        for (k, &j) in dst.iter().enumerate() {
            if right[k] > T::zero() {
                transfers.push(Transfer { src: End::Origin, dst: End::Atom(j), mass: right[k] });
            }
        }
    }
    Ok(Coupling { source: a, target: b, r, transfers })
}

fn key_of<T: Real>(z: &Point<T>) -> [u64; 3] {
    let mut k = [0u64; 3];
    for (i, v) in z.to_f64_vec().iter().enumerate() {
        k[i] = v.to_bits();
    }
    k
}

impl<T: Real> Coupling<T> {
    pub fn location(&self, end: End, source_side: bool) -> Point<T> {
        match end {
            End::Origin => Point::zero(self.source.dim()),
            End::Atom(i) if source_side => self.source.atoms()[i].location,
            End::Atom(i) => self.target.atoms()[i].location,
        }
    }

    /// `∫ |z1 - z2|^p dγ`.
    pub fn cost(&self, p: T) -> T {
        self.transfers
            .iter()
            .map(|t| {
                let d = self.location(t.src, true).dist(&self.location(t.dst, false));
                t.mass * d.powf(p)
            })
            .sum()
    }

    /// Marginals on `B_r \ {0}` match both measures and nothing moves from the origin to itself.
    pub fn is_admissible(&self) -> bool {
        let mut left = vec![T::zero(); self.source.len()];
        let mut right = vec![T::zero(); self.target.len()];
        for t in &self.transfers {
            if !(t.mass >= T::zero()) {
                return false;
            }
            match (t.src, t.dst) {
                (End::Origin, End::Origin) if t.mass > T::zero() => return false,
                _ => {}
            }
            if let End::Atom(i) = t.src {
                match left.get_mut(i) {
                    Some(x) => *x = *x + t.mass,
                    None => return false,
                }
            }
            if let End::Atom(j) = t.dst {
                match right.get_mut(j) {
                    Some(x) => *x = *x + t.mass,
                    None => return false,
                }
            }
        }
        let scale = T::one().max(self.source.total_mass()).max(self.target.total_mass());
        let tol = T::mass_tolerance() * scale;
        let ok_left = left.iter().zip(self.source.atoms()).all(|(s, a)| (*s - a.mass).abs() <= tol);
        let ok_right = right.iter().zip(self.target.atoms()).all(|(s, a)| (*s - a.mass).abs() <= tol);
        ok_left && ok_right
    }

    /// Support lies in `(A1 x A2) ∪ (A1 x {0}) ∪ ({0} x A2)` with `A_i` the closed ball.
    pub fn support_in_ball(&self) -> bool {
        let r = self.r;
        self.transfers.iter().all(|t| {
            self.location(t.src, true).norm() <= r && self.location(t.dst, false).norm() <= r
        })
    }

    /// CSV rows `src_x.., src_is_origin, dst_x.., dst_is_origin, mass`.
    pub fn write_csv<W: Write>(&self, out: W, header_comment: Option<&str>) -> Result<()> {
        let mut out = out;
        if let Some(c) = header_comment {
            writeln!(out, "# {c}").map_err(|e| Error::Config(e.to_string()))?;
        }
        let dim = self.source.dim();
        let mut w = csv::Writer::from_writer(out);
        let axes = ["x", "y", "z"];
        let mut header: Vec<String> = (0..dim).map(|i| format!("src_{}", axes[i])).collect();
        header.push("src_is_origin".into());
        header.extend((0..dim).map(|i| format!("dst_{}", axes[i])));
        header.push("dst_is_origin".into());
        header.push("mass".into());
        let io = |e: csv::Error| Error::Config(e.to_string());
        w.write_record(&header).map_err(io)?;
        for t in &self.transfers {
            let mut row: Vec<String> = Vec::new();
            for (end, side) in [(t.src, true), (t.dst, false)] {
                let z = self.location(end, side);
                row.extend(z.to_f64_vec().iter().map(|v| format!("{v:e}")));
                row.push(u8::from(end == End::Origin).to_string());
            }
            row.push(format!("{:e}", to_f64(t.mass)));
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// Admissibility of a coupling (see [`Coupling::is_admissible`]).
pub fn check_admissible<T: Real>(c: &Coupling<T>) -> bool {
    c.is_admissible()
}

/// `(∫|z1|^2 dγ, 4 ∫|z|^2 dν1, lhs <= rhs)`; the origin contributes nothing.
pub fn gigli_bound_check<T: Real>(c: &Coupling<T>) -> Result<(T, T, bool)> {
    if !c.is_admissible() {
        return Err(Error::NotAdmissible);
    }
    let lhs: T = c
        .transfers
        .iter()
        .map(|t| t.mass * c.location(t.src, true).norm2())
        .sum();
    let rhs = lit::<T>(4.0) * c.source.atoms().iter().map(|a| a.mass * a.location.norm2()).sum::<T>();
    Ok((lhs, rhs, lhs <= rhs))
}

/// Exact discrete `W_p(ν1, ν2)(B_r)^p` with one origin reservoir per side.
pub fn wasserstein_p_ball<T: Real>(mu1: &DiscretizedMeasure<T>, mu2: &DiscretizedMeasure<T>, r: T, p: T) -> Result<TransportResult<T>> {
    wasserstein_p_ball_limited(mu1, mu2, r, p, DEFAULT_ATOM_LIMIT)
}

pub fn wasserstein_p_ball_limited<T: Real>(
    mu1: &DiscretizedMeasure<T>,
    mu2: &DiscretizedMeasure<T>,
    r: T,
    p: T,
    limit: usize,
) -> Result<TransportResult<T>> {
    check_radius(r)?;
    if !(p >= T::one() && p <= lit(2.0)) {
        return Err(Error::invalid(format!("exponent p = {p} must lie in [1, 2]")));
    }
    if mu1.dim() != mu2.dim() {
        return Err(Error::GridMismatch);
    }
    let a = mu1.restricted(r);
    let b = mu2.restricted(r);
    let live_a: Vec<usize> = (0..a.len()).filter(|&i| a.atoms()[i].mass > T::zero()).collect();
    let live_b: Vec<usize> = (0..b.len()).filter(|&j| b.atoms()[j].mass > T::zero()).collect();
    for n in [live_a.len(), live_b.len()] {
        if n > limit {
            return Err(Error::TooManyAtoms { atoms: n, limit });
        }
    }

    if live_a.is_empty() || live_b.is_empty() {
        let mut transfers = Vec::new();
        for &i in &live_a {
            transfers.push(Transfer { src: End::Atom(i), dst: End::Origin, mass: a.atoms()[i].mass });
        }
        for &j in &live_b {
            transfers.push(Transfer { src: End::Origin, dst: End::Atom(j), mass: b.atoms()[j].mass });
        }
        let coupling = Coupling { source: a, target: b, r, transfers };
        return Ok(TransportResult {
            cost: coupling.cost(p),
            p,
            coupling,
            status: SolverStatus::Trivial,
            pivots: 0,
        });
    }

    // rows: live atoms of ν1 then the origin; columns: live atoms of ν2 then the origin
    let (s, d) = (live_a.len() + 1, live_b.len() + 1);
    let pts_a: Vec<Point<T>> = live_a.iter().map(|&i| a.atoms()[i].location).collect();
    let pts_b: Vec<Point<T>> = live_b.iter().map(|&j| b.atoms()[j].location).collect();
    let pf = to_f64(p);
    // distances in units of the ball radius, so the rounding is relative to r^p
    let unit = to_f64(r);
    let scaled = |x: T| -> Result<i64> {
        let v = (to_f64(x) / unit).powf(pf) * COST_SCALE;
        if v.is_finite() && v < 1e17 {
            Ok(v.round() as i64)
        } else {
            Err(Error::CostOverflow)
        }
    };
    let mut cost = vec![0i64; s * d];
    for i in 0..s {
        for j in 0..d {
            let dist = match (i < s - 1, j < d - 1) {
                (true, true) => pts_a[i].dist(&pts_b[j]),
                (true, false) => pts_a[i].norm(),
                (false, true) => pts_b[j].norm(),
                (false, false) => T::zero(),
            };
            cost[i * d + j] = scaled(dist)?;
        }
    }
    let mut supply: Vec<T> = live_a.iter().map(|&i| a.atoms()[i].mass).collect();
    supply.push(b.total_mass());
    let mut demand: Vec<T> = live_b.iter().map(|&j| b.atoms()[j].mass).collect();
    demand.push(a.total_mass());

    let (flows, pivots) = solve_transportation(&supply, &demand, &cost)?;
    let transfers = flows
        .into_iter()
        .filter(|&(i, j, _)| !(i == s - 1 && j == d - 1))
        .map(|(i, j, m)| Transfer {
            src: if i == s - 1 { End::Origin } else { End::Atom(live_a[i]) },
            dst: if j == d - 1 { End::Origin } else { End::Atom(live_b[j]) },
            mass: m,
        })
        .collect();
    let coupling = Coupling { source: a, target: b, r, transfers };
    Ok(TransportResult {
        cost: coupling.cost(p),
        p,
        coupling,
        status: SolverStatus::Optimal,
        pivots,
    })
}
