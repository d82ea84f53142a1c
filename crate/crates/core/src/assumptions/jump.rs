use rayon::prelude::*;

use crate::assumptions::levy::{check_r_list, endpoint_measures, fit_pairs, per_radius_fits, point_violation};
use crate::assumptions::{exponent_violation, AssumptionReport, SamplePlan, Verdict, Violation, ALPHA_TOLERANCE, RMS_THRESHOLD};
use crate::error::{Error, Result};
use crate::measure::{LevyFamily, PolarGrid, Region, Variant};
use crate::operators::{drift_bound, levy_ito_drift};
use crate::point::Point;
use crate::scalar::{lit, to_f64, Real};
use crate::transport::tv_annulus;

/// Base points used for the per-point parts (injectivity, growth ratios, drift).
const POINT_CHECKS: usize = 3;

/// Injectivity on atoms, growth ratios `c₀|z| ≤ |j(ξ,z)| ≤ c₁|z|`, the annulus modulus,
/// the squared-difference integral and the boundedness of the induced drift.
pub fn check_j<T: Real>(family: &LevyFamily<T>, plan: &SamplePlan, grid: &PolarGrid<T>, r_list: &[f64]) -> Result<AssumptionReport> {
    let Variant::LevyIto { base, jump, c0, c1 } = family.variant() else {
        return Err(Error::NotLevyIto);
    };
    plan.validate()?;
    check_r_list(r_list)?;
    let mut rep = AssumptionReport::new("J", family.variant_name(), plan.seed);
    let dim = family.dim();
    let origin = Point::zero(dim);
    let (c0f, c1f) = (to_f64(*c0), to_f64(*c1));
    rep.set("c0", c0f);
    rep.set("c1", c1f);
    let xs: Vec<Point<T>> = plan.base_point_list(dim).into_iter().take(POINT_CHECKS).collect();

    // J1 and J2 on the base atoms
    let base_atoms: Vec<Point<T>> = if base.is_atomic() {
        base.atoms_at(&origin)?.into_iter().map(|(z, _)| z).collect()
    } else {
        base.discretize(&origin, grid)?.atoms().iter().map(|a| a.location).collect()
    };
    let d_min = min_distance(&base_atoms);
    let tol = 0.5 * d_min * c0f.min(1.0);
    rep.set("collision_tolerance", tol);
    let mut injective = Verdict::Holds;
    let mut ratio_range = (f64::INFINITY, 0.0f64);
    let mut growth = Verdict::Holds;
    for x in &xs {
        let images: Vec<Point<T>> = base_atoms.iter().map(|z| jump(x, z)).collect();
        for (z, w) in base_atoms.iter().zip(&images) {
            let ratio = to_f64(w.norm() / z.norm());
            ratio_range = (ratio_range.0.min(ratio), ratio_range.1.max(ratio));
            if !(ratio >= c0f * (1.0 - 1e-9) && ratio <= c1f * (1.0 + 1e-9)) {
                growth = Verdict::Fails;
                rep.violate(Violation {
                    description: format!("|j(x,z)|/|z| = {ratio:.6} outside [c0, c1]"),
                    x: x.to_f64_vec(),
                    y: Some(z.to_f64_vec()),
                    s: None,
                    value: ratio,
                    threshold: if ratio < c0f { c0f } else { c1f },
                });
            }
        }
        if let Some((i, j, d)) = closest_pair(&images) {
            if d < tol {
                injective = Verdict::Fails;
                rep.violate(Violation {
                    description: "two atoms are mapped within the collision tolerance".into(),
                    x: x.to_f64_vec(),
                    y: Some([base_atoms[i].to_f64_vec(), base_atoms[j].to_f64_vec()].concat()),
                    s: Some(d),
                    value: d,
                    threshold: tol,
                });
            }
        }
    }
    rep.set("ratio_min", ratio_range.0);
    rep.set("ratio_max", ratio_range.1);
    rep.part("J1", injective);
    rep.part("J2", growth);

    let pairs = plan.point_pairs::<T>(dim);
    let r_min = r_list.iter().copied().fold(f64::INFINITY, f64::min);

    // J3: total variation of the push-forwards on the annulus (r_min, 1]
    if !base.is_atomic() && r_min < 1.0 {
        let measures = endpoint_measures(family, &pairs, grid, false)?;
        let values: Vec<f64> = measures
            .iter()
            .map(|(a, b)| tv_annulus(a, b, lit(r_min), T::one()).map(to_f64))
            .collect::<Result<_>>()?;
        let (fit, maxima) = fit_pairs(&pairs, &values)?;
        let v = fit.vanishing_verdict();
        if v == Verdict::Fails {
            rep.violate(exponent_violation("total variation on the annulus", &pairs, &maxima, 0.0));
        }
        if let Some(a) = fit.alpha {
            rep.set("j3_alpha", a);
        }
        rep.moduli.insert("annulus_tv".into(), fit);
        rep.part("J3", v);
    } else {
        rep.note("annulus modulus skipped: atomic base or no radius below 1");
        rep.part("J3", Verdict::Holds);
    }

    // J4: ∫_{B_r} |j(x,z) − j(y,z)|² ν(dz), fitted in |x−y| per radius and then in r
    let table: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|p| {
            r_list
                .iter()
                .map(|&r| {
                    let f = |z: &Point<T>| (jump(&p.x, z) - jump(&p.y, z)).norm2();
                    if base.is_atomic() {
                        Ok(base
                            .atoms_at(&origin)?
                            .iter()
                            .filter(|(z, _)| to_f64(z.norm()) <= r)
                            .map(|(z, m)| to_f64(f(z) * *m))
                            .sum())
                    } else {
                        base.integrate(&origin, &Region::ball(lit(r)), grid, f).map(to_f64)
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let (mean, min, scaling, maxima) = per_radius_fits(&mut rep, &pairs, r_list, &table)?;
    match (mean, min, scaling) {
        (Some(mean), Some(min), Some(scaling)) => {
            let beta = scaling.alpha.unwrap_or(f64::INFINITY);
            rep.set("j4_alpha", mean);
            rep.set("j4_alpha_min", min);
            rep.set("j4_r_exponent", beta);
            let fits_ok = rep.moduli.iter().filter(|(k, _)| k.starts_with("r=")).all(|(_, m)| m.rms <= RMS_THRESHOLD)
                && scaling.rms <= RMS_THRESHOLD;
            let v = if !fits_ok {
                Verdict::Inconclusive
            } else if min >= 1.0 - ALPHA_TOLERANCE && beta > 0.0 {
                Verdict::Holds
            } else {
                let k = r_list
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (i, r)| if *r < acc.1 { (i, *r) } else { acc })
                    .0;
                rep.violate(exponent_violation("squared jump difference", &pairs, &maxima[k], 1.0));
                Verdict::Fails
            };
            rep.moduli.insert("j4_r_scaling".into(), scaling);
            rep.part("J4", v);
        }
        _ => {
            rep.note("jump difference vanishes on every sample");
            rep.part("J4", Verdict::Holds);
        }
    }

    // drift b^j(ξ) against its a-priori bound
    let bound = to_f64(drift_bound(family, grid)?);
    rep.set("drift_bound", bound);
    let mut drift_max = 0.0f64;
    let mut drift = Verdict::Holds;
    for x in &xs {
        let b = to_f64(levy_ito_drift(family, x, grid)?.norm());
        drift_max = drift_max.max(b);
        if b > bound * (1.0 + 1e-6) + 1e-12 {
            drift = Verdict::Fails;
            rep.violate(point_violation("drift exceeds its bound".into(), x, b, bound));
        }
    }
    rep.set("drift_max", drift_max);
    rep.part("drift", drift);
    Ok(rep.finish())
}

fn min_distance<T: Real>(pts: &[Point<T>]) -> f64 {
    closest_pair(pts).map(|(_, _, d)| d).unwrap_or(f64::INFINITY)
}

/// Indices and distance of the closest pair, by sorting on the first coordinate and
/// sweeping.
fn closest_pair<T: Real>(pts: &[Point<T>]) -> Option<(usize, usize, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by(|a, b| pts[*a].get(0).partial_cmp(&pts[*b].get(0)).unwrap_or(std::cmp::Ordering::Equal));
    let mut best = (0, 1, f64::INFINITY);
    for (k, &i) in idx.iter().enumerate() {
        for &j in &idx[k + 1..] {
            if to_f64(pts[j].get(0) - pts[i].get(0)) >= best.2 {
                break;
            }
            let d = to_f64(pts[i].dist(&pts[j]));
            if d < best.2 {
                best = (i.min(j), i.max(j), d);
            }
        }
    }
    Some(best)
}
