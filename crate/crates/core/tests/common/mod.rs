//! Shared helpers and independent oracles for the integration suites.
#![allow(dead_code)]

use nlhj::measure::DiscretizedMeasure;
use nlhj::Point;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two random atomic measures drawing locations from a shared pool, so that some
/// atoms coincide and total variation is meaningful.
pub fn random_pair(rng: &mut ChaCha8Rng, dim: usize, max_atoms: usize) -> (DiscretizedMeasure<f64>, DiscretizedMeasure<f64>) {
    let pool_size = max_atoms + max_atoms / 2 + 1;
    let pool: Vec<Point<f64>> = (0..pool_size)
        .map(|_| loop {
            let xs: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = Point::from_f64(&xs);
            if p.norm() > 0.05 {
                break p;
            }
        })
        .collect();
    let side = |rng: &mut ChaCha8Rng| {
        let n = rng.gen_range(1..=max_atoms);
        let mut idx: Vec<usize> = (0..pool_size).collect();
        for i in 0..n {
            let j = rng.gen_range(i..pool_size);
            idx.swap(i, j);
        }
        let atoms: Vec<(Point<f64>, f64)> = idx[..n].iter().map(|&k| (pool[k], rng.gen_range(0.1..2.0))).collect();
        DiscretizedMeasure::from_atoms(dim, &atoms).unwrap()
    };
    let a = side(rng);
    let b = side(rng);
    (a, b)
}

/// Minimum of `Σ c f` over the vertices of the transportation polytope, found by
/// enumerating every spanning tree of the complete bipartite graph and keeping the
/// feasible tree solutions.
pub fn brute_force_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> f64 {
    let (s, d) = (supply.len(), demand.len());
    let arcs: Vec<(usize, usize)> = (0..s).flat_map(|i| (0..d).map(move |j| (i, j))).collect();
    let need = s + d - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(need);
    let parent: Vec<usize> = (0..s + d).collect();
    enumerate(&arcs, s, 0, need, &mut chosen, parent, &mut |tree: &[usize]| {
        if let Some(c) = tree_cost(tree, &arcs, supply, demand, cost, d) {
            best = best.min(c);
        }
    });
    best
}

fn find(p: &[usize], mut x: usize) -> usize {
    while p[x] != x {
        x = p[x];
    }
    x
}

fn enumerate(arcs: &[(usize, usize)], s_nodes: usize, start: usize, need: usize, chosen: &mut Vec<usize>, parent: Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if chosen.len() == need {
        f(chosen);
        return;
    }
    if arcs.len() - start < need - chosen.len() {
        return;
    }
    for k in start..arcs.len() {
        let (i, j) = arcs[k];
        let (u, v) = (i, s_nodes + j);
        let (ru, rv) = (find(&parent, u), find(&parent, v));
        if ru == rv {
            continue;
        }
        let mut p2 = parent.clone();
        p2[ru] = rv;
        chosen.push(k);
        enumerate(arcs, s_nodes, k + 1, need, chosen, p2, f);
        chosen.pop();
    }
}

fn tree_cost(tree: &[usize], arcs: &[(usize, usize)], supply: &[f64], demand: &[f64], cost: &[f64], d: usize) -> Option<f64> {
    let s = supply.len();
    let n = s + d;
    let mut excess: Vec<f64> = supply.iter().copied().chain(demand.iter().map(|x| -x)).collect();
    let mut live: Vec<bool> = vec![true; tree.len()];
    let mut degree = vec![0usize; n];
    for &k in tree {
        let (i, j) = arcs[k];
        degree[i] += 1;
        degree[s + j] += 1;
    }
    let mut total = 0.0;
    let mut remaining = tree.len();
    while remaining > 0 {
        let mut progressed = false;
        for (t, &k) in tree.iter().enumerate() {
            if !live[t] {
                continue;
            }
            let (i, j) = arcs[k];
            let (u, v) = (i, s + j);
            let flow = if degree[u] == 1 {
                excess[u]
            } else if degree[v] == 1 {
                -excess[v]
            } else {
                continue;
            };
            if flow < -1e-12 {
                return None;
            }
            excess[u] -= flow;
            excess[v] += flow;
            degree[u] -= 1;
            degree[v] -= 1;
            live[t] = false;
            remaining -= 1;
            total += flow.max(0.0) * cost[i * d + j];
            progressed = true;
        }
        if !progressed {
            return None;
        }
    }
    Some(total)
}

/// Cost matrix and marginals of the origin-reservoir problem on `B_r` (closed ball),
/// with unscaled real costs.
pub fn reservoir_problem(a: &DiscretizedMeasure<f64>, b: &DiscretizedMeasure<f64>, r: f64, p: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let xa: Vec<_> = a.atoms().iter().filter(|x| x.location.norm() <= r && x.mass > 0.0).collect();
    let xb: Vec<_> = b.atoms().iter().filter(|x| x.location.norm() <= r && x.mass > 0.0).collect();
    let ma: f64 = xa.iter().map(|x| x.mass).sum();
    let mb: f64 = xb.iter().map(|x| x.mass).sum();
    let mut supply: Vec<f64> = xa.iter().map(|x| x.mass).collect();
    supply.push(mb);
    let mut demand: Vec<f64> = xb.iter().map(|x| x.mass).collect();
    demand.push(ma);
    let (s, d) = (supply.len(), demand.len());
    let mut cost = vec![0.0; s * d];
    for i in 0..s {
        for j in 0..d {
            let dist = match (i + 1 < s, j + 1 < d) {
                (true, true) => xa[i].location.dist(&xb[j].location),
                (true, false) => xa[i].location.norm(),
                (false, true) => xb[j].location.norm(),
                (false, false) => 0.0,
            };
            cost[i * d + j] = dist.powf(p);
        }
    }
    (supply, demand, cost)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let noise = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        if depth == 0 || (left + right - whole).abs() <= (15.0 * tol).max(noise) {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
}

/// `∫_a^b g(r) dr` for `0 < a < b`, integrated in `log r` so that singular power
/// laws near the origin stay smooth.
pub fn radial_oracle(g: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    adaptive_simpson(&|s: f64| {
        let r = s.exp();
        g(r) * r
    }, a.ln(), b.ln(), tol)
}
