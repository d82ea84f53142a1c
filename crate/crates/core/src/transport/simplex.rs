//! Primal network simplex for balanced transportation problems.
//!
//! Sources `0..S` and sinks `0..D` are joined by a complete bipartite arc set
//! with integer costs. An artificial root carries the initial basis; block
//! search picks entering arcs and the leaving arc is chosen so the basis stays
//! strongly feasible, which rules out cycling under degeneracy.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    Up,
    Down,
}

struct Network<'a, T> {
    s: usize,
    d: usize,
    cost: &'a [i64],
    art_cost: i64,
    supply: Vec<T>,
    flow: Vec<T>,
    basic: Vec<bool>,
    tree: Vec<usize>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    dir: Vec<Dir>,
    depth: Vec<usize>,
    pi: Vec<i64>,
    adj: Vec<Vec<usize>>,
}

impl<T: Real> Network<'_, T> {
    fn nodes(&self) -> usize {
        self.s + self.d
    }

    fn root(&self) -> usize {
        self.s + self.d
    }

    fn real_arcs(&self) -> usize {
        self.s * self.d
    }

    fn ends(&self, a: usize) -> (usize, usize) {
        let m = self.real_arcs();
        if a < m {
            (a / self.d, self.s + a % self.d)
        } else {
            let u = a - m;
            if self.supply[u] >= T::zero() {
                (u, self.root())
            } else {
                (self.root(), u)
            }
        }
    }

    fn arc_cost(&self, a: usize) -> i64 {
        let m = self.real_arcs();
        if a < m {
            self.cost[a]
        } else if self.supply[a - m] >= T::zero() {
            0
        } else {
            self.art_cost
        }
    }

    fn reduced(&self, a: usize) -> i64 {
        let (u, v) = self.ends(a);
        self.arc_cost(a) + self.pi[u] - self.pi[v]
    }

    /// Recomputes parent pointers, depths and potentials from the basic arc list.
    fn rebuild(&mut self) {
        let n = self.nodes() + 1;
        for l in &mut self.adj {
            l.clear();
        }
        for &a in &self.tree {
            let (u, v) = self.ends(a);
            self.adj[u].push(a);
            self.adj[v].push(a);
        }
        let root = self.root();
        let mut seen = vec![false; n];
        seen[root] = true;
        self.depth[root] = 0;
        self.pi[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(x) = queue.pop_front() {
            for k in 0..self.adj[x].len() {
                let a = self.adj[x][k];
                let (u, v) = self.ends(a);
                let (y, dir) = if u == x { (v, Dir::Down) } else { (u, Dir::Up) };
                if seen[y] {
                    continue;
                }
                seen[y] = true;
                self.parent[y] = x;
                self.pred[y] = a;
                self.dir[y] = dir;
                self.depth[y] = self.depth[x] + 1;
                let c = self.arc_cost(a);
                // basic arcs have zero reduced cost: pi[v] = pi[u] + c
                self.pi[y] = if dir == Dir::Down { self.pi[x] + c } else { self.pi[x] - c };
                queue.push_back(y);
            }
        }
    }

    fn join(&self, mut a: usize, mut b: usize) -> usize {
        while self.depth[a] > self.depth[b] {
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b];
        }
        while a != b {
            a = self.parent[a];
            b = self.parent[b];
        }
        a
    }

    /// Exact tree flows from the supplies by peeling leaves toward the root.
    fn tree_flows(&mut self) {
        let n = self.nodes();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&u| std::cmp::Reverse(self.depth[u]));
        let mut excess = self.supply.clone();
        for &a in &self.tree {
            self.flow[a] = T::zero();
        }
        for u in order {
            let a = self.pred[u];
            let e = excess[u];
            let p = self.parent[u];
            // Up arcs carry u's excess toward the parent, down arcs bring in its deficit.
            let f = if self.dir[u] == Dir::Up { e } else { -e };
            self.flow[a] = f.max(T::zero());
            if p < n {
                excess[p] = excess[p] + e;
            }
        }
    }
}

/// Min-cost flow from `supply` to `demand` (equal totals) with row-major integer
/// costs `cost[i * D + j]`. Returns positive flows `(i, j, amount)` and the pivot count.
pub fn solve_transportation<T: Real>(supply: &[T], demand: &[T], cost: &[i64]) -> Result<(Vec<(usize, usize, T)>, usize)> {
    let (s, d) = (supply.len(), demand.len());
    if s == 0 || d == 0 || cost.len() != s * d {
        return Err(Error::invalid("transportation problem needs nonempty sides and an S x D cost matrix"));
    }
    let max_cost = cost.iter().copied().max().unwrap_or(0).max(0);
    if cost.iter().any(|&c| c < 0) {
        return Err(Error::invalid("transport costs must be nonnegative"));
    }
    let nodes = (s + d + 1) as i64;
    let art_cost = (max_cost + 1).checked_mul(nodes).ok_or(Error::CostOverflow)?;
    // potentials reach at most a few multiples of the artificial cost
    art_cost.checked_mul(8).ok_or(Error::CostOverflow)?;

    let mut sup: Vec<T> = supply.to_vec();
    sup.extend(demand.iter().map(|&b| -b));
    let m = s * d;
    let n = s + d;
    let mut net = Network {
        s,
        d,
        cost,
        art_cost,
        supply: sup,
        flow: vec![T::zero(); m + n],
        basic: vec![false; m + n],
        tree: (m..m + n).collect(),
        parent: vec![n; n + 1],
        pred: vec![0; n + 1],
        dir: vec![Dir::Up; n + 1],
        depth: vec![0; n + 1],
        pi: vec![0; n + 1],
        adj: vec![Vec::new(); n + 1],
    };
    for u in 0..n {
        net.basic[m + u] = true;
        net.flow[m + u] = net.supply[u].abs();
    }
    net.rebuild();

    let total = m + n;
    let block = ((total as f64).sqrt() as usize).max(10);
    let mut next = 0usize;
    let mut pivots = 0usize;
    loop {
        // block search for the entering arc
        let mut best: Option<(usize, i64)> = None;
        let mut scanned = 0usize;
        let mut in_block = 0usize;
        let mut a = next;
        while scanned < total {
            if !net.basic[a] {
                let rc = net.reduced(a);
                if rc < 0 && best.is_none_or(|(_, b)| rc < b) {
                    best = Some((a, rc));
                }
            }
            scanned += 1;
            in_block += 1;
            a += 1;
            if a == total {
                a = 0;
            }
            if in_block == block {
                if best.is_some() {
                    break;
                }
                in_block = 0;
            }
        }
        next = a;
        let Some((e_in, _)) = best else { break };

        let (first, second) = net.ends(e_in);
        let join = net.join(first, second);
        let mut delta = T::infinity();
        let mut u_out = usize::MAX;
        let mut u = first;
        while u != join {
            if net.dir[u] == Dir::Up {
                let f = net.flow[net.pred[u]];
                if f < delta {
                    delta = f;
                    u_out = u;
                }
            }
            u = net.parent[u];
        }
        u = second;
        while u != join {
            if net.dir[u] == Dir::Down {
                let f = net.flow[net.pred[u]];
                if f <= delta {
                    delta = f;
                    u_out = u;
                }
            }
            u = net.parent[u];
        }
        if u_out == usize::MAX {
            return Err(Error::invalid("unbounded transportation problem"));
        }

        net.flow[e_in] = delta;
        u = first;
        while u != join {
            let a = net.pred[u];
            net.flow[a] = if net.dir[u] == Dir::Up { net.flow[a] - delta } else { net.flow[a] + delta };
            u = net.parent[u];
        }
        u = second;
        while u != join {
            let a = net.pred[u];
            net.flow[a] = if net.dir[u] == Dir::Up { net.flow[a] + delta } else { net.flow[a] - delta };
            u = net.parent[u];
        }
        let e_out = net.pred[u_out];
        net.flow[e_out] = T::zero();
        net.basic[e_out] = false;
        net.basic[e_in] = true;
        let pos = net.tree.iter().position(|&x| x == e_out).expect("leaving arc is basic");
        net.tree[pos] = e_in;
        net.rebuild();
        pivots += 1;
    }

    net.tree_flows();
    let mut out = Vec::new();
    for &a in &net.tree {
        if a < m && net.flow[a] > T::zero() {
            out.push((a / d, a % d, net.flow[a]));
        }
    }
    out.sort_by_key(|&(i, j, _)| (i, j));
    Ok((out, pivots))
}
