//! Gauss-Legendre rules mapped onto intervals.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::scalar::{lit, Real};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussRule<T> {
    pairs: Vec<(T, T)>,
}

impl<T: Real> GaussRule<T> {
    pub fn new(degree: usize) -> Self {
        let degree = NonZeroUsize::new(degree.max(1)).expect("nonzero");
        let mut pairs: Vec<(T, T)> = GaussLegendre::new(degree)
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (lit(x), lit(w)))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite nodes"));
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Nodes and weights for the interval `[a, b]`.
    pub fn on(&self, a: T, b: T) -> impl Iterator<Item = (T, T)> + '_ {
        let half = (b - a) * lit(0.5);
        let mid = (b + a) * lit(0.5);
        self.pairs.iter().map(move |&(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: T, b: T, f: impl Fn(T) -> T) -> T {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}
