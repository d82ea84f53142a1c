//! Serializable family and grid descriptions (TOML or JSON).
//!
//! Callables are expression strings: kernels and jumps see the vectors `xi`
//! and `z`, variable orders and moving atom coordinates see `xi`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Vars};
use crate::measure::family::{AtomsFn, JumpFn, KernelFn, LevyFamily, OrderFn};
use crate::measure::grid::{PolarGrid, DEFAULT_R_INNER, DEFAULT_R_OUTER};
use crate::point::Point;
use crate::scalar::{lit, Real};

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Density {
        dim: usize,
        sigma: f64,
        #[serde(default = "one")]
        lambda: f64,
        #[serde(default)]
        c_k: f64,
        /// Defaults to `lambda * norm(z)^(-(dim + sigma))`.
        #[serde(default)]
        kernel: Option<String>,
    },
    VariableOrder {
        dim: usize,
        order: String,
        sigma1: f64,
        sigma2: f64,
        #[serde(default)]
        c_sigma: f64,
        #[serde(default = "one")]
        normalization: f64,
    },
    LevyIto {
        jump: String,
        c0: f64,
        c1: f64,
        base: Box<FamilySpec>,
    },
    RotatedQuadrant {
        sigma: f64,
    },
    FiniteAtomic {
        dim: usize,
        atoms: Vec<AtomSpec>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coord {
    Value(f64),
    Expr(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub at: Vec<Coord>,
    pub mass: f64,
}

fn compile(src: &str, vars: &Vars) -> Result<Expr> {
    Expr::parse(src, vars).map_err(|e| Error::Config(format!("`{src}`: {e}")))
}

fn probe<T: Real>(dim: usize) -> (Point<T>, Point<T>) {
    let xi = Point::from_f64(&[0.31, -0.17, 0.23][..dim]);
    let z = Point::from_f64(&[0.47, 0.29, -0.11][..dim]);
    (xi, z)
}

impl FamilySpec {
    pub fn dim(&self) -> usize {
        match self {
            FamilySpec::Density { dim, .. }
            | FamilySpec::VariableOrder { dim, .. }
            | FamilySpec::FiniteAtomic { dim, .. } => *dim,
            FamilySpec::LevyIto { base, .. } => base.dim(),
            FamilySpec::RotatedQuadrant { .. } => 2,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build<T: Real>(&self) -> Result<LevyFamily<T>> {
        let vz = Vars::new(&["xi", "z"], &[]);
        let vx = Vars::new(&["xi"], &[]);
        let fam = match self {
            FamilySpec::Density { dim, sigma, lambda, c_k, kernel } => match kernel {
                None => LevyFamily::power_law(*dim, lit(*sigma), lit(*lambda)),
                Some(src) => {
                    let e = compile(src, &vz)?;
                    let (xi, z) = probe::<T>(*dim);
                    e.eval_scalar(&[xi, z], &[]).map_err(|err| Error::Config(format!("`{src}`: {err}")))?;
                    let k: KernelFn<T> = Arc::new(move |xi, z| e.eval_scalar(&[*xi, *z], &[]).unwrap_or(T::nan()));
                    LevyFamily::density(*dim, k, lit(*lambda), lit(*sigma), lit(*c_k))
                }
            },
            FamilySpec::VariableOrder { dim, order, sigma1, sigma2, c_sigma, normalization } => {
                let e = compile(order, &vx)?;
                let (xi, _) = probe::<T>(*dim);
                e.eval_scalar(&[xi], &[]).map_err(|err| Error::Config(format!("`{order}`: {err}")))?;
                let f: OrderFn<T> = Arc::new(move |xi| e.eval_scalar(&[*xi], &[]).unwrap_or(T::nan()));
                LevyFamily::variable_order(*dim, f, lit(*sigma1), lit(*sigma2), lit(*c_sigma))
                    .and_then(|f| f.with_normalization(lit(*normalization)))
            }
            FamilySpec::LevyIto { jump, c0, c1, base } => {
                let b = base.build::<T>()?;
                let dim = b.dim();
                let e = compile(jump, &vz)?;
                let (xi, z) = probe::<T>(dim);
                e.eval(&[xi, z], &[])
                    .and_then(|v| v.vector(dim))
                    .map_err(|err| Error::Config(format!("`{jump}`: {err}")))?;
                let j: JumpFn<T> = Arc::new(move |xi, z| {
                    e.eval(&[*xi, *z], &[])
                        .and_then(|v| v.vector(dim))
                        .unwrap_or_else(|_| Point::zero(dim).map(|_| T::nan()))
                });
                LevyFamily::levy_ito(b, j, lit(*c0), lit(*c1))
            }
            FamilySpec::RotatedQuadrant { sigma } => LevyFamily::rotated_quadrant(lit(*sigma)),
            FamilySpec::FiniteAtomic { dim, atoms } => {
                let dim = *dim;
                if atoms.iter().any(|a| a.at.len() != dim) {
                    return Err(Error::Config(format!("every atom needs {dim} coordinates")));
                }
                let fixed = atoms.iter().all(|a| a.at.iter().all(|c| matches!(c, Coord::Value(_))));
                if fixed {
                    let list = atoms
                        .iter()
                        .map(|a| {
                            let xs: Vec<f64> = a
                                .at
                                .iter()
                                .map(|c| match c {
                                    Coord::Value(v) => *v,
                                    Coord::Expr(_) => unreachable!(),
                                })
                                .collect();
                            (Point::from_f64(&xs), lit::<T>(a.mass))
                        })
                        .collect();
                    LevyFamily::finite_atomic(dim, list)
                } else {
                    let mut compiled: Vec<(Vec<Expr>, T)> = Vec::new();
                    for a in atoms {
                        let mut cs = Vec::new();
                        for c in &a.at {
                            cs.push(match c {
                                Coord::Value(v) => compile(&format!("{v:e}"), &vx)?,
                                Coord::Expr(s) => compile(s, &vx)?,
                            });
                        }
                        compiled.push((cs, lit(a.mass)));
                    }
                    let f: AtomsFn<T> = Arc::new(move |xi| {
                        compiled
                            .iter()
                            .map(|(cs, m)| {
                                let mut p = Point::zero(dim);
                                for (i, c) in cs.iter().enumerate() {
                                    p.set(i, c.eval_scalar(&[*xi], &[]).unwrap_or(T::nan()));
                                }
                                (p, *m)
                            })
                            .collect()
                    });
                    let fam = LevyFamily::moving_atoms(dim, f)?;
                    fam.atoms_at(&probe::<T>(dim).0)
                        .map_err(|e| Error::Config(e.to_string()))?;
                    Ok(fam)
                }
            }
        };
        fam.map_err(|e| match e {
            Error::InvalidParameter(m) => Error::Config(m),
            other => other,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub r_inner: f64,
    pub r_outer: f64,
    pub shells_per_octave: u32,
    /// Angular cells (2-D) or azimuthal cells (3-D); dimension default when absent.
    pub angular: Option<usize>,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    pub tolerance: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            r_inner: DEFAULT_R_INNER,
            r_outer: DEFAULT_R_OUTER,
            shells_per_octave: 4,
            angular: None,
            radial_nodes: 4,
            angular_nodes: 3,
            tolerance: 1e-6,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.r_inner > 0.0
            && self.r_outer > self.r_inner
            && self.r_outer.is_finite()
            && (1..=64).contains(&self.shells_per_octave)
            && self.angular.is_none_or(|a| (1..=4096).contains(&a))
            && (1..=32).contains(&self.radial_nodes)
            && (1..=32).contains(&self.angular_nodes)
            && self.tolerance > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("grid parameters out of range: {self:?}")))
        }
    }

    pub fn build<T: Real>(&self, dim: usize) -> Result<PolarGrid<T>> {
        self.validate()?;
        let mut g = PolarGrid::with_ratio(dim, lit(self.r_inner), lit(self.r_outer), self.shells_per_octave)?
            .with_nodes(self.radial_nodes, self.angular_nodes)
            .with_tolerance(lit(self.tolerance));
        if let Some(a) = self.angular {
            g = g.with_angular(a);
        }
        Ok(g)
    }
}

/// `vol(∂B) Λ/σ R^{-σ}`, the tail of `Λ|z|^{-(N+σ)}` outside `B_R`.
pub fn power_law_tail<T: Real>(dim: usize, sigma: T, lambda: T, big_r: T) -> T {
    crate::scalar::unit_sphere_area::<T>(dim) * lambda / sigma * big_r.powf(-sigma)
}

/// `vol(∂B) Λ r^{2-σ}/(2-σ)`, the second moment of `Λ|z|^{-(N+σ)}` on `B_r`.
pub fn power_law_moment2<T: Real>(dim: usize, sigma: T, lambda: T, r: T) -> T {
    let two: T = lit(2.0);
    crate::scalar::unit_sphere_area::<T>(dim) * lambda * r.powf(two - sigma) / (two - sigma)
}

/// `Λ vol(∂B) (1/(2-σ) + 1/σ)`.
pub fn power_law_levy_constant<T: Real>(dim: usize, sigma: T, lambda: T) -> T {
    power_law_moment2(dim, sigma, lambda, T::one()) + power_law_tail(dim, sigma, lambda, T::one())
}
