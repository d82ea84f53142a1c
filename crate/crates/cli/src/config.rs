use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nlhj::assumptions::{HamiltonianSpec, SamplePlan};
use nlhj::expr::{Expr, Vars};
use nlhj::measure::spec::{FamilySpec, GridSpec};
use nlhj::solver::{FarField, GridFunction, SolveConfig};
use nlhj::{Point, Point64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn half() -> f64 {
    0.5
}

fn one_expr() -> Source {
    Source::Number(1.0)
}

fn zero_expr() -> Source {
    Source::Number(0.0)
}

/// An expression field that may also be written as a bare number.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Source {
    Number(f64),
    Expr(String),
}

impl Source {
    pub fn text(&self) -> String {
        match self {
            Source::Number(v) => format!("{v:e}"),
            Source::Expr(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Output directory; `--out` wins over it.
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub family: FamilySpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub plan: SamplePlan,
    #[serde(default)]
    pub hamiltonian: Option<HamiltonianConfig>,
    #[serde(default)]
    pub solver: SolveConfig,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub distance: Option<DistanceConfig>,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

/// `H(x, t, p)` either as `b(x)|p|^m − f(x)` or as a free expression with declared constants.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianConfig {
    Eikonal {
        #[serde(default = "one_expr")]
        b: Source,
        #[serde(default = "zero_expr")]
        f: Source,
        #[serde(default = "two")]
        m: f64,
        /// Lower bound of `b`; the minimum over the solver nodes when absent.
        #[serde(default)]
        b_min: Option<f64>,
        #[serde(default)]
        f_min: Option<f64>,
        #[serde(default)]
        horizon: Option<f64>,
    },
    General {
        /// Expression in the vectors `x`, `p` and the scalar `t`.
        h: String,
        m: f64,
        b_m: f64,
        #[serde(default)]
        b0: f64,
        #[serde(default = "one")]
        r0: f64,
        #[serde(default = "half")]
        mu0: f64,
        #[serde(default)]
        horizon: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Stationary,
    Parabolic,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    /// Nodes per axis.
    pub n: usize,
    /// Half width of the box.
    pub extent: f64,
    pub far_field: FarField<f64>,
    /// Initial iterate (stationary) or initial data (parabolic), an expression in `x`.
    pub init: Source,
    pub mode: Mode,
    /// Also solve on the doubled box and report the difference.
    pub truncation_check: bool,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { n: 65, extent: 4.0, far_field: FarField::Boundary, init: Source::Number(0.0), mode: Mode::Stationary, truncation_check: false }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub ids: Vec<String>,
    pub r_list: Option<Vec<f64>>,
    pub tail_radii: Option<Vec<f64>>,
    pub m3_r: f64,
    pub m3_big_r: f64,
    pub r0: f64,
    pub p: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            ids: ["M1", "M2", "M3", "M4"].map(String::from).to_vec(),
            r_list: None,
            tail_radii: None,
            m3_r: 0.1,
            m3_big_r: 10.0,
            r0: 0.5,
            p: 2.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceConfig {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default = "one")]
    pub r: f64,
    #[serde(default = "two")]
    pub p: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Candidate subsolution, an expression in `x`.
    pub sub: Source,
    /// Candidate supersolution.
    #[serde(rename = "super")]
    pub sup: Source,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Subcommand run in every cell: `check`, `distance`, `solve` or `compare`.
    pub command: String,
    /// Dotted key to the values it takes; cells are the cartesian product.
    pub axes: BTreeMap<String, Vec<toml::Value>>,
}

/// A config after overrides, with the digest of its canonical form.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub tree: toml::Table,
    pub hash: String,
}

impl Loaded {
    pub fn seed(&self) -> u64 {
        self.config.plan.seed
    }

    pub fn header(&self) -> String {
        format!("nlhj {} config_sha256={} seed={}", env!("CARGO_PKG_VERSION"), self.hash, self.seed())
    }
}

pub fn read_tree(path: &Path) -> Result<toml::Table, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// `key=value`, the value read as a TOML literal and otherwise kept as a string.
pub fn parse_override(s: &str) -> Result<(String, toml::Value), CliError> {
    let (k, v) = s.split_once('=').ok_or_else(|| CliError::Usage(format!("override `{s}` is not key=value")))?;
    let key = k.trim();
    if key.is_empty() {
        return Err(CliError::Usage(format!("override `{s}` has an empty key")));
    }
    let v = v.trim();
    let value = format!("v = {v}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    Ok((key.to_string(), value))
}

pub fn apply_override(tree: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut t = tree;
    for p in &parts[..parts.len() - 1] {
        let entry = t.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry.as_table_mut().ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    t.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Deserializes and range-checks a tree; the hash covers everything but the output path.
pub fn load(mut tree: toml::Table) -> Result<Loaded, CliError> {
    let config: ExperimentConfig =
        toml::Value::Table(tree.clone()).try_into().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    config.validate()?;
    tree.remove("output");
    let canonical = toml::to_string(&tree).map_err(|e| CliError::Config(e.to_string()))?;
    let hash = Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    Ok(Loaded { config, tree, hash })
}

pub fn expr(src: &str, vectors: &[&str], scalars: &[&str]) -> Result<Expr, CliError> {
    Expr::parse(src, &Vars::new(vectors, scalars)).map_err(|e| CliError::Config(format!("`{src}`: {e}")))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.grid.validate()?;
        self.plan.validate()?;
        self.solver.validate()?;
        let d = &self.domain;
        if d.n < 3 || d.n > 4097 || !(d.extent > 0.0 && d.extent.is_finite()) {
            return Err(CliError::Config("domain needs 3 <= n <= 4097 and a positive finite extent".into()));
        }
        let c = &self.check;
        for id in &c.ids {
            crate::commands::canonical_id(id)?;
        }
        let radii = c.r_list.iter().chain(&c.tail_radii).flatten();
        if radii.clone().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(CliError::Config("check radii must be positive".into()));
        }
        if !(c.m3_r > 0.0 && c.m3_big_r > c.m3_r && c.r0 > 0.0 && (1.0..=2.0).contains(&c.p)) {
            return Err(CliError::Config("check needs 0 < m3_r < m3_big_r, r0 > 0 and p in [1, 2]".into()));
        }
        if let Some(t) = &self.distance {
            if t.x.is_empty() || t.x.len() != t.y.len() || !(t.r > 0.0) || !(1.0..=2.0).contains(&t.p) {
                return Err(CliError::Config("distance needs points of equal dimension, r > 0 and p in [1, 2]".into()));
            }
        }
        if let Some(s) = &self.sweep {
            if !["check", "distance", "solve", "compare"].contains(&s.command.as_str()) {
                return Err(CliError::Config(format!("sweep cannot run `{}`", s.command)));
            }
            if s.axes.is_empty() || s.axes.values().any(|v| v.is_empty()) {
                return Err(CliError::Config("sweep axes must be nonempty".into()));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<GridFunction<f64>, CliError> {
        let d = &self.domain;
        Ok(GridFunction::new(self.family.dim(), d.n, d.extent, d.far_field)?)
    }

    /// Samples an expression in `x` on the solver nodes.
    pub fn sample(&self, src: &Source) -> Result<GridFunction<f64>, CliError> {
        let src = &src.text();
        let e = expr(src, &["x"], &[])?;
        let layout = self.layout()?;
        let mut values = Vec::with_capacity(layout.len());
        for k in 0..layout.len() {
            let v = e.eval_scalar(&[layout.node(k)], &[])?;
            if !v.is_finite() {
                return Err(CliError::Config(format!("`{src}` is not finite at node {k}")));
            }
            values.push(v);
        }
        Ok(layout.with_values(values)?)
    }

    pub fn hamiltonian(&self) -> Result<HamiltonianSpec<f64>, CliError> {
        let dim = self.family.dim();
        let cfg = self.hamiltonian.as_ref().ok_or_else(|| CliError::Config("missing [hamiltonian] section".into()))?;
        match cfg {
            HamiltonianConfig::Eikonal { b, f, m, b_min, f_min, horizon } => {
                let (eb, ef) = (Arc::new(expr(&b.text(), &["x"], &[])?), Arc::new(expr(&f.text(), &["x"], &[])?));
                let layout = self.layout()?;
                let (mut lo_b, mut lo_f) = (f64::INFINITY, f64::INFINITY);
                for k in 0..layout.len() {
                    let x = layout.node(k);
                    lo_b = lo_b.min(eb.eval_scalar(&[x], &[])?);
                    lo_f = lo_f.min(ef.eval_scalar(&[x], &[])?);
                }
                let (bb, ff) = (eb.clone(), ef.clone());
                let spec = HamiltonianSpec::eikonal(
                    dim,
                    Arc::new(move |x: &Point64| bb.eval_scalar(&[*x], &[]).unwrap_or(f64::NAN)),
                    Arc::new(move |x: &Point64| ff.eval_scalar(&[*x], &[]).unwrap_or(f64::NAN)),
                    *m,
                    b_min.unwrap_or(lo_b),
                    f_min.unwrap_or(lo_f),
                )?;
                Ok(match horizon {
                    Some(t) => spec.with_horizon(*t)?,
                    None => spec,
                })
            }
            HamiltonianConfig::General { h, m, b_m, b0, r0, mu0, horizon } => {
                let e = Arc::new(expr(h, &["x", "p"], &["t"])?);
                let probe = Point::zero(dim);
                e.eval_scalar(&[probe, probe], &[0.0])?;
                let spec = HamiltonianSpec::new(
                    dim,
                    Arc::new(move |x: &Point64, t: f64, p: &Point64| e.eval_scalar(&[*x, *p], &[t]).unwrap_or(f64::NAN)),
                    *m,
                    *b_m,
                    *b0,
                    *r0,
                    *mu0,
                )?;
                Ok(match horizon {
                    Some(t) => spec.with_horizon(*t)?,
                    None => spec,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_as_toml_or_string() {
        let (k, v) = parse_override("family.sigma=0.7").unwrap();
        assert_eq!(k, "family.sigma");
        assert_eq!(v.as_float(), Some(0.7));
        assert_eq!(parse_override("domain.init=sin(x1)").unwrap().1.as_str(), Some("sin(x1)"));
        assert!(parse_override("nokey").is_err());
        let mut t = toml::Table::new();
        apply_override(&mut t, "a.b.c", toml::Value::Integer(3)).unwrap();
        assert_eq!(t["a"]["b"]["c"].as_integer(), Some(3));
        assert!(apply_override(&mut t, "a.b.c.d", toml::Value::Integer(1)).is_err());
    }

    #[test]
    fn hash_ignores_the_output_path() {
        let base = "[family]\nvariant = \"density\"\ndim = 1\nsigma = 1.0\n";
        let a = load(base.parse().unwrap()).unwrap();
        let b = load(format!("output = \"elsewhere\"\n{base}").parse().unwrap()).unwrap();
        assert_eq!(a.hash, b.hash);
        let c = load(base.replace("1.0", "0.5").parse().unwrap()).unwrap();
        assert_ne!(a.hash, c.hash);
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_rejected() {
        let base = "[family]\nvariant = \"density\"\ndim = 1\nsigma = 1.0\n";
        assert!(load(format!("{base}[domain]\nwidth = 3\n").parse().unwrap()).is_err());
        assert!(load(format!("{base}[domain]\nn = 2\n").parse().unwrap()).is_err());
        assert!(load(format!("{base}[check]\nids = [\"M9\"]\n").parse().unwrap()).is_err());
    }
}
