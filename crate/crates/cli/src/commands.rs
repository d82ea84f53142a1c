use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nlhj::assumptions::{self as a, AssumptionReport};
use nlhj::solver::{self as s, GridFunction};
use nlhj::transport::wasserstein_p_ball;
use nlhj::{Family64, Grid64, Point64};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{self, Loaded, Mode};
use crate::error::CliError;

/// What a command printed, and why it failed if it did.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: String,
    pub failure: Option<String>,
}

impl Outcome {
    fn fail(&mut self, msg: impl Into<String>) {
        if self.failure.is_none() {
            self.failure = Some(msg.into());
        }
    }
}

/// Output directory plus the provenance line every file carries.
pub struct Sink {
    dir: PathBuf,
    header: String,
    hash: String,
    seed: u64,
}

impl Sink {
    pub fn new(dir: &Path, loaded: &Loaded) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), header: loaded.header(), hash: loaded.hash.clone(), seed: loaded.seed() })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    /// CSV writers take the provenance line without its leading `# `.
    fn csv(&self, name: &str, f: impl FnOnce(&mut BufWriter<File>, &str) -> Result<(), CliError>) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        f(&mut w, &self.header)?;
        w.flush()?;
        Ok(())
    }

    /// JSON has no comments, so provenance travels as fields next to the report.
    fn json(&self, name: &str, report: serde_json::Value) -> Result<(), CliError> {
        let doc = json!({
            "tool": format!("nlhj {}", env!("CARGO_PKG_VERSION")),
            "config_sha256": self.hash,
            "seed": self.seed,
            "report": report,
        });
        let mut w = self.create(name)?;
        writeln!(w, "{}", serde_json::to_string_pretty(&doc).expect("json values serialize"))?;
        w.flush()?;
        Ok(())
    }
}

fn parse_json(s: &str) -> serde_json::Value {
    serde_json::from_str(s).expect("reports are valid json")
}

fn family_and_grid(loaded: &Loaded) -> Result<(Family64, Grid64), CliError> {
    let fam = loaded.config.family.build::<f64>()?;
    let grid = loaded.config.grid.build::<f64>(fam.dim())?;
    Ok((fam, grid))
}

pub fn canonical_id(id: &str) -> Result<&'static str, CliError> {
    Ok(match id {
        "M1" => "M1",
        "M2" => "M2",
        "M3" => "M3",
        "M4" => "M4",
        "M" => "M",
        "M4'" | "M4p" => "M4'",
        "M4''" | "M4pp" => "M4''",
        "H" => "H",
        "J" => "J",
        other => return Err(CliError::Config(format!("unknown assumption id `{other}`"))),
    })
}

fn file_stem(id: &str) -> String {
    id.replace('\'', "p")
}

pub fn check(loaded: &Loaded, sink: &Sink, ids: &[String]) -> Result<Outcome, CliError> {
    let cfg = &loaded.config;
    let ids: Vec<&str> = if ids.is_empty() { &cfg.check.ids[..] } else { ids }.iter().map(|i| canonical_id(i)).collect::<Result<_, _>>()?;
    let (fam, grid) = family_and_grid(loaded)?;
    let plan = &cfg.plan;
    let c = &cfg.check;
    let r_list = c.r_list.clone().unwrap_or_else(a::default_r_list);
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    for id in ids {
        let rep: AssumptionReport = match id {
            "M1" => a::check_m1(&fam, plan, &grid)?,
            "M2" => a::check_m2(&fam, plan, &grid, &c.tail_radii.clone().unwrap_or_else(a::default_tail_radii))?,
            "M3" => a::check_m3(&fam, plan, &grid, c.m3_r, c.m3_big_r)?,
            "M4" => a::check_m4(&fam, plan, &grid, &r_list)?,
            "M" => a::check_m_unified(&fam, plan, &grid, &r_list)?,
            "M4'" => a::check_m4_prime(&fam, plan, &grid, &r_list, c.r0)?,
            "M4''" => a::check_m4_doubleprime(&fam, plan, &grid, c.p)?,
            "H" => {
                let ham = cfg.hamiltonian()?;
                a::check_h(&ham, plan, &a::default_p_samples(ham.dim, plan.seed), &a::default_mu_samples(ham.mu0))?
            }
            "J" => a::check_j(&fam, plan, &grid, &r_list)?,
            _ => unreachable!("ids are canonical"),
        };
        sink.json(&format!("report_{}.json", file_stem(id)), parse_json(&rep.to_json()))?;
        out.stdout.push_str(&rep.to_table());
        out.stdout.push('\n');
        if !rep.holds() {
            let why = rep.violation.as_ref().map(|v| format!(": {v:?}")).unwrap_or_default();
            out.fail(format!("assumption {id} {}{why}", rep.verdict.as_str()));
        }
        rows.push((id, rep.verdict.as_str()));
    }
    sink.csv("check_summary.csv", |w, header| {
        writeln!(w, "# {header}")?;
        writeln!(w, "id,verdict")?;
        for (id, v) in &rows {
            writeln!(w, "{id},{v}")?;
        }
        Ok(())
    })?;
    Ok(out)
}

pub fn distance(loaded: &Loaded, sink: &Sink) -> Result<Outcome, CliError> {
    let t = loaded.config.distance.as_ref().ok_or_else(|| CliError::Config("missing [distance] section".into()))?;
    let (fam, grid) = family_and_grid(loaded)?;
    if t.x.len() != fam.dim() {
        return Err(CliError::Config(format!("points have dimension {}, the family {}", t.x.len(), fam.dim())));
    }
    let mu1 = fam.transport_discretize(&Point64::from_slice(&t.x), &grid)?;
    let mu2 = fam.transport_discretize(&Point64::from_slice(&t.y), &grid)?;
    let res = wasserstein_p_ball(&mu1, &mu2, t.r, t.p)?;
    sink.csv("coupling.csv", |w, header| Ok(res.coupling.write_csv(w, Some(header))?))?;
    sink.json("distance.json", parse_json(&res.to_json()))?;
    let mut out = Outcome::default();
    let _ = writeln!(out.stdout, "W_{}(B_{}) = {:.12e}", t.p, t.r, res.distance());
    let _ = writeln!(out.stdout, "cost = {:.12e}", res.cost);
    Ok(out)
}

pub fn solve(loaded: &Loaded, sink: &Sink) -> Result<Outcome, CliError> {
    let cfg = &loaded.config;
    let (fam, grid) = family_and_grid(loaded)?;
    let ham = cfg.hamiltonian()?;
    let init = cfg.sample(&cfg.domain.init)?;
    let scheme = s::build_scheme(&fam, &ham, &cfg.solver, &init, &grid)?;
    let mut out = Outcome::default();
    match cfg.domain.mode {
        Mode::Stationary => {
            let run = s::solve_stationary(&scheme, &cfg.solver, &init)?;
            sink.csv("solution.csv", |w, header| Ok(run.solution.write_csv(w, Some(header))?))?;
            sink.csv("residual_history.csv", |w, header| Ok(run.write_history_csv(w, Some(header))?))?;
            let truncation = if cfg.domain.truncation_check {
                let c = init.values[init.len() / 2];
                Some(s::truncation_sensitivity(&fam, &ham, &cfg.solver, &grid, &init, c)?)
            } else {
                None
            };
            sink.json(
                "solve.json",
                json!({
                    "mode": "stationary",
                    "iterations": run.iterations,
                    "final_residual": run.final_residual,
                    "last_tau": run.last_tau,
                    "gradient_clamp": run.gradient_clamp,
                    "clamp_active": run.clamp_active,
                    "cross_clamped": run.cross_clamped,
                    "truncation": truncation,
                }),
            )?;
            let _ = writeln!(out.stdout, "converged in {} iterations, residual {:.3e}", run.iterations, run.final_residual);
            if run.clamp_active {
                out.fail(format!("gradient clamp {:.3e} was active; enlarge solver.gradient_clamp", run.gradient_clamp));
            }
        }
        Mode::Parabolic => {
            let run = s::solve_parabolic(&scheme, &cfg.solver, &init)?;
            let last = &run.snapshots.last().expect("snapshots include the final state").1;
            sink.csv("solution.csv", |w, header| Ok(last.write_csv(w, Some(header))?))?;
            sink.csv("snapshots.csv", |w, header| write_snapshots(w, header, &run.snapshots))?;
            sink.json(
                "solve.json",
                json!({
                    "mode": "parabolic",
                    "steps": run.steps,
                    "dt": run.dt,
                    "horizon": cfg.solver.horizon,
                    "snapshots": run.snapshots.len(),
                    "clamp_active": run.clamp_active,
                }),
            )?;
            let _ = writeln!(out.stdout, "{} steps of {:.3e} up to t = {}", run.steps, run.dt, cfg.solver.horizon);
            if run.clamp_active {
                out.fail("gradient clamp was active; enlarge solver.gradient_clamp");
            }
        }
    }
    Ok(out)
}

/// Long format, one row per node and time: `t, x[, y], u`.
fn write_snapshots<W: Write>(w: &mut W, header: &str, snaps: &[(f64, GridFunction<f64>)]) -> Result<(), CliError> {
    writeln!(w, "# {header}")?;
    let dim = snaps.first().map_or(1, |s| s.1.dim());
    writeln!(w, "{}", if dim == 1 { "t,x,u" } else { "t,x,y,u" })?;
    for (t, u) in snaps {
        for k in 0..u.len() {
            let mut line = format!("{t:.12e}");
            for c in u.node(k).to_f64_vec() {
                let _ = write!(line, ",{c:.12e}");
            }
            let _ = write!(line, ",{:.12e}", u.values[k]);
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

pub fn compare(loaded: &Loaded, sink: &Sink) -> Result<Outcome, CliError> {
    let cfg = &loaded.config;
    let c = cfg.compare.as_ref().ok_or_else(|| CliError::Config("missing [compare] section".into()))?;
    let (fam, grid) = family_and_grid(loaded)?;
    let ham = cfg.hamiltonian()?;
    let sub = cfg.sample(&c.sub)?;
    let sup = cfg.sample(&c.sup)?;
    let scheme = s::build_scheme(&fam, &ham, &cfg.solver, &sub, &grid)?;
    let mut out = Outcome::default();
    match s::comparison_experiment(&scheme, &cfg.solver, &sub, &sup) {
        Ok(rep) => {
            sink.json("comparison.json", parse_json(&rep.to_json()))?;
            let _ = writeln!(
                out.stdout,
                "ordering gap {:.3e}, agreement {:.3e} (tolerance {:.3e}), sandwich excess {:.3e}",
                rep.ordering_gap, rep.agreement, rep.agreement_tolerance, rep.sandwich_excess
            );
            if !rep.agree {
                out.fail(format!("solutions differ by {:.3e}", rep.agreement));
            }
            if rep.clamp_active {
                out.fail("gradient clamp was active; enlarge solver.gradient_clamp");
            }
        }
        Err(e) => {
            let err = CliError::Core(e);
            if err.exit_code() == 2 {
                return Err(err);
            }
            sink.json("comparison.json", json!({ "ok": false, "error": err.to_string() }))?;
            out.fail(err.to_string());
        }
    }
    Ok(out)
}

/// Which command a sweep cell runs.
pub fn run_named(name: &str, loaded: &Loaded, sink: &Sink) -> Result<Outcome, CliError> {
    match name {
        "check" => check(loaded, sink, &[]),
        "distance" => distance(loaded, sink),
        "solve" => solve(loaded, sink),
        "compare" => compare(loaded, sink),
        other => Err(CliError::Config(format!("sweep cannot run `{other}`"))),
    }
}

fn cartesian(axes: &[(String, Vec<toml::Value>)]) -> Vec<Vec<(String, toml::Value)>> {
    let mut cells = vec![Vec::new()];
    for (key, values) in axes {
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.push((key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    cells
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

fn literal(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Runs every cell of the override product in its own directory, cells in parallel.
pub fn sweep(loaded: &Loaded, sink: &Sink, out_dir: &Path) -> Result<Outcome, CliError> {
    let sw = loaded.config.sweep.as_ref().ok_or_else(|| CliError::Config("missing [sweep] section".into()))?;
    let axes: Vec<(String, Vec<toml::Value>)> = sw.axes.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let cells = cartesian(&axes);
    let mut base = loaded.tree.clone();
    base.remove("sweep");
    // every cell must at least load before anything runs
    let prepared: Vec<Loaded> = cells
        .iter()
        .map(|cell| {
            let mut tree = base.clone();
            for (k, v) in cell {
                config::apply_override(&mut tree, k, v.clone())?;
            }
            config::load(tree)
        })
        .collect::<Result<_, _>>()?;
    let results: Vec<(u8, String)> = prepared
        .par_iter()
        .enumerate()
        .map(|(i, cell)| {
            let dir = out_dir.join(format!("cell_{i:04}"));
            let res = Sink::new(&dir, cell).and_then(|s| run_named(&sw.command, cell, &s));
            match res {
                Ok(o) => match o.failure {
                    None => (0, o.stdout.lines().last().unwrap_or("").to_string()),
                    Some(f) => (1, f),
                },
                Err(e) => (e.exit_code(), e.to_string()),
            }
        })
        .collect();
    sink.csv("sweep.csv", |w, header| {
        writeln!(w, "# {header}")?;
        let keys: Vec<String> = axes.iter().map(|(k, _)| csv_field(k)).collect();
        writeln!(w, "cell,{},exit_code,detail", keys.join(","))?;
        for (i, (cell, (code, detail))) in cells.iter().zip(&results).enumerate() {
            let vals: Vec<String> = cell.iter().map(|(_, v)| csv_field(&literal(v))).collect();
            writeln!(w, "cell_{i:04},{},{code},{}", vals.join(","), csv_field(detail))?;
        }
        Ok(())
    })?;
    let mut out = Outcome::default();
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, r)| r.0 != 0).map(|(i, _)| i).collect();
    let _ = writeln!(out.stdout, "{} cells, {} failed", cells.len(), failed.len());
    if let Some(&i) = failed.first() {
        out.fail(format!("cell_{i:04}: {}", results[i].1));
    }
    Ok(out)
}
