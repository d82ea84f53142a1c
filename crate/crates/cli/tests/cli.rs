//! End-to-end runs of the `nlhj` binary.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn nlhj(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_nlhj")).args(args).output().expect("binary runs");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_cmd(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Run {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    nlhj(&args)
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// `(x, u)` rows of a 1-D solution file.
fn solution_rows(path: &Path) -> Vec<(f64, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('x'))
        .map(|l| {
            let mut it = l.split(',').map(|v| v.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect()
}

const POWER_LAW: &str = "[family]\nvariant = \"density\"\ndim = 1\nsigma = 1.0\n";

fn eikonal(f: &str) -> String {
    format!("{POWER_LAW}\n[hamiltonian]\nkind = \"eikonal\"\nf = \"{f}\"\nm = 2.0\n\n[domain]\nn = 33\nextent = 2.0\n\n[solver]\ntolerance = 1e-9\n")
}

#[test]
fn power_law_family_satisfies_the_levy_checks() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", POWER_LAW);
    let out = dir.path().join("out");
    let r = run_cmd("check", &cfg, &out, &["M1", "M2", "M3", "M4"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for id in ["M1", "M2", "M3", "M4"] {
        let rep = report(&out.join(format!("report_{id}.json")));
        assert_eq!(rep["report"]["verdict"], "holds", "{id}");
        assert_eq!(rep["seed"], 7);
        assert_eq!(rep["config_sha256"].as_str().unwrap().len(), 64);
    }
    let summary = fs::read_to_string(out.join("check_summary.csv")).unwrap();
    assert!(summary.starts_with("# nlhj ") && summary.contains("config_sha256=") && summary.contains("seed=7"));
    assert!(r.stdout.contains("verdict        holds"));
}

#[test]
fn rotated_quadrant_fails_the_unified_condition() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "[family]\nvariant = \"rotated_quadrant\"\nsigma = 1.0\n");
    let out = dir.path().join("out");
    let r = run_cmd("check", &cfg, &out, &["M"]);
    assert_eq!(r.code, 1, "{}", r.stdout);
    let rep = &report(&out.join("report_M.json"))["report"];
    assert_eq!(rep["verdict"], "fails");
    assert!(rep["violation"].is_object());
    // the second moment of the difference only decays like the square root of the separation
    let e = rep["constants"]["second_moment_exponent"].as_f64().unwrap();
    assert!((e - 0.5).abs() < 0.05, "{e}");
}

#[test]
fn malformed_configs_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    for (i, body) in [
        format!("{POWER_LAW}bogus = 1\n"),
        "[family\nvariant = 1".to_string(),
        POWER_LAW.replace("1.0", "2.5"),
        format!("{POWER_LAW}[domain]\nn = 2\n"),
        format!("{POWER_LAW}[check]\nids = [\"M7\"]\n"),
    ]
    .iter()
    .enumerate()
    {
        let cfg = write_config(&dir, &format!("bad{i}.toml"), body);
        let r = run_cmd("check", &cfg, &out, &[]);
        assert_eq!(r.code, 2, "case {i}: {}", r.stderr);
    }
    assert_eq!(nlhj(&["check"]).code, 2);
    assert_eq!(nlhj(&["frobnicate"]).code, 2);
    let cfg = write_config(&dir, "ok.toml", POWER_LAW);
    assert_eq!(run_cmd("check", &cfg, &out, &["--override", "noequals"]).code, 2);
    assert_eq!(run_cmd("solve", &cfg, &out, &[]).code, 2, "solve needs a Hamiltonian");
}

fn distance_of(stdout: &str) -> f64 {
    stdout.lines().next().unwrap().rsplit(' ').next().unwrap().parse().unwrap()
}

#[test]
fn distance_between_equal_measures_is_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", POWER_LAW);
    let out = dir.path().join("out");
    // a translation-invariant kernel gives the same measure at every point
    let r = run_cmd("distance", &cfg, &out, &["--x", "0.0", "--y", "0.7"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(distance_of(&r.stdout).abs() < 1e-12);
    let coupling = fs::read_to_string(out.join("coupling.csv")).unwrap();
    let mut lines = coupling.lines();
    assert!(lines.next().unwrap().starts_with("# nlhj "));
    assert_eq!(lines.next().unwrap(), "src_x,src_is_origin,dst_x,dst_is_origin,mass");
    assert_eq!(report(&out.join("distance.json"))["report"]["p"], 2.0);
}

#[test]
fn distance_of_a_moving_atom_matches_brute_force() {
    let dir = TempDir::new().unwrap();
    let body = "[family]\nvariant = \"finite_atomic\"\ndim = 1\n[[family.atoms]]\nat = [\"0.5 + 0.5 * xi1\"]\nmass = 1.0\n";
    let cfg = write_config(&dir, "c.toml", body);
    let out = dir.path().join("out");
    let r = run_cmd("distance", &cfg, &out, &["--x", "0", "--y", "1", "--r", "2", "--p", "2"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    // unit atoms at 0.5 and 1.0: move directly, or send both through the origin
    let brute = f64::min(0.5f64.powi(2), 0.5f64.powi(2) + 1.0);
    assert!((distance_of(&r.stdout).powi(2) - brute).abs() < 1e-9, "{}", r.stdout);
}

#[test]
fn distance_is_dominated_by_the_second_moment_of_the_difference() {
    let dir = TempDir::new().unwrap();
    let body = "[family]\nvariant = \"density\"\ndim = 1\nsigma = 1.0\nkernel = \"(1 + 0.5 * sin(xi1)) * norm(z)^(-2)\"\n";
    let cfg = write_config(&dir, "c.toml", body);
    let out = dir.path().join("out");
    for (x, y) in [(0.0, 0.3), (-1.0, 1.2), (0.4, 0.41)] {
        let (xs, ys) = (x.to_string(), y.to_string());
        let r = run_cmd("distance", &cfg, &out, &["--x", &xs, "--y", &ys, "--r", "1"]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        // ∫_{|z|<1} |z|² |Δc| |z|^{-2} dz = 2 |Δc|
        let tv = 2.0 * 0.5 * (f64::sin(x) - f64::sin(y)).abs();
        let w = distance_of(&r.stdout);
        assert!(w * w <= tv * (1.0 + 1e-9) + 1e-12, "{x} {y}: {} > {tv}", w * w);
    }
}

#[test]
fn constant_source_gives_the_constant_solution() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &eikonal("1"));
    let out = dir.path().join("out");
    let r = run_cmd("solve", &cfg, &out, &["--override", "domain.init=\"0.3 * sin(3 * x1)\""]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for (_, u) in solution_rows(&out.join("solution.csv")) {
        assert!((u - 1.0).abs() < 1e-8, "{u}");
    }
    let hist = fs::read_to_string(out.join("residual_history.csv")).unwrap();
    assert_eq!(hist.lines().nth(1), Some("iteration,residual"));
}

#[test]
fn stationary_runs_from_both_envelopes_agree() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &eikonal("1 + 0.5 * cos(x1)"));
    let (lo, hi) = (dir.path().join("lo"), dir.path().join("hi"));
    assert_eq!(run_cmd("solve", &cfg, &lo, &["--override", "domain.init=0.5"]).code, 0);
    assert_eq!(run_cmd("solve", &cfg, &hi, &["--override", "domain.init=1.5"]).code, 0);
    let (a, b) = (solution_rows(&lo.join("solution.csv")), solution_rows(&hi.join("solution.csv")));
    let gap = a.iter().zip(&b).map(|(p, q)| (p.1 - q.1).abs()).fold(0.0, f64::max);
    // a residual below ε leaves each run within ε/λ of the discrete solution
    assert!(gap <= 2.0 * 1e-9, "{gap}");
}

#[test]
fn manufactured_solution_converges_at_first_order() {
    // 𝓘 cos = −π cos for the kernel |z|^{-2}, so u = cos solves the equation with
    // f = (1 + π) cos x + sin² x on a 2π-periodic grid
    let dir = TempDir::new().unwrap();
    let body = format!(
        "{POWER_LAW}[grid]\nr_outer = 1024.0\n[hamiltonian]\nkind = \"eikonal\"\nf = \"(1 + pi) * cos(x1) + sin(x1)^2\"\nm = 2.0\n\
         b_min = 1.0\nf_min = -5.0\n[domain]\nfar_field = {{ rule = \"periodic\" }}\n"
    );
    let cfg = write_config(&dir, "c.toml", &body);
    let mut errors = Vec::new();
    for n in [33usize, 65, 129] {
        let out = dir.path().join(format!("n{n}"));
        let extent = (PI * (n - 1) as f64 / n as f64).to_string();
        let n_arg = format!("domain.n={n}");
        let l_arg = format!("domain.extent={extent}");
        let r = run_cmd("solve", &cfg, &out, &["--override", &n_arg, "--override", &l_arg]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        let err = solution_rows(&out.join("solution.csv")).iter().map(|(x, u)| (u - x.cos()).abs()).fold(0.0, f64::max);
        let h = 2.0 * PI / n as f64;
        assert!(err < 0.5 * h, "n {n}: {err}");
        errors.push(err);
    }
    assert!(errors[0] / errors[1] > 1.6 && errors[1] / errors[2] > 1.6, "{errors:?}");
}

#[test]
fn identical_config_and_seed_give_identical_files() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &eikonal("1 + 0.5 * cos(x1)"));
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        assert_eq!(run_cmd("solve", &cfg, out, &["--seed", "11"]).code, 0);
    }
    assert_eq!(run_cmd("solve", &cfg, &c, &["--seed", "12", "--threads", "1"]).code, 0);
    for f in ["solution.csv", "residual_history.csv", "solve.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (ta, tc) = (fs::read_to_string(a.join("solution.csv")).unwrap(), fs::read_to_string(c.join("solution.csv")).unwrap());
    let first = ta.lines().next().unwrap();
    assert!(first.starts_with("# nlhj ") && first.ends_with("seed=11"), "{first}");
    // the seed enters the hash and the header, not the numbers
    assert_ne!(first, tc.lines().next().unwrap());
    assert_eq!(ta.lines().skip(1).collect::<Vec<_>>(), tc.lines().skip(1).collect::<Vec<_>>());
}

#[test]
fn parabolic_mode_writes_snapshots() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &eikonal("1"));
    let out = dir.path().join("out");
    let r = run_cmd("solve", &cfg, &out, &["--override", "domain.mode=parabolic", "--override", "solver.snapshot_every=50"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let snaps = fs::read_to_string(out.join("snapshots.csv")).unwrap();
    assert_eq!(snaps.lines().nth(1), Some("t,x,u"));
    // u ≡ 0 with H = |p|² − 1 grows like t
    let last_t: f64 = snaps.lines().last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((last_t - 1.0).abs() < 1e-12);
    for (_, u) in solution_rows(&out.join("solution.csv")) {
        assert!((u - 1.0).abs() < 1e-9, "{u}");
    }
    let too_big = run_cmd("solve", &cfg, &out, &["--override", "domain.mode=parabolic", "--override", "solver.dt=10.0"]);
    assert_eq!(too_big.code, 1, "{}", too_big.stderr);
}

#[test]
fn comparison_between_constant_envelopes_holds() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &eikonal("1 + 0.5 * cos(x1)"));
    let out = dir.path().join("out");
    let r = run_cmd("compare", &cfg, &out, &["--sub", "0.5", "--super", "1.5"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rep = &report(&out.join("comparison.json"))["report"];
    assert_eq!(rep["agree"], true);
    assert!(rep["sandwich_excess"].as_f64().unwrap() <= rep["sandwich_tolerance"].as_f64().unwrap());
    assert!(rep["ordering_gap"].as_f64().unwrap() <= -1.0 + 1e-12);
}

#[test]
fn comparison_of_the_exact_solution_with_itself_is_equality() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &eikonal("1"));
    let out = dir.path().join("out");
    let r = run_cmd("compare", &cfg, &out, &["--sub", "1", "--super", "1"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rep = &report(&out.join("comparison.json"))["report"];
    assert_eq!(rep["agreement"], 0.0);
    assert_eq!(rep["ordering_gap"], 0.0);
    assert_eq!(rep["iterations_from_sub"], 0);
}

#[test]
fn swapped_envelopes_fail_certification() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &eikonal("1 + 0.5 * cos(x1)"));
    let out = dir.path().join("out");
    let r = run_cmd("compare", &cfg, &out, &["--sub", "1.5", "--super", "0.5"]);
    assert_eq!(r.code, 1);
    let rep = &report(&out.join("comparison.json"))["report"];
    assert_eq!(rep["ok"], false);
    assert!(rep["error"].as_str().unwrap().contains("certification failed"));
}

#[test]
fn sweep_over_growth_and_order_has_no_ordering_violations() {
    let dir = TempDir::new().unwrap();
    let body = format!(
        "{}[compare]\nsub = \"0.5\"\nsuper = \"1.5\"\n\n[sweep]\ncommand = \"compare\"\n[sweep.axes]\n\"hamiltonian.m\" = [1.5, 2.0, 3.0]\n\"family.sigma\" = [0.5, 1.0, 1.5]\n",
        eikonal("1 + 0.5 * cos(x1)")
    );
    let cfg = write_config(&dir, "c.toml", &body);
    let out = dir.path().join("out");
    let r = run_cmd("sweep", &cfg, &out, &[]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("# nlhj "));
    assert_eq!(lines[1], "cell,family.sigma,hamiltonian.m,exit_code,detail");
    assert_eq!(lines.len(), 2 + 9);
    for (i, l) in lines[2..].iter().enumerate() {
        assert_eq!(l.split(',').nth(3), Some("0"), "{l}");
        let rep = report(&out.join(format!("cell_{i:04}/comparison.json")));
        assert_eq!(rep["report"]["agree"], true);
    }
    // cells carry their own hash
    let h0 = report(&out.join("cell_0000/comparison.json"))["config_sha256"].clone();
    let h1 = report(&out.join("cell_0001/comparison.json"))["config_sha256"].clone();
    assert_ne!(h0, h1);
}
