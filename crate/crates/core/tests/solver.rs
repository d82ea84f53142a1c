//! Grid solver: exact constants, certificates, ordering and two-route agreement.

use std::sync::Arc;

use nlhj::assumptions::HamiltonianSpec;
use nlhj::error::Error;
use nlhj::operators::TestFunction;
use nlhj::solver::*;
use nlhj::{LevyFamily, Point, PolarGrid};
use proptest::prelude::*;

fn grid1() -> PolarGrid<f64> {
    PolarGrid::default_for(1).unwrap()
}

fn eikonal(dim: usize, m: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static, f_min: f64) -> HamiltonianSpec<f64> {
    HamiltonianSpec::eikonal(dim, Arc::new(|_: &Point<f64>| 1.0), Arc::new(move |x: &Point<f64>| f(x.get(0))), m, 1.0, f_min).unwrap()
}

/// `(1 + ½ cos x)|p|² + ½ p − cos x`, handled by the Lax-Friedrichs flux.
fn general_h(horizon: Option<f64>) -> HamiltonianSpec<f64> {
    let h = HamiltonianSpec::new(
        1,
        Arc::new(|x: &Point<f64>, t: f64, p: &Point<f64>| (1.0 + 0.5 * x.get(0).cos()) * (1.0 + t) * p.norm2() + 0.5 * p.get(0) - x.get(0).cos()),
        2.0,
        0.5,
        1.0,
        1.0,
        0.5,
    )
    .unwrap();
    match horizon {
        Some(t) => h.with_horizon(t).unwrap(),
        None => h,
    }
}

fn layout(n: usize, c: f64) -> GridFunction<f64> {
    GridFunction::constant(1, n, 4.0, c, FarField::Boundary).unwrap()
}

#[test]
fn constant_residual_for_general_hamiltonian() {
    let fam = LevyFamily::power_law(1, 0.5, 1.0).unwrap();
    let ham = general_h(None);
    let cfg = SolveConfig { lambda: 2.0, ..SolveConfig::default() };
    let u = layout(41, 0.75);
    let r = residual(&u, &fam, &ham, &cfg, &grid1()).unwrap();
    for k in 0..u.len() {
        let x = u.node(k);
        let expect = 2.0 * 0.75 + ham.eval(&x, 0.0, &Point::scalar(0.0));
        assert!((r.values[k] - expect).abs() < 1e-12, "node {k}");
    }
}

#[test]
fn eikonal_constant_solution_has_zero_residual() {
    let fam = LevyFamily::power_law(1, 1.5, 2.0).unwrap();
    let ham = eikonal(1, 2.0, |_| 3.0, 3.0);
    let cfg = SolveConfig { lambda: 1.5, ..SolveConfig::default() };
    let r = residual(&layout(33, 2.0), &fam, &ham, &cfg, &grid1()).unwrap();
    assert!(r.values.iter().all(|v| v.abs() < 1e-13));
}

#[test]
fn coarse_grid_is_rejected() {
    let fam = LevyFamily::power_law(1, 1.0, 1.0).unwrap();
    let ham = eikonal(1, 2.0, |_| 1.0, 1.0);
    let cfg = SolveConfig { delta: Some(0.1), ..SolveConfig::default() };
    assert!(matches!(residual(&layout(9, 0.0), &fam, &ham, &cfg, &grid1()), Err(Error::GridTooCoarse { .. })));
}

#[test]
fn certificates_and_sandwich_for_constant_bounds() {
    let fam = LevyFamily::power_law(1, 1.0, 1.0).unwrap();
    let ham = eikonal(1, 2.0, |x| 1.25 + 0.75 * x.sin(), 0.5);
    let cfg = SolveConfig { tolerance: 1e-10, ..SolveConfig::default() };
    let sub = layout(48, 0.5);
    let sup = layout(48, 2.0);
    let scheme = build_scheme(&fam, &ham, &cfg, &sub, &grid1()).unwrap();
    assert!(certify_subsolution(&scheme, &sub, cfg.tolerance).ok);
    assert!(certify_supersolution(&scheme, &sup, cfg.tolerance).ok);
    assert!(!certify_supersolution(&scheme, &sub, cfg.tolerance).ok);

    let rep = comparison_experiment(&scheme, &cfg, &sub, &sup).unwrap();
    assert!(rep.agree, "{}", rep.to_json());
    assert!(rep.agreement <= 2.0 * cfg.tolerance / cfg.lambda);
    assert!(!rep.clamp_active);

    let out = solve_stationary(&scheme, &cfg, &sub).unwrap();
    assert!(certify_subsolution(&scheme, &out.solution, 10.0 * cfg.tolerance).ok);
    assert!(certify_supersolution(&scheme, &out.solution, 10.0 * cfg.tolerance).ok);

    // swapped bounds cannot be certified
    assert!(matches!(comparison_experiment(&scheme, &cfg, &sup, &sub), Err(Error::CertificationFailed(_))));
}

#[test]
fn equal_bounds_stay_equal() {
    let fam = LevyFamily::power_law(1, 1.0, 1.0).unwrap();
    let ham = eikonal(1, 2.0, |_| 1.0, 1.0);
    let cfg = SolveConfig::default();
    let u = layout(33, 1.0);
    let scheme = build_scheme(&fam, &ham, &cfg, &u, &grid1()).unwrap();
    let rep = comparison_experiment(&scheme, &cfg, &u, &u).unwrap();
    assert_eq!(rep.agreement, 0.0);
    assert_eq!(rep.iterations_from_sub, 0);
    assert_eq!(rep.sandwich_excess, 0.0);
}

#[test]
fn ordering_violation_names_the_node() {
    let fam = LevyFamily::power_law(1, 1.0, 1.0).unwrap();
    let ham = eikonal(1, 2.0, |_| 1.0, 1.0);
    let cfg = SolveConfig::default();
    let lo = layout(33, 0.5);
    let mut hi = layout(33, 2.0);
    // a dip that is still a supersolution where it sits below the lower bound
    hi.values[16] = 0.25;
    let scheme = build_scheme(&fam, &ham, &cfg, &lo, &grid1()).unwrap();
    match comparison_experiment(&scheme, &cfg, &lo, &hi) {
        Err(Error::OrderingViolation { node, .. }) => assert_eq!(node, 16),
        Err(Error::CertificationFailed(_)) => {}
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn comparison_sweep_over_growth_and_order() {
    for m in [1.5, 2.0, 3.0] {
        for sigma in [0.5, 1.0, 1.5] {
            let fam = LevyFamily::power_law(1, sigma, 1.0).unwrap();
            let ham = eikonal(1, m, |x| 1.25 + 0.75 * (2.0 * x).cos(), 0.5);
            let cfg = SolveConfig { tolerance: 1e-9, ..SolveConfig::default() };
            let sub = layout(33, 0.5);
            let sup = layout(33, 2.0);
            let scheme = build_scheme(&fam, &ham, &cfg, &sub, &grid1()).unwrap();
            let rep = comparison_experiment(&scheme, &cfg, &sub, &sup).unwrap_or_else(|e| panic!("m={m} sigma={sigma}: {e}"));
            assert!(rep.agree && !rep.clamp_active, "m={m} sigma={sigma}");
        }
    }
}

#[test]
fn manufactured_residual_is_small() {
    let fam = LevyFamily::power_law(1, 1.0, 1.0).unwrap();
    let w = TestFunction::gaussian(1.0);
    let mut errs = Vec::new();
    for n in [65, 129] {
        let u = GridFunction::from_fn(1, n, 4.0, FarField::Boundary, |x| w.value_at(x)).unwrap();
        let f = manufactured_source(fam.clone(), w.clone(), 1.0, 1.0, 2.0, grid1());
        let ham = HamiltonianSpec::eikonal(1, Arc::new(|_: &Point<f64>| 1.0), f, 2.0, 1.0, -1.0).unwrap();
        let cfg = SolveConfig { quadrature_step: Some(u.spacing()), ..SolveConfig::default() };
        let r = residual(&u, &fam, &ham, &cfg, &grid1()).unwrap();
        errs.push(r.sup_norm());
    }
    assert!(errs[1] < 0.1 && errs[1] < errs[0], "{errs:?}");
}

#[test]
fn parabolic_constants_are_invariant() {
    let fam = LevyFamily::power_law(1, 1.0, 1.0).unwrap();
    let zero = HamiltonianSpec::new(1, Arc::new(|_: &Point<f64>, _: f64, _: &Point<f64>| 0.0), 2.0, 1.0, 0.0, 1.0, 0.5).unwrap();
    let cfg = SolveConfig { horizon: 0.5, gradient_clamp: Some(4.0), snapshot_every: 5, ..SolveConfig::default() };
    let u0 = layout(33, 3.0);
    let scheme = build_scheme(&fam, &zero, &cfg, &u0, &grid1()).unwrap();
    let run = solve_parabolic(&scheme, &cfg, &u0).unwrap();
    assert!(run.snapshots.len() > 2);
    assert!((run.snapshots.last().unwrap().0 - 0.5).abs() < 1e-12);
    for (_, u) in &run.snapshots {
        assert!(u.values.iter().all(|v| (v - 3.0).abs() < 1e-13));
    }
}

#[test]
fn parabolic_rejects_large_steps() {
    let fam = LevyFamily::power_law(1, 1.0, 1.0).unwrap();
    let ham = general_h(Some(1.0));
    let cfg = SolveConfig { dt: Some(0.5), ..SolveConfig::default() };
    let u0 = layout(33, 0.0);
    let scheme = build_scheme(&fam, &ham, &cfg, &u0, &grid1()).unwrap();
    assert!(matches!(solve_parabolic(&scheme, &cfg, &u0), Err(Error::CflViolation { .. })));
}

#[test]
fn parabolic_long_time_limit_matches_stationary_solution() {
    let fam = LevyFamily::power_law(1, 1.0, 1.0).unwrap();
    let ham = eikonal(1, 2.0, |x| 1.25 + 0.75 * x.sin(), 0.5);
    let cfg = SolveConfig { tolerance: 1e-11, horizon: 25.0, discount: 1.0, ..SolveConfig::default() };
    let u0 = layout(33, 0.0);
    let scheme = build_scheme(&fam, &ham, &cfg, &u0, &grid1()).unwrap();
    let stationary = solve_stationary(&scheme, &cfg, &u0).unwrap().solution;
    let run = solve_parabolic(&scheme, &cfg, &u0).unwrap();
    let last = &run.snapshots.last().unwrap().1;
    assert!(last.sup_distance(&stationary).unwrap() < 1e-4);
}

#[test]
fn two_dimensional_constant_solution() {
    let fam = LevyFamily::power_law(2, 1.0, 1.0).unwrap();
    let grid = PolarGrid::default_for(2).unwrap();
    let ham = eikonal(2, 2.0, |_| 1.0, 1.0);
    let cfg = SolveConfig { tolerance: 1e-10, ..SolveConfig::default() };
    let init = GridFunction::constant(2, 13, 2.0, 0.0, FarField::Boundary).unwrap();
    let out = solve(&fam, &ham, &cfg, &grid, &init).unwrap();
    assert!(out.solution.values.iter().all(|v| (v - 1.0).abs() < 1e-9));
}

#[test]
fn rotated_quadrant_operator_stays_monotone() {
    let fam = LevyFamily::rotated_quadrant(1.0).unwrap();
    let grid = PolarGrid::default_for(2).unwrap();
    let ham = eikonal(2, 2.0, |_| 1.0, 1.0);
    let cfg = SolveConfig::default();
    let u = GridFunction::from_fn(2, 11, 2.0, FarField::Boundary, |x: &Point<f64>| (x.get(0) * 1.3).sin() * x.get(1).cos()).unwrap();
    let scheme = build_scheme(&fam, &ham, &cfg, &u, &grid).unwrap();
    let base = scheme.residual(&u, 0.0).values;
    for j in [0, 17, 60, 120] {
        let mut w = u.clone();
        w.values[j] += 0.05;
        let r = scheme.residual(&w, 0.0).values;
        for k in (0..u.len()).filter(|k| *k != j) {
            assert!(r[k] <= base[k] + 1e-12, "node {k} after bumping {j}");
        }
    }
}

#[test]
fn truncation_sensitivity_is_reported() {
    let fam = LevyFamily::power_law(1, 1.0, 1.0).unwrap();
    let ham = eikonal(1, 2.0, |x| 1.25 + 0.75 * x.sin(), 0.5);
    let cfg = SolveConfig { tolerance: 1e-9, ..SolveConfig::default() };
    let s = truncation_sensitivity(&fam, &ham, &cfg, &grid1(), &layout(33, 0.0), 1.0).unwrap();
    assert_eq!(s.doubled_extent, 8.0);
    assert!(s.interior_difference <= s.sup_difference);
    assert!(s.sup_difference < 0.5, "{s:?}");
}

#[test]
fn csv_outputs_are_deterministic() {
    let fam = LevyFamily::power_law(1, 1.0, 1.0).unwrap();
    let ham = eikonal(1, 2.0, |x| 1.25 + 0.75 * x.sin(), 0.5);
    let cfg = SolveConfig { tolerance: 1e-9, ..SolveConfig::default() };
    let run = || {
        let out = solve(&fam, &ham, &cfg, &grid1(), &layout(33, 0.0)).unwrap();
        let mut a = Vec::new();
        out.solution.write_csv(&mut a, Some("hash=abc seed=1")).unwrap();
        out.write_history_csv(&mut a, None).unwrap();
        a
    };
    let first = run();
    assert_eq!(first, run());
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("# hash=abc seed=1\nx,u\n"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn residual_is_nonincreasing_in_neighbors(
        values in proptest::collection::vec(-1.0f64..1.0, 21),
        j in 0usize..21,
        bump in 1e-4f64..0.2,
        sigma in 0.3f64..1.8,
    ) {
        let fam = LevyFamily::power_law(1, sigma, 1.0).unwrap();
        let ham = general_h(None);
        let cfg = SolveConfig { gradient_clamp: Some(50.0), ..SolveConfig::default() };
        let u = GridFunction::constant(1, 21, 2.0, 0.0, FarField::Boundary).unwrap().with_values(values).unwrap();
        let scheme = build_scheme(&fam, &ham, &cfg, &u, &grid1()).unwrap();
        let base = scheme.residual(&u, 0.0).values;
        let mut w = u.clone();
        w.values[j] += bump;
        let r = scheme.residual(&w, 0.0).values;
        for k in (0..21).filter(|k| *k != j) {
            prop_assert!(r[k] <= base[k] + 1e-12);
        }
    }

    #[test]
    fn parabolic_steps_preserve_order(
        u0 in proptest::collection::vec(-1.0f64..1.0, 17),
        gap in proptest::collection::vec(0.0f64..0.5, 17),
    ) {
        let fam = LevyFamily::power_law(1, 1.0, 1.0).unwrap();
        let ham = general_h(Some(0.25));
        let cfg = SolveConfig { horizon: 0.25, snapshot_every: 1, ..SolveConfig::default() };
        let lay = GridFunction::constant(1, 17, 2.0, 0.0, FarField::Boundary).unwrap();
        let u = lay.with_values(u0.clone()).unwrap();
        let v = lay.with_values(u0.iter().zip(&gap).map(|(a, g)| a + g).collect()).unwrap();
        let scheme = build_scheme(&fam, &ham, &SolveConfig { gradient_clamp: Some(20.0), ..cfg.clone() }, &lay, &grid1()).unwrap();
        let a = solve_parabolic(&scheme, &cfg, &u).unwrap();
        let b = solve_parabolic(&scheme, &cfg, &v).unwrap();
        for ((_, x), (_, y)) in a.snapshots.iter().zip(&b.snapshots) {
            for k in 0..x.len() {
                prop_assert!(x.values[k] <= y.values[k] + 1e-12);
            }
        }
    }
}
