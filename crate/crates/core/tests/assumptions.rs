//! Sampling checks on families and Hamiltonians with known closed forms.

mod common;

use std::sync::Arc;

use nlhj::assumptions::*;
use nlhj::measure::spec::FamilySpec;
use nlhj::{LevyFamily, Point, PolarGrid};

fn grid(dim: usize) -> PolarGrid<f64> {
    PolarGrid::default_for(dim).unwrap()
}

/// `(1 + ½ sin ξ₁)|z|^{-(N+σ)}`: bounded by 1.5|z|^{-(N+σ)}, Lipschitz in ξ with constant ½.
fn modulated(dim: usize, sigma: f64) -> LevyFamily<f64> {
    let n = dim as f64;
    LevyFamily::density(
        dim,
        Arc::new(move |xi: &Point<f64>, z: &Point<f64>| (1.0 + 0.5 * xi.get(0).sin()) * z.norm().powf(-(n + sigma))),
        1.5,
        sigma,
        0.5,
    )
    .unwrap()
}

fn report(r: &AssumptionReport) {
    println!("{}", r.to_table());
}

#[test]
fn uniform_levy_constant_examples() {
    let plan = SamplePlan::default();
    let pl = LevyFamily::<f64>::power_law(1, 1.0, 1.0).unwrap();
    let r = check_m1(&pl, &plan, &grid(1)).unwrap();
    report(&r);
    assert!(r.holds());
    // Λ vol(∂B)(1/(2−σ) + 1/σ) with vol(∂B) = 2 in one dimension
    assert!((r.constant("c_nu").unwrap() - 4.0).abs() < 1e-2);

    let atom = LevyFamily::<f64>::finite_atomic(1, vec![(Point::scalar(0.5), 1.0)]).unwrap();
    let r = check_m1(&atom, &plan, &grid(1)).unwrap();
    assert!(r.holds());
    assert_eq!(r.constant("c_nu").unwrap(), 0.25);

    let vo = FamilySpec::from_toml("variant = \"variable_order\"\ndim = 1\norder = \"1 + 0.5 * sin(xi1)\"\nsigma1 = 0.5\nsigma2 = 1.5\nc_sigma = 0.5\n")
        .unwrap()
        .build::<f64>()
        .unwrap();
    let r = check_m1(&vo, &plan, &grid(1)).unwrap();
    report(&r);
    assert!(r.holds());
    assert!(r.constant("c_nu").unwrap() <= 8.0);
}

#[test]
fn tail_decay_examples() {
    let plan = SamplePlan::default();
    let r = check_m2(&LevyFamily::<f64>::power_law(1, 1.0, 1.0).unwrap(), &plan, &grid(1), &default_tail_radii()).unwrap();
    report(&r);
    assert!(r.holds());
    assert!((r.constant("decay_exponent").unwrap() + 1.0).abs() < 0.05);

    let atom = LevyFamily::<f64>::finite_atomic(1, vec![(Point::scalar(0.5), 1.0), (Point::scalar(-3.0), 2.0)]).unwrap();
    let r = check_m2(&atom, &plan, &grid(1), &default_tail_radii()).unwrap();
    assert!(r.holds());

    let vo = FamilySpec::from_toml("variant = \"variable_order\"\ndim = 1\norder = \"1 + 0.5 * sin(xi1)\"\nsigma1 = 0.5\nsigma2 = 1.5\n")
        .unwrap()
        .build::<f64>()
        .unwrap();
    let r = check_m2(&vo, &plan, &grid(1), &default_tail_radii()).unwrap();
    report(&r);
    let e = r.constant("decay_exponent").unwrap();
    assert!((-1.5 - 0.05..=-0.5 + 0.05).contains(&e), "{e}");
}

#[test]
fn annulus_continuity_examples() {
    let plan = SamplePlan::default();
    let fam = modulated(1, 1.0);
    let r = check_m3(&fam, &plan, &grid(1), 0.1, 10.0).unwrap();
    report(&r);
    assert!(r.holds());
    assert!((r.constant("alpha").unwrap() - 1.0).abs() < 0.1);
    assert!(r.constant("lipschitz_envelope").unwrap() <= r.reference_bound.unwrap() * (1.0 + 1e-6));

    let fixed = LevyFamily::<f64>::power_law(2, 1.0, 1.0).unwrap();
    let r = check_m3(&fixed, &plan, &grid(2), 0.1, 10.0).unwrap();
    assert!(r.holds());
    assert!(r.modulus.as_ref().unwrap().vanishes());
}

#[test]
fn transport_continuity_of_modulated_kernel() {
    let plan = SamplePlan::default();
    let fam = modulated(1, 1.0);
    let r = check_m4(&fam, &plan, &grid(1), &default_r_list()).unwrap();
    report(&r);
    assert!(r.holds());
    assert!(r.constant("alpha").unwrap() >= 0.4);
    assert!(r.constant("domination_ratio_max").unwrap() <= 1.0 + 1e-9);
    assert!(r.constant("c_at_largest_r").unwrap() <= r.reference_bound.unwrap() * 1.05);

    let fixed = LevyFamily::<f64>::power_law(1, 1.0, 1.0).unwrap();
    let r = check_m4(&fixed, &plan, &grid(1), &default_r_list()).unwrap();
    assert!(r.holds());
    assert!(r.notes.iter().any(|n| n.contains("vanishes")));
}

#[test]
fn unified_condition_examples() {
    let plan = SamplePlan::default();
    let fam = modulated(1, 1.0);
    let r = check_m_unified(&fam, &plan, &grid(1), &default_r_list()).unwrap();
    report(&r);
    assert!(r.holds());
    assert!((r.constant("second_moment_exponent").unwrap() - 1.0).abs() < 0.1);
    assert_eq!(r.constant("implied_checks_agree"), Some(1.0));

    let r = check_m4_prime(&fam, &plan, &grid(1), &default_r_list(), 1.0).unwrap();
    report(&r);
    assert!(r.holds());

    let fixed = LevyFamily::<f64>::power_law(1, 1.0, 1.0).unwrap();
    assert!(check_m_unified(&fixed, &plan, &grid(1), &default_r_list()).unwrap().holds());
    assert!(check_m4_prime(&fixed, &plan, &grid(1), &default_r_list(), 1.0).unwrap().holds());
}

#[test]
fn lipschitz_transport_for_order_below_one() {
    let plan = SamplePlan::default();
    let r = check_m4_doubleprime(&modulated(1, 0.5), &plan, &grid(1), 1.0).unwrap();
    report(&r);
    assert!(r.holds());
    assert!((r.constant("alpha").unwrap() - 1.0).abs() < 0.1);

    let r = check_m4_doubleprime(&LevyFamily::<f64>::power_law(1, 0.5, 1.0).unwrap(), &plan, &grid(1), 1.0).unwrap();
    assert!(r.holds());
    assert_eq!(r.constant("c_p"), Some(0.0));
}

#[test]
fn rotated_quadrant_separates_the_conditions() {
    let plan = SamplePlan::default();
    let fam = LevyFamily::<f64>::rotated_quadrant(1.0).unwrap();
    let g = grid(2);
    let m3 = check_m3(&fam, &plan, &g, 0.1, 10.0).unwrap();
    report(&m3);
    assert!((m3.constant("alpha").unwrap() - 0.5).abs() < 0.1);
    let m4 = check_m4(&fam, &plan, &g, &default_r_list()).unwrap();
    report(&m4);
    assert!(m4.holds());
    assert!((m4.constant("alpha").unwrap() - 0.5).abs() < 0.1);
    assert!((m4.constant("r_exponent").unwrap() - 0.5).abs() < 0.1);
    let m = check_m_unified(&fam, &plan, &g, &default_r_list()).unwrap();
    report(&m);
    assert_eq!(m.verdict, Verdict::Fails);
    assert!(m.violation.is_some());
    let m2 = check_m4_doubleprime(&fam, &plan, &g, 2.0).unwrap();
    report(&m2);
    assert_eq!(m2.verdict, Verdict::Fails);
}

fn eikonal(b: fn(&Point<f64>) -> f64, f: fn(&Point<f64>) -> f64, b_min: f64, f_min: f64) -> HamiltonianSpec<f64> {
    HamiltonianSpec::eikonal(1, Arc::new(b), Arc::new(f), 2.0, b_min, f_min).unwrap()
}

#[test]
fn hamiltonian_examples() {
    let plan = SamplePlan::default();
    let ps = default_p_samples::<f64>(1, plan.seed);
    let mus = default_mu_samples(0.5);

    let h = eikonal(|_| 1.0, |_| 1.0, 1.0, 1.0).with_constants(1.0, 0.0, 0.05, 0.5).unwrap();
    let r = check_h(&h, &plan, &ps, &mus).unwrap();
    report(&r);
    assert!(r.holds());
    // residual (1−μ)(|p|²/μ + 1) − (1−μ)|p|² is at least (1−μ)
    assert!(r.constant("h2_min_margin").unwrap() >= 1.0 - 1e-9);

    let h = eikonal(|_| 1.0, |x| 2.0 + x.get(0).sin(), 1.0, 1.0);
    let r = check_h(&h, &plan, &ps, &mus).unwrap();
    let expected = plan.base_point_list::<f64>(1).iter().map(|x| 2.0 + x.get(0).sin()).fold(0.0, f64::max);
    assert!((r.constant("h0").unwrap() - expected).abs() < 1e-12);

    let h = eikonal(|x| 2.0 + x.get(0).sin(), |_| 0.0, 1.0, 0.0);
    let r = check_h(&h, &plan, &ps, &mus).unwrap();
    report(&r);
    assert!(r.holds());
    assert!((r.constant("omega1_alpha").unwrap() - 1.0).abs() < 0.1);
}

#[test]
fn hamiltonian_failures_are_located() {
    let plan = SamplePlan::default();
    let ps = default_p_samples::<f64>(1, plan.seed);
    // jumps across x = 0: no modulus of continuity in x
    let h: HamiltonianFn<f64> = Arc::new(|x, _, p| p.norm2() + if x.get(0) > 0.0 { 1.0 } else { 0.0 });
    let spec = HamiltonianSpec::new(1, h, 2.0, 1.0, 1.0, 0.05, 0.5).unwrap();
    let plan = SamplePlan { spread: 0.05, ..plan };
    let r = check_h(&spec, &plan, &ps, &default_mu_samples(0.5)).unwrap();
    report(&r);
    assert_ne!(r.verdict, Verdict::Holds);
}

#[test]
fn time_dependent_hamiltonian() {
    let plan = SamplePlan::default();
    let h: HamiltonianFn<f64> = Arc::new(|x, t, p| (1.0 + 0.5 * t) * p.norm2() - x.get(0).cos());
    let spec = HamiltonianSpec::new(1, h, 2.0, 1.0, 1.0, 0.05, 0.5).unwrap().with_horizon(1.0).unwrap();
    let r = check_h(&spec, &plan, &default_p_samples(1, 7), &default_mu_samples(0.5)).unwrap();
    report(&r);
    assert_eq!(r.id, "H-t");
    assert!(r.holds());
}

#[test]
fn coercivity_bound_follows_from_growth() {
    let plan = SamplePlan::default();
    let ps = default_p_samples::<f64>(2, 11);
    let h: HamiltonianFn<f64> = Arc::new(|x, _, p| (1.5 + x.get(1).cos()) * p.norm().powf(1.5) - 0.3);
    let spec = HamiltonianSpec::new(2, h.clone(), 1.5, 0.25, 0.3, 0.05, 0.5).unwrap();
    let r = check_h(&spec, &plan, &ps, &default_mu_samples(0.5)).unwrap();
    assert_eq!(r.parts["H2"], Verdict::Holds);
    let c = r.constant("coercivity_c").unwrap();
    for x in plan.base_point_list::<f64>(2) {
        for p in ps.iter().filter(|p| p.norm() >= 0.05) {
            let n = p.norm();
            let v = h(&x, 0.0, p);
            assert!(v >= c * n.powf(1.5) - n / c - 1e-9 * (v.abs() + 1.0));
        }
    }
}

#[test]
fn jump_examples() {
    let plan = SamplePlan::default();
    let g = grid(1);
    let base = LevyFamily::<f64>::power_law(1, 0.5, 1.0).unwrap();
    let id = LevyFamily::levy_ito(base.clone(), Arc::new(|_, z| *z), 1.0, 1.0).unwrap();
    let r = check_j(&id, &plan, &g, &default_r_list()).unwrap();
    report(&r);
    assert!(r.holds());
    assert!(r.constant("drift_max").unwrap() < 1e-12);
    assert!(r.moduli["annulus_tv"].vanishes());

    let scaled = LevyFamily::levy_ito(base, Arc::new(|xi, z| *z * (1.0 + 0.1 * xi.norm().sin())), 0.9, 1.1).unwrap();
    let r = check_j(&scaled, &plan, &g, &default_r_list()).unwrap();
    report(&r);
    assert!(r.holds());
    assert!(r.constant("ratio_min").unwrap() >= 0.9 && r.constant("ratio_max").unwrap() <= 1.1);
    assert!(r.constant("j4_alpha_min").unwrap() >= 0.9);
    // symmetric base and odd jump: the drift cancels
    assert!(r.constant("drift_max").unwrap() < 1e-9);

    let bad = LevyFamily::levy_ito(
        LevyFamily::<f64>::power_law(1, 0.5, 1.0).unwrap(),
        Arc::new(|_, z| *z * 2.0),
        0.9,
        1.1,
    )
    .unwrap();
    let r = check_j(&bad, &plan, &g, &default_r_list()).unwrap();
    assert_eq!(r.parts["J2"], Verdict::Fails);

    assert!(matches!(check_j(&LevyFamily::<f64>::power_law(1, 0.5, 1.0).unwrap(), &plan, &g, &default_r_list()), Err(nlhj::Error::NotLevyIto)));
}
