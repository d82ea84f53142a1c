mod common;

use common::{brute_force_transport, random_pair, reservoir_problem, rng};
use nlhj::measure::DiscretizedMeasure;
use nlhj::transport::{
    check_admissible, explicit_coupling, gigli_bound_check, tv_annulus, tv_second_moment_ball, wasserstein_p_ball,
    wasserstein_p_ball_limited, End,
};
use nlhj::{Error, Point};
use proptest::prelude::*;

#[test]
fn exact_solver_matches_vertex_enumeration() {
    let mut r = rng(11);
    for case in 0..40 {
        let dim = 1 + case % 2;
        let (a, b) = random_pair(&mut r, dim, 4);
        for p in [1.0, 1.5, 2.0] {
            let w = wasserstein_p_ball(&a, &b, 0.9, p).unwrap();
            let (s, d, c) = reservoir_problem(&a, &b, 0.9, p);
            let oracle = brute_force_transport(&s, &d, &c);
            assert!((w.cost - oracle).abs() < 1e-9, "case {case} p {p}: {} vs {oracle}", w.cost);
            assert!(check_admissible(&w.coupling));
            assert!(w.coupling.support_in_ball());
        }
    }
}

#[test]
fn too_many_atoms_is_reported() {
    let atoms: Vec<_> = (1..=5).map(|k| (Point::scalar(k as f64 * 0.1), 1.0)).collect();
    let a = DiscretizedMeasure::from_atoms(1, &atoms).unwrap();
    let e = wasserstein_p_ball_limited(&a, &a, 1.0, 2.0, 3).unwrap_err();
    assert_eq!(e, Error::TooManyAtoms { atoms: 5, limit: 3 });
}

#[test]
fn distance_to_the_zero_measure_grows_with_the_radius() {
    let mut r = rng(5);
    let empty = DiscretizedMeasure::empty(2);
    for _ in 0..20 {
        let (a, _) = random_pair(&mut r, 2, 6);
        let mut last = 0.0;
        for rad in [0.25, 0.5, 0.75, 1.0, 1.5] {
            let w = wasserstein_p_ball(&a, &empty, rad, 2.0).unwrap().cost;
            assert!((w - a.moment2(rad)).abs() < 1e-12);
            assert!(w >= last);
            last = w;
        }
    }
}

#[test]
fn restricted_distance_can_shrink_when_the_ball_grows() {
    // growing the ball brings a nearby partner into play
    let a = DiscretizedMeasure::from_atoms(1, &[(Point::scalar(0.6), 1.0)]).unwrap();
    let b = DiscretizedMeasure::from_atoms(1, &[(Point::scalar(0.5), 1.0)]).unwrap();
    let small: f64 = wasserstein_p_ball(&a, &b, 0.55, 2.0).unwrap().cost;
    let large: f64 = wasserstein_p_ball(&a, &b, 1.0, 2.0).unwrap().cost;
    assert!((small - 0.25).abs() < 1e-12);
    assert!((large - 0.01).abs() < 1e-12);
}

#[test]
fn origin_never_couples_with_itself() {
    let mut r = rng(9);
    for _ in 0..20 {
        let (a, b) = random_pair(&mut r, 2, 8);
        let w = wasserstein_p_ball(&a, &b, 1.5, 1.0).unwrap();
        assert!(w.coupling.transfers.iter().all(|t| !(t.src == End::Origin && t.dst == End::Origin)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn explicit_coupling_cost_is_the_second_moment_of_the_variation(seed in any::<u64>(), dim in 1usize..=3) {
        let (a, b) = random_pair(&mut rng(seed), dim, 12);
        let c = explicit_coupling(&a, &b, 1.2).unwrap();
        prop_assert!(check_admissible(&c));
        let tv2 = tv_second_moment_ball(&a, &b, 1.2).unwrap();
        prop_assert!((c.cost(2.0) - tv2).abs() <= 1e-12 * tv2.max(1.0));
        prop_assert!(gigli_bound_check(&c).unwrap().2);
    }

    #[test]
    fn optimal_cost_is_dominated_and_symmetric(seed in any::<u64>()) {
        let (a, b) = random_pair(&mut rng(seed), 2, 10);
        let w = wasserstein_p_ball(&a, &b, 1.0, 2.0).unwrap();
        let back = wasserstein_p_ball(&b, &a, 1.0, 2.0).unwrap();
        let tv2 = tv_second_moment_ball(&a, &b, 1.0).unwrap();
        prop_assert!(w.cost <= tv2 + 1e-9);
        prop_assert!((w.cost - back.cost).abs() < 1e-8);
        prop_assert!(gigli_bound_check(&w.coupling).unwrap().2);
        prop_assert_eq!(wasserstein_p_ball(&a, &a, 1.0, 2.0).unwrap().cost, 0.0);
        prop_assert_eq!(tv_annulus(&a, &a, 0.01, 1.0).unwrap(), 0.0);
    }
}
