use pcurve_core::fexpr::parse;
use pcurve_core::grid::Field;
use pcurve_core::solver::{check_subsolution, comparison_holds, solve, solve_radial, Problem, SolverConfig};
use pcurve_core::symfunc::PSpec;
use pcurve_core::verify::{suite_dinew, SampleSpec, SphereCap};

fn cap_height(big_r: f64, x: &[f64]) -> f64 {
    let rho2: f64 = x.iter().map(|v| v * v).sum();
    (big_r * big_r - rho2).sqrt() - (big_r * big_r - 1.0).sqrt()
}

#[test]
fn solves_cap_on_unit_disc() {
    let cap = SphereCap::new(2, 1, 2.0, 1.0).unwrap();
    let prob = Problem::new(PSpec::new(2, 1).unwrap(), cap.domain().unwrap(), cap.f_expr(), 1.0 / 16.0).unwrap();
    let (u, report) = solve(&prob, &SolverConfig::default()).unwrap();
    assert!(report.converged);
    let exact = Field::from_fn(prob.grid(), |x| -cap_height(2.0, x));
    assert!(u.max_abs_diff(&exact) < 1e-2);
}

#[test]
fn steeper_cap_is_a_subsolution_below_the_solution() {
    let cap = SphereCap::new(3, 2, 2.0, 0.8).unwrap();
    let prob = Problem::new(PSpec::new(3, 2).unwrap(), cap.domain().unwrap(), cap.f_expr(), 1.0 / 8.0).unwrap();
    // A steeper cap has larger curvature, so it lies below the solution.
    let sub = Field::from_fn(prob.grid(), |x| {
        let rho2: f64 = x.iter().map(|v| v * v).sum();
        -((1.0 - rho2).sqrt() - (1.0f64 - 0.64).sqrt())
    });
    let rep = check_subsolution(&sub, &prob);
    assert!(rep.passed, "{rep:?}");
    let (u, _) = solve(&prob, &SolverConfig::default()).unwrap();
    assert!(comparison_holds(&u, &sub));
}

#[test]
fn radial_profile_matches_cap_centre() {
    let f = parse("0.25", 2).unwrap();
    let prof = solve_radial(2, 1, 1.0, &f, 1e-10).unwrap();
    let expected = -(2.0 - 3f64.sqrt());
    assert!((prof.center_value() - expected).abs() < 1e-8);
    assert!(prof.boundary_value().abs() < 1e-10);
}

#[test]
fn suites_are_deterministic_in_the_seed() {
    let ss = SampleSpec::new(4, 2, 500, 11);
    let a = suite_dinew(&ss).unwrap();
    let b = suite_dinew(&ss).unwrap();
    assert_eq!(a.worst_slack.to_bits(), b.worst_slack.to_bits());
    assert!(a.passed);
}
