//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::time::{Duration, Instant};

use pcurve_core::fexpr::parse;
use pcurve_core::grid::{Domain, Field};
use pcurve_core::solver::{
    cap_height, check_subsolution, initial_guess_scaled, solve, solve_radial, solve_with, Problem, SolverConfig,
};
use pcurve_core::symfunc::PSpec;
use pcurve_core::verify::{
    convergence_study, suite_concavity, suite_dinew, suite_ellipticity, suite_gradients, suite_key1, suite_lem4,
    SampleSpec, SphereCap, SuiteResult,
};

const SEED: u64 = 20_240_601;

// Pinned tolerances.
const C1_ERR: f64 = 1e-2;
const C1_ORDER: f64 = 1.5;
const C1_TIME: Duration = Duration::from_secs(300);
const C2_ERR: f64 = 5e-3;
const C2_TIME: Duration = Duration::from_secs(60);
const C3_ORACLE_CAP: f64 = 1e-8;
const C3_RADIAL_TOL: f64 = 1e-10;
const C4_TIME: Duration = Duration::from_secs(60);
const C10_UPPER: f64 = 1e-12;
const C10_LOWER: f64 = 1e-8;
const C11_VARIATION: f64 = 0.10;
const PROBE_AGREEMENT: f64 = 1e-8;

struct Line {
    label: String,
    passed: bool,
    detail: String,
}

fn line(label: impl Into<String>, passed: bool, detail: String) -> Line {
    let l = Line {
        label: label.into(),
        passed,
        detail,
    };
    println!("{} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.label, l.detail);
    l
}

fn failed(label: &str, err: impl std::fmt::Display) -> Line {
    line(label, false, format!("error: {err}"))
}

fn all_pairs() -> Vec<(usize, usize)> {
    (2..=7).flat_map(|n| (1..=n).map(move |p| (n, p))).collect()
}

fn check_named<'a>(r: &'a SuiteResult, name: &str) -> &'a pcurve_core::verify::CheckResult {
    r.checks.iter().find(|c| c.name == name).expect("missing check")
}

fn cap_problem(n: usize, p: usize, big_r: f64, r: f64, h: f64) -> (Problem, SphereCap) {
    let cap = SphereCap::new(n, p, big_r, r).unwrap();
    let prob = Problem::new(PSpec::new(n, p).unwrap(), cap.domain().unwrap(), cap.f_expr(), h).unwrap();
    (prob, cap)
}

/// Criteria 1 and 11 share the refinement run on the n = 3 cap.
fn criteria_1_and_11(cfg: &SolverConfig) -> Vec<Line> {
    let cap = SphereCap::new(3, 2, 2.0, 0.8).unwrap();
    let spec = PSpec::new(3, 2).unwrap();
    let dom = cap.domain().unwrap();
    let hs = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
    let t0 = Instant::now();
    let table = match convergence_study(&spec, &dom, &cap.f_expr(), &|x: &[f64]| cap.height(x), &hs, cfg) {
        Ok(t) => t,
        Err(e) => return vec![failed("criterion 1", &e), failed("criterion 11", e)],
    };
    let elapsed = t0.elapsed();
    let last = &table.rows[2];
    let order = last.order.unwrap();
    let c1 = line(
        "criterion 1",
        last.linf_error <= C1_ERR && order >= C1_ORDER && elapsed <= C1_TIME,
        format!(
            "cap n=3 p=2: err(h=1/32) = {:.3e} (<= {C1_ERR:e}), order(1/16->1/32) = {order:.3} (>= {C1_ORDER}), \
             {:.1}s for h = 1/8, 1/16, 1/32",
            last.linf_error,
            elapsed.as_secs_f64()
        ),
    );
    let iq: Vec<f64> = table.rows.iter().map(|r| r.interior_quantity).collect();
    let hi = iq.iter().cloned().fold(f64::MIN, f64::max);
    let lo = iq.iter().cloned().fold(f64::MAX, f64::min);
    let variation = (hi - lo) / hi;
    let c11 = line(
        "criterion 11",
        variation <= C11_VARIATION,
        format!("sup(-u)^2 max|kappa| = {iq:.6?} over h = 1/8, 1/16, 1/32; relative variation {variation:.4} (<= {C11_VARIATION})"),
    );
    vec![c1, c11]
}

fn criterion_2(cfg: &SolverConfig) -> Line {
    let mut ok = true;
    let mut parts = Vec::new();
    // f = 1/R² for p = 1 and f = 2/R for p = 2, with R = 2.
    for p in [1, 2] {
        let (prob, cap) = cap_problem(2, p, 2.0, 0.8, 1.0 / 64.0);
        let t0 = Instant::now();
        match solve(&prob, cfg) {
            Ok((u, _)) => {
                let elapsed = t0.elapsed();
                let err = u.max_abs_diff(&Field::from_fn(prob.grid(), |x| cap.height(x)));
                ok &= err <= C2_ERR && elapsed <= C2_TIME;
                parts.push(format!(
                    "p={p} f={}: err = {err:.3e} in {:.2}s",
                    cap.f_value(),
                    elapsed.as_secs_f64()
                ));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("p={p}: {e}"));
            }
        }
    }
    line("criterion 2", ok, format!("n=2 caps at h=1/64 (err <= {C2_ERR:e}): {}", parts.join("; ")))
}

fn criterion_3(cfg: &SolverConfig) -> Line {
    let mut cap_dev: f64 = 0.0;
    for (n, p, big_r, r) in [(2, 1, 2.0, 0.8), (2, 2, 1.5, 1.0), (3, 1, 2.0, 0.8), (3, 2, 2.0, 0.8), (3, 3, 1.0, 0.7), (4, 2, 3.0, 1.2), (5, 3, 1.3, 0.9)] {
        let cap = SphereCap::new(n, p, big_r, r).unwrap();
        match solve_radial(n, p, r, &cap.f_expr(), C3_RADIAL_TOL) {
            Ok(prof) => {
                for k in 0..=200 {
                    let rho = r * k as f64 / 200.0;
                    cap_dev = cap_dev.max((prof.eval(rho) - cap_height(big_r, r, &[rho])).abs());
                }
            }
            Err(e) => return failed("criterion 3", e),
        }
    }
    let (n, p, r, h) = (3, 2, 0.7, 1.0 / 32.0);
    let f = parse("1 + r2", n).unwrap();
    let prof = match solve_radial(n, p, r, &f, C3_RADIAL_TOL) {
        Ok(v) => v,
        Err(e) => return failed("criterion 3", e),
    };
    let prob = Problem::new(PSpec::new(n, p).unwrap(), Domain::ball(n, r).unwrap(), f, h).unwrap();
    let (u, _) = match solve(&prob, cfg) {
        Ok(v) => v,
        Err(e) => return failed("criterion 3", e),
    };
    let err = u.max_abs_diff(&Field::from_fn(prob.grid(), |x| prof.eval_at(x)));
    let tol = f64::max(1e-2, 5.0 * h);
    line(
        "criterion 3",
        err <= tol && cap_dev <= C3_ORACLE_CAP,
        format!(
            "f = 1 + r2 on r=0.7, h=1/32: grid vs ODE oracle {err:.3e} (<= {tol}); oracle vs cap family {cap_dev:.3e} (<= {C3_ORACLE_CAP:e})"
        ),
    )
}

fn suite_line<F>(label: &str, what: &str, pairs: &[(usize, usize)], count: usize, check: &[&str], run: F) -> Line
where
    F: Fn(&SampleSpec) -> pcurve_core::Result<SuiteResult>,
{
    let t0 = Instant::now();
    let mut ok = true;
    let mut worst = (f64::INFINITY, String::new(), 0.0);
    for &(n, p) in pairs {
        let ss = SampleSpec::new(n, p, count, SEED);
        let r = match run(&ss) {
            Ok(r) => r,
            Err(e) => return failed(label, format!("n={n} p={p}: {e}")),
        };
        for name in check {
            let c = check_named(&r, name);
            ok &= c.passed;
            let ratio = if c.tolerance > 0.0 { c.worst_slack / c.tolerance } else { c.worst_slack };
            if ratio < worst.0 {
                worst = (ratio, format!("{name} at n={n} p={p}: slack {:.3e}", c.worst_slack), c.tolerance);
            }
        }
    }
    line(
        label,
        ok,
        format!(
            "{what}; {count} samples per (n,p), {} pairs, {:.1}s; tightest {} (tol {:e})",
            pairs.len(),
            t0.elapsed().as_secs_f64(),
            worst.1,
            worst.2
        ),
    )
}

fn criterion_10(cfg: &SolverConfig) -> Line {
    let mut ok = true;
    let mut parts = Vec::new();
    let cases = [
        (3, 2, 0.8, "1", 1.0 / 16.0),
        (2, 1, 0.8, "0.25", 1.0 / 32.0),
        (3, 2, 0.7, "1 + r2", 1.0 / 16.0),
    ];
    for (n, p, r, fsrc, h) in cases {
        let prob = Problem::new(PSpec::new(n, p).unwrap(), Domain::ball(n, r).unwrap(), parse(fsrc, n).unwrap(), h)
            .unwrap();
        // A cap of radius 1 is more curved than the solution in every case.
        let sub = Field::from_fn(prob.grid(), |x| cap_height(1.0, r, x));
        let sub_rep = check_subsolution(&sub, &prob);
        let (u, rep) = match solve_with(&prob, cfg, None, Some(&sub)) {
            Ok(v) => v,
            Err(e) => return failed("criterion 10", e),
        };
        let upper = u.values.iter().cloned().fold(f64::MIN, f64::max);
        let lower = u.values.iter().zip(&sub.values).map(|(a, b)| a - b).fold(f64::MAX, f64::min);
        let pass = sub_rep.passed
            && rep.converged
            && rep.comparison_ok == Some(true)
            && upper <= C10_UPPER
            && lower >= -C10_LOWER
            && rep.adm_margin_min >= cfg.eps_adm;
        ok &= pass;
        parts.push(format!(
            "n={n} p={p} f={fsrc}: max u = {upper:.2e}, min(u - sub) = {lower:.2e}, margin min = {:.3e}",
            rep.adm_margin_min
        ));
    }
    line(
        "criterion 10",
        ok,
        format!(
            "u <= {C10_UPPER:e}, u >= sub - {C10_LOWER:e}, margin >= eps_adm = {:e}: {}",
            cfg.eps_adm,
            parts.join("; ")
        ),
    )
}

fn uniqueness_probe(cfg: &SolverConfig) -> Line {
    let (prob, _) = cap_problem(3, 2, 2.0, 0.8, 1.0 / 16.0);
    let solve_from = |scale: f64| {
        let start = initial_guess_scaled(&prob, scale)?;
        solve_with(&prob, cfg, Some(start), None)
    };
    match (solve_from(0.5), solve_from(3.0)) {
        (Ok((a, _)), Ok((b, _))) => {
            let d = a.max_abs_diff(&b);
            line(
                "uniqueness probe",
                d <= PROBE_AGREEMENT,
                format!("two homotopy starts (scales 0.5, 3.0) differ by {d:.3e} (<= {PROBE_AGREEMENT:e})"),
            )
        }
        (Err(e), _) | (_, Err(e)) => failed("uniqueness probe", e),
    }
}

fn main() {
    let cfg = SolverConfig::default();
    let pairs = all_pairs();
    let mut lines = criteria_1_and_11(&cfg);
    lines.push(criterion_2(&cfg));
    lines.push(criterion_3(&cfg));

    let t0 = Instant::now();
    let mut c4 = suite_line("criterion 4", "Euler relation, rel tol 1e-10", &pairs, 10_000, &["euler_relation"], suite_dinew);
    let elapsed = t0.elapsed();
    if elapsed > C4_TIME {
        c4 = line("criterion 4", false, format!("runtime {:.1}s exceeds {}s", elapsed.as_secs_f64(), C4_TIME.as_secs()));
    }
    lines.push(c4);

    lines.push(suite_line(
        "criterion 5",
        "derivative oracles: grad 1e-6, hess/matrix_jet/Gs 1e-5 relative",
        &pairs,
        1_000,
        &["grad_diag", "hess_diag", "hess_off", "matrix_jet", "gs"],
        suite_gradients,
    ));
    lines.push(suite_line(
        "criterion 6",
        "lem4 identity 1e-10 relative, inequalities slack >= -1e-12",
        &pairs,
        10_000,
        &["identity", "identity_equal_eigenvalues", "inequality_nonnegative_lambda_i", "inequality_negative_lambda_i"],
        suite_lem4,
    ));
    lines.push(suite_line(
        "criterion 7",
        "key1 tail and scaled bounds, slack >= -1e-12",
        &[(2, 1), (3, 2), (4, 2), (4, 3), (5, 3), (6, 3)],
        10_000,
        &["fnn_ge_f_over_tail", "scaled_fnn_ge_lambda1"],
        suite_key1,
    ));
    lines.push(suite_line(
        "criterion 8",
        "midpoint concavity slack >= -1e-12, homogeneity 1e-10",
        &pairs,
        10_000,
        &["midpoint_concavity", "homogeneity"],
        suite_concavity,
    ));
    lines.push(suite_line(
        "criterion 9",
        "ellipticity chain slack >= -1e-10",
        &pairs,
        1_000,
        &["trace_upper", "trace_lower"],
        suite_ellipticity,
    ));
    lines.push(criterion_10(&cfg));
    lines.push(uniqueness_probe(&cfg));

    let failures: Vec<&str> = lines.iter().filter(|l| !l.passed).map(|l| l.label.as_str()).collect();
    if failures.is_empty() {
        println!("acceptance: {} of {} passed", lines.len(), lines.len());
    } else {
        println!("acceptance: failed {}", failures.join(", "));
        std::process::exit(1);
    }
}
