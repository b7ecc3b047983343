use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use pcurve_core::fexpr::{parse, Var};
use pcurve_core::solver::{check_subsolution, solve_radial, solve_with, SolveReport, SubsolutionReport};
use pcurve_core::symfunc::{binomial, eval_f, eval_ft, grad_diag, PSpec, Spectrum};
use pcurve_core::verify::{
    convergence_study, suite_concavity, suite_dinew, suite_ellipticity, suite_gradients, suite_growth, suite_key1,
    suite_lem4, suite_oracle, SampleSpec, SphereCap, SuiteResult, SUITE_NAMES,
};

use crate::config::Config;

/// Exit status of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    SuiteFailed,
}

/// Tolerance of the radial oracle used by `converge`.
const ORACLE_TOL: f64 = 1e-10;

#[derive(Serialize)]
struct ReportFile<'a> {
    #[serde(flatten)]
    report: &'a SolveReport,
    subsolution: Option<&'a SubsolutionReport>,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn solve(config: &Path, out: &Path) -> Result<Status> {
    let cfg = Config::load(config)?;
    let prob = cfg.problem(cfg.grid.h)?;
    let sub = cfg.subsolution_field(&prob)?;
    let sub_report = match &sub {
        Some(ub) => {
            let rep = check_subsolution(ub, &prob);
            if !rep.passed {
                bail!(
                    "subsolution check failed: worst margin {:e}, {} inadmissible nodes",
                    rep.worst_margin,
                    rep.inadmissible_nodes
                );
            }
            Some(rep)
        }
        None => None,
    };
    let (u, report) = solve_with(&prob, &cfg.solver, None, sub.as_ref())?;
    write_file(&out.join(&cfg.output.solution_csv), &u.to_csv(prob.grid()))?;
    let json = serde_json::to_string_pretty(&ReportFile {
        report: &report,
        subsolution: sub_report.as_ref(),
    })?;
    write_file(&out.join(&cfg.output.report_json), &(json + "\n"))?;
    println!(
        "converged={} residual={:e} margin={:e} newton={} nodes={}",
        report.converged, report.residual_sup, report.adm_margin_min, report.newton_iterations_total, report.nodes
    );
    Ok(Status::Ok)
}

pub struct VerifyArgs {
    pub suite: String,
    pub n: usize,
    pub p: usize,
    pub count: usize,
    pub seed: u64,
    pub near_boundary_fraction: f64,
    pub c_values: Vec<f64>,
    pub out: Option<PathBuf>,
}

fn run_suite(name: &str, ss: &SampleSpec, c_values: &[f64]) -> Result<SuiteResult> {
    let r = match name {
        "dinew" => suite_dinew(ss),
        "key1" => suite_key1(ss),
        "lem4" => suite_lem4(ss),
        "growth" => suite_growth(ss, c_values),
        "gradients" => suite_gradients(ss),
        "concavity" => suite_concavity(ss),
        "ellipticity" => suite_ellipticity(ss),
        "oracle" => suite_oracle(ss),
        other => bail!("unknown suite `{other}`; expected one of {} or all", SUITE_NAMES.join(", ")),
    };
    Ok(r?)
}

pub fn verify(args: &VerifyArgs) -> Result<Status> {
    let ss = SampleSpec {
        near_boundary_fraction: args.near_boundary_fraction,
        ..SampleSpec::new(args.n, args.p, args.count, args.seed)
    };
    ss.pspec()?;
    let json = if args.suite == "all" {
        let mut results = Vec::new();
        for name in SUITE_NAMES {
            if name == "key1" && 2 * args.p < args.n {
                eprintln!("skipping key1: requires p >= n/2");
                continue;
            }
            results.push(run_suite(name, &ss, &args.c_values)?);
        }
        report_suites(&results);
        let ok = results.iter().all(|r| r.passed);
        (serde_json::to_string_pretty(&results)?, ok)
    } else {
        let r = run_suite(&args.suite, &ss, &args.c_values)?;
        report_suites(std::slice::from_ref(&r));
        let ok = r.passed;
        (serde_json::to_string_pretty(&r)?, ok)
    };
    match &args.out {
        Some(path) => write_file(path, &(json.0 + "\n"))?,
        None => println!("{}", json.0),
    }
    Ok(if json.1 { Status::Ok } else { Status::SuiteFailed })
}

fn report_suites(results: &[SuiteResult]) {
    for r in results {
        eprintln!(
            "{} n={} p={}: {} (worst {} slack {:e}, tol {:e})",
            r.suite,
            r.n,
            r.p,
            if r.passed { "PASS" } else { "FAIL" },
            r.worst_check,
            r.worst_slack,
            r.tolerance
        );
    }
}

pub struct RadialArgs {
    pub n: usize,
    pub p: usize,
    pub r: f64,
    pub f: String,
    pub tol: f64,
    pub points: usize,
    pub out: Option<PathBuf>,
}

pub fn radial(args: &RadialArgs) -> Result<Status> {
    if args.points < 2 {
        bail!("need at least two output points");
    }
    let f = parse(&args.f, args.n).context("parsing f")?;
    let prof = solve_radial(args.n, args.p, args.r, &f, args.tol)?;
    println!("u(0)={}", prof.center_value());
    if let Some(path) = &args.out {
        let mut csv = String::from("rho,u\n");
        for k in 0..args.points {
            let rho = args.r * k as f64 / (args.points - 1) as f64;
            writeln!(csv, "{rho},{}", prof.eval(rho))?;
        }
        write_file(path, &csv)?;
    }
    Ok(Status::Ok)
}

pub fn converge(config: &Path, hs: &[f64], out: Option<&Path>) -> Result<Status> {
    if hs.is_empty() {
        bail!("empty h list");
    }
    let cfg = Config::load(config)?;
    let spec = cfg.spec()?;
    let dom = cfg.domain()?;
    let f = parse(&cfg.f, cfg.n).context("parsing f")?;
    let r = cfg
        .ball_radius()
        .ok_or_else(|| anyhow!("converge needs a ball domain for its reference solution"))?;
    let table = if let Some(fc) = f.as_constant() {
        let m = binomial(cfg.n, cfg.p) as f64;
        let cap = SphereCap::new(cfg.n, cfg.p, cfg.p as f64 / fc.powf(1.0 / m), r)?;
        convergence_study(&spec, &dom, &f, &|x: &[f64]| cap.height(x), hs, &cfg.solver)?
    } else if f.vars().iter().all(|v| matches!(v, Var::R2 | Var::Z | Var::W)) {
        let prof = solve_radial(cfg.n, cfg.p, r, &f, ORACLE_TOL)?;
        convergence_study(&spec, &dom, &f, &|x: &[f64]| prof.eval_at(x), hs, &cfg.solver)?
    } else {
        bail!("converge needs a constant or radial f (depending on r2, z, w only)");
    };
    let csv = table.to_csv();
    match out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(Status::Ok)
}

pub fn eval(lambda: &[f64], n: Option<usize>, p: usize) -> Result<Status> {
    if let Some(n) = n {
        if n != lambda.len() {
            bail!("--n {n} does not match {} lambda entries", lambda.len());
        }
    }
    let spec = PSpec::new(lambda.len(), p)?;
    let lam = Spectrum::new(lambda.to_vec())?;
    let grad = grad_diag(&lam, &spec)?;
    println!("F={}", eval_f(&lam, &spec)?);
    println!("Ftilde={}", eval_ft(&lam, &spec)?);
    let g: Vec<String> = grad.iter().map(|v| v.to_string()).collect();
    println!("grad={}", g.join(","));
    Ok(Status::Ok)
}
