//! Damped Newton with a right-hand-side homotopy for the discrete Dirichlet
//! problem `G(D²u, Du) = f̃(x, u, ν)` in Ω, `u = 0` on ∂Ω, where
//! `G = F̃(κ)` and `f̃ = f^{1/m}`.

mod radial;

pub use radial::{solve_radial, RadialProfile};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fexpr::{check_hypotheses, sample_envs, Env, Expr, Partials};
use crate::geometry::{graph_jet, pde_coeffs, GraphPoint};
use crate::grid::{build_grid, fd_gradient, fd_hessian, Domain, Field, Grid};
use crate::sparse::{gmres, CsrMatrix, GmresOptions, Ilu0};
use crate::symfunc::{eval_f, eval_ft, min_p_sum, PSpec};

const HYPOTHESIS_SAMPLES: usize = 2000;
const HYPOTHESIS_SEED: u64 = 0x5eed;
/// Slack allowed in `F(κ[u̲]) ≥ f` when checking a subsolution.
pub const SUBSOLUTION_TOLERANCE: f64 = 1e-10;

/// A discrete Dirichlet problem: operator, domain, right-hand side, grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: PSpec,
    pub dom: Domain,
    pub f: Expr,
    pub h: f64,
    grid: Grid,
    partials: Partials,
}

impl Problem {
    /// Builds the grid and checks `f > 0`, `f_z ≥ 0` on sampled points of
    /// `Ω × [−diam, 0] × S⁺`.
    pub fn new(spec: PSpec, dom: Domain, f: Expr, h: f64) -> Result<Self> {
        if dom.dim() != spec.n() || f.dim() != spec.n() {
            return Err(Error::InvalidArgument(format!(
                "dimension mismatch: operator n = {}, domain n = {}, f parsed for n = {}",
                spec.n(),
                dom.dim(),
                f.dim()
            )));
        }
        let grid = build_grid(&dom, h)?;
        let diam = 2.0 * dom.half_extent().iter().cloned().fold(0.0, f64::max);
        let envs = sample_envs(&grid.coords(), -diam, HYPOTHESIS_SAMPLES, HYPOTHESIS_SEED);
        let report = check_hypotheses(&f, &envs);
        if !report.passed {
            return Err(Error::HypothesisViolated(report.violation.unwrap_or_default()));
        }
        let partials = f.partials();
        Ok(Self {
            spec,
            dom,
            f,
            h,
            grid,
            partials,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn point(&self, u: &Field, node: usize) -> Result<GraphPoint> {
        GraphPoint::new(fd_gradient(u, &self.grid, node), fd_hessian(u, &self.grid, node))
    }

    /// `f̃ = f^{1/m}` and, when asked, its `z` and `ν` partials.
    fn f_tilde(&self, env: &Env, with_partials: bool) -> Result<(f64, f64, Vec<f64>)> {
        let fv = self.f.eval(env)?;
        if !(fv > 0.0) {
            return Err(Error::HypothesisViolated(format!(
                "f = {fv} is not positive at x = {:?}, z = {}",
                env.x, env.z
            )));
        }
        let m = self.spec.m() as f64;
        let ft = fv.powf(1.0 / m);
        if !with_partials {
            return Ok((ft, 0.0, Vec::new()));
        }
        let chain = ft / (m * fv);
        let fz = chain * self.partials.dz.eval(env)?;
        let fnu = self
            .partials
            .dnu
            .iter()
            .map(|d| Ok(chain * d.eval(env)?))
            .collect::<Result<Vec<_>>>()?;
        Ok((ft, fz, fnu))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol_residual: f64,
    pub eps_adm: f64,
    pub max_newton: usize,
    pub homotopy_steps: usize,
    pub max_step_halvings: usize,
    pub armijo: f64,
    pub linear_tol: f64,
    pub beta_diag: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_residual: 1e-9,
            eps_adm: 1e-8,
            max_newton: 50,
            homotopy_steps: 8,
            max_step_halvings: 10,
            armijo: 1e-4,
            linear_tol: 1e-10,
            beta_diag: 2.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("tol_residual", self.tol_residual),
            ("eps_adm", self.eps_adm),
            ("armijo", self.armijo),
            ("linear_tol", self.linear_tol),
            ("beta_diag", self.beta_diag),
        ];
        for (name, v) in reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.armijo >= 1.0 {
            return Err(Error::InvalidArgument("armijo must be below 1".into()));
        }
        for (name, v) in [
            ("max_newton", self.max_newton),
            ("homotopy_steps", self.homotopy_steps),
            ("max_step_halvings", self.max_step_halvings),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub newton_iterations_total: usize,
    pub residual_sup: f64,
    /// Smallest admissibility margin over all nodes of all accepted iterates.
    pub adm_margin_min: f64,
    pub sup_grad: f64,
    pub sup_kappa: f64,
    /// `sup (−u)^β · max_i |κ_i|` over nodes.
    pub interior_quantity: f64,
    pub beta_diag: f64,
    /// Norm of the second fundamental form used by `interior_quantity`.
    pub curvature_norm: &'static str,
    /// `u̲ ≤ u ≤ 0` at every node; `None` when no subsolution was given.
    pub comparison_ok: Option<bool>,
    pub homotopy_trace: Vec<(f64, f64)>,
    pub nodes: usize,
}

/// Right-hand side `f̃_t = (1 − t)·g₀ + t·f̃` along the homotopy.
#[derive(Debug, Clone)]
pub struct HomotopyRhs {
    g0: Vec<f64>,
    t: f64,
}

impl HomotopyRhs {
    pub fn t(&self) -> f64 {
        self.t
    }

    /// The target problem (`t = 1`), without a start field.
    pub fn target(prob: &Problem) -> Self {
        Self {
            g0: vec![0.0; prob.grid.len()],
            t: 1.0,
        }
    }

    fn eval(&self, prob: &Problem, node: usize, env: &Env, with_partials: bool) -> Result<(f64, f64, Vec<f64>)> {
        let g0 = (1.0 - self.t) * self.g0[node];
        if self.t == 0.0 {
            return Ok((g0, 0.0, vec![0.0; prob.spec.n() + 1]));
        }
        let (ft, fz, fnu) = prob.f_tilde(env, with_partials)?;
        Ok((g0 + self.t * ft, self.t * fz, fnu.into_iter().map(|v| self.t * v).collect()))
    }
}

pub fn homotopy_rhs(prob: &Problem, u0: &Field, t: f64) -> Result<HomotopyRhs> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("homotopy parameter {t} outside [0, 1]")));
    }
    let g0 = (0..prob.grid.len())
        .into_par_iter()
        .map(|k| {
            let pt = prob.point(u0, k)?;
            let jet = graph_jet(&pt)?;
            let margin = min_p_sum(&jet.kappa, &prob.spec);
            if margin <= 0.0 {
                return Err(Error::NotAdmissible { node: k, margin });
            }
            eval_ft(&jet.kappa, &prob.spec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HomotopyRhs { g0, t })
}

/// `ε·φ̂` with `φ̂ = φ/|min φ|` and `ε = scale·0.1·inradius`.
pub fn initial_guess_scaled(prob: &Problem, scale: f64) -> Result<Field> {
    let coords = prob.grid.coords();
    let phi_min = prob.dom.phi_min(&coords);
    if !(phi_min < 0.0) {
        return Err(Error::Domain("defining function has no negative values on the grid".into()));
    }
    let eps = scale * 0.1 * prob.dom.inradius();
    let u = Field::from_fn(&prob.grid, |x| eps * prob.dom.phi(x) / phi_min.abs());
    for k in 0..prob.grid.len() {
        let jet = graph_jet(&prob.point(&u, k)?)?;
        let margin = min_p_sum(&jet.kappa, &prob.spec);
        if margin <= 0.0 {
            return Err(Error::NotAdmissible { node: k, margin });
        }
    }
    Ok(u)
}

pub fn initial_guess(prob: &Problem) -> Result<Field> {
    initial_guess_scaled(prob, 1.0)
}

struct Evaluation {
    residual: Vec<f64>,
    sup: f64,
    margin: f64,
    margin_node: usize,
}

fn evaluate(prob: &Problem, u: &Field, rhs: &HomotopyRhs) -> Result<Evaluation> {
    let per_node = (0..prob.grid.len())
        .into_par_iter()
        .map(|k| {
            let pt = prob.point(u, k)?;
            let jet = graph_jet(&pt)?;
            let margin = min_p_sum(&jet.kappa, &prob.spec);
            if margin <= 0.0 {
                return Ok((f64::NAN, margin));
            }
            let g = eval_ft(&jet.kappa, &prob.spec)?;
            let env = Env::at_graph_point(&prob.grid.nodes()[k].x, u.values[k], pt.grad.as_slice());
            let (rv, _, _) = rhs.eval(prob, k, &env, false)?;
            Ok((g - rv, margin))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut margin, mut margin_node) = (f64::INFINITY, 0);
    for (k, (_, m)) in per_node.iter().enumerate() {
        if *m < margin {
            margin = *m;
            margin_node = k;
        }
    }
    let residual: Vec<f64> = per_node.into_iter().map(|(r, _)| r).collect();
    let sup = residual.iter().fold(0.0f64, |acc, r| if r.is_nan() { f64::NAN } else { acc.max(r.abs()) });
    Ok(Evaluation {
        residual,
        sup,
        margin,
        margin_node,
    })
}

fn jacobian(prob: &Problem, u: &Field, rhs: &HomotopyRhs) -> Result<CsrMatrix> {
    let n = prob.spec.n();
    let grid = &prob.grid;
    let rows = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let pt = prob.point(u, k)?;
            let c = pde_coeffs(&pt, &prob.spec).map_err(|e| match e {
                Error::NotAdmissible { margin, .. } => Error::NotAdmissible { node: k, margin },
                other => other,
            })?;
            let env = Env::at_graph_point(&grid.nodes()[k].x, u.values[k], pt.grad.as_slice());
            let (_, fz, fnu) = rhs.eval(prob, k, &env, true)?;
            let mut row = Vec::new();
            for i in 0..n {
                for j in i..n {
                    let coef = if i == j { c.gij[(i, j)] } else { 2.0 * c.gij[(i, j)] };
                    row.extend(grid.hess_stencil(k, i, j).entries.iter().map(|&(col, v)| (col, coef * v)));
                }
            }
            for s in 0..n {
                let nu_term: f64 = (0..=n).map(|j| fnu[j] * c.d_nu[(j, s)]).sum();
                let coef = c.gs[s] - nu_term;
                row.extend(grid.grad_stencil(k, s).entries.iter().map(|&(col, v)| (col, coef * v)));
            }
            row.push((k, -fz));
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CsrMatrix::from_rows(rows, grid.len()))
}

/// Outcome of a converged Newton solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStats {
    pub iterations: usize,
    pub residual_sup: f64,
    /// Smallest admissibility margin over all accepted iterates.
    pub margin_min: f64,
    pub linear_iterations: usize,
}

/// Damped Newton on `G(u) = rhs`, updating `u` in place on success.
pub fn newton_solve(prob: &Problem, u: &mut Field, rhs: &HomotopyRhs, cfg: &SolverConfig) -> Result<NewtonStats> {
    let mut ev = evaluate(prob, u, rhs)?;
    if !(ev.margin >= cfg.eps_adm) {
        return Err(Error::NotAdmissible {
            node: ev.margin_node,
            margin: ev.margin,
        });
    }
    let mut stats = NewtonStats {
        iterations: 0,
        residual_sup: ev.sup,
        margin_min: ev.margin,
        linear_iterations: 0,
    };
    let gmres_opts = GmresOptions {
        tol: cfg.linear_tol,
        ..GmresOptions::default()
    };
    let mut trial = u.clone();
    while ev.sup > cfg.tol_residual {
        if stats.iterations == cfg.max_newton {
            return Err(Error::MaxNewton {
                limit: cfg.max_newton,
                residual: ev.sup,
            });
        }
        let jac = jacobian(prob, u, rhs)?;
        let ilu = Ilu0::new(&jac)?;
        let b: Vec<f64> = ev.residual.iter().map(|r| -r).collect();
        let mut delta = vec![0.0; b.len()];
        let lin = gmres(&jac, &b, &mut delta, &ilu, gmres_opts)?;
        stats.linear_iterations += lin.iterations;

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_step_halvings {
            trial
                .values
                .par_iter_mut()
                .zip(&u.values)
                .zip(&delta)
                .for_each(|((t, v), d)| *t = v + alpha * d);
            if let Ok(next) = evaluate(prob, &trial, rhs) {
                if next.margin >= cfg.eps_adm && next.sup <= (1.0 - cfg.armijo * alpha) * ev.sup {
                    accepted = Some(next);
                    break;
                }
            }
            alpha *= 0.5;
        }
        stats.iterations += 1;
        match accepted {
            Some(next) => {
                std::mem::swap(u, &mut trial);
                ev = next;
                stats.margin_min = stats.margin_min.min(ev.margin);
                stats.residual_sup = ev.sup;
            }
            None => {
                return Err(Error::LineSearch {
                    iteration: stats.iterations,
                    residual: ev.sup,
                })
            }
        }
    }
    Ok(stats)
}

fn recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::LineSearch { .. }
            | Error::MaxNewton { .. }
            | Error::LinearSolve { .. }
            | Error::NotAdmissible { .. }
            | Error::Eval(_)
            | Error::HypothesisViolated(_)
            | Error::EigenFailure { .. }
    )
}

pub fn solve(prob: &Problem, cfg: &SolverConfig) -> Result<(Field, SolveReport)> {
    solve_with(prob, cfg, None, None)
}

/// Homotopy `t: 0 → 1` from `start` (default [`initial_guess`]), halving the
/// t-step on failure and declaring a stall after `max_step_halvings`
/// consecutive failures.
pub fn solve_with(
    prob: &Problem,
    cfg: &SolverConfig,
    start: Option<Field>,
    subsolution: Option<&Field>,
) -> Result<(Field, SolveReport)> {
    cfg.validate()?;
    let mut u = match start {
        Some(s) => s,
        None => initial_guess(prob)?,
    };
    let mut rhs = homotopy_rhs(prob, &u, 0.0)?;
    let dt0 = 1.0 / cfg.homotopy_steps as f64;
    let (mut t, mut dt) = (0.0f64, dt0);
    let mut failures = 0;
    let mut total_newton = 0;
    let mut margin_min = f64::INFINITY;
    let mut trace = vec![(0.0, 0.0)];
    let mut residual = 0.0;
    while t < 1.0 {
        let t_next = if 1.0 - t <= dt * (1.0 + 1e-12) { 1.0 } else { t + dt };
        rhs.t = t_next;
        let mut trial = u.clone();
        match newton_solve(prob, &mut trial, &rhs, cfg) {
            Ok(stats) => {
                u = trial;
                t = t_next;
                total_newton += stats.iterations;
                margin_min = margin_min.min(stats.margin_min);
                residual = stats.residual_sup;
                trace.push((t, residual));
                failures = 0;
                dt = (2.0 * dt).min(dt0);
            }
            Err(e) if recoverable(&e) => {
                failures += 1;
                if failures > cfg.max_step_halvings {
                    return Err(Error::Stall {
                        last_t: t,
                        halvings: cfg.max_step_halvings,
                    });
                }
                dt *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    let report = diagnostics(prob, &u, cfg, subsolution, total_newton, residual, margin_min, trace)?;
    Ok((u, report))
}

#[allow(clippy::too_many_arguments)]
fn diagnostics(
    prob: &Problem,
    u: &Field,
    cfg: &SolverConfig,
    subsolution: Option<&Field>,
    newton_iterations_total: usize,
    residual_sup: f64,
    adm_margin_min: f64,
    homotopy_trace: Vec<(f64, f64)>,
) -> Result<SolveReport> {
    let per_node = (0..prob.grid.len())
        .into_par_iter()
        .map(|k| {
            let pt = prob.point(u, k)?;
            let jet = graph_jet(&pt)?;
            Ok((pt.grad.norm(), jet.kappa.sup_norm()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sup_grad: f64 = 0.0;
    let mut sup_kappa: f64 = 0.0;
    let mut interior_quantity: f64 = 0.0;
    for (k, (g, kap)) in per_node.into_iter().enumerate() {
        sup_grad = sup_grad.max(g);
        sup_kappa = sup_kappa.max(kap);
        interior_quantity = interior_quantity.max((-u.values[k]).max(0.0).powf(cfg.beta_diag) * kap);
    }
    let comparison_ok = subsolution.map(|ub| comparison_holds(u, ub));
    Ok(SolveReport {
        converged: residual_sup <= cfg.tol_residual && adm_margin_min >= cfg.eps_adm,
        newton_iterations_total,
        residual_sup,
        adm_margin_min,
        sup_grad,
        sup_kappa,
        interior_quantity,
        beta_diag: cfg.beta_diag,
        curvature_norm: "max_abs_principal_curvature",
        comparison_ok,
        homotopy_trace,
        nodes: prob.grid.len(),
    })
}

/// `u ≥ u̲ − 1e−8` and `u ≤ 1e−12` at every node.
pub fn comparison_holds(u: &Field, sub: &Field) -> bool {
    u.values
        .iter()
        .zip(&sub.values)
        .all(|(a, b)| *a <= 1e-12 && a - b >= -1e-8)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsolutionReport {
    pub passed: bool,
    /// Smallest `F(κ[u̲]) − f(x, u̲, ν[u̲])` over admissible nodes.
    pub worst_margin: f64,
    pub worst_node: Option<usize>,
    pub inadmissible_nodes: usize,
}

/// Checks `u̲` admissible with `F(κ[u̲]) ≥ f(x, u̲, ν[u̲]) − 1e−10` at every node.
pub fn check_subsolution(ub: &Field, prob: &Problem) -> SubsolutionReport {
    let per_node: Vec<Option<f64>> = (0..prob.grid.len())
        .into_par_iter()
        .map(|k| {
            let pt = prob.point(ub, k).ok()?;
            let jet = graph_jet(&pt).ok()?;
            if min_p_sum(&jet.kappa, &prob.spec) <= 0.0 {
                return None;
            }
            let fk = eval_f(&jet.kappa, &prob.spec).ok()?;
            let env = Env::at_graph_point(&prob.grid.nodes()[k].x, ub.values[k], pt.grad.as_slice());
            let fv = prob.f.eval(&env).ok()?;
            Some(fk - fv)
        })
        .collect();
    let mut worst_margin = f64::INFINITY;
    let mut worst_node = None;
    let mut inadmissible_nodes = 0;
    for (k, m) in per_node.into_iter().enumerate() {
        match m {
            Some(m) if m < worst_margin => {
                worst_margin = m;
                worst_node = Some(k);
            }
            Some(_) => {}
            None => inadmissible_nodes += 1,
        }
    }
    SubsolutionReport {
        passed: inadmissible_nodes == 0 && worst_margin >= -SUBSOLUTION_TOLERANCE,
        worst_margin,
        worst_node,
        inadmissible_nodes,
    }
}

/// Sphere-cap height `√(R² − r²) − √(R² − |x|²)`, vanishing on `|x| = r`.
pub fn cap_height(big_r: f64, r: f64, x: &[f64]) -> f64 {
    let x2: f64 = x.iter().map(|v| v * v).sum();
    (big_r * big_r - r * r).sqrt() - (big_r * big_r - x2).sqrt()
}

/// Nodal gradient and Hessian as a [`GraphPoint`], for diagnostics.
pub fn graph_point(prob: &Problem, u: &Field, node: usize) -> Result<GraphPoint> {
    prob.point(u, node)
}

/// Gradient of the field at a node.
pub fn nodal_gradient(prob: &Problem, u: &Field, node: usize) -> DVector<f64> {
    fd_gradient(u, &prob.grid, node)
}
