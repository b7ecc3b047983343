//! Independent oracles, seeded cone sampling and property suites for the
//! operator calculus, plus exact-solution generators and refinement studies.

mod suites;

pub use suites::{
    suite_concavity, suite_dinew, suite_ellipticity, suite_gradients, suite_growth, suite_key1, suite_lem4,
    suite_oracle, SUITE_NAMES,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fexpr::Expr;
use crate::grid::{Domain, Field};
use crate::solver::{solve, Problem, SolverConfig};
use crate::symfunc::{binomial, min_p_sum, PSpec, Spectrum};

/// Largest relative margin `min p-sum / |λ|∞` of a near-boundary sample.
pub const NEAR_BOUNDARY_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SampleSpec {
    pub n: usize,
    pub p: usize,
    pub count: usize,
    pub seed: u64,
    pub near_boundary_fraction: f64,
}

impl SampleSpec {
    pub fn new(n: usize, p: usize, count: usize, seed: u64) -> Self {
        Self {
            n,
            p,
            count,
            seed,
            near_boundary_fraction: 0.25,
        }
    }

    pub fn pspec(&self) -> Result<PSpec> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("sample count must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.near_boundary_fraction) {
            return Err(Error::InvalidArgument("near-boundary fraction must lie in [0, 1]".into()));
        }
        PSpec::new(self.n, self.p)
    }
}

/// Seeded samples of the cone `𝒫_p`.
///
/// Each sample is a standard normal vector times a log-uniform scale in
/// `[0.1, 10]`. Regular samples are shifted along `(1,…,1)` until every
/// p-sum is positive; near-boundary samples are shifted so that
/// `min p-sum = s·|λ|∞` with `s < 0.9·10⁻³`.
pub fn cone_sample(ss: &SampleSpec) -> Result<Vec<Spectrum>> {
    let spec = ss.pspec()?;
    let mut rng = ChaCha8Rng::seed_from_u64(ss.seed);
    let p = ss.p as f64;
    let mut out = Vec::with_capacity(ss.count);
    while out.len() < ss.count {
        let near = rng.random::<f64>() < ss.near_boundary_fraction;
        let scale = 10f64.powf(rng.random_range(-1.0..1.0));
        let raw: Vec<f64> = (0..ss.n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let lam0 = Spectrum::new(raw)?;
        let s0 = min_p_sum(&lam0, &spec);
        let shift = if near {
            // Put the smallest p-sum at exactly zero, then lift by s·|λ|∞.
            let base: Vec<f64> = lam0.values().iter().map(|v| v - s0 / p).collect();
            let sup = base.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let s = rng.random_range(1e-3..0.9) * NEAR_BOUNDARY_MARGIN;
            -s0 / p + s * sup / p
        } else if s0 > 0.0 {
            0.0
        } else {
            (-s0 + scale * rng.random_range(0.02..1.0)) / p
        };
        let lam = Spectrum::new(lam0.values().iter().map(|v| v + shift).collect())?;
        if min_p_sum(&lam, &spec) > 0.0 {
            out.push(lam);
        }
    }
    Ok(out)
}

/// Error-free transformation `a + b = s + e`.
pub(crate) fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Pairwise summation with every rounding error carried along and added
/// back at the end.
fn pairwise_sum(v: &[f64]) -> (f64, f64) {
    match v.len() {
        0 => (0.0, 0.0),
        1 => (v[0], 0.0),
        k => {
            let (a, ea) = pairwise_sum(&v[..k / 2]);
            let (b, eb) = pairwise_sum(&v[k / 2..]);
            let (s, e) = two_sum(a, b);
            (s, e + ea + eb)
        }
    }
}

fn compensated_pairwise_sum(v: &[f64]) -> f64 {
    let (s, e) = pairwise_sum(v);
    s + e
}

/// Direct product of all p-subset sums, enumerating subsets by bitmask and
/// summing each subset pairwise with compensation. Independent of the
/// log-domain evaluator.
pub fn oracle_f(lam: &Spectrum, spec: &PSpec) -> Result<f64> {
    let n = spec.n();
    if lam.len() != n {
        return Err(Error::InvalidArgument(format!("expected {n} entries, got {}", lam.len())));
    }
    let mut prod = 1.0f64;
    let mut terms = Vec::with_capacity(spec.p());
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != spec.p() {
            continue;
        }
        terms.clear();
        terms.extend((0..n).filter(|i| mask & (1 << i) != 0).map(|i| lam.values()[i]));
        prod *= compensated_pairwise_sum(&terms);
    }
    if !prod.is_finite() {
        return Err(Error::Overflow);
    }
    Ok(prod)
}

/// Outcome of one named assertion over all samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub worst_slack: f64,
    pub tolerance: f64,
    pub assertions: usize,
    pub worst_sample: Option<Vec<f64>>,
}

/// Suite outcome. The top-level slack and tolerance are those of the check
/// closest to failing, measured as `slack / tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SuiteResult {
    pub suite: String,
    pub n: usize,
    pub p: usize,
    pub passed: bool,
    pub worst_slack: f64,
    pub tolerance: f64,
    pub worst_check: String,
    pub worst_sample: Option<Vec<f64>>,
    pub constants: BTreeMap<String, f64>,
    pub seed: u64,
    pub count: usize,
    pub checks: Vec<CheckResult>,
}

impl SuiteResult {
    fn assemble(name: &str, ss: &SampleSpec, checks: Vec<CheckResult>, constants: BTreeMap<String, f64>) -> Self {
        let worst = checks
            .iter()
            .filter(|c| c.assertions > 0)
            .min_by(|a, b| (a.worst_slack / a.tolerance).total_cmp(&(b.worst_slack / b.tolerance)));
        let (worst_slack, tolerance, worst_check, worst_sample) = match worst {
            Some(c) => (c.worst_slack, c.tolerance, c.name.clone(), c.worst_sample.clone()),
            None => (f64::INFINITY, 0.0, String::new(), None),
        };
        Self {
            suite: name.to_string(),
            n: ss.n,
            p: ss.p,
            passed: checks.iter().all(|c| c.passed),
            worst_slack,
            tolerance,
            worst_check,
            worst_sample,
            constants,
            seed: ss.seed,
            count: ss.count,
            checks,
        }
    }
}

/// Rotationally symmetric exact solution: a spherical cap of radius `R`
/// over the ball of radius `r`, with constant `f = (p/R)^{C(n,p)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereCap {
    pub n: usize,
    pub p: usize,
    pub big_r: f64,
    pub r: f64,
}

impl SphereCap {
    pub fn new(n: usize, p: usize, big_r: f64, r: f64) -> Result<Self> {
        PSpec::new(n, p)?;
        if !(r > 0.0 && big_r > r) {
            return Err(Error::InvalidArgument(format!("need R > r > 0, got R = {big_r}, r = {r}")));
        }
        Ok(Self { n, p, big_r, r })
    }

    pub fn f_value(&self) -> f64 {
        (self.p as f64 / self.big_r).powi(binomial(self.n, self.p) as i32)
    }

    pub fn f_expr(&self) -> Expr {
        Expr::constant(self.n, self.f_value())
    }

    pub fn height(&self, x: &[f64]) -> f64 {
        crate::solver::cap_height(self.big_r, self.r, x)
    }

    pub fn domain(&self) -> Result<Domain> {
        Domain::ball(self.n, self.r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub nodes: usize,
    pub linf_error: f64,
    pub u_sup: f64,
    /// `log₂(e_{previous h} / e_h)` when `h` halves; `None` on the first row.
    pub order: Option<f64>,
    pub interior_quantity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,nodes,linf_error,u_sup,order,interior_quantity\n");
        for r in &self.rows {
            let order = r.order.map(|o| o.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.h, r.nodes, r.linf_error, r.u_sup, order, r.interior_quantity
            );
        }
        s
    }
}

/// Solves on each `h` and measures the nodal L∞ error against `oracle`.
pub fn convergence_study(
    spec: &PSpec,
    dom: &Domain,
    f: &Expr,
    oracle: &(dyn Fn(&[f64]) -> f64 + Sync),
    hs: &[f64],
    cfg: &SolverConfig,
) -> Result<ConvergenceTable> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(hs.len());
    for &h in hs {
        let prob = Problem::new(spec.clone(), dom.clone(), f.clone(), h)?;
        let (u, rep) = solve(&prob, cfg)?;
        let exact = Field::from_fn(prob.grid(), oracle);
        let err = u.max_abs_diff(&exact);
        let order = rows
            .last()
            .map(|prev| (prev.linf_error / err).log2() / (prev.h / h).log2());
        rows.push(ConvergenceRow {
            h,
            nodes: prob.grid().len(),
            linf_error: err,
            u_sup: u.sup_norm(),
            order,
            interior_quantity: rep.interior_quantity,
        });
    }
    Ok(ConvergenceTable { rows })
}
