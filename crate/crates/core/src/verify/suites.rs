//! Randomized property suites. Every suite is a pure function of its
//! [`SampleSpec`]; samples are processed in parallel and merged in index
//! order, so results are reproducible bit for bit.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{cone_sample, oracle_f, two_sum, CheckResult, SampleSpec, SuiteResult};
use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::geometry::{graph_jet, pde_coeffs, GraphPoint};
use crate::symfunc::{
    binomial, eval_f, eval_ft, grad_diag, growth_radius, matrix_jet, min_p_sum, operator_jet, tilde_jet, PSpec,
    Spectrum,
};

pub const SUITE_NAMES: [&str; 8] = [
    "dinew",
    "key1",
    "lem4",
    "growth",
    "gradients",
    "concavity",
    "ellipticity",
    "oracle",
];

#[derive(Clone, Copy)]
enum Reduce {
    Min,
    Max,
    Sum,
}

struct Check {
    name: &'static str,
    tol: f64,
}

#[derive(Default)]
struct Outcome {
    slacks: Vec<(usize, f64)>,
    stats: Vec<(usize, f64)>,
}

impl Outcome {
    fn slack(&mut self, check: usize, s: f64) {
        self.slacks.push((check, s));
    }

    fn stat(&mut self, k: usize, v: f64) {
        self.stats.push((k, v));
    }
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index as u64 + 1))
}

fn run(
    name: &str,
    ss: &SampleSpec,
    checks: &[Check],
    stats: &[(String, Reduce)],
    samples: &[Spectrum],
    per_sample: impl Fn(usize, &Spectrum) -> Result<Outcome> + Sync,
) -> Result<SuiteResult> {
    let outcomes = samples
        .par_iter()
        .enumerate()
        .map(|(i, l)| per_sample(i, l))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = vec![f64::INFINITY; checks.len()];
    let mut worst_at: Vec<Option<usize>> = vec![None; checks.len()];
    let mut counts = vec![0usize; checks.len()];
    let mut acc: Vec<Option<f64>> = vec![None; stats.len()];
    for (i, out) in outcomes.iter().enumerate() {
        for &(c, s) in &out.slacks {
            counts[c] += 1;
            // NaN slacks count as failures.
            let s = if s.is_nan() { f64::NEG_INFINITY } else { s };
            if s < worst[c] || worst_at[c].is_none() {
                worst[c] = s;
                worst_at[c] = Some(i);
            }
        }
        for &(k, v) in &out.stats {
            acc[k] = Some(match (acc[k], stats[k].1) {
                (None, _) => v,
                (Some(a), Reduce::Min) => a.min(v),
                (Some(a), Reduce::Max) => a.max(v),
                (Some(a), Reduce::Sum) => a + v,
            });
        }
    }
    let results = checks
        .iter()
        .enumerate()
        .map(|(c, def)| CheckResult {
            name: def.name.to_string(),
            passed: worst[c] >= -def.tol,
            worst_slack: worst[c],
            tolerance: def.tol,
            assertions: counts[c],
            worst_sample: worst_at[c].map(|i| samples[i].values().to_vec()),
        })
        .collect();
    let constants: BTreeMap<String, f64> = stats
        .iter()
        .zip(acc)
        .filter_map(|((k, _), v)| v.map(|v| (k.clone(), v)))
        .collect();
    Ok(SuiteResult::assemble(name, ss, results, constants))
}

fn stat_names(names: &[(&str, Reduce)]) -> Vec<(String, Reduce)> {
    names.iter().map(|(n, r)| (n.to_string(), *r)).collect()
}

fn sorted_samples(ss: &SampleSpec) -> Result<(PSpec, Vec<Spectrum>)> {
    let spec = ss.pspec()?;
    let samples = cone_sample(ss)?.into_iter().map(|l| l.sorted_desc()).collect();
    Ok((spec, samples))
}

/// Structural gradient properties: `F̃^{11}λ₁ ≥ F̃/n`, `Σ F̃^{kk} ≥ p`,
/// `Σ F^{kk}λ_k = C(n,p)·F`, and `F^{jj} ≥ θ Σ F^{ii}` for the last p
/// indices with θ reported.
pub fn suite_dinew(ss: &SampleSpec) -> Result<SuiteResult> {
    let (spec, samples) = sorted_samples(ss)?;
    let (n, p, m) = (spec.n(), spec.p(), spec.m() as f64);
    let checks = [
        Check { name: "ft11_lambda1_ge_ft_over_n", tol: 1e-10 },
        Check { name: "trace_ft_ge_p", tol: 1e-10 },
        Check { name: "euler_relation", tol: 1e-10 },
        Check { name: "last_p_gradients_positive", tol: 0.0 },
    ];
    let stats = stat_names(&[("theta", Reduce::Min), ("ft11_ratio_min", Reduce::Min)]);
    run("dinew", ss, &checks, &stats, &samples, |_, lam| {
        let l = lam.values();
        let tj = tilde_jet(lam, &spec)?;
        let oj = operator_jet(lam, &spec)?;
        let mut out = Outcome::default();
        let ft = tj.value_ft;
        out.slack(0, (tj.grad_diag[0] * l[0] - ft / n as f64) / ft);
        out.stat(1, tj.grad_diag[0] * l[0] * n as f64 / ft);
        let tr: f64 = tj.grad_diag.iter().sum();
        out.slack(1, (tr - p as f64) / p as f64);
        let euler = dot_compensated(&oj.grad_diag, l);
        out.slack(2, -((euler - m * oj.value_f) / (m * oj.value_f)).abs());
        let total: f64 = oj.grad_diag.iter().sum();
        let theta = oj.grad_diag[n - p..].iter().fold(f64::INFINITY, |a, g| a.min(g / total));
        out.slack(3, theta);
        out.stat(0, theta);
        Ok(out)
    })
}

/// Lower bounds on `F^{nn}` for `p ≥ n/2`. The tail inequality
/// `F^{nn} ≥ F/(λ_{n−p+1}+⋯+λ_n)` is asserted on every sample; the
/// scaled bound `2^{C(n−1,p−1)} F^{nn} ≥ λ₁` on samples with
/// `λ_n ≥ −λ₁/(2(p−1))` and `λ_{n−p+1}+⋯+λ_n ≥ 1/λ₁`.
pub fn suite_key1(ss: &SampleSpec) -> Result<SuiteResult> {
    if 2 * ss.p < ss.n {
        return Err(Error::InvalidArgument(format!(
            "key1 needs p >= n/2, got n = {}, p = {}",
            ss.n, ss.p
        )));
    }
    let (spec, samples) = sorted_samples(ss)?;
    let (n, p) = (spec.n(), spec.p());
    let factor = 2f64.powi(binomial(n - 1, p - 1) as i32);
    let checks = [
        Check { name: "fnn_ge_f_over_tail", tol: 1e-12 },
        Check { name: "scaled_fnn_ge_lambda1", tol: 1e-12 },
    ];
    let stats = stat_names(&[
        ("key1_ratio", Reduce::Min),
        ("tail_ratio_min", Reduce::Min),
        ("scaled_bound_samples", Reduce::Sum),
    ]);
    run("key1", ss, &checks, &stats, &samples, |_, lam| {
        let l = lam.values();
        let g = grad_diag(lam, &spec)?;
        let f = eval_f(lam, &spec)?;
        let tail: f64 = l[n - p..].iter().sum();
        let mut out = Outcome::default();
        let ratio = g[n - 1] * tail / f;
        out.slack(0, ratio - 1.0);
        out.stat(1, ratio);
        let filtered = p < 2 || l[n - 1] >= -l[0] / (2.0 * (p as f64 - 1.0));
        if filtered && tail >= 1.0 / l[0] {
            let r = factor * g[n - 1] / l[0];
            out.slack(1, r - 1.0);
            out.stat(0, r);
            out.stat(2, 1.0);
        }
        Ok(out)
    })
}

/// The exact identity
/// `F^{ii}/λ₁ = ((λ₁−λ_i)/λ₁)(−F^{1i,i1}) + F^{11}/λ₁` and its two
/// consequences for `λ_i ≥ 0` and for `λ_i ≤ 0` with `−λ_n ≤ δλ₁`.
pub fn suite_lem4(ss: &SampleSpec) -> Result<SuiteResult> {
    let (spec, samples) = sorted_samples(ss)?;
    let (n, p) = (spec.n(), spec.p());
    let delta_max = if p >= 2 { 1.0 / (2.0 * (p as f64 - 1.0)) } else { 1.0 };
    let checks = [
        Check { name: "identity", tol: 1e-10 },
        Check { name: "identity_equal_eigenvalues", tol: 1e-10 },
        Check { name: "inequality_nonnegative_lambda_i", tol: 1e-12 },
        Check { name: "inequality_negative_lambda_i", tol: 1e-12 },
    ];
    let stats = stat_names(&[("delta_used_max", Reduce::Max), ("delta_samples", Reduce::Sum)]);
    let seed = ss.seed;
    run("lem4", ss, &checks, &stats, &samples, |idx, lam| {
        let l = lam.values();
        let oj = operator_jet(lam, &spec)?;
        let mut rng = sample_rng(seed, idx);
        let delta = delta_max * (1.0 - rng.random::<f64>());
        let delta_ok = -l[n - 1] <= delta * l[0];
        let mut out = Outcome::default();
        let l1 = l[0];
        let f11 = oj.grad_diag[0];
        for i in 1..n {
            let fii = oj.grad_diag[i];
            let off = -oj.hess_off[(0, i)];
            let lhs = fii / l1;
            let scale = lhs.abs().max(f11 / l1).max(off * (l1 - l[i]).abs() / l1);
            if (l1 - l[i]).abs() <= 1e-12 * lam.sup_norm() {
                out.slack(1, -((fii - f11) / f11).abs());
                continue;
            }
            let rhs = (l1 - l[i]) / l1 * off + f11 / l1;
            out.slack(0, -((lhs - rhs) / scale).abs());
            if l[i] >= 0.0 {
                out.slack(2, (off + f11 / l1 - lhs) / scale);
            }
            if l[i] <= 0.0 && delta_ok {
                out.slack(3, ((1.0 + delta) * off + f11 / l1 - lhs) / scale);
            }
        }
        let mut tied = l.to_vec();
        tied[1] = tied[0];
        let tg = grad_diag(&Spectrum::new(tied)?, &spec)?;
        out.slack(1, -((tg[1] - tg[0]) / tg[0]).abs());
        if delta_ok && l[1..].iter().any(|v| *v <= 0.0) {
            out.stat(0, delta);
            out.stat(1, 1.0);
        }
        Ok(out)
    })
}

/// Growth in the last entry: `F(λ', λ_n + R(C, λ)) ≥ C − 10⁻⁸` and `R`
/// nondecreasing in `C`; the cloud-wide `R(C, K)` is reported per `C`.
pub fn suite_growth(ss: &SampleSpec, c_values: &[f64]) -> Result<SuiteResult> {
    if c_values.is_empty() || c_values.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::InvalidArgument("growth suite needs positive C values".into()));
    }
    let (spec, samples) = sorted_samples(ss)?;
    let n = spec.n();
    let mut cs = c_values.to_vec();
    cs.sort_by(f64::total_cmp);
    let checks = [
        Check { name: "reaches_c", tol: 1e-8 },
        Check { name: "radius_monotone_in_c", tol: 1e-12 },
    ];
    let stats: Vec<(String, Reduce)> = cs.iter().map(|c| (format!("R(C={c})"), Reduce::Max)).collect();
    run("growth", ss, &checks, &stats, &samples, |_, lam| {
        let mut out = Outcome::default();
        let mut prev: Option<f64> = None;
        for (k, &c) in cs.iter().enumerate() {
            let r = growth_radius(c, lam, &spec)?;
            let mut shifted = lam.values().to_vec();
            shifted[n - 1] += r;
            let fv = oracle_f(&Spectrum::new(shifted)?, &spec)?;
            out.slack(0, fv - c);
            if let Some(rp) = prev {
                out.slack(1, (r - rp) / (1.0 + r));
            }
            out.stat(k, r);
            prev = Some(r);
        }
        Ok(out)
    })
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q()
}

/// `D²u = w γ a γ` with `a = Q diag(κ) Qᵀ` and a random gradient, so the
/// graph has principal curvatures exactly `κ`.
fn graph_point_with_curvatures(kappa: &Spectrum, rng: &mut ChaCha8Rng) -> Result<GraphPoint> {
    let n = kappa.len();
    let grad = DVector::from_fn(n, |_, _| 0.8 * rng.sample::<f64, _>(StandardNormal));
    let q = random_orthogonal(n, rng);
    let a = &q * DMatrix::from_diagonal(&DVector::from_column_slice(kappa.values())) * q.transpose();
    let w = (1.0 + grad.norm_squared()).sqrt();
    let gamma = DMatrix::identity(n, n) + &grad * grad.transpose() / (1.0 + w);
    let hess = &gamma * a * &gamma * w;
    GraphPoint::new(grad, (&hess + hess.transpose()) * 0.5)
}

/// Dot product with error-free products and sums, accurate as if computed
/// in twice the working precision.
fn dot_compensated(a: &[f64], b: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let prod = x * y;
        let prod_err = x.mul_add(*y, -prod);
        let (t, sum_err) = two_sum(s, prod);
        s = t;
        c += sum_err + prod_err;
    }
    s + c
}

/// Rounds every entry to a multiple of `2^(⌈log₂ big⌉ − bits)`.
fn snap(v: &Spectrum, big: f64, bits: i32) -> Result<Spectrum> {
    let q = 2f64.powi(big.log2().ceil() as i32 - bits);
    Spectrum::new(v.values().iter().map(|x| (x / q).round() * q).collect())
}

/// Rounds both vectors to a common dyadic grid fine enough to move entries
/// by at most `2⁻⁴⁹·max|v|`, coarse enough that their midpoint is exact.
fn snap_pair(a: &Spectrum, b: &Spectrum) -> Result<(Spectrum, Spectrum)> {
    let big = a.sup_norm().max(b.sup_norm());
    Ok((snap(a, big, 49)?, snap(b, big, 49)?))
}

/// Largest power of two `≤ x`; `λ_k ± h` is then exact for the spectra
/// sampled here.
fn pow2_step(x: f64) -> f64 {
    2f64.powi(x.log2().floor() as i32)
}

/// Eliminates the `h²` term of an even-in-`h` difference quotient.
fn richardson(h: f64, d: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    Ok((4.0 * d(0.5 * h)? - d(h)?) / 3.0)
}

/// Eliminates the `h²` and `h⁴` terms.
fn richardson2(h: f64, d: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let (d1, d2, d4) = (d(h)?, d(0.5 * h)?, d(0.25 * h)?);
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d4 - d2) / 3.0;
    Ok((16.0 * r2 - r1) / 15.0)
}

fn f_of_matrix(a: &DMatrix<f64>, spec: &PSpec) -> Result<f64> {
    let eig = symmetric_eigen(a)?;
    eval_f(&Spectrum::new(eig.values.iter().copied().collect())?, spec)
}

fn ft_of_matrix(a: &DMatrix<f64>, spec: &PSpec) -> Result<f64> {
    let eig = symmetric_eigen(a)?;
    eval_ft(&Spectrum::new(eig.values.iter().copied().collect())?, spec)
}

fn g_of_point(pt: &GraphPoint, spec: &PSpec) -> Result<f64> {
    eval_ft(&graph_jet(pt)?.kappa, spec)
}

/// Largest step `≤ 10⁻³` (halving) whose stencil `Du ± h e_s` moves the
/// smallest p-sum of κ by at most 1% of `sigma`, so the difference quotient
/// stays in the regime where its `h⁴` truncation term is negligible.
fn gs_step(pt: &GraphPoint, spec: &PSpec, sigma: f64) -> Result<f64> {
    let mut h = pow2_step(1e-3);
    for _ in 0..60 {
        let mut ok = true;
        'stencil: for s in 0..pt.dim() {
            for sign in [1.0, -1.0] {
                let mut q = pt.clone();
                q.grad[s] += sign * h;
                if (min_p_sum(&graph_jet(&q)?.kappa, spec) - sigma).abs() > 1e-2 * sigma {
                    ok = false;
                    break 'stencil;
                }
            }
        }
        if ok {
            return Ok(h);
        }
        h *= 0.5;
    }
    Err(Error::InvalidArgument("no finite-difference step keeps the stencil in the cone".into()))
}

/// Finite-difference oracles for `grad_diag`, the Hessian blocks,
/// `matrix_jet` and `∂G/∂u_s`. Steps scale with the smallest p-sum so
/// near-boundary samples are resolved.
pub fn suite_gradients(ss: &SampleSpec) -> Result<SuiteResult> {
    let (spec, samples) = sorted_samples(ss)?;
    let (n, p) = (spec.n(), spec.p());
    let checks = [
        Check { name: "grad_diag", tol: 1e-6 },
        Check { name: "hess_diag", tol: 1e-5 },
        Check { name: "hess_off", tol: 1e-5 },
        Check { name: "matrix_jet", tol: 1e-5 },
        Check { name: "gs", tol: 1e-5 },
    ];
    let seed = ss.seed;
    run("gradients", ss, &checks, &[], &samples, |idx, lam| {
        let mut rng = sample_rng(seed, idx);
        let l = lam.values();
        let sigma = min_p_sum(lam, &spec);
        let oj = operator_jet(lam, &spec)?;
        let shifted = |k: usize, h: f64| -> Result<Spectrum> {
            let mut v = l.to_vec();
            v[k] += h;
            Spectrum::new(v)
        };
        let mut out = Outcome::default();

        // Component k varies on the scale of the smallest p-sum containing k.
        let mut worst: f64 = 0.0;
        for k in 0..n {
            let mut others: Vec<f64> = (0..n).filter(|&j| j != k).map(|j| l[j]).collect();
            others.sort_by(f64::total_cmp);
            let sigma_k = l[k] + others[..p - 1].iter().sum::<f64>();
            let h1 = pow2_step(1e-3 * sigma_k);
            let fd = richardson(h1, |h| {
                Ok((eval_f(&shifted(k, h)?, &spec)? - eval_f(&shifted(k, -h)?, &spec)?) / (2.0 * h))
            })?;
            worst = worst.max(((fd - oj.grad_diag[k]) / oj.grad_diag[k]).abs());
        }
        out.slack(0, -worst);

        let hscale = oj.hess_diag.amax().max(oj.hess_off.amax()).max(oj.value_f / (sigma * sigma));
        let h2 = pow2_step(1e-4 * sigma);
        let mut worst: f64 = 0.0;
        for k in 0..n {
            let gp = grad_diag(&shifted(k, h2)?, &spec)?;
            let gm = grad_diag(&shifted(k, -h2)?, &spec)?;
            for j in 0..n {
                let fd = (gp[j] - gm[j]) / (2.0 * h2);
                worst = worst.max((fd - oj.hess_diag[(j, k)]).abs() / hscale);
            }
        }
        out.slack(1, -worst);

        // F(diag λ + t(E_kr + E_rk)) = F + t² F^{kr,rk} + O(t⁴), even in t. The
        // perturbation moves each p-sum by at most t.
        let base = DMatrix::from_diagonal(&DVector::from_column_slice(l));
        let f0 = f_of_matrix(&base, &spec)?;
        let t = 1e-1 * sigma;
        let mut worst: f64 = 0.0;
        for k in 0..n {
            for r in k + 1..n {
                let d2 = |t: f64| -> Result<f64> {
                    let mut a = base.clone();
                    a[(k, r)] = t;
                    a[(r, k)] = t;
                    Ok((f_of_matrix(&a, &spec)? - f0) / (t * t))
                };
                let est = richardson2(t, d2)?;
                worst = worst.max((est - oj.hess_off[(k, r)]).abs() / hscale);
            }
        }
        out.slack(2, -worst);

        let q = random_orthogonal(n, &mut rng);
        let a = &q * &base * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let mj = matrix_jet(&a, &spec)?;
        let e = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let e = (&e + e.transpose()) * 0.5;
        let e = &e / e.norm();
        let fd = richardson(1e-3 * sigma, |h| {
            Ok((ft_of_matrix(&(&a + &e * h), &spec)? - ft_of_matrix(&(&a - &e * h), &spec)?) / (2.0 * h))
        })?;
        let exact = mj.d_a.dot(&e);
        out.slack(3, -(fd - exact).abs() / mj.d_a.norm());

        let pt = graph_point_with_curvatures(lam, &mut rng)?;
        let c = pde_coeffs(&pt, &spec)?;
        let hs = gs_step(&pt, &spec, sigma)?;
        let gscale = c.gs.amax().max(c.value);
        let mut worst: f64 = 0.0;
        for s in 0..n {
            let central = |h: f64| -> Result<f64> {
                let mut gp = pt.clone();
                gp.grad[s] += h;
                let mut gm = pt.clone();
                gm.grad[s] -= h;
                Ok((g_of_point(&gp, &spec)? - g_of_point(&gm, &spec)?) / (2.0 * h))
            };
            let fd = richardson(hs, central)?;
            worst = worst.max((fd - c.gs[s]).abs() / gscale);
        }
        out.slack(4, -worst);
        Ok(out)
    })
}

/// Concavity of `F̃` at midpoints of sample pairs, and degree-one
/// homogeneity `F̃(tλ) = tF̃(λ)` for `t = k/256 ∈ (0, 10]`.
pub fn suite_concavity(ss: &SampleSpec) -> Result<SuiteResult> {
    let spec = ss.pspec()?;
    let samples = cone_sample(ss)?;
    let partners = cone_sample(&SampleSpec {
        seed: ss.seed.wrapping_add(1),
        ..*ss
    })?;
    let checks = [
        Check { name: "midpoint_concavity", tol: 1e-12 },
        Check { name: "homogeneity", tol: 1e-10 },
    ];
    let seed = ss.seed;
    run("concavity", ss, &checks, &[], &samples, |idx, lam| {
        let mut out = Outcome::default();
        let (a, b) = snap_pair(lam, &partners[idx])?;
        let mid = Spectrum::new(a.values().iter().zip(b.values()).map(|(x, y)| 0.5 * (x + y)).collect())?;
        let (fa, fb) = (eval_ft(&a, &spec)?, eval_ft(&b, &spec)?);
        out.slack(0, (eval_ft(&mid, &spec)? - 0.5 * (fa + fb)) / fa.max(fb));
        let mut rng = sample_rng(seed, idx);
        // 40-bit entries times a 12-bit t: every product t·λ_i is exact.
        let t = rng.random_range(1..=2560u32) as f64 / 256.0;
        let c = snap(lam, lam.sup_norm(), 40)?;
        let fc = eval_ft(&c, &spec)?;
        let ft = eval_ft(&c.scaled(t), &spec)?;
        out.slack(1, -((ft - t * fc) / (t * fc)).abs());
        Ok(out)
    })
}

/// `(1/w) Σ F̃^{ii} ≥ Σ G^{ii} ≥ (1/w³) Σ F̃^{ii}` at random admissible
/// graph points.
pub fn suite_ellipticity(ss: &SampleSpec) -> Result<SuiteResult> {
    let spec = ss.pspec()?;
    let samples = cone_sample(ss)?;
    let checks = [
        Check { name: "trace_upper", tol: 1e-10 },
        Check { name: "trace_lower", tol: 1e-10 },
    ];
    let stats = stat_names(&[("max_w", Reduce::Max)]);
    let seed = ss.seed;
    run("ellipticity", ss, &checks, &stats, &samples, |idx, lam| {
        let mut rng = sample_rng(seed, idx);
        let pt = graph_point_with_curvatures(lam, &mut rng)?;
        let c = pde_coeffs(&pt, &spec)?;
        let w = c.w;
        let upper = c.trace_ft / w;
        let tr = c.gij.trace();
        let mut out = Outcome::default();
        out.slack(0, (upper - tr) / upper);
        out.slack(1, (tr - c.trace_ft / (w * w * w)) / upper);
        out.stat(0, w);
        Ok(out)
    })
}

/// Direct-product oracle against the log-domain evaluator.
pub fn suite_oracle(ss: &SampleSpec) -> Result<SuiteResult> {
    let spec = ss.pspec()?;
    let samples = cone_sample(ss)?;
    let checks = [Check { name: "oracle_matches_eval_f", tol: 1e-12 }];
    run("oracle", ss, &checks, &[], &samples, |_, lam| {
        let (a, b) = (oracle_f(lam, &spec)?, eval_f(lam, &spec)?);
        let mut out = Outcome::default();
        out.slack(0, -((a - b) / a).abs());
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symfunc::tilde_jet;

    fn spectrum(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec()).unwrap()
    }

    #[test]
    fn dinew_hand_examples() {
        let spec = PSpec::new(3, 2).unwrap();
        let oj = operator_jet(&spectrum(&[3.0, 2.0, 1.0]), &spec).unwrap();
        let euler: f64 = oj.grad_diag.iter().zip([3.0, 2.0, 1.0]).map(|(g, l)| g * l).sum();
        assert!((euler - 180.0).abs() < 1e-12);
        let tj = tilde_jet(&spectrum(&[1.0, 1.0, 1.0]), &spec).unwrap();
        let tr: f64 = tj.grad_diag.iter().sum();
        assert!((tr - 2.0).abs() < 1e-14);
        // At symmetric points item (1) is an equality.
        assert!((tj.grad_diag[0] * 1.0 - tj.value_ft / 3.0).abs() < 1e-14);
    }

    #[test]
    fn key1_hand_example() {
        let spec = PSpec::new(3, 2).unwrap();
        let lam = spectrum(&[4.0, 1.0, -0.2]);
        assert!((eval_f(&lam, &spec).unwrap() - 15.2).abs() < 1e-12);
        let g = grad_diag(&lam, &spec).unwrap();
        assert!((g[2] - 23.0).abs() < 1e-12);
        assert!(4.0 * g[2] >= 4.0);
    }

    #[test]
    fn lem4_hand_example() {
        let spec = PSpec::new(3, 2).unwrap();
        let oj = operator_jet(&spectrum(&[3.0, 2.0, 1.0]), &spec).unwrap();
        let lhs = oj.grad_diag[1] / 3.0;
        let rhs = (1.0 / 3.0) * -oj.hess_off[(0, 1)] + oj.grad_diag[0] / 3.0;
        assert!((lhs - 32.0 / 3.0).abs() < 1e-13);
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn growth_hand_example() {
        let spec = PSpec::new(3, 2).unwrap();
        let lam = spectrum(&[1.0, 1.0, 1.0]);
        let r = growth_radius(100.0, &lam, &spec).unwrap();
        assert!((r - 5.071068).abs() < 1e-6);
        let fv = oracle_f(&spectrum(&[1.0, 1.0, 1.0 + r]), &spec).unwrap();
        assert!((fv - 100.0).abs() < 1e-8 + 1e-6);
        assert_eq!(growth_radius(1.0, &lam, &spec).unwrap(), 0.0);
        assert!(growth_radius(200.0, &lam, &spec).unwrap() > r);
    }

    #[test]
    fn suites_pass_and_are_deterministic() {
        let ss = SampleSpec::new(4, 2, 300, 21);
        for suite in [suite_dinew, suite_key1, suite_lem4, suite_gradients, suite_concavity, suite_ellipticity, suite_oracle] {
            let a = suite(&ss).unwrap();
            assert!(a.passed, "{a:#?}");
            assert_eq!(a, suite(&ss).unwrap());
        }
        let g = suite_growth(&ss, &[1.0, 10.0, 100.0]).unwrap();
        assert!(g.passed, "{g:#?}");
    }

    #[test]
    fn key1_guard() {
        let ss = SampleSpec::new(4, 1, 10, 1);
        assert!(matches!(suite_key1(&ss), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn failing_check_is_reported() {
        let ss = SampleSpec::new(3, 2, 20, 1);
        let spec = ss.pspec().unwrap();
        let samples = cone_sample(&ss).unwrap();
        let checks = [Check { name: "always_negative", tol: 1e-12 }];
        let res = run("synthetic", &ss, &checks, &[], &samples, |_, lam| {
            let mut o = Outcome::default();
            o.slack(0, -min_p_sum(lam, &spec));
            Ok(o)
        })
        .unwrap();
        assert!(!res.passed);
        assert_eq!(res.worst_check, "always_negative");
        assert!(res.worst_slack < -res.tolerance);
    }
}
