//! The symmetric-function calculus of the p-sum product operator.
//!
//! For a spectrum `λ ∈ ℝⁿ` and `1 ≤ p ≤ n` the operator is
//! `F(λ) = Π_S σ_S(λ)` over all p-subsets `S`, where `σ_S = Σ_{i∈S} λ_i`,
//! and `F̃ = F^{1/m}` with `m = C(n, p)`. The open cone `𝒫_p` is the set
//! where every `σ_S > 0`.
//!
//! Derivatives are evaluated in the eigen frame. All second-derivative
//! blocks use the subset-pair sums directly, so coincident eigenvalues need
//! no special handling.

use std::fmt;

use nalgebra::DMatrix;

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};

pub const MAX_DIM: usize = 10;

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Dimension data and the precomputed p-subset table.
#[derive(Debug, Clone, PartialEq)]
pub struct PSpec {
    n: usize,
    p: usize,
    subsets: Vec<Vec<usize>>,
    masks: Vec<u32>,
    // mask -> subset index, `usize::MAX` when the mask is not a p-subset
    lookup: Vec<usize>,
}

impl PSpec {
    pub fn new(n: usize, p: usize) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "dimension n = {n} outside 2..={MAX_DIM}"
            )));
        }
        if p == 0 || p > n {
            return Err(Error::InvalidArgument(format!("p = {p} outside 1..={n}")));
        }
        let mut subsets = Vec::with_capacity(binomial(n, p));
        let mut masks = Vec::with_capacity(binomial(n, p));
        let mut lookup = vec![usize::MAX; 1 << n];
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize == p {
                lookup[mask as usize] = subsets.len();
                masks.push(mask);
                subsets.push((0..n).filter(|i| mask & (1 << i) != 0).collect());
            }
        }
        Ok(Self {
            n,
            p,
            subsets,
            masks,
            lookup,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of p-subsets, `C(n, p)`.
    pub fn m(&self) -> usize {
        self.subsets.len()
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    fn contains(&self, s: usize, i: usize) -> bool {
        self.masks[s] & (1 << i) != 0
    }
}

/// A vector of candidate principal curvatures, stored in the given order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("spectrum has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sorted_desc(&self) -> Spectrum {
        let mut v = self.0.clone();
        v.sort_by(|a, b| b.total_cmp(a));
        Spectrum(v)
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn scaled(&self, t: f64) -> Spectrum {
        Spectrum(self.0.iter().map(|v| v * t).collect())
    }
}

impl fmt::Display for Spectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Value, gradient and second-derivative blocks of `F` (or `F̃`) in the
/// eigen frame.
#[derive(Debug, Clone)]
pub struct OperatorJet {
    pub value_f: f64,
    pub value_ft: f64,
    pub grad_diag: Vec<f64>,
    pub hess_diag: DMatrix<f64>,
    /// `F^{kr,rk}` for `k ≠ r`; zero diagonal.
    pub hess_off: DMatrix<f64>,
}

/// `F̃` and its first derivative on symmetric matrices.
#[derive(Debug, Clone)]
pub struct MatrixJet {
    pub value: f64,
    pub d_a: DMatrix<f64>,
    /// `F̃^{kk}` in the eigen frame, aligned with `eigvals`.
    pub grad_eigen: Vec<f64>,
    pub eigvals: Spectrum,
    pub eigvecs: DMatrix<f64>,
}

fn check_dim(lam: &Spectrum, spec: &PSpec) -> Result<()> {
    if lam.len() != spec.n {
        return Err(Error::InvalidArgument(format!(
            "spectrum has {} entries, expected {}",
            lam.len(),
            spec.n
        )));
    }
    Ok(())
}

/// Neumaier-compensated sum; near the cone boundary the p-sums cancel
/// heavily and plain summation loses most of their relative accuracy.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

pub fn subset_sums(lam: &Spectrum, spec: &PSpec) -> Vec<f64> {
    let v = lam.values();
    spec.subsets
        .iter()
        .map(|s| compensated_sum(s.iter().map(|&i| v[i])))
        .collect()
}

/// Smallest p-subset sum, i.e. the sum of the p smallest entries.
pub fn min_p_sum(lam: &Spectrum, spec: &PSpec) -> f64 {
    let mut v = lam.values().to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    compensated_sum(v.iter().take(spec.p).copied())
}

pub fn in_cone(lam: &Spectrum, spec: &PSpec, margin: f64) -> bool {
    min_p_sum(lam, spec) > margin
}

/// Scale-aware default cone margin `1e-10·(1 + |λ|∞)`.
pub fn default_margin(lam: &Spectrum) -> f64 {
    1e-10 * (1.0 + lam.sup_norm())
}

fn cone_sums(lam: &Spectrum, spec: &PSpec) -> Result<Vec<f64>> {
    check_dim(lam, spec)?;
    let sums = subset_sums(lam, spec);
    let min_sum = sums.iter().copied().fold(f64::INFINITY, f64::min);
    if min_sum <= 0.0 {
        return Err(Error::NotInCone {
            p: spec.p,
            min_sum,
        });
    }
    Ok(sums)
}

pub fn eval_f(lam: &Spectrum, spec: &PSpec) -> Result<f64> {
    check_dim(lam, spec)?;
    let sums = subset_sums(lam, spec);
    let value = if sums.iter().all(|&s| s > 0.0) {
        let log_sum: f64 = sums.iter().map(|s| s.ln()).sum();
        log_sum.exp()
    } else {
        sums.iter().product()
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Overflow)
    }
}

pub fn eval_ft(lam: &Spectrum, spec: &PSpec) -> Result<f64> {
    let sums = cone_sums(lam, spec)?;
    let mean_log = sums.iter().map(|s| s.ln()).sum::<f64>() / sums.len() as f64;
    Ok(mean_log.exp())
}

/// Scale-free pieces shared by all jets: `g_k = F^{kk}/F`,
/// `d_kl = F^{kk,ll}/F` and `o_kr = F^{kr,rk}/F`.
struct NormalizedJet {
    log_f: f64,
    g: Vec<f64>,
    d: DMatrix<f64>,
    o: DMatrix<f64>,
}

fn normalized_jet(lam: &Spectrum, spec: &PSpec, second: bool) -> Result<NormalizedJet> {
    let sums = cone_sums(lam, spec)?;
    let n = spec.n;
    let inv: Vec<f64> = sums.iter().map(|s| 1.0 / s).collect();
    let log_f = sums.iter().map(|s| s.ln()).sum();

    let mut g = vec![0.0; n];
    for (s, subset) in spec.subsets.iter().enumerate() {
        for &k in subset {
            g[k] += inv[s];
        }
    }

    let mut d = DMatrix::zeros(n, n);
    let mut o = DMatrix::zeros(n, n);
    if second {
        // Pairs S ≠ T with k ∈ S, l ∈ T: g_k g_l minus the diagonal S = T terms.
        let mut same = DMatrix::<f64>::zeros(n, n);
        for (s, subset) in spec.subsets.iter().enumerate() {
            let sq = inv[s] * inv[s];
            for &k in subset {
                for &l in subset {
                    same[(k, l)] += sq;
                }
            }
        }
        for k in 0..n {
            for l in 0..n {
                d[(k, l)] = g[k] * g[l] - same[(k, l)];
            }
        }
        // Matched pairs: S ∌ k, S ∋ r and T = S \ {r} ∪ {k}.
        for (s, &mask) in spec.masks.iter().enumerate() {
            for r in 0..n {
                if !spec.contains(s, r) {
                    continue;
                }
                for k in 0..n {
                    if spec.contains(s, k) {
                        continue;
                    }
                    let t = spec.lookup[((mask & !(1 << r)) | (1 << k)) as usize];
                    o[(k, r)] -= inv[s] * inv[t];
                }
            }
        }
    }
    Ok(NormalizedJet { log_f, g, d, o })
}

pub fn grad_diag(lam: &Spectrum, spec: &PSpec) -> Result<Vec<f64>> {
    let nj = normalized_jet(lam, spec, false)?;
    let f = finite(nj.log_f.exp())?;
    Ok(nj.g.iter().map(|g| f * g).collect())
}

/// Returns `(F^{kk,ll}, F^{kr,rk})`.
pub fn hess_blocks(lam: &Spectrum, spec: &PSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let nj = normalized_jet(lam, spec, true)?;
    let f = finite(nj.log_f.exp())?;
    Ok((nj.d * f, nj.o * f))
}

/// Jet of `F` itself.
pub fn operator_jet(lam: &Spectrum, spec: &PSpec) -> Result<OperatorJet> {
    let nj = normalized_jet(lam, spec, true)?;
    let f = finite(nj.log_f.exp())?;
    let m = spec.m() as f64;
    Ok(OperatorJet {
        value_f: f,
        value_ft: (nj.log_f / m).exp(),
        grad_diag: nj.g.iter().map(|g| f * g).collect(),
        hess_diag: nj.d * f,
        hess_off: nj.o * f,
    })
}

/// Jet of `F̃ = F^{1/m}` by the chain rule, computed without forming `F`
/// where possible.
///
/// `value_f` is `+∞` when `F` itself overflows; the `F̃` quantities stay
/// finite.
pub fn tilde_jet(lam: &Spectrum, spec: &PSpec) -> Result<OperatorJet> {
    let nj = normalized_jet(lam, spec, true)?;
    Ok(tilde_from_normalized(&nj, spec, true))
}

fn tilde_from_normalized(nj: &NormalizedJet, spec: &PSpec, second: bool) -> OperatorJet {
    let n = spec.n;
    let m = spec.m() as f64;
    let ft = (nj.log_f / m).exp();
    let c = ft / m;
    let grad = nj.g.iter().map(|g| c * g).collect();
    let (hess_diag, hess_off) = if second {
        let mut hd = DMatrix::zeros(n, n);
        for k in 0..n {
            for l in 0..n {
                hd[(k, l)] = c * ((1.0 / m - 1.0) * nj.g[k] * nj.g[l] + nj.d[(k, l)]);
            }
        }
        (hd, &nj.o * c)
    } else {
        (DMatrix::zeros(n, n), DMatrix::zeros(n, n))
    };
    OperatorJet {
        value_f: nj.log_f.exp(),
        value_ft: ft,
        grad_diag: grad,
        hess_diag,
        hess_off,
    }
}

/// `F̃` on a symmetric matrix together with `∂F̃/∂A = b diag(F̃^{kk}) bᵀ`.
pub fn matrix_jet(a: &DMatrix<f64>, spec: &PSpec) -> Result<MatrixJet> {
    if a.nrows() != spec.n || a.ncols() != spec.n {
        return Err(Error::InvalidArgument(format!(
            "matrix is {}x{}, expected {}x{}",
            a.nrows(),
            a.ncols(),
            spec.n,
            spec.n
        )));
    }
    let eig = symmetric_eigen(a)?;
    let eigvals = Spectrum::new(eig.values.iter().copied().collect())?;
    let nj = normalized_jet(&eigvals, spec, false)?;
    let jet = tilde_from_normalized(&nj, spec, false);
    let b = &eig.vectors;
    let mut d_a = DMatrix::zeros(spec.n, spec.n);
    for s in 0..spec.n {
        let col = b.column(s);
        d_a += jet.grad_diag[s] * col * col.transpose();
    }
    Ok(MatrixJet {
        value: jet.value_ft,
        d_a,
        grad_eigen: jet.grad_diag,
        eigvals,
        eigvecs: eig.vectors,
    })
}

/// Smallest `R ≥ 0` on the increasing branch with
/// `F(λ₁, …, λ_{n-1}, λ_n + R) ≥ c`, to absolute accuracy `1e-8`.
///
/// The leading `n − 1` entries must have positive p-sums. When some factor
/// containing `λ_n` is non-positive, the search starts where all of them
/// first become positive.
pub fn growth_radius(c: f64, lam: &Spectrum, spec: &PSpec) -> Result<f64> {
    check_dim(lam, spec)?;
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::GrowthHypothesis(format!("target {c} must be positive")));
    }
    let n = spec.n;
    let v = lam.values();
    let last = n - 1;
    if spec.p < n {
        let mut head = v[..last].to_vec();
        head.sort_by(|a, b| a.total_cmp(b));
        let head_min: f64 = head.iter().take(spec.p).sum();
        if head_min <= 0.0 {
            return Err(Error::GrowthHypothesis(format!(
                "leading entries have p-sum {head_min:e} <= 0"
            )));
        }
    }
    let with_last: Vec<usize> = (0..spec.m()).filter(|&s| spec.contains(s, last)).collect();
    let base = subset_sums(lam, spec);
    let shift0 = with_last
        .iter()
        .map(|&s| -base[s])
        .fold(0.0f64, f64::max);

    let value_at = |r: f64| -> f64 {
        let mut shifted = v.to_vec();
        shifted[last] += r;
        let sums = subset_sums(&Spectrum(shifted), spec);
        let log_sum: f64 = sums.iter().map(|s| s.ln()).sum();
        log_sum.exp()
    };

    if shift0 == 0.0 && value_at(0.0) >= c {
        return Ok(0.0);
    }
    let mut lo = shift0;
    let mut width = 1.0f64.max(shift0);
    let mut hi = lo + width;
    let mut guard = 0;
    while value_at(hi) < c {
        lo = hi;
        width *= 2.0;
        hi = lo + width;
        guard += 1;
        if guard > 2000 || !hi.is_finite() {
            return Err(Error::GrowthHypothesis("radius bracket not found".into()));
        }
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if value_at(mid) >= c {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow)
    }
}
