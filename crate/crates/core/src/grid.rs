//! Lattice discretization of a strictly convex domain with curved-boundary
//! (Shortley–Weller) finite differences and homogeneous Dirichlet data.
//!
//! Every interior lattice node carries, for each axis direction `e_i` and
//! each diagonal direction `e_i ± e_j`, the two arm lengths to the next
//! interior node or to the boundary crossing along that line. Boundary
//! crossings carry the value 0, so stencils only reference interior nodes.
//!
//! Pure second derivatives use the unequal-arm three-point formula along the
//! axes. Mixed derivatives use `u_ij = (∂²_{d₊} u − ∂²_{d₋} u)/2` with
//! `d± = (e_i ± e_j)/√2`, each directional second derivative taken with the
//! same unequal-arm formula. With all diagonal neighbours present this is
//! the 4-point cross formula.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::fexpr::{Env, Expr};

const PHI_INTERIOR: f64 = -1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    Ball { radius: f64 },
    Ellipsoid { semi_axes: Vec<f64> },
    /// `Ω = {φ < 0}` inside the cube `[-half_width, half_width]ⁿ`.
    LevelSet { phi: Expr, half_width: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    kind: DomainKind,
    dim: usize,
}

impl Domain {
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("ball radius {radius} must be positive")));
        }
        Self::checked(DomainKind::Ball { radius }, dim)
    }

    pub fn ellipsoid(semi_axes: Vec<f64>) -> Result<Self> {
        if semi_axes.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidArgument("semi-axes must be positive".into()));
        }
        let dim = semi_axes.len();
        Self::checked(DomainKind::Ellipsoid { semi_axes }, dim)
    }

    pub fn level_set(phi: Expr, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidArgument("half width must be positive".into()));
        }
        let dim = phi.dim();
        let dom = Self::checked(DomainKind::LevelSet { phi, half_width }, dim)?;
        dom.check_contained()?;
        Ok(dom)
    }

    fn checked(kind: DomainKind, dim: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "PDE grids support n in {{2, 3}}, got {dim}"
            )));
        }
        let dom = Self { kind, dim };
        dom.check_convexity()?;
        Ok(dom)
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Defining function, negative inside. Ball and ellipsoid use
    /// `Σ (x_i/a_i)² − 1`, so their minimum is exactly −1.
    pub fn phi(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DomainKind::Ball { radius } => x.iter().map(|v| v * v).sum::<f64>() / (radius * radius) - 1.0,
            DomainKind::Ellipsoid { semi_axes } => {
                x.iter().zip(semi_axes).map(|(v, a)| (v / a) * (v / a)).sum::<f64>() - 1.0
            }
            DomainKind::LevelSet { phi, .. } => {
                let mut nu = vec![0.0; self.dim + 1];
                nu[self.dim] = 1.0;
                let env = Env {
                    x: x.to_vec(),
                    z: 0.0,
                    nu,
                };
                phi.eval(&env).unwrap_or(f64::INFINITY)
            }
        }
    }

    pub fn half_extent(&self) -> Vec<f64> {
        match &self.kind {
            DomainKind::Ball { radius } => vec![*radius; self.dim],
            DomainKind::Ellipsoid { semi_axes } => semi_axes.clone(),
            DomainKind::LevelSet { half_width, .. } => vec![*half_width; self.dim],
        }
    }

    fn phi_hessian(&self, x: &[f64], step: f64) -> DMatrix<f64> {
        let n = self.dim;
        let f0 = self.phi(x);
        let shifted = |d: &[(usize, f64)]| {
            let mut y = x.to_vec();
            for &(i, s) in d {
                y[i] += s;
            }
            self.phi(&y)
        };
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                (shifted(&[(i, step)]) - 2.0 * f0 + shifted(&[(i, -step)])) / (step * step)
            } else {
                (shifted(&[(i, step), (j, step)]) - shifted(&[(i, step), (j, -step)])
                    - shifted(&[(i, -step), (j, step)])
                    + shifted(&[(i, -step), (j, -step)]))
                    / (4.0 * step * step)
            }
        })
    }

    /// Sampled check that `D²φ` is positive definite on the bounding box.
    pub fn check_convexity(&self) -> Result<()> {
        let ext = self.half_extent();
        let per_axis = 7usize;
        let n = self.dim;
        let total = per_axis.pow(n as u32);
        for k in 0..total {
            let mut rem = k;
            let x: Vec<f64> = (0..n)
                .map(|i| {
                    let c = rem % per_axis;
                    rem /= per_axis;
                    ext[i] * (2.0 * c as f64 / (per_axis - 1) as f64 - 1.0)
                })
                .collect();
            let step = 1e-3 * ext.iter().cloned().fold(0.0, f64::max);
            let hess = self.phi_hessian(&x, step);
            if hess.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("defining function undefined near {x:?}")));
            }
            let eig = symmetric_eigen(&hess)?;
            if eig.values.min() <= 0.0 {
                return Err(Error::Domain(format!(
                    "defining function is not strictly convex near {x:?} (min eigenvalue {:e})",
                    eig.values.min()
                )));
            }
        }
        Ok(())
    }

    fn check_contained(&self) -> Result<()> {
        let ext = self.half_extent();
        let n = self.dim;
        let per_axis = 9usize;
        for face in 0..n {
            for sign in [-1.0, 1.0] {
                for k in 0..per_axis.pow((n - 1) as u32) {
                    let mut rem = k;
                    let x: Vec<f64> = (0..n)
                        .map(|i| {
                            if i == face {
                                sign * ext[i]
                            } else {
                                let c = rem % per_axis;
                                rem /= per_axis;
                                ext[i] * (2.0 * c as f64 / (per_axis - 1) as f64 - 1.0)
                            }
                        })
                        .collect();
                    if self.phi(&x) <= 0.0 {
                        return Err(Error::Domain(format!(
                            "domain is not contained in its bounding box (phi <= 0 at {x:?})"
                        )));
                    }
                }
            }
        }
        if self.phi(&vec![0.0; n]) >= 0.0 {
            return Err(Error::Domain("level-set domain must contain the origin".into()));
        }
        Ok(())
    }

    /// Distance from `x` (inside) to the boundary along unit direction `dir`.
    fn ray_distance(&self, x: &[f64], dir: &[f64], max_len: f64) -> Option<f64> {
        let at = |t: f64| -> f64 {
            let y: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + t * d).collect();
            self.phi(&y)
        };
        if at(max_len) < 0.0 {
            return None;
        }
        Some(bisect_root(&at, 0.0, max_len, 1e-12 * max_len))
    }

    /// Radius of the largest inscribed ball. Exact for balls and ellipsoids;
    /// for level sets, estimated from lattice samples by the shortest ray to
    /// the boundary among axis and diagonal directions.
    pub fn inradius(&self) -> f64 {
        match &self.kind {
            DomainKind::Ball { radius } => *radius,
            DomainKind::Ellipsoid { semi_axes } => semi_axes.iter().cloned().fold(f64::INFINITY, f64::min),
            DomainKind::LevelSet { half_width, .. } => {
                let n = self.dim;
                let dirs = unit_directions(n);
                let per_axis = 21usize;
                let max_len = 2.0 * half_width * (n as f64).sqrt();
                let mut best = 0.0f64;
                for k in 0..per_axis.pow(n as u32) {
                    let mut rem = k;
                    let x: Vec<f64> = (0..n)
                        .map(|_| {
                            let c = rem % per_axis;
                            rem /= per_axis;
                            half_width * (2.0 * c as f64 / (per_axis - 1) as f64 - 1.0)
                        })
                        .collect();
                    if self.phi(&x) >= 0.0 {
                        continue;
                    }
                    let d = dirs
                        .iter()
                        .flat_map(|d| {
                            let neg: Vec<f64> = d.iter().map(|v| -v).collect();
                            [self.ray_distance(&x, d, max_len), self.ray_distance(&x, &neg, max_len)]
                        })
                        .map(|v| v.unwrap_or(max_len))
                        .fold(f64::INFINITY, f64::min);
                    best = best.max(d);
                }
                best
            }
        }
    }

    /// Minimum of `φ` over Ω. Exact for balls and ellipsoids; sampled on
    /// the given points for level sets.
    pub fn phi_min(&self, samples: &[Vec<f64>]) -> f64 {
        match &self.kind {
            DomainKind::Ball { .. } | DomainKind::Ellipsoid { .. } => -1.0,
            DomainKind::LevelSet { .. } => samples
                .iter()
                .map(|x| self.phi(x))
                .fold(f64::INFINITY, f64::min),
        }
    }
}

fn unit_directions(n: usize) -> Vec<Vec<f64>> {
    lattice_directions(n)
        .into_iter()
        .map(|d| {
            let norm = (d.iter().map(|v| (v * v) as f64).sum::<f64>()).sqrt();
            d.iter().map(|&v| v as f64 / norm).collect()
        })
        .collect()
}

/// Axis directions `e_i` followed by `e_i + e_j`, `e_i − e_j` for `i < j`.
fn lattice_directions(n: usize) -> Vec<Vec<i64>> {
    let mut dirs = Vec::new();
    for i in 0..n {
        let mut d = vec![0; n];
        d[i] = 1;
        dirs.push(d);
    }
    for i in 0..n {
        for j in i + 1..n {
            for s in [1, -1] {
                let mut d = vec![0; n];
                d[i] = 1;
                d[j] = s;
                dirs.push(d);
            }
        }
    }
    dirs
}

fn bisect_root(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    // f(lo) < 0 <= f(hi)
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One side of a node along a lattice direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arm {
    /// Euclidean length of the arm.
    pub len: f64,
    /// Interior neighbour, or `None` when the arm ends on the boundary.
    pub neighbor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub index: Vec<i64>,
    pub x: Vec<f64>,
}

/// Sparse linear combination of interior node values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stencil {
    pub entries: Vec<(usize, f64)>,
}

impl Stencil {
    fn from_terms(mut terms: Vec<(usize, f64)>) -> Self {
        terms.sort_by_key(|t| t.0);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (k, c) in terms {
            match entries.last_mut() {
                Some(last) if last.0 == k => last.1 += c,
                _ => entries.push((k, c)),
            }
        }
        entries.retain(|e| e.1 != 0.0);
        Self { entries }
    }

    pub fn apply(&self, values: &[f64]) -> f64 {
        self.entries.iter().map(|&(k, c)| c * values[k]).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    h: f64,
    dim: usize,
    nodes: Vec<Node>,
    directions: Vec<Vec<i64>>,
    /// `arms[node][dir] = [plus, minus]`.
    arms: Vec<Vec<[Arm; 2]>>,
    grad: Vec<Vec<Stencil>>,
    /// Upper triangle, row-major: `(i, j)` with `i <= j`.
    hess: Vec<Vec<Stencil>>,
}

/// Nodal values of a discrete function; boundary values are implicitly 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        Self {
            values: grid.nodes.iter().map(|nd| f(&nd.x)).collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// CSV with header `i1,…,in,x1,…,xn,u`.
    pub fn to_csv(&self, grid: &Grid) -> String {
        let n = grid.dim;
        let mut out = String::new();
        let cols: Vec<String> = (1..=n)
            .map(|i| format!("i{i}"))
            .chain((1..=n).map(|i| format!("x{i}")))
            .chain(std::iter::once("u".to_string()))
            .collect();
        out.push_str(&cols.join(","));
        out.push('\n');
        for (node, u) in grid.nodes.iter().zip(&self.values) {
            for i in &node.index {
                let _ = write!(out, "{i},");
            }
            for x in &node.x {
                let _ = write!(out, "{x},");
            }
            let _ = writeln!(out, "{u}");
        }
        out
    }
}

fn hess_slot(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

/// Unequal-arm weights `(plus, minus, centre)` for the first derivative.
fn first_weights(hp: f64, hm: f64) -> (f64, f64, f64) {
    let denom = hp * hm * (hp + hm);
    (hm * hm / denom, -hp * hp / denom, (hp * hp - hm * hm) / denom)
}

/// Shortley–Weller weights `(plus, minus, centre)` for the second derivative.
fn second_weights(hp: f64, hm: f64) -> (f64, f64, f64) {
    let denom = hp * hm * (hp + hm);
    (2.0 * hm / denom, 2.0 * hp / denom, -2.0 * (hp + hm) / denom)
}

pub fn build_grid(dom: &Domain, h: f64) -> Result<Grid> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("grid spacing {h} must be positive")));
    }
    let inradius = dom.inradius();
    if h > 0.5 * inradius {
        return Err(Error::InvalidArgument(format!(
            "grid spacing {h} exceeds half the inradius {inradius}"
        )));
    }
    let n = dom.dim();
    let ext = dom.half_extent();
    let lo: Vec<i64> = ext.iter().map(|e| (-e / h).ceil() as i64 - 1).collect();
    let hi: Vec<i64> = ext.iter().map(|e| (e / h).floor() as i64 + 1).collect();
    let shape: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| (b - a + 1) as usize).collect();
    let total: usize = shape.iter().product();

    let flat = |idx: &[i64]| -> Option<usize> {
        let mut k = 0usize;
        for d in (0..n).rev() {
            if idx[d] < lo[d] || idx[d] > hi[d] {
                return None;
            }
            k = k * shape[d] + (idx[d] - lo[d]) as usize;
        }
        Some(k)
    };

    let mut lookup = vec![usize::MAX; total];
    let mut nodes = Vec::new();
    for k in 0..total {
        let mut rem = k;
        let index: Vec<i64> = (0..n)
            .map(|d| {
                let c = rem % shape[d];
                rem /= shape[d];
                lo[d] + c as i64
            })
            .collect();
        let x: Vec<f64> = index.iter().map(|&i| i as f64 * h).collect();
        if dom.phi(&x) < PHI_INTERIOR {
            lookup[k] = nodes.len();
            nodes.push(Node { index, x });
        }
    }
    if nodes.is_empty() {
        return Err(Error::EmptyGrid);
    }

    let directions = lattice_directions(n);
    let mut arms = Vec::with_capacity(nodes.len());
    for (id, node) in nodes.iter().enumerate() {
        let mut per_dir = Vec::with_capacity(directions.len());
        for d in &directions {
            let full = h * (d.iter().map(|v| (v * v) as f64).sum::<f64>()).sqrt();
            let mut pair = [Arm {
                len: full,
                neighbor: None,
            }; 2];
            for (side, sign) in [1i64, -1].into_iter().enumerate() {
                let nb: Vec<i64> = node.index.iter().zip(d).map(|(a, b)| a + sign * b).collect();
                let found = flat(&nb).map(|k| lookup[k]).filter(|&v| v != usize::MAX);
                pair[side] = match found {
                    Some(j) => Arm {
                        len: full,
                        neighbor: Some(j),
                    },
                    None => {
                        let dir: Vec<f64> = d.iter().map(|&v| sign as f64 * v as f64 * h).collect();
                        let at = |t: f64| -> f64 {
                            let y: Vec<f64> = node.x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                            dom.phi(&y)
                        };
                        if !(at(1.0) >= PHI_INTERIOR) || !(at(0.0) < 0.0) {
                            return Err(Error::Bisection { node: id });
                        }
                        let t = bisect_root(&at, 0.0, 1.0, 0.0);
                        if !(t > 0.0 && t <= 1.0) {
                            return Err(Error::Bisection { node: id });
                        }
                        Arm {
                            len: t * full,
                            neighbor: None,
                        }
                    }
                };
            }
            per_dir.push(pair);
        }
        arms.push(per_dir);
    }

    let mut grid = Grid {
        h,
        dim: n,
        nodes,
        directions,
        arms,
        grad: Vec::new(),
        hess: Vec::new(),
    };
    grid.build_stencils();
    Ok(grid)
}

impl Grid {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn directions(&self) -> &[Vec<i64>] {
        &self.directions
    }

    /// `[plus, minus]` arms of `node` along direction `dir`.
    pub fn arms(&self, node: usize, dir: usize) -> [Arm; 2] {
        self.arms[node][dir]
    }

    /// Direction index of `e_i + sign·e_j` for `i < j`.
    fn diagonal_dir(&self, i: usize, j: usize, plus: bool) -> usize {
        let n = self.dim;
        let mut k = n;
        for a in 0..n {
            for b in a + 1..n {
                if (a, b) == (i, j) {
                    return k + usize::from(!plus);
                }
                k += 2;
            }
        }
        unreachable!("no diagonal direction for ({i}, {j})")
    }

    fn line_terms(&self, node: usize, dir: usize, second: bool, scale: f64, out: &mut Vec<(usize, f64)>) {
        let [plus, minus] = self.arms[node][dir];
        let (cp, cm, c0) = if second {
            second_weights(plus.len, minus.len)
        } else {
            first_weights(plus.len, minus.len)
        };
        if let Some(k) = plus.neighbor {
            out.push((k, scale * cp));
        }
        if let Some(k) = minus.neighbor {
            out.push((k, scale * cm));
        }
        out.push((node, scale * c0));
    }

    fn build_stencils(&mut self) {
        let n = self.dim;
        let mut grad = Vec::with_capacity(self.nodes.len());
        let mut hess = Vec::with_capacity(self.nodes.len());
        for node in 0..self.nodes.len() {
            let g: Vec<Stencil> = (0..n)
                .map(|i| {
                    let mut t = Vec::new();
                    self.line_terms(node, i, false, 1.0, &mut t);
                    Stencil::from_terms(t)
                })
                .collect();
            let mut hs = vec![Stencil::default(); n * (n + 1) / 2];
            for i in 0..n {
                let mut t = Vec::new();
                self.line_terms(node, i, true, 1.0, &mut t);
                hs[hess_slot(n, i, i)] = Stencil::from_terms(t);
                for j in i + 1..n {
                    let mut t = Vec::new();
                    // Unit diagonal second derivatives: ∂²_{d±} = (u_ii ± 2u_ij + u_jj)/2.
                    self.line_terms(node, self.diagonal_dir(i, j, true), true, 0.5, &mut t);
                    self.line_terms(node, self.diagonal_dir(i, j, false), true, -0.5, &mut t);
                    hs[hess_slot(n, i, j)] = Stencil::from_terms(t);
                }
            }
            grad.push(g);
            hess.push(hs);
        }
        self.grad = grad;
        self.hess = hess;
    }

    pub fn grad_stencil(&self, node: usize, axis: usize) -> &Stencil {
        &self.grad[node][axis]
    }

    pub fn hess_stencil(&self, node: usize, i: usize, j: usize) -> &Stencil {
        &self.hess[node][hess_slot(self.dim, i, j)]
    }

    pub fn coords(&self) -> Vec<Vec<f64>> {
        self.nodes.iter().map(|nd| nd.x.clone()).collect()
    }
}

pub fn fd_gradient(u: &Field, g: &Grid, node: usize) -> DVector<f64> {
    DVector::from_fn(g.dim, |i, _| g.grad_stencil(node, i).apply(&u.values))
}

pub fn fd_hessian(u: &Field, g: &Grid, node: usize) -> DMatrix<f64> {
    DMatrix::from_fn(g.dim, g.dim, |i, j| g.hess_stencil(node, i, j).apply(&u.values))
}
