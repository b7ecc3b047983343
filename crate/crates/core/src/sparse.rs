//! Compressed sparse rows, ILU(0) and right-preconditioned restarted GMRES
//! for the nonsymmetric Newton systems.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicates are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, ncols: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let start = col_idx.len();
            for (c, v) in row {
                assert!(c < ncols, "column {c} out of range");
                if col_idx.len() > start && col_idx[col_idx.len() - 1] == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        });
    }
}

/// Incomplete LU factorization with the sparsity pattern of `A`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let mut lu = a.clone();
        let mut diag = vec![usize::MAX; n];
        for (i, d) in diag.iter_mut().enumerate() {
            for k in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.col_idx[k] == i {
                    *d = k;
                }
            }
            if *d == usize::MAX {
                return Err(Error::InvalidArgument(format!("ILU(0): row {i} has no diagonal entry")));
            }
        }
        let mut pos = vec![usize::MAX; a.ncols()];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in start..end {
                pos[lu.col_idx[k]] = k;
            }
            for k in start..end {
                let col = lu.col_idx[k];
                if col >= i {
                    break;
                }
                let pivot = lu.values[diag[col]];
                let lik = lu.values[k] / pivot;
                lu.values[k] = lik;
                for kk in diag[col] + 1..lu.row_ptr[col + 1] {
                    let j = lu.col_idx[kk];
                    if pos[j] != usize::MAX {
                        lu.values[pos[j]] -= lik * lu.values[kk];
                    }
                }
            }
            for k in start..end {
                pos[lu.col_idx[k]] = usize::MAX;
            }
            let d = lu.values[diag[i]];
            if d == 0.0 || !d.is_finite() {
                return Err(Error::InvalidArgument(format!("ILU(0): zero pivot at row {i}")));
            }
        }
        Ok(Self { lu, diag })
    }

    /// Overwrites `x` with `(LU)⁻¹ x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let mut s = x[i];
            for k in self.lu.row_ptr[i]..self.diag[i] {
                s -= self.lu.values[k] * x[self.lu.col_idx[k]];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in self.diag[i] + 1..self.lu.row_ptr[i + 1] {
                s -= self.lu.values[k] * x[self.lu.col_idx[k]];
            }
            x[i] = s / self.lu.values[self.diag[i]];
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iter: usize,
    /// Target for `‖b − Ax‖ / ‖b‖`.
    pub tol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            restart: 60,
            max_iter: 3000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.par_iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_iter().zip(b).map(|(x, y)| x * y).sum()
}

fn true_residual(a: &CsrMatrix, b: &[f64], x: &[f64], r: &mut [f64]) -> f64 {
    a.mul_vec(x, r);
    r.par_iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    norm(r)
}

/// Solves `A x = b` starting from the given `x`; fails with
/// [`Error::LinearSolve`] when the tolerance is not met.
pub fn gmres(a: &CsrMatrix, b: &[f64], x: &mut [f64], m: &Ilu0, opts: GmresOptions) -> Result<GmresOutcome> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(GmresOutcome {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let restart = opts.restart.max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut iterations = 0;
    let mut rel = true_residual(a, b, x, &mut r) / bnorm;
    while rel > opts.tol && iterations < opts.max_iter {
        let beta = rel * bnorm;
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k = 0;
        while k < restart && iterations < opts.max_iter {
            z.copy_from_slice(&basis[k]);
            m.solve_in_place(&mut z);
            a.mul_vec(&z, &mut w);
            for (j, v) in basis.iter().enumerate() {
                let hjk = dot(&w, v);
                hess[j][k] = hjk;
                w.par_iter_mut().zip(v).for_each(|(wi, vi)| *wi -= hjk * vi);
            }
            let wn = norm(&w);
            hess[k + 1][k] = wn;
            for j in 0..k {
                let t = cs[j] * hess[j][k] + sn[j] * hess[j + 1][k];
                hess[j + 1][k] = -sn[j] * hess[j][k] + cs[j] * hess[j + 1][k];
                hess[j][k] = t;
            }
            let rho = hess[k][k].hypot(hess[k + 1][k]);
            if rho == 0.0 {
                break;
            }
            cs[k] = hess[k][k] / rho;
            sn[k] = hess[k + 1][k] / rho;
            hess[k][k] = rho;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k += 1;
            if g[k].abs() / bnorm <= opts.tol || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // Back-substitute the k×k triangular system and update x.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| hess[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        z.iter_mut().for_each(|v| *v = 0.0);
        for (yi, v) in y.iter().zip(&basis) {
            z.par_iter_mut().zip(v).for_each(|(zi, vi)| *zi += yi * vi);
        }
        m.solve_in_place(&mut z);
        x.par_iter_mut().zip(&z).for_each(|(xi, zi)| *xi += zi);
        let new_rel = true_residual(a, b, x, &mut r) / bnorm;
        if k == 0 || !new_rel.is_finite() {
            rel = new_rel;
            break;
        }
        rel = new_rel;
    }
    if rel <= opts.tol {
        Ok(GmresOutcome {
            iterations,
            rel_residual: rel,
        })
    } else {
        Err(Error::LinearSolve {
            rel_residual: rel,
            iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn convection_diffusion(k: usize) -> CsrMatrix {
        // 2-D five-point Laplacian plus an upwind convection term.
        let n = k * k;
        let rows = (0..n)
            .map(|idx| {
                let (i, j) = (idx % k, idx / k);
                let mut row = vec![(idx, 4.0 + 0.3)];
                if i > 0 {
                    row.push((idx - 1, -1.0 - 0.3));
                }
                if i + 1 < k {
                    row.push((idx + 1, -1.0));
                }
                if j > 0 {
                    row.push((idx - k, -1.0));
                }
                if j + 1 < k {
                    row.push((idx + k, -1.0));
                }
                row
            })
            .collect();
        CsrMatrix::from_rows(rows, n)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::from_rows(vec![vec![(1, 2.0), (0, 1.0), (1, 3.0)], vec![(1, 1.0)]], 2);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.row(0), (&[0usize, 1][..], &[1.0, 5.0][..]));
    }

    #[test]
    fn ilu_is_exact_for_tridiagonal() {
        let n = 20;
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 3.0 + i as f64 * 0.1)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.3));
                }
                r
            })
            .collect();
        let a = CsrMatrix::from_rows(rows, n);
        let ilu = Ilu0::new(&a).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&x, &mut b);
        ilu.solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn gmres_matches_dense_solve() {
        let a = convection_diffusion(30);
        let n = a.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ilu = Ilu0::new(&a).unwrap();
        let mut x = vec![0.0; n];
        let out = gmres(&a, &b, &mut x, &ilu, GmresOptions::default()).unwrap();
        assert!(out.rel_residual <= 1e-10);

        let dense = DMatrix::from_fn(n, n, |i, j| {
            let (cols, vals) = a.row(i);
            cols.iter().position(|&c| c == j).map_or(0.0, |k| vals[k])
        });
        let exact = dense.lu().solve(&DVector::from_vec(b)).unwrap();
        let err = exact.iter().zip(&x).fold(0.0f64, |m, (e, v)| m.max((e - v).abs()));
        assert!(err < 1e-8 * exact.amax());
    }

    #[test]
    fn gmres_reports_failure() {
        let a = convection_diffusion(30);
        let b = vec![1.0; a.nrows()];
        let ilu = Ilu0::new(&a).unwrap();
        let mut x = vec![0.0; a.nrows()];
        let opts = GmresOptions {
            restart: 2,
            max_iter: 2,
            tol: 1e-14,
        };
        assert!(matches!(gmres(&a, &b, &mut x, &ilu, opts), Err(Error::LinearSolve { .. })));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = convection_diffusion(4);
        let ilu = Ilu0::new(&a).unwrap();
        let mut x = vec![1.0; 16];
        let out = gmres(&a, &[0.0; 16], &mut x, &ilu, GmresOptions::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(x.iter().all(|v| *v == 0.0));
    }
}
