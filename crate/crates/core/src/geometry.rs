//! Pointwise calculus of the graph `x ↦ (x, u(x))`.
//!
//! Everything here is a pure function of `(Du, D²u)`. The principal
//! curvatures are the eigenvalues of the symmetric matrix
//! `a = (1/w) γ⁻¹ D²u γ⁻¹`, where `γ` is the symmetric square root of the
//! induced metric `g = I + Du ⊗ Du`, and the normal is the upward one.

use nalgebra::{DMatrix, DVector};

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::symfunc::{matrix_jet, min_p_sum, PSpec, Spectrum};

#[derive(Debug, Clone, PartialEq)]
pub struct GraphPoint {
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl GraphPoint {
    pub fn new(grad: DVector<f64>, hess: DMatrix<f64>) -> Result<Self> {
        let n = grad.len();
        if hess.nrows() != n || hess.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "Hessian is {}x{}, gradient has {} entries",
                hess.nrows(),
                hess.ncols(),
                n
            )));
        }
        let scale = hess.amax().max(1.0);
        if (&hess - hess.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidArgument("Hessian is not symmetric".into()));
        }
        Ok(Self { grad, hess })
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }
}

#[derive(Debug, Clone)]
pub struct GraphJet {
    pub w: f64,
    pub g_lower: DMatrix<f64>,
    pub g_upper: DMatrix<f64>,
    pub gamma_lower: DMatrix<f64>,
    pub gamma_upper: DMatrix<f64>,
    pub a: DMatrix<f64>,
    /// Principal curvatures, sorted descending.
    pub kappa: Spectrum,
    /// Upward unit normal `(-Du, 1)/w`.
    pub nu: DVector<f64>,
    pub h_lower: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct PdeCoefficients {
    /// `G(D²u, Du) = F̃(a)`.
    pub value: f64,
    /// `∂G/∂u_ij`.
    pub gij: DMatrix<f64>,
    /// `∂G/∂u_s`.
    pub gs: DVector<f64>,
    /// `∂ν_j/∂u_k`, shape `(n+1) × n`.
    pub d_nu: DMatrix<f64>,
    pub w: f64,
    pub nu: DVector<f64>,
    pub kappa: Spectrum,
    /// `F̃^{ii}` summed in the eigen frame, i.e. `tr ∂F̃/∂a`.
    pub trace_ft: f64,
}

pub fn graph_jet(pt: &GraphPoint) -> Result<GraphJet> {
    let n = pt.dim();
    let du = &pt.grad;
    let s = du.norm_squared();
    let w = (1.0 + s).sqrt();
    let outer = du * du.transpose();
    let id = DMatrix::<f64>::identity(n, n);

    let g_lower = &id + &outer;
    let g_upper = &id - &outer / (w * w);
    let gamma_lower = &id + &outer / (1.0 + w);
    let gamma_upper = &id - &outer / (w * (1.0 + w));
    let mut a = &gamma_upper * &pt.hess * &gamma_upper / w;
    // Exact symmetry; the triple product is symmetric up to rounding.
    a = (&a + a.transpose()) * 0.5;

    let eig = symmetric_eigen(&a)?;
    let kappa = Spectrum::new(eig.values.iter().copied().collect())?;

    let mut nu = DVector::zeros(n + 1);
    for i in 0..n {
        nu[i] = -du[i] / w;
    }
    nu[n] = 1.0 / w;

    Ok(GraphJet {
        w,
        g_lower,
        g_upper,
        gamma_lower,
        gamma_upper,
        a,
        kappa,
        nu,
        h_lower: &pt.hess / w,
    })
}

/// Value and linearization coefficients of `G(D²u, Du) = F̃(a)`.
pub fn pde_coeffs(pt: &GraphPoint, spec: &PSpec) -> Result<PdeCoefficients> {
    let n = pt.dim();
    if n != spec.n() {
        return Err(Error::InvalidArgument(format!(
            "graph point has dimension {n}, operator expects {}",
            spec.n()
        )));
    }
    let jet = graph_jet(pt)?;
    let margin = min_p_sum(&jet.kappa, spec);
    if margin <= 0.0 {
        return Err(Error::NotAdmissible { node: 0, margin });
    }
    let mj = matrix_jet(&jet.a, spec)?;
    let w = jet.w;
    let du = &pt.grad;
    let gam = &jet.gamma_upper;

    let gij = gam * &mj.d_a * gam / w;
    let gij = (&gij + gij.transpose()) * 0.5;

    // ∂G/∂u_s:
    //   -(u_s/w²) Σ F̃_i κ_i - 2/(w(1+w)) Σ F̃^{ij} a_it (w u_t γ^{sj} + u_j γ^{ts})
    let trace_ft: f64 = mj.grad_eigen.iter().sum();
    let euler: f64 = mj
        .grad_eigen
        .iter()
        .zip(mj.eigvals.values())
        .map(|(g, l)| g * l)
        .sum();
    let m_mat = &mj.d_a * &jet.a;
    let first = gam * (&m_mat * du) * w;
    let second = gam * (m_mat.transpose() * du);
    let gs = -(du * (euler / (w * w))) - (first + second) * (2.0 / (w * (1.0 + w)));

    let w3 = w * w * w;
    let mut d_nu = DMatrix::zeros(n + 1, n);
    for k in 0..n {
        for j in 0..n {
            let delta = if j == k { 1.0 } else { 0.0 };
            d_nu[(j, k)] = -delta / w + du[j] * du[k] / w3;
        }
        d_nu[(n, k)] = -du[k] / w3;
    }

    Ok(PdeCoefficients {
        value: mj.value,
        gij,
        gs,
        d_nu,
        w,
        nu: jet.nu,
        kappa: jet.kappa,
        trace_ft,
    })
}

pub fn admissibility_margin(pt: &GraphPoint, spec: &PSpec) -> Result<f64> {
    let jet = graph_jet(pt)?;
    Ok(min_p_sum(&jet.kappa, spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symfunc::{eval_ft, tilde_jet};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn point(grad: &[f64], hess: DMatrix<f64>) -> GraphPoint {
        GraphPoint::new(DVector::from_column_slice(grad), hess).unwrap()
    }

    fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        m.qr().q()
    }

    /// Random admissible point built from a prescribed curvature matrix.
    fn admissible_point(n: usize, p: usize, rng: &mut ChaCha8Rng) -> GraphPoint {
        let spec = PSpec::new(n, p).unwrap();
        let lam = loop {
            let l: Vec<f64> = (0..n).map(|_| 2.0 * rng.random::<f64>() - 0.6).collect();
            if min_p_sum(&Spectrum::new(l.clone()).unwrap(), &spec) > 0.05 {
                break l;
            }
        };
        let q = random_orthogonal(n, rng);
        let a = &q * DMatrix::from_diagonal(&DVector::from_vec(lam)) * q.transpose();
        let du = DVector::from_fn(n, |_, _| 1.6 * rng.random::<f64>() - 0.8);
        let w = (1.0 + du.norm_squared()).sqrt();
        let gamma = DMatrix::identity(n, n) + &du * du.transpose() / (1.0 + w);
        let hess = &gamma * a * &gamma * w;
        let hess = (&hess + hess.transpose()) * 0.5;
        GraphPoint::new(du, hess).unwrap()
    }

    #[test]
    fn flat_gradient_point() {
        let c = 0.7;
        let jet = graph_jet(&point(&[0.0, 0.0, 0.0], DMatrix::identity(3, 3) * c)).unwrap();
        assert_eq!(jet.w, 1.0);
        assert!((jet.a.clone() - DMatrix::identity(3, 3) * c).amax() < 1e-15);
        assert_eq!(jet.kappa.values(), &[c, c, c]);
        assert_eq!(jet.nu.as_slice(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn sphere_cap_apex() {
        let r = 2.0;
        let jet = graph_jet(&point(&[0.0, 0.0, 0.0], DMatrix::identity(3, 3) / r)).unwrap();
        for k in jet.kappa.values() {
            assert_relative_eq!(*k, 0.5, max_relative = 1e-15);
        }
    }

    #[test]
    fn sphere_cap_off_axis_has_constant_curvature() {
        // u = -sqrt(R² - |x|²): Du = x/s, D²u = I/s + x⊗x/s³ with s = sqrt(R² - |x|²).
        let big_r: f64 = 1.5;
        let x: DVector<f64> = DVector::from_vec(vec![0.4, -0.3, 0.5]);
        let s = (big_r * big_r - x.norm_squared()).sqrt();
        let du = &x / s;
        let hess = DMatrix::identity(3, 3) / s + &x * x.transpose() / (s * s * s);
        let jet = graph_jet(&GraphPoint::new(du, hess).unwrap()).unwrap();
        for k in jet.kappa.values() {
            assert_relative_eq!(*k, 1.0 / big_r, max_relative = 1e-13);
        }
    }

    #[test]
    fn plane_curve_sanity() {
        let upp = 0.9;
        let jet = graph_jet(&point(&[1.0], DMatrix::from_element(1, 1, upp))).unwrap();
        let w = 2f64.sqrt();
        assert_relative_eq!(jet.w, w, max_relative = 1e-15);
        assert_relative_eq!(jet.gamma_upper[(0, 0)], 1.0 - 1.0 / (w * (1.0 + w)), max_relative = 1e-15);
        // curvature of a plane curve u''/(1+u'²)^{3/2}
        assert_relative_eq!(jet.a[(0, 0)], upp / 2f64.powf(1.5), max_relative = 1e-14);
    }

    #[test]
    fn jet_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let pt = admissible_point(3, 2, &mut rng);
            let jet = graph_jet(&pt).unwrap();
            assert_relative_eq!(jet.nu.norm(), 1.0, max_relative = 1e-12);
            assert!(jet.nu[3] > 0.0);
            let gg = &jet.gamma_lower * &jet.gamma_lower;
            assert!((gg - &jet.g_lower).amax() < 1e-10);
            let prod = &jet.gamma_upper * &jet.gamma_lower;
            assert!((prod - DMatrix::identity(3, 3)).amax() < 1e-10);
            let inv = &jet.g_upper * &jet.g_lower;
            assert!((inv - DMatrix::identity(3, 3)).amax() < 1e-12);

            // Eigenvalues of the nonsymmetric form (1/w)(I - Du⊗Du/w²)D²u.
            let w = jet.w;
            let ns = (DMatrix::identity(3, 3) - &pt.grad * pt.grad.transpose() / (w * w)) * &pt.hess / w;
            let mut ev: Vec<f64> = ns.complex_eigenvalues().iter().map(|c| c.re).collect();
            ev.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in ev.iter().zip(jet.kappa.values()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pde_coeffs_at_flat_gradient() {
        let spec = PSpec::new(3, 2).unwrap();
        let c = 0.8;
        let pc = pde_coeffs(&point(&[0.0; 3], DMatrix::identity(3, 3) * c), &spec).unwrap();
        assert_relative_eq!(pc.value, 2.0 * c, max_relative = 1e-14);
        assert!(pc.gs.amax() == 0.0);
        let expected = tilde_jet(&Spectrum::new(vec![c; 3]).unwrap(), &spec).unwrap();
        for k in 0..3 {
            assert_relative_eq!(pc.gij[(k, k)], expected.grad_diag[k], max_relative = 1e-14);
        }
        assert_relative_eq!(pc.gij[(0, 0)], 2.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn gs_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (n, p) in [(2, 1), (2, 2), (3, 2), (3, 1), (4, 2)] {
            let spec = PSpec::new(n, p).unwrap();
            for _ in 0..20 {
                let pt = admissible_point(n, p, &mut rng);
                let pc = pde_coeffs(&pt, &spec).unwrap();
                let h = 1e-6;
                for s in 0..n {
                    let mut plus = pt.clone();
                    plus.grad[s] += h;
                    let mut minus = pt.clone();
                    minus.grad[s] -= h;
                    let fd = (pde_coeffs(&plus, &spec).unwrap().value
                        - pde_coeffs(&minus, &spec).unwrap().value)
                        / (2.0 * h);
                    let scale = pc.gs.amax().max(pc.value);
                    assert!((fd - pc.gs[s]).abs() <= 1e-5 * scale, "n={n} p={p}: {fd} vs {}", pc.gs[s]);
                }
            }
        }
    }

    #[test]
    fn gij_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = PSpec::new(3, 2).unwrap();
        for _ in 0..20 {
            let pt = admissible_point(3, 2, &mut rng);
            let pc = pde_coeffs(&pt, &spec).unwrap();
            let h = 1e-6;
            for i in 0..3 {
                for j in i..3 {
                    let mut e = DMatrix::zeros(3, 3);
                    e[(i, j)] = 1.0;
                    e[(j, i)] = 1.0;
                    let plus = GraphPoint::new(pt.grad.clone(), &pt.hess + &e * h).unwrap();
                    let minus = GraphPoint::new(pt.grad.clone(), &pt.hess - &e * h).unwrap();
                    let fd = (pde_coeffs(&plus, &spec).unwrap().value
                        - pde_coeffs(&minus, &spec).unwrap().value)
                        / (2.0 * h);
                    let analytic = if i == j { pc.gij[(i, i)] } else { 2.0 * pc.gij[(i, j)] };
                    assert!((fd - analytic).abs() <= 1e-5 * pc.gij.amax());
                }
            }
        }
    }

    #[test]
    fn ellipticity_chain_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = PSpec::new(3, 2).unwrap();
        for _ in 0..100 {
            let pt = admissible_point(3, 2, &mut rng);
            let pc = pde_coeffs(&pt, &spec).unwrap();
            let tr = pc.gij.trace();
            let w = pc.w;
            assert!(pc.trace_ft / w - tr >= -1e-10);
            assert!(tr - pc.trace_ft / (w * w * w) >= -1e-10);
            let ev = symmetric_eigen(&pc.gij).unwrap();
            assert!(ev.values.min() > 0.0);
        }
    }

    #[test]
    fn rotation_equivariance_and_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = PSpec::new(3, 2).unwrap();
        for _ in 0..30 {
            let pt = admissible_point(3, 2, &mut rng);
            let q = random_orthogonal(3, &mut rng);
            let rotated = GraphPoint::new(&q * &pt.grad, &q * &pt.hess * q.transpose()).unwrap();
            let a = pde_coeffs(&pt, &spec).unwrap();
            let b = pde_coeffs(&rotated, &spec).unwrap();
            assert_relative_eq!(a.value, b.value, max_relative = 1e-10);
            for (x, y) in a.kappa.values().iter().zip(b.kappa.values()) {
                assert!((x - y).abs() < 1e-10);
            }
            let t = 3.7;
            let scaled = GraphPoint::new(pt.grad.clone(), &pt.hess * t).unwrap();
            assert_relative_eq!(pde_coeffs(&scaled, &spec).unwrap().value, t * a.value, max_relative = 1e-12);
            assert_relative_eq!(a.value, eval_ft(&a.kappa, &spec).unwrap(), max_relative = 1e-14);
        }
    }

    #[test]
    fn d_nu_matches_finite_differences() {
        let pt = point(&[0.3, -0.5], DMatrix::identity(2, 2));
        let spec = PSpec::new(2, 1).unwrap();
        let pc = pde_coeffs(&pt, &spec).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            let mut plus = pt.clone();
            plus.grad[k] += h;
            let mut minus = pt.clone();
            minus.grad[k] -= h;
            let np = graph_jet(&plus).unwrap().nu;
            let nm = graph_jet(&minus).unwrap().nu;
            for j in 0..3 {
                assert!(((np[j] - nm[j]) / (2.0 * h) - pc.d_nu[(j, k)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn admissibility_margin_examples() {
        let c = 0.4;
        let spec = PSpec::new(3, 2).unwrap();
        let m = admissibility_margin(&point(&[0.0; 3], DMatrix::identity(3, 3) * c), &spec).unwrap();
        assert_relative_eq!(m, 2.0 * c, max_relative = 1e-15);
        let m = admissibility_margin(&point(&[0.0; 3], DMatrix::identity(3, 3) / 2.0), &spec).unwrap();
        assert_relative_eq!(m, 1.0, max_relative = 1e-15);
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0]));
        let m = admissibility_margin(&point(&[0.0; 2], bad.clone()), &PSpec::new(2, 1).unwrap()).unwrap();
        assert_eq!(m, -2.0);
        assert!(matches!(
            pde_coeffs(&point(&[0.0; 2], bad), &PSpec::new(2, 1).unwrap()),
            Err(Error::NotAdmissible { .. })
        ));
    }
}
