//! Rotationally symmetric reference solutions by shooting on `u(0)`.
//!
//! With `ρ = |x|`, the principal curvatures of a radial graph are
//! `κ_rad = u″/w³` (once) and `κ_tan = u′/(ρw)` (`n − 1` times), so the
//! equation `F(κ) = f` becomes
//! `(κ_rad + (p−1)κ_tan)^a · (p κ_tan)^b = f` with `a = C(n−1, p−1)`,
//! `b = C(n−1, p)`, which is solved for `u″`.

use crate::error::{Error, Result};
use crate::fexpr::{Env, Expr, Var};
use crate::symfunc::{binomial, PSpec};

/// Slope beyond which the profile is treated as having blown up upward.
const SLOPE_BLOWUP: f64 = 1e8;
const MAX_STEPS: usize = 200_000;
const MAX_SHOTS: usize = 200;

/// Dense radial profile `ρ ↦ u(ρ)` on `[0, r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    rho: Vec<f64>,
    u: Vec<f64>,
    du: Vec<f64>,
}

impl RadialProfile {
    pub fn radius(&self) -> f64 {
        *self.rho.last().unwrap()
    }

    pub fn center_value(&self) -> f64 {
        self.u[0]
    }

    pub fn boundary_value(&self) -> f64 {
        *self.u.last().unwrap()
    }

    pub fn knots(&self) -> &[f64] {
        &self.rho
    }

    fn segment(&self, rho: f64) -> usize {
        match self.rho.binary_search_by(|v| v.total_cmp(&rho)) {
            Ok(i) => i.min(self.rho.len() - 2),
            Err(i) => i.clamp(1, self.rho.len() - 1) - 1,
        }
    }

    /// Cubic Hermite interpolation of `u`; `ρ` is clamped to `[0, r]`.
    pub fn eval(&self, rho: f64) -> f64 {
        let rho = rho.clamp(0.0, self.radius());
        let i = self.segment(rho);
        let (x0, x1) = (self.rho[i], self.rho[i + 1]);
        let hseg = x1 - x0;
        let s = (rho - x0) / hseg;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.u[i] + h10 * hseg * self.du[i] + h01 * self.u[i + 1] + h11 * hseg * self.du[i + 1]
    }

    /// Value at a point of `ℝⁿ`.
    pub fn eval_at(&self, x: &[f64]) -> f64 {
        self.eval(x.iter().map(|v| v * v).sum::<f64>().sqrt())
    }
}

struct Ode<'a> {
    n: usize,
    p: usize,
    a: f64,
    b: f64,
    f: &'a Expr,
}

enum Shot {
    Reached(RadialProfile),
    Blowup,
}

impl Ode<'_> {
    fn f_at(&self, rho: f64, u: f64, v: f64) -> Result<f64> {
        let mut x = vec![0.0; self.n];
        x[0] = rho;
        let mut du = vec![0.0; self.n];
        du[0] = v;
        let fv = self.f.eval(&Env::at_graph_point(&x, u, &du))?;
        if !(fv > 0.0) {
            return Err(Error::HypothesisViolated(format!("f = {fv} at rho = {rho}, u = {u}")));
        }
        Ok(fv)
    }

    /// `(u′, u″)` at `ρ > 0`.
    fn rhs(&self, rho: f64, y: [f64; 2]) -> Result<[f64; 2]> {
        let [u, v] = y;
        let w = (1.0 + v * v).sqrt();
        let kt = v / (rho * w);
        let fv = self.f_at(rho, u, v)?;
        let pk = self.p as f64 * kt;
        if self.b > 0.0 && pk <= 0.0 {
            return Err(Error::ConeExit { rho });
        }
        let kr = (fv / pk.powf(self.b)).powf(1.0 / self.a) - (self.p as f64 - 1.0) * kt;
        Ok([v, w * w * w * kr])
    }

    fn shoot(&self, u0: f64, r: f64, tol: f64) -> Result<Shot> {
        let m = binomial(self.n, self.p) as f64;
        let k0 = self.f_at(0.0, u0, 0.0)?.powf(1.0 / m) / self.p as f64;
        let rho0 = 1e-6 * r;
        let mut rho = rho0;
        let mut y = [u0 + 0.5 * k0 * rho0 * rho0, k0 * rho0];
        let mut prof = RadialProfile {
            rho: vec![0.0, rho0],
            u: vec![u0, y[0]],
            du: vec![0.0, y[1]],
        };
        let atol = 1e-2 * tol;
        let rtol = 1e-2 * tol;
        let mut step = 1e-3 * r;
        let mut k1 = self.rhs(rho, y)?;
        for _ in 0..MAX_STEPS {
            if rho >= r {
                return Ok(Shot::Reached(prof));
            }
            let last = rho + step >= r;
            let hh = if last { r - rho } else { step };
            let (ynew, k7, err) = match dopri_step(self, rho, y, k1, hh) {
                Ok(v) => v,
                Err(Error::ConeExit { .. }) | Err(Error::HypothesisViolated(_)) if hh > 1e-14 * r => {
                    step = 0.25 * hh;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let scale = |i: usize| atol + rtol * y[i].abs().max(ynew[i].abs());
            let en = (err[0] / scale(0)).abs().max((err[1] / scale(1)).abs());
            if en <= 1.0 && ynew.iter().all(|v| v.is_finite()) {
                rho = if last { r } else { rho + hh };
                y = ynew;
                k1 = k7;
                prof.rho.push(rho);
                prof.u.push(y[0]);
                prof.du.push(y[1]);
                if y[1] > SLOPE_BLOWUP {
                    return Ok(Shot::Blowup);
                }
                if y[1] <= 0.0 && self.b > 0.0 {
                    return Err(Error::ConeExit { rho });
                }
            }
            let factor = if en.is_finite() && en > 0.0 {
                (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
            } else if en == 0.0 {
                5.0
            } else {
                0.2
            };
            step = hh * factor;
            if step < 1e-14 * r {
                // Step collapse means the slope is running off to infinity.
                return Ok(Shot::Blowup);
            }
        }
        Err(Error::InvalidArgument("radial integration exceeded its step budget".into()))
    }
}

type Stage = [f64; 2];

fn dopri_step(ode: &Ode, t: f64, y: Stage, k1: Stage, h: f64) -> Result<(Stage, Stage, Stage)> {
    const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [&[f64]; 6] = [
        &[1.0 / 5.0],
        &[3.0 / 40.0, 9.0 / 40.0],
        &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
        &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
        &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
        &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let mut k = [[0.0; 2]; 7];
    k[0] = k1;
    let mut ynew = y;
    for s in 0..6 {
        let mut ys = y;
        for (j, a) in A[s].iter().enumerate() {
            for i in 0..2 {
                ys[i] += h * a * k[j][i];
            }
        }
        k[s + 1] = ode.rhs(t + C[s] * h, ys)?;
        if s == 5 {
            ynew = ys;
        }
    }
    let mut err = [0.0; 2];
    for (j, e) in E.iter().enumerate() {
        for i in 0..2 {
            err[i] += h * e * k[j][i];
        }
    }
    Ok((ynew, k[6], err))
}

/// Radial solution of `F(κ) = f` on the ball of radius `r` with `u(r) = 0`,
/// shooting on `u(0)` until `|u(r)| ≤ tol`.
pub fn solve_radial(n: usize, p: usize, r: f64, f: &Expr, tol: f64) -> Result<RadialProfile> {
    PSpec::new(n, p)?;
    if f.dim() != n {
        return Err(Error::InvalidArgument(format!("f parsed for n = {}, expected {n}", f.dim())));
    }
    if !(r > 0.0 && r.is_finite()) || !(tol > 0.0) {
        return Err(Error::InvalidArgument("radius and tolerance must be positive".into()));
    }
    if let Some(v) = f.vars().into_iter().find(|v| !matches!(v, Var::R2 | Var::Z | Var::W)) {
        return Err(Error::InvalidArgument(format!(
            "radial solves need f(r2, z, w); found variable {v:?}"
        )));
    }
    let ode = Ode {
        n,
        p,
        a: binomial(n - 1, p - 1) as f64,
        b: binomial(n - 1, p) as f64,
        f,
    };
    let mut shots = 0;
    let mut g = |u0: f64| -> Result<(f64, Option<RadialProfile>)> {
        shots += 1;
        if shots > MAX_SHOTS {
            return Err(Error::ShootingBracket("shot budget exhausted".into()));
        }
        Ok(match ode.shoot(u0, r, tol)? {
            Shot::Reached(prof) => (prof.boundary_value(), Some(prof)),
            Shot::Blowup => (f64::INFINITY, None),
        })
    };

    // u(0) = 0 overshoots; search downward for an undershoot.
    let mut hi = 0.0;
    let (mut g_hi, prof) = g(hi)?;
    if g_hi.abs() <= tol {
        return Ok(prof.unwrap());
    }
    if g_hi < 0.0 {
        return Err(Error::ShootingBracket("u(0) = 0 already undershoots".into()));
    }
    let mut lo = -r;
    let mut g_lo;
    let mut tries = 0;
    loop {
        let (v, prof) = g(lo)?;
        g_lo = v;
        if g_lo.abs() <= tol {
            return Ok(prof.unwrap());
        }
        if g_lo < 0.0 {
            break;
        }
        hi = lo;
        g_hi = g_lo;
        lo *= 2.0;
        tries += 1;
        if tries > 40 {
            return Err(Error::ShootingBracket(format!(
                "no undershooting start down to u(0) = {lo}; the problem may admit no radial solution"
            )));
        }
    }

    // Illinois regula falsi, with bisection while the upper end is a blowup.
    let mut side = 0i8;
    loop {
        let mid = if g_hi.is_finite() {
            (lo * g_hi - hi * g_lo) / (g_hi - g_lo)
        } else {
            0.5 * (lo + hi)
        };
        let (gm, prof) = g(mid)?;
        if gm.abs() <= tol {
            return Ok(prof.unwrap());
        }
        if (hi - lo).abs() <= 1e-15 * lo.abs().max(1.0) {
            return Err(Error::ShootingBracket(format!(
                "bracket collapsed at u(0) = {mid} with |u(r)| = {}",
                gm.abs()
            )));
        }
        if gm < 0.0 {
            lo = mid;
            g_lo = gm;
            if side == -1 && g_hi.is_finite() {
                g_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            g_hi = gm;
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fexpr::parse;
    use crate::solver::cap_height;

    fn cap_deviation(prof: &RadialProfile, big_r: f64, r: f64) -> f64 {
        (0..=400)
            .map(|i| {
                let rho = r * i as f64 / 400.0;
                (prof.eval(rho) - cap_height(big_r, r, &[rho])).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn cap_center_value() {
        let f = parse("1", 3).unwrap();
        let prof = solve_radial(3, 2, 0.8, &f, 1e-12).unwrap();
        assert!((prof.center_value() - (3.36f64.sqrt() - 2.0)).abs() < 1e-9);
        assert!((prof.center_value() + 0.166_969_722_017_664).abs() < 1e-10);
    }

    #[test]
    fn cap_family() {
        for (n, p, big_r, r) in [(2, 1, 2.0, 0.8), (2, 2, 1.5, 1.0), (3, 1, 2.0, 0.8), (3, 3, 1.0, 0.7), (4, 2, 3.0, 1.2), (5, 3, 1.3, 0.9)] {
            let m = binomial(n, p) as i32;
            let fval = (p as f64 / big_r).powi(m);
            let f = Expr::constant(n, fval);
            let prof = solve_radial(n, p, r, &f, 1e-11).unwrap();
            let dev = cap_deviation(&prof, big_r, r);
            assert!(dev <= 1e-8, "n={n} p={p}: deviation {dev}");
        }
    }

    #[test]
    fn nonconstant_rhs_reaches_boundary() {
        let f = parse("1 + r2", 3).unwrap();
        let prof = solve_radial(3, 2, 0.7, &f, 1e-10).unwrap();
        assert!(prof.boundary_value().abs() <= 1e-10);
        // Larger f than the R = 2 cap means more curvature, so a deeper graph.
        assert!(prof.center_value() < cap_height(2.0, 0.7, &[0.0]));
    }

    #[test]
    fn z_dependent_rhs() {
        let f = parse("exp(z)", 2).unwrap();
        let prof = solve_radial(2, 1, 0.8, &f, 1e-10).unwrap();
        assert!(prof.boundary_value().abs() <= 1e-10);
        assert!(prof.center_value() < 0.0);
    }

    #[test]
    fn no_radial_solution_for_oversized_rhs() {
        let f = parse("100", 2).unwrap();
        assert!(matches!(solve_radial(2, 1, 0.8, &f, 1e-10), Err(Error::ShootingBracket(_))));
    }

    #[test]
    fn rejects_non_radial_rhs() {
        let f = parse("1 + x1", 2).unwrap();
        assert!(matches!(solve_radial(2, 1, 0.8, &f, 1e-10), Err(Error::InvalidArgument(_))));
    }
}
