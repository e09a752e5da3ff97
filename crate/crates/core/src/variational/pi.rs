//! The reduced function `π(x_o) = inf_{x_e} p_var(x_o, x_e)` for even `K`.
//!
//! The even minimizer is explicit: `x̄_e = [M^(oe)]⁻¹(F⁻¹(x_o) − h_o)`. With 1-based parity,
//! `M^(oe)` has `M_{2l−1,2l}` on its diagonal and `M_{2l−1,2l−2}` below it, so the solve
//! is a forward substitution.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{Method, Variational, VariationalSolution};
use crate::error::{Error, Result};

/// Upper edge of the box used by the ascent; `F⁻¹` diverges at 1.
const UPPER: f64 = 1.0 - 1e-9;
const ZERO_SNAP: f64 = 1e-7;
const ARMIJO: f64 = 1e-4;

/// Settings for [`Variational::solve_pi_ascent`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PiAscentOptions {
    /// Stop once the projected gradient of `π` is below `tol` in sup norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Every odd component starts here.
    pub start: f64,
    /// Finish with Newton steps using the exact Hessian of `π`.
    pub newton: bool,
}

impl Default for PiAscentOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 100_000,
            start: 0.5,
            newton: true,
        }
    }
}

impl PiAscentOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

impl Variational {
    fn check_pi(&self, x_o: &[f64]) -> Result<()> {
        let k = self.k();
        if k % 2 != 0 {
            return Err(Error::Precondition(format!(
                "the reduced function pi needs an even number of layers, got K = {k}"
            )));
        }
        if x_o.len() != k / 2 {
            return Err(Error::Dimension {
                expected: k / 2,
                got: x_o.len(),
            });
        }
        for l in 0..k / 2 {
            if !(self.effective().m[(2 * l, 2 * l + 1)] > 0.0) {
                return Err(Error::Precondition(format!(
                    "M^(oe) is singular: M_{{{},{}}} = 0 (vanishing form factor or coupling)",
                    2 * l + 1,
                    2 * l + 2
                )));
            }
        }
        Ok(())
    }

    fn odd_inverse(&self, x_o: &[f64]) -> Result<Vec<f64>> {
        x_o.iter()
            .map(|&y| self.one_body().inverse_magnetization(y))
            .collect()
    }

    /// `x̄_e = [M^(oe)]⁻¹(F⁻¹(x_o) − h_o)`. May leave `[0,1)`; it always keeps `Mx + h ≥ 0`.
    pub fn even_minimizer(&self, x_o: &[f64]) -> Result<Vec<f64>> {
        self.check_pi(x_o)?;
        let inv = self.odd_inverse(x_o)?;
        Ok(self.forward_substitute(&inv))
    }

    fn forward_substitute(&self, inv: &[f64]) -> Vec<f64> {
        let m = &self.effective().m;
        let h = self.spec().h();
        let mut x_e = vec![0.0; inv.len()];
        for l in 0..inv.len() {
            let mut b = inv[l] - h[2 * l];
            if l > 0 {
                b -= m[(2 * l, 2 * l - 1)] * x_e[l - 1];
            }
            x_e[l] = b / m[(2 * l, 2 * l + 1)];
        }
        x_e
    }

    fn interleave(x_o: &[f64], x_e: &[f64]) -> Vec<f64> {
        x_o.iter().zip(x_e).flat_map(|(&o, &e)| [o, e]).collect()
    }

    /// `π(x_o) = p_var(x_o, x̄_e(x_o))`.
    pub fn pi_value(&self, x_o: &[f64]) -> Result<f64> {
        let x_e = self.even_minimizer(x_o)?;
        self.p_var(&Self::interleave(x_o, &x_e))
    }

    /// `F(M^(eo) x_o + h_e)`: the even half that a critical point must carry.
    pub fn even_response(&self, x_o: &[f64]) -> Vec<f64> {
        let m = &self.effective().m;
        let h = self.spec().h();
        let n = x_o.len();
        (0..n)
            .map(|l| {
                let e = 2 * l + 1;
                let mut y = m[(e, e - 1)] * x_o[l] + h[e];
                if l + 1 < n {
                    y += m[(e, e + 1)] * x_o[l + 1];
                }
                self.one_body().magnetization_unchecked(y.max(0.0))
            })
            .collect()
    }

    /// `(α̂^(oo)/2)[−F⁻¹(x_o) + h_o + M^(oe) F(M^(eo) x_o + h_e)]`.
    pub fn grad_pi(&self, x_o: &[f64]) -> Result<Vec<f64>> {
        self.check_pi(x_o)?;
        let inv = self.odd_inverse(x_o)?;
        Ok(self.grad_pi_from(x_o, &inv))
    }

    fn grad_pi_from(&self, x_o: &[f64], inv: &[f64]) -> Vec<f64> {
        let m = &self.effective().m;
        let h = self.spec().h();
        let a = self.spec().alpha();
        let f_e = self.even_response(x_o);
        (0..x_o.len())
            .map(|l| {
                let o = 2 * l;
                let mut s = -inv[l] + h[o] + m[(o, o + 1)] * f_e[l];
                if l > 0 {
                    s += m[(o, o - 1)] * f_e[l - 1];
                }
                0.5 * a[o] * s
            })
            .collect()
    }

    /// `(α̂^(oo)/2)[−(𝒟^(oo))⁻¹ + M^(oe) 𝒟^(ee) M^(eo)]`, with `𝒟 = diag F′((Mx̄)_r + h_r)`
    /// evaluated at `(x_o, x̄_e(x_o))`. The matrix is symmetric because `α̂M = Δ` is.
    pub fn hessian_pi(&self, x_o: &[f64]) -> Result<DMatrix<f64>> {
        self.check_pi(x_o)?;
        let n = x_o.len();
        let inv = self.odd_inverse(x_o)?;
        let ob = self.one_body();
        let m = &self.effective().m;
        let h = self.spec().h();
        let a = self.spec().alpha();
        let d_o: Vec<f64> = inv.iter().map(|&y| ob.magnetization_and_slope(y).1).collect();
        let d_e: Vec<f64> = (0..n)
            .map(|l| {
                let e = 2 * l + 1;
                let mut y = m[(e, e - 1)] * x_o[l] + h[e];
                if l + 1 < n {
                    y += m[(e, e + 1)] * x_o[l + 1];
                }
                ob.magnetization_and_slope(y.max(0.0)).1
            })
            .collect();
        let oe = DMatrix::from_fn(n, n, |i, j| m[(2 * i, 2 * j + 1)]);
        let eo = DMatrix::from_fn(n, n, |i, j| m[(2 * i + 1, 2 * j)]);
        let mut inner = &oe * DMatrix::from_diagonal(&DVector::from_vec(d_e)) * &eo;
        for l in 0..n {
            inner[(l, l)] -= 1.0 / d_o[l];
        }
        for i in 0..n {
            let s = 0.5 * a[2 * i];
            inner.row_mut(i).scale_mut(s);
        }
        Ok(inner)
    }

    /// Eigenvalues (ascending) of the symmetric part of [`Variational::hessian_pi`].
    pub fn hessian_pi_eigenvalues(&self, x_o: &[f64]) -> Result<Vec<f64>> {
        let hm = self.hessian_pi(x_o)?;
        let sym = (&hm + hm.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }

    /// Projected gradient ascent on `π` over `[0,1)^(K/2)` with Barzilai–Borwein steps and
    /// Armijo backtracking, then Newton polishing. Decoupled chains are solved per segment;
    /// every segment longer than one layer must have even length.
    pub fn solve_pi_ascent(&self, opts: &PiAscentOptions) -> Result<VariationalSolution> {
        if !(opts.tol > 0.0) {
            return Err(Error::Domain {
                what: "tolerance",
                value: opts.tol,
            });
        }
        if !(opts.start >= 0.0 && opts.start < 1.0) {
            return Err(Error::Domain {
                what: "ascent start",
                value: opts.start,
            });
        }
        let (x, iterations) = self.solve_segments(|seg| seg.pi_ascent_segment(opts))?;
        self.finish(x, Method::PiAscent, iterations)
    }

    fn pi_ascent_segment(&self, opts: &PiAscentOptions) -> Result<(Vec<f64>, usize)> {
        let n = self.k() / 2;
        let mut x = vec![opts.start; n];
        self.check_pi(&x)?;
        let mut iterations = 0;
        let mut pg = f64::INFINITY;
        for _ in 0..20 {
            let before = pg;
            let (xa, it) = self.ascend(x, opts, opts.max_iter.saturating_sub(iterations))?;
            iterations += it;
            x = xa;
            if opts.newton {
                let (xn, it) = self.newton_polish(x, opts.tol)?;
                iterations += it;
                x = xn;
            }
            pg = projected_gradient_norm(&x, &self.grad_pi(&x)?);
            if pg < opts.tol || !(pg < before) || iterations >= opts.max_iter {
                break;
            }
        }
        if pg >= opts.tol {
            return Err(Error::NotConverged {
                method: "pi ascent",
                iterations,
                residual: pg,
            });
        }
        if self.spec().field_free() && x.iter().all(|&v| v < ZERO_SNAP) {
            x.iter_mut().for_each(|v| *v = 0.0);
        }
        let x_e = self.even_response(&x);
        Ok((Self::interleave(&x, &x_e), iterations))
    }

    /// Barzilai–Borwein ascent with Armijo backtracking. With `opts.newton` set it hands over
    /// as soon as the steps become short.
    fn ascend(&self, mut x: Vec<f64>, opts: &PiAscentOptions, budget: usize) -> Result<(Vec<f64>, usize)> {
        let mut f = self.pi_value(&x)?;
        let mut g = self.grad_pi(&x)?;
        let mut step = 1.0;
        let mut it = 0;
        while it < budget && projected_gradient_norm(&x, &g) >= opts.tol {
            it += 1;
            let mut s = step;
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<f64> = x.iter().zip(&g).map(|(x, g)| project(x + s * g)).collect();
                let ft = self.pi_value(&trial)?;
                let gain: f64 = trial.iter().zip(&x).zip(&g).map(|((t, x), g)| g * (t - x)).sum();
                if ft >= f + ARMIJO * gain {
                    accepted = Some((trial, ft));
                    break;
                }
                s *= 0.5;
            }
            let Some((xn, fnew)) = accepted else { break };
            let gn = self.grad_pi(&xn)?;
            let mut sy = 0.0;
            let mut ss = 0.0;
            for l in 0..x.len() {
                let dx = xn[l] - x[l];
                sy += dx * (gn[l] - g[l]);
                ss += dx * dx;
            }
            step = if sy < 0.0 && ss > 0.0 {
                (ss / -sy).clamp(1e-10, 1e10)
            } else {
                (2.0 * s).min(1e10)
            };
            x = xn;
            f = fnew;
            g = gn;
            if ss == 0.0 || (opts.newton && ss.sqrt() < 1e-4) {
                break;
            }
        }
        Ok((x, it))
    }

    /// Newton steps `x ← P(x − H⁻¹∇π)`, kept only while the projected gradient shrinks.
    fn newton_polish(&self, mut x: Vec<f64>, tol: f64) -> Result<(Vec<f64>, usize)> {
        let mut g = self.grad_pi(&x)?;
        let mut pg = projected_gradient_norm(&x, &g);
        let mut it = 0;
        while pg >= tol && it < 50 {
            let h = self.hessian_pi(&x)?;
            let Some(delta) = h.lu().solve(&DVector::from_column_slice(&g)) else { break };
            let xn: Vec<f64> = x.iter().zip(delta.iter()).map(|(x, d)| project(x - d)).collect();
            let gn = self.grad_pi(&xn)?;
            let pn = projected_gradient_norm(&xn, &gn);
            if !(pn < pg) {
                break;
            }
            it += 1;
            x = xn;
            g = gn;
            pg = pn;
        }
        Ok((x, it))
    }
}

fn project(v: f64) -> f64 {
    v.clamp(0.0, UPPER)
}

/// Sup norm of the gradient with components pushing against an active bound removed.
fn projected_gradient_norm(x: &[f64], g: &[f64]) -> f64 {
    x.iter().zip(g).fold(0.0f64, |acc, (&x, &g)| {
        let blocked = (x <= 0.0 && g < 0.0) || (x >= UPPER && g > 0.0);
        if blocked {
            acc
        } else {
            acc.max(g.abs())
        }
    })
}
