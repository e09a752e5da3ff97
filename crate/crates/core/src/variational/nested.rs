//! Constructive solution for strictly positive fields.
//!
//! Writing `α_r x_r a_r = α_{r+1} x_{r+1}` turns `(Mx)_r` into `Θ_r(a) x_r` with
//! `Θ_r(a) = α_r (μ_{r−1,r}/a_{r−1} + μ_{r,r+1} a_r)` (missing neighbours dropped), so each
//! layer solves the scalar equation `x_r = F(Θ_r x_r + h_r)`. The links are then fixed one
//! level at a time: for a given `a_{r+1}`, the unique `a_r` balancing
//! `α_r x_r a_r = α_{r+1} x_{r+1}` is found by a bracketed root search in `log a_r`, with all
//! lower links re-solved inside every evaluation. The top level uses `a_K = 0`.

use serde::{Deserialize, Serialize};

use super::{scalar_solution_with, Method, Variational, VariationalSolution};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Default cap on `K`; the cost grows geometrically with the depth of the nesting.
pub const DEFAULT_MAX_LAYERS: usize = 6;

const BRACKET_START: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NestedOptions {
    pub max_layers: usize,
    /// Relative tolerance on each link `a_r`.
    pub rel_tol: f64,
}

impl Default for NestedOptions {
    fn default() -> Self {
        Self {
            max_layers: DEFAULT_MAX_LAYERS,
            rel_tol: 4.0 * f64::EPSILON,
        }
    }
}

/// Links `a_r > 0` between consecutive layers and the induced slopes `Θ_r(a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryChain {
    pub a: Vec<f64>,
    pub theta: Vec<f64>,
}

impl AuxiliaryChain {
    pub fn new(spec: &ModelSpec, a: Vec<f64>) -> Result<Self> {
        let k = spec.k();
        if a.len() + 1 != k {
            return Err(Error::Dimension {
                expected: k - 1,
                got: a.len(),
            });
        }
        if let Some(&bad) = a.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain {
                what: "auxiliary link a_r",
                value: bad,
            });
        }
        let theta = (0..k).map(|r| theta(spec, r, &a)).collect();
        Ok(Self { a, theta })
    }
}

/// `Θ_r(a)` with the top link `a_K = 0`.
fn theta(spec: &ModelSpec, r: usize, a: &[f64]) -> f64 {
    let (alpha, mu) = (spec.alpha(), spec.mu());
    let down = if r > 0 { mu[r - 1] / a[r - 1] } else { 0.0 };
    let up = if r + 1 < spec.k() { mu[r] * a[r] } else { 0.0 };
    alpha[r] * (down + up)
}

struct Nested<'a> {
    v: &'a Variational,
    rel_tol: f64,
    warm: Vec<Option<f64>>,
    evaluations: usize,
}

impl Nested<'_> {
    fn xbar(&mut self, r: usize, t: f64) -> Result<f64> {
        self.evaluations += 1;
        scalar_solution_with(self.v.one_body(), t, self.v.spec().h()[r])
    }

    /// Mismatch `α_r x_r a_r − α_{r+1} x_{r+1}` at `a_r = ar`, lower links re-solved.
    fn mismatch(&mut self, r: usize, ar: f64, next: f64, a: &mut [f64]) -> Result<f64> {
        let spec = self.v.spec();
        a[r] = ar;
        if r > 0 {
            a[r - 1] = self.level(r - 1, ar, a)?;
        }
        let alpha = spec.alpha();
        let mu = spec.mu();
        let down = if r > 0 { mu[r - 1] / a[r - 1] } else { 0.0 };
        let t_r = alpha[r] * (down + mu[r] * ar);
        let up = if r + 2 < spec.k() { mu[r + 1] * next } else { 0.0 };
        let t_next = alpha[r + 1] * (mu[r] / ar + up);
        let lhs = alpha[r] * self.xbar(r, t_r)? * ar;
        let rhs = alpha[r + 1] * self.xbar(r + 1, t_next)?;
        Ok(lhs - rhs)
    }

    /// Solves link `r` for a given `a_{r+1} = next` and leaves `a[..=r]` consistent.
    fn level(&mut self, r: usize, next: f64, a: &mut [f64]) -> Result<f64> {
        let warm = self.warm[r];
        let root = {
            let mut g = |u: f64, s: &mut Self| s.mismatch(r, u.exp(), next, a);
            // cold: the initial bracket (1e−12, 1], upper end doubled; warm: a narrow
            // window around the previous root, widened geometrically
            let (mut lo, mut hi, mut step, grow) = match warm {
                Some(w) => (w.ln() - 0.05, w.ln() + 0.05, 0.1, 2.0),
                None => (BRACKET_START.ln(), 0.0, std::f64::consts::LN_2, 1.0),
            };
            let mut glo = g(lo, self)?;
            let mut ghi = g(hi, self)?;
            let mut expansions = 0;
            // the mismatch increases with a_r
            while glo > 0.0 || ghi < 0.0 {
                expansions += 1;
                if expansions > 600 {
                    return Err(Error::NotConverged {
                        method: "nested bisection bracket",
                        iterations: expansions,
                        residual: if glo > 0.0 { glo } else { -ghi },
                    });
                }
                if glo > 0.0 {
                    (hi, ghi) = (lo, glo);
                    lo -= step;
                    glo = g(lo, self)?;
                } else {
                    (lo, glo) = (hi, ghi);
                    hi += step;
                    ghi = g(hi, self)?;
                }
                step = (step * grow).min(8.0 * std::f64::consts::LN_2);
            }
            let tol = self.rel_tol;
            brent(lo, hi, glo, ghi, tol, |u| g(u, self))?
        };
        let ar = root.exp();
        self.warm[r] = Some(ar);
        // leave the lower links at the values belonging to this root
        a[r] = ar;
        if r > 0 {
            a[r - 1] = self.level(r - 1, ar, a)?;
        }
        Ok(ar)
    }
}

/// Brent's method on a bracket with `f(lo) ≤ 0 ≤ f(hi)`; `tol` is absolute in the argument.
fn brent(
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    tol: f64,
    mut f: impl FnMut(f64) -> Result<f64>,
) -> Result<f64> {
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol.max(f64::MIN_POSITIVE);
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
    }
    Ok(b)
}

impl Variational {
    /// Links, slopes and profile of the constructive solution for a fully coupled chain.
    pub fn auxiliary_chain(&self, opts: &NestedOptions) -> Result<(Vec<f64>, AuxiliaryChain, usize)> {
        let spec = self.spec();
        let k = spec.k();
        self.check_nested(opts)?;
        if !spec.fully_coupled() {
            return Err(Error::Precondition(
                "the auxiliary chain needs every form factor and coupling positive".into(),
            ));
        }
        let mut state = Nested {
            v: self,
            rel_tol: opts.rel_tol,
            warm: vec![None; k - 1],
            evaluations: 0,
        };
        let mut a = vec![1.0; k - 1];
        state.level(k - 2, 0.0, &mut a)?;
        let mut x = Vec::with_capacity(k);
        for r in 0..k {
            let t = theta(spec, r, &a);
            x.push(state.xbar(r, t)?);
        }
        let evaluations = state.evaluations;
        Ok((x, AuxiliaryChain::new(spec, a)?, evaluations))
    }

    fn check_nested(&self, opts: &NestedOptions) -> Result<()> {
        let spec = self.spec();
        if let Some(r) = spec.h().iter().position(|&h| !(h > 0.0)) {
            return Err(Error::Precondition(format!(
                "nested bisection needs every field positive; h[{}] = {}",
                r + 1,
                spec.h()[r]
            )));
        }
        if spec.k() > opts.max_layers {
            return Err(Error::Precondition(format!(
                "nested bisection is capped at K = {}, got K = {}",
                opts.max_layers,
                spec.k()
            )));
        }
        if !(opts.rel_tol > 0.0) {
            return Err(Error::Domain {
                what: "tolerance",
                value: opts.rel_tol,
            });
        }
        Ok(())
    }

    /// Unique solution for `h > 0` by the nested construction, solved per segment.
    /// `iterations` counts scalar solves.
    pub fn solve_nested_bisection(&self, opts: &NestedOptions) -> Result<VariationalSolution> {
        self.check_nested(opts)?;
        let (x, evaluations) = self.solve_segments(|seg| {
            let (x, _, n) = seg.auxiliary_chain(opts)?;
            Ok((x, n))
        })?;
        self.finish(x, Method::NestedBisection, evaluations)
    }
}
