use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{max_abs_diff, Method, Variational, VariationalSolution};
use crate::error::{Error, Result};

/// Settings for [`Variational::solve_fixed_point`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointOptions {
    /// Initial damping `γ`; halved whenever the residual grows.
    pub damping: f64,
    /// Stop once `‖x − T(x)‖∞ < tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting profile; `None` means `(1 − 1e−6)·1`, which selects the largest fixed point.
    pub init: Option<Vec<f64>>,
    /// Switch to Newton steps on `x − T(x)` once the residual is below this value.
    /// Zero disables the polish.
    pub newton_below: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-12,
            max_iter: 200_000,
            init: None,
            newton_below: 1e-6,
        }
    }
}

impl FixedPointOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

const MIN_DAMPING: f64 = 1.0 / 64.0;
const TOP_START: f64 = 1.0 - 1e-6;
/// Field-free profiles smaller than this are the zero solution.
const ZERO_SNAP: f64 = 1e-7;

impl Variational {
    /// Damped iteration `x ← (1−γ)x + γT(x)`.
    pub fn solve_fixed_point(&self, opts: &FixedPointOptions) -> Result<VariationalSolution> {
        if !(opts.damping > 0.0 && opts.damping <= 1.0) {
            return Err(Error::Domain {
                what: "damping",
                value: opts.damping,
            });
        }
        if !(opts.tol > 0.0) {
            return Err(Error::Domain {
                what: "tolerance",
                value: opts.tol,
            });
        }
        let k = self.k();
        let mut x = match &opts.init {
            Some(v) if v.len() != k => {
                return Err(Error::Dimension {
                    expected: k,
                    got: v.len(),
                })
            }
            Some(v) => v.clone(),
            None => vec![TOP_START; k],
        };
        if let Some(&bad) = x.iter().find(|v| !(0.0..1.0).contains(*v)) {
            return Err(Error::Domain {
                what: "initial order parameter",
                value: bad,
            });
        }

        let mut gamma = opts.damping;
        let mut t = self.consistency_map(&x)?;
        let mut res = max_abs_diff(&x, &t);
        let mut iterations = 0;
        let mut newton_blocked = false;
        while res >= opts.tol {
            if iterations >= opts.max_iter {
                if self.spec().field_free() && (self.spectral_radius() - 1.0).abs() < super::CRITICAL_WINDOW {
                    // critical point: report what we have, labelled Unresolved
                    break;
                }
                return Err(Error::NotConverged {
                    method: "fixed-point iteration",
                    iterations,
                    residual: res,
                });
            }
            iterations += 1;
            if !newton_blocked && res < opts.newton_below {
                match self.newton_step(&x, &t)? {
                    Some((xn, tn, rn)) if rn < res => {
                        x = xn;
                        t = tn;
                        res = rn;
                        continue;
                    }
                    _ => newton_blocked = true,
                }
            }
            for (xi, ti) in x.iter_mut().zip(&t) {
                *xi = (1.0 - gamma) * *xi + gamma * ti;
            }
            t = self.consistency_map(&x)?;
            let next = max_abs_diff(&x, &t);
            if next > res {
                gamma = (0.5 * gamma).max(MIN_DAMPING);
            } else if next < 0.5 * res {
                newton_blocked = false;
            }
            res = next;
        }

        if self.spec().field_free() && x.iter().all(|&v| v < ZERO_SNAP) {
            x.iter_mut().for_each(|v| *v = 0.0);
        }
        self.finish(x, Method::FixedPoint, iterations)
    }

    /// One Newton step on `G(x) = x − T(x)` with Jacobian `I − 𝒟M`, projected into `[0,1)`.
    fn newton_step(&self, x: &[f64], t: &[f64]) -> Result<Option<(Vec<f64>, Vec<f64>, f64)>> {
        let k = self.k();
        let fields = self.local_fields(x)?;
        let d: Vec<f64> = fields
            .iter()
            .map(|&y| self.one_body().magnetization_and_slope(y).1)
            .collect();
        let m = &self.effective().m;
        let jac = DMatrix::from_fn(k, k, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - d[i] * m[(i, j)]
        });
        let g = DVector::from_iterator(k, x.iter().zip(t).map(|(x, t)| x - t));
        let Some(step) = jac.lu().solve(&g) else {
            return Ok(None);
        };
        let xn: Vec<f64> = x
            .iter()
            .zip(step.iter())
            .map(|(x, s)| (x - s).clamp(0.0, 1.0 - f64::EPSILON))
            .collect();
        if xn.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let tn = self.consistency_map(&xn)?;
        let rn = max_abs_diff(&xn, &tn);
        Ok(Some((xn, tn, rn)))
    }
}
