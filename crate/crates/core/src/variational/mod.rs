//! Variational pressure, its gradient and the consistency map, plus three solvers for
//! the optimizer: damped fixed-point iteration, projected ascent on the reduced function
//! `π` (even `K`), and the nested scalar-root construction (all fields positive).
//!
//! Chains broken by a vanishing form factor or coupling are split into independent
//! segments (see [`ModelSpec::segments`]); every solver handles the pieces separately and
//! then fills in the passive `α_r = 0` layers from their neighbours.

mod fixed_point;
mod nested;
mod pi;

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EffectiveMatrices, ModelSpec};
use crate::special::{OneBody, NEGATIVE_CLAMP};

pub use fixed_point::FixedPointOptions;
pub use nested::{AuxiliaryChain, NestedOptions, DEFAULT_MAX_LAYERS};
pub use pi::PiAscentOptions;

/// Half-width of the window around `ρ = 1` in which a field-free solution is not classified.
pub const CRITICAL_WINDOW: f64 = 1e-6;

/// A profile `x ∈ [0,1)^K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OrderParameter(Vec<f64>);

impl OrderParameter {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if let Some(i) = x.iter().position(|v| !(0.0..1.0).contains(v)) {
            return Err(Error::Domain {
                what: "order parameter component",
                value: x[i],
            });
        }
        Ok(Self(x))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

impl TryFrom<Vec<f64>> for OrderParameter {
    type Error = Error;
    fn try_from(x: Vec<f64>) -> Result<Self> {
        Self::new(x)
    }
}

impl From<OrderParameter> for Vec<f64> {
    fn from(x: OrderParameter) -> Self {
        x.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    /// `h = 0` and `x̄ = 0`.
    ZeroSolution,
    /// `h = 0` and `x̄ ≠ 0`.
    BrokenSymmetry,
    /// Some `h_r > 0`.
    FieldDriven,
    /// `h = 0` with `|ρ − 1| <` [`CRITICAL_WINDOW`].
    Unresolved,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Phase::ZeroSolution => "ZeroSolution",
            Phase::BrokenSymmetry => "BrokenSymmetry",
            Phase::FieldDriven => "FieldDriven",
            Phase::Unresolved => "Unresolved",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    FixedPoint,
    PiAscent,
    NestedBisection,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::FixedPoint => "FixedPoint",
            Method::PiAscent => "PiAscent",
            Method::NestedBisection => "NestedBisection",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalSolution {
    pub x_bar: OrderParameter,
    pub pressure: f64,
    /// `‖∇p_var(x̄)‖∞`.
    pub gradient_norm: f64,
    /// `‖x̄ − T(x̄)‖∞`.
    pub consistency_residual: f64,
    pub rho: f64,
    pub phase: Phase,
    pub method: Method,
    pub iterations: usize,
}

/// Evaluation context for one model: the model parameters, their effective matrices and the quadrature.
#[derive(Debug, Clone)]
pub struct Variational {
    spec: ModelSpec,
    eff: EffectiveMatrices,
    one_body: Arc<OneBody>,
}

impl Variational {
    pub fn new(spec: &ModelSpec) -> Self {
        Self::with_one_body(spec, OneBody::standard())
    }

    pub fn with_one_body(spec: &ModelSpec, one_body: Arc<OneBody>) -> Self {
        Self {
            spec: spec.clone(),
            eff: spec.effective(),
            one_body,
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn effective(&self) -> &EffectiveMatrices {
        &self.eff
    }

    pub fn one_body(&self) -> &OneBody {
        &self.one_body
    }

    pub fn k(&self) -> usize {
        self.spec.k()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.k() {
            return Err(Error::Dimension {
                expected: self.k(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `(Mx)_r + h_r`, clamping tiny negatives and rejecting real ones.
    pub fn local_fields(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let mx = &self.eff.m * DVector::from_column_slice(x);
        mx.iter()
            .zip(self.spec.h())
            .map(|(m, h)| {
                let v = m + h;
                if v < -NEGATIVE_CLAMP || v.is_nan() {
                    Err(Error::Domain {
                        what: "local field (Mx)_r + h_r",
                        value: v,
                    })
                } else {
                    Ok(v.max(0.0))
                }
            })
            .collect()
    }

    /// `Σ α_r ψ((Mx)_r + h_r) + Σ (Δ_{r,r+1}/2)[(1−x_r)(1−x_{r+1}) − 2 x_r x_{r+1}]`.
    pub fn p_var(&self, x: &[f64]) -> Result<f64> {
        let fields = self.local_fields(x)?;
        let a = self.spec.alpha();
        let mut total = 0.0;
        for (r, &y) in fields.iter().enumerate() {
            if a[r] > 0.0 {
                total += a[r] * self.one_body.pressure_unchecked(y);
            }
        }
        for r in 0..self.k() - 1 {
            let d = self.eff.delta[(r, r + 1)];
            total += 0.5 * d * ((1.0 - x[r]) * (1.0 - x[r + 1]) - 2.0 * x[r] * x[r + 1]);
        }
        Ok(total)
    }

    /// `T(x)_r = F((Mx)_r + h_r)`.
    pub fn consistency_map(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .local_fields(x)?
            .into_iter()
            .map(|y| self.one_body.magnetization_unchecked(y))
            .collect())
    }

    /// `(Δ/2)(−x + F(Mx + h))`.
    pub fn grad_p_var(&self, x: &[f64]) -> Result<Vec<f64>> {
        let t = self.consistency_map(x)?;
        let diff = DVector::from_iterator(self.k(), t.iter().zip(x).map(|(t, x)| t - x));
        Ok((&self.eff.delta * diff * 0.5).iter().copied().collect())
    }

    /// `‖x − T(x)‖∞`.
    pub fn consistency_residual(&self, x: &[f64]) -> Result<f64> {
        let t = self.consistency_map(x)?;
        Ok(max_abs_diff(x, &t))
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eff.spectral_radius_oo()
    }

    /// Phase label for a solution `x` of this model.
    pub fn classify(&self, x: &[f64], rho: f64) -> Phase {
        if !self.spec.field_free() {
            Phase::FieldDriven
        } else if (rho - 1.0).abs() < CRITICAL_WINDOW {
            Phase::Unresolved
        } else if x.iter().all(|&v| v == 0.0) {
            Phase::ZeroSolution
        } else {
            Phase::BrokenSymmetry
        }
    }

    /// Packages a solved profile with its diagnostics.
    pub(crate) fn finish(&self, x: Vec<f64>, method: Method, iterations: usize) -> Result<VariationalSolution> {
        let rho = self.spectral_radius();
        let pressure = self.p_var(&x)?;
        let gradient_norm = self
            .grad_p_var(&x)?
            .iter()
            .fold(0.0f64, |m, g| m.max(g.abs()));
        let consistency_residual = self.consistency_residual(&x)?;
        let phase = self.classify(&x, rho);
        Ok(VariationalSolution {
            x_bar: OrderParameter::new(x)?,
            pressure,
            gradient_norm,
            consistency_residual,
            rho,
            phase,
            method,
            iterations,
        })
    }

    /// Runs `solve` on every interacting segment and fills in the passive layers.
    /// Returns the assembled profile and the summed iteration count.
    pub(crate) fn solve_segments(
        &self,
        mut solve: impl FnMut(&Variational) -> Result<(Vec<f64>, usize)>,
    ) -> Result<(Vec<f64>, usize)> {
        let k = self.k();
        let segments = self.spec.segments();
        if segments.len() == 1 && segments[0] == (0..k) {
            return solve(self);
        }
        let mut x = vec![0.0; k];
        let mut iterations = 0;
        for seg in segments {
            if seg.len() == 1 {
                x[seg.start] = self.one_body.magnetization_unchecked(self.spec.h()[seg.start]);
                continue;
            }
            let sub = Variational::with_one_body(&self.spec.sub_chain(seg.clone()), self.one_body.clone());
            let (xs, it) = solve(&sub)?;
            x[seg].copy_from_slice(&xs);
            iterations += it;
        }
        // passive layers only see their neighbours
        let t = self.consistency_map(&x)?;
        for r in 0..k {
            if self.spec.alpha()[r] == 0.0 {
                x[r] = t[r];
            }
        }
        Ok((x, iterations))
    }

    /// `x̄(t, h)`: the positive root of `x = F(t x + h)` for `t ≥ 0`, `h > 0`.
    pub fn scalar_solution(&self, t: f64, h: f64) -> Result<f64> {
        scalar_solution_with(&self.one_body, t, h)
    }
}

/// `x̄(t, h)` with the standard quadrature.
pub fn scalar_solution(t: f64, h: f64) -> Result<f64> {
    scalar_solution_with(&OneBody::standard(), t, h)
}

/// Newton from `x = 1` on the convex function `x − F(t x + h)`, which decreases
/// monotonically onto the root; bisection guards the last digits.
pub fn scalar_solution_with(ob: &OneBody, t: f64, h: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain {
            what: "scalar solution slope t",
            value: t,
        });
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain {
            what: "scalar solution field h",
            value: h,
        });
    }
    if t == 0.0 {
        return Ok(ob.magnetization_unchecked(h));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut x = 1.0;
    for _ in 0..200 {
        let (f, df) = ob.magnetization_and_slope(t * x + h);
        let g = x - f;
        if g == 0.0 {
            return Ok(x);
        }
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - g / (1.0 - t * df);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= 2.0 * f64::EPSILON * x || hi - lo <= 2.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(x)
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
