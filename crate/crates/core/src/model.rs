//! Model parameters and the effective matrices of the layered chain.
//!
//! Layers are stored 0-based. Parity is always quoted in the 1-based convention:
//! the "odd" layers 1, 3, 5, … live at storage indices 0, 2, 4, … and the "even"
//! layers 2, 4, … at 1, 3, …. Every `oo`/`oe`/`eo`/`ee` block in this crate follows
//! that mapping.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ α_r = 1`.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Parameters of a K-layer machine: form factors, nearest-neighbour couplings and fields.
///
/// Only the superdiagonal `μ_{r,r+1}` is stored; the coupling matrix is symmetric,
/// tridiagonal and has zero diagonal by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModelSpec", into = "RawModelSpec")]
pub struct ModelSpec {
    alpha: Vec<f64>,
    mu: Vec<f64>,
    h: Vec<f64>,
}

/// Couplings as written in a config document: the superdiagonal or the full matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CouplingInput {
    Superdiagonal(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelSpec {
    #[serde(rename = "K")]
    k: usize,
    alpha: Vec<f64>,
    mu: CouplingInput,
    h: Vec<f64>,
}

impl TryFrom<RawModelSpec> for ModelSpec {
    type Error = Error;

    fn try_from(raw: RawModelSpec) -> Result<Self> {
        if raw.alpha.len() != raw.k {
            return Err(Error::InvalidModel(format!(
                "K = {} but alpha has {} entries",
                raw.k,
                raw.alpha.len()
            )));
        }
        let mu = match raw.mu {
            CouplingInput::Superdiagonal(v) => v,
            CouplingInput::Matrix(rows) => superdiagonal_of(&rows, raw.k)?,
        };
        ModelSpec::new(raw.alpha, mu, raw.h)
    }
}

impl From<ModelSpec> for RawModelSpec {
    fn from(spec: ModelSpec) -> Self {
        RawModelSpec {
            k: spec.k(),
            alpha: spec.alpha,
            mu: CouplingInput::Superdiagonal(spec.mu),
            h: spec.h,
        }
    }
}

fn superdiagonal_of(rows: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidModel(format!("mu matrix must be {k}x{k}")));
    }
    for r in 0..k {
        for s in 0..k {
            let v = rows[r][s];
            if r.abs_diff(s) != 1 && v != 0.0 {
                return Err(Error::InvalidModel(format!(
                    "mu must be tridiagonal with zero diagonal; entry ({}, {}) = {v}",
                    r + 1,
                    s + 1
                )));
            }
            if rows[s][r] != v {
                return Err(Error::InvalidModel(format!(
                    "mu must be symmetric; entries ({}, {}) and ({}, {}) differ",
                    r + 1,
                    s + 1,
                    s + 1,
                    r + 1
                )));
            }
        }
    }
    Ok((0..k - 1).map(|r| rows[r][r + 1]).collect())
}

impl ModelSpec {
    /// Validates and builds a spec. `mu` holds `μ_{r,r+1}` for `r = 1..K−1`.
    pub fn new(alpha: Vec<f64>, mu: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        let spec = Self::unnormalized(alpha, mu, h)?;
        if spec.k() < 2 {
            return Err(Error::InvalidModel(format!(
                "K must be at least 2, got {}",
                spec.k()
            )));
        }
        let total: f64 = spec.alpha.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidModel(format!(
                "form factors alpha must sum to 1 (within {SIMPLEX_TOL:e}); sum is {total}"
            )));
        }
        Ok(spec)
    }

    /// Same checks as [`ModelSpec::new`] except the simplex constraint and `K ≥ 2`.
    /// Used for the independent sub-chains left behind by a vanishing form factor.
    pub(crate) fn unnormalized(alpha: Vec<f64>, mu: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        let k = alpha.len();
        if k == 0 {
            return Err(Error::InvalidModel("no layers".into()));
        }
        if mu.len() + 1 != k {
            return Err(Error::InvalidModel(format!(
                "expected {} couplings mu for K = {k}, got {}",
                k - 1,
                mu.len()
            )));
        }
        if h.len() != k {
            return Err(Error::InvalidModel(format!(
                "expected {k} fields h, got {}",
                h.len()
            )));
        }
        let bad = |name: &str, v: &[f64]| {
            v.iter()
                .position(|x| !x.is_finite() || *x < 0.0)
                .map(|i| Error::InvalidModel(format!("{name}[{}] = {} must be >= 0", i + 1, v[i])))
        };
        if let Some(e) = bad("alpha", &alpha).or_else(|| bad("mu", &mu)).or_else(|| bad("h", &h)) {
            return Err(e);
        }
        Ok(Self { alpha, mu, h })
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Superdiagonal couplings `μ_{r,r+1}`.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Full coupling entry, 0-based.
    pub fn mu_entry(&self, r: usize, s: usize) -> f64 {
        match (r, s) {
            _ if s == r + 1 => self.mu[r],
            _ if r == s + 1 => self.mu[s],
            _ => 0.0,
        }
    }

    pub fn field_free(&self) -> bool {
        self.h.iter().all(|&x| x == 0.0)
    }

    pub fn with_h(&self, h: Vec<f64>) -> Result<Self> {
        Self::new(self.alpha.clone(), self.mu.clone(), h)
    }

    pub fn with_mu(&self, mu: Vec<f64>) -> Result<Self> {
        Self::new(self.alpha.clone(), mu, self.h.clone())
    }

    pub fn with_alpha(&self, alpha: Vec<f64>) -> Result<Self> {
        Self::new(alpha, self.mu.clone(), self.h.clone())
    }

    /// The same machine with layer order reversed (`1 ↔ K`).
    pub fn reversed(&self) -> Self {
        let rev = |v: &[f64]| v.iter().rev().copied().collect::<Vec<_>>();
        Self {
            alpha: rev(&self.alpha),
            mu: rev(&self.mu),
            h: rev(&self.h),
        }
    }

    pub(crate) fn sub_chain(&self, layers: std::ops::Range<usize>) -> Self {
        let mu_end = layers.end.saturating_sub(1).max(layers.start);
        Self {
            alpha: self.alpha[layers.clone()].to_vec(),
            mu: self.mu[layers.start..mu_end].to_vec(),
            h: self.h[layers].to_vec(),
        }
    }

    pub fn effective(&self) -> EffectiveMatrices {
        EffectiveMatrices::build(self)
    }

    /// Maximal runs of layers that interact in both directions: consecutive layers with
    /// `α_r > 0` joined by edges with `μ_{r,r+1} > 0`. Layers with `α_r = 0` belong to no
    /// segment; they feel their neighbours but do not act back on them.
    pub fn segments(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start: Option<usize> = None;
        for r in 0..self.k() {
            if self.alpha[r] == 0.0 {
                if let Some(s) = start.take() {
                    out.push(s..r);
                }
                continue;
            }
            match start {
                None => start = Some(r),
                Some(s) if self.mu[r - 1] == 0.0 => {
                    out.push(s..r);
                    start = Some(r);
                }
                Some(_) => {}
            }
        }
        if let Some(s) = start {
            out.push(s..self.k());
        }
        out
    }

    /// True when the whole chain is one interacting segment.
    pub fn fully_coupled(&self) -> bool {
        self.alpha.iter().all(|&a| a > 0.0) && self.mu.iter().all(|&m| m > 0.0)
    }
}

/// `Δ_{rs} = α_r μ_{rs} α_s` and `M_{rs} = μ_{rs} α_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveMatrices {
    pub delta: DMatrix<f64>,
    pub m: DMatrix<f64>,
}

impl EffectiveMatrices {
    pub fn build(spec: &ModelSpec) -> Self {
        let k = spec.k();
        let a = spec.alpha();
        let mut delta = DMatrix::zeros(k, k);
        let mut m = DMatrix::zeros(k, k);
        for (r, &mu) in spec.mu().iter().enumerate() {
            let d = a[r] * mu * a[r + 1];
            delta[(r, r + 1)] = d;
            delta[(r + 1, r)] = d;
            m[(r, r + 1)] = mu * a[r + 1];
            m[(r + 1, r)] = mu * a[r];
        }
        Self { delta, m }
    }

    pub fn k(&self) -> usize {
        self.m.nrows()
    }

    /// `[M²]^(oo) = M^(oe) M^(eo)`.
    pub fn m_squared_oo(&self) -> DMatrix<f64> {
        OddEvenSplit::of(&(&self.m * &self.m)).oo
    }

    /// `ρ([M²]^(oo))`: power iteration with Collatz–Wielandt bounds, dense fallback.
    pub fn spectral_radius_oo(&self) -> f64 {
        self.spectral_radius_oo_with(&PowerIterationOptions::default())
    }

    pub fn spectral_radius_oo_with(&self, opts: &PowerIterationOptions) -> f64 {
        let a = self.m_squared_oo();
        match power_iteration(&a, opts) {
            Ok(p) => p.eigenvalue,
            Err(_) => dense_spectral_radius(&a),
        }
    }

    /// `ρ([M²]^(ee))`, equal to the odd block's radius for even K.
    pub fn spectral_radius_ee(&self) -> f64 {
        let a = OddEvenSplit::of(&(&self.m * &self.m)).ee;
        match power_iteration(&a, &PowerIterationOptions::default()) {
            Ok(p) => p.eigenvalue,
            Err(_) => dense_spectral_radius(&a),
        }
    }

    /// Perron eigenvector of `[M²]^(oo)`, normalized to unit sum.
    ///
    /// Requires every off-diagonal entry of `M` on the chain to be positive, i.e. all
    /// `α_r > 0` and all `μ_{r,r+1} > 0`; otherwise the block is reducible.
    pub fn perron_vector(&self) -> Result<DVector<f64>> {
        let k = self.k();
        for r in 0..k - 1 {
            if !(self.m[(r, r + 1)] > 0.0 && self.m[(r + 1, r)] > 0.0) {
                return Err(Error::Precondition(format!(
                    "Perron vector needs all form factors and couplings positive; edge ({}, {}) vanishes",
                    r + 1,
                    r + 2
                )));
            }
        }
        let a = self.m_squared_oo();
        let p = power_iteration(&a, &PowerIterationOptions::default())?;
        Ok(p.vector)
    }
}

/// The four parity blocks of a square matrix (1-based parity, see module docs).
#[derive(Debug, Clone, PartialEq)]
pub struct OddEvenSplit {
    pub oo: DMatrix<f64>,
    pub oe: DMatrix<f64>,
    pub eo: DMatrix<f64>,
    pub ee: DMatrix<f64>,
}

/// Storage indices of the 1-based odd layers.
pub fn odd_indices(k: usize) -> Vec<usize> {
    (0..k).step_by(2).collect()
}

/// Storage indices of the 1-based even layers.
pub fn even_indices(k: usize) -> Vec<usize> {
    (1..k).step_by(2).collect()
}

fn block(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

impl OddEvenSplit {
    pub fn of(a: &DMatrix<f64>) -> Self {
        assert!(a.is_square(), "parity split needs a square matrix");
        let k = a.nrows();
        let (o, e) = (odd_indices(k), even_indices(k));
        Self {
            oo: block(a, &o, &o),
            oe: block(a, &o, &e),
            eo: block(a, &e, &o),
            ee: block(a, &e, &e),
        }
    }

    pub fn reassemble(&self) -> DMatrix<f64> {
        let k = self.oo.nrows() + self.ee.nrows();
        let (o, e) = (odd_indices(k), even_indices(k));
        let mut a = DMatrix::zeros(k, k);
        for (bl, rows, cols) in [
            (&self.oo, &o, &o),
            (&self.oe, &o, &e),
            (&self.eo, &e, &o),
            (&self.ee, &e, &e),
        ] {
            for (i, &r) in rows.iter().enumerate() {
                for (j, &c) in cols.iter().enumerate() {
                    a[(r, c)] = bl[(i, j)];
                }
            }
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIterationOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerronPair {
    pub eigenvalue: f64,
    /// Unit-sum, nonnegative.
    pub vector: DVector<f64>,
    pub iterations: usize,
}

/// Power iteration for a nonnegative square matrix from the all-ones vector.
///
/// Stops once the Collatz–Wielandt bounds `min_i (Av)_i/v_i ≤ ρ ≤ max_i (Av)_i/v_i`
/// are within `tol·max(1, ρ)`. An iterate with a vanishing component makes the bounds
/// unusable and is reported as non-convergence.
pub fn power_iteration(a: &DMatrix<f64>, opts: &PowerIterationOptions) -> Result<PerronPair> {
    let n = a.nrows();
    assert!(a.is_square() && n > 0, "power iteration needs a non-empty square matrix");
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut gap = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let w = a * &v;
        let total: f64 = w.iter().sum();
        if total == 0.0 {
            // nilpotent on the positive cone
            return Ok(PerronPair {
                eigenvalue: 0.0,
                vector: v,
                iterations: it,
            });
        }
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..n {
            if v[i] <= 0.0 {
                return Err(Error::NotConverged {
                    method: "power iteration",
                    iterations: it,
                    residual: f64::INFINITY,
                });
            }
            let ratio = w[i] / v[i];
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        v = w / total;
        gap = hi - lo;
        if gap <= opts.tol * hi.max(1.0) {
            return Ok(PerronPair {
                eigenvalue: 0.5 * (hi + lo),
                vector: v,
                iterations: it,
            });
        }
    }
    Err(Error::NotConverged {
        method: "power iteration",
        iterations: opts.max_iter,
        residual: gap,
    })
}

/// Largest eigenvalue modulus by a dense Schur decomposition.
pub fn dense_spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}
