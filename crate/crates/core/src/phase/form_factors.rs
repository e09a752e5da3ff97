//! Maximizing `ρ([M²]^(oo))` over the form-factor simplex for fixed couplings.
//!
//! `[M²]^(oo) = B α̂_o` with `B_ij = Σ_e μ_ie α_e μ_ej` symmetric, so its spectrum is
//! that of the symmetric tridiagonal `S = α̂_o^{1/2} B α̂_o^{1/2}`. The grid search
//! evaluates `λ_max(S)` directly, which is much cheaper than building `M`.

use nalgebra::{DMatrix, Matrix2, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormFactorOptions {
    /// The grid has step `1/grid_divisions` in every coordinate.
    pub grid_divisions: usize,
    /// Refuse grids with more points than this.
    pub max_grid_points: u64,
    /// Tolerance on α components when matching the optimality conditions.
    pub match_tol: f64,
    /// Polish the best grid point with Nelder–Mead on the simplex.
    pub refine: bool,
}

impl Default for FormFactorOptions {
    fn default() -> Self {
        Self {
            grid_divisions: 40,
            max_grid_points: 20_000_000,
            match_tol: 1e-3,
            refine: true,
        }
    }
}

/// Which characterization of the maximizer holds (layers and edges counted from 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "condition", rename_all = "snake_case")]
pub enum OptimumCondition {
    /// `α_r = α_{r+1} = 1/2` on a maximal edge `(r, r+1)`.
    PairOnMaxEdge { r: usize },
    /// `α_r = α_{r−1} + α_{r+1} = 1/2` with both edges at `r` maximal.
    CenteredOnMaxPair { r: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormFactorOptimum {
    pub alpha_star: Vec<f64>,
    pub rho_star: f64,
    /// `max_r μ²_{r,r+1} / 4`.
    pub bound: f64,
    pub condition: Option<OptimumCondition>,
    pub grid_points: u64,
}

/// `ρ([M²]^(oo))` for couplings `mu` (superdiagonal) and form factors `alpha`.
pub fn rho_for_alpha(mu: &[f64], alpha: &[f64]) -> f64 {
    let k = alpha.len();
    debug_assert_eq!(mu.len() + 1, k);
    let n = k.div_ceil(2);
    let diag = |l: usize| {
        let i = 2 * l;
        let mut b = 0.0;
        if i >= 1 {
            b += mu[i - 1] * mu[i - 1] * alpha[i - 1];
        }
        if i + 1 < k {
            b += mu[i] * mu[i] * alpha[i + 1];
        }
        alpha[i] * b
    };
    let off = |l: usize| {
        let i = 2 * l;
        (alpha[i] * alpha[i + 2]).sqrt() * mu[i] * alpha[i + 1] * mu[i + 1]
    };
    let lmax = match n {
        1 => diag(0),
        2 => Matrix2::new(diag(0), off(0), off(0), diag(1)).symmetric_eigenvalues().max(),
        3 => Matrix3::new(diag(0), off(0), 0.0, off(0), diag(1), off(1), 0.0, off(1), diag(2))
            .symmetric_eigenvalues()
            .max(),
        _ => {
            let s = DMatrix::from_fn(n, n, |a, b| {
                if a == b {
                    diag(a)
                } else if a + 1 == b {
                    off(a)
                } else if b + 1 == a {
                    off(b)
                } else {
                    0.0
                }
            });
            s.symmetric_eigenvalues().max()
        }
    };
    lmax.max(0.0)
}

/// [`optimize_form_factors_with`] at the default settings.
pub fn optimize_form_factors(mu: &[f64]) -> Result<FormFactorOptimum> {
    optimize_form_factors_with(mu, &FormFactorOptions::default())
}

/// Grid search over the simplex followed by projected Nelder–Mead.
pub fn optimize_form_factors_with(mu: &[f64], opts: &FormFactorOptions) -> Result<FormFactorOptimum> {
    let k = mu.len() + 1;
    if k < 2 {
        return Err(Error::Precondition("form-factor optimization needs K >= 2".into()));
    }
    if let Some(&bad) = mu.iter().find(|m| !(**m >= 0.0) || !m.is_finite()) {
        return Err(Error::Domain {
            what: "coupling mu",
            value: bad,
        });
    }
    let mu_max = mu.iter().cloned().fold(0.0, f64::max);
    if mu_max == 0.0 {
        return Err(Error::Precondition("all couplings vanish; every α gives ρ = 0".into()));
    }
    if opts.grid_divisions == 0 {
        return Err(Error::Precondition("grid_divisions must be positive".into()));
    }
    let points = compositions_count(opts.grid_divisions as u64, k as u64);
    if points > opts.max_grid_points {
        return Err(Error::Precondition(format!(
            "simplex grid for K = {k} at step 1/{} has {points} points (cap {})",
            opts.grid_divisions, opts.max_grid_points
        )));
    }

    let n = opts.grid_divisions;
    let step = 1.0 / n as f64;
    let mut counts = vec![0usize; k];
    let mut alpha = vec![0.0; k];
    let mut best = (f64::NEG_INFINITY, vec![0.0; k]);
    for_each_composition(n, &mut counts, 0, &mut |c| {
        for (a, &ci) in alpha.iter_mut().zip(c) {
            *a = ci as f64 * step;
        }
        let r = rho_for_alpha(mu, &alpha);
        if r > best.0 {
            best = (r, alpha.clone());
        }
    });

    if opts.refine {
        let (r, a) = nelder_mead_on_simplex(|a| rho_for_alpha(mu, a), &best.1, step);
        if r > best.0 {
            best = (r, a);
        }
    }
    let (rho_star, alpha_star) = best;
    let condition = match_condition(mu, &alpha_star, opts.match_tol);
    Ok(FormFactorOptimum {
        alpha_star,
        rho_star,
        bound: 0.25 * mu_max * mu_max,
        condition,
        grid_points: points,
    })
}

/// First optimality condition satisfied by `alpha` within `tol`, if any.
pub(crate) fn match_condition(mu: &[f64], alpha: &[f64], tol: f64) -> Option<OptimumCondition> {
    let k = alpha.len();
    let mu_max = mu.iter().cloned().fold(0.0, f64::max);
    let is_max = |e: usize| mu[e] >= mu_max * (1.0 - 1e-12);
    let near = |v: f64| (v - 0.5).abs() <= tol;
    for r in 0..k - 1 {
        if is_max(r) && near(alpha[r]) && near(alpha[r + 1]) {
            return Some(OptimumCondition::PairOnMaxEdge { r: r + 1 });
        }
    }
    for r in 1..k.saturating_sub(1) {
        if is_max(r - 1) && is_max(r) && near(alpha[r]) && near(alpha[r - 1] + alpha[r + 1]) {
            return Some(OptimumCondition::CenteredOnMaxPair { r: r + 1 });
        }
    }
    None
}

/// Number of ways to write `n` as an ordered sum of `k` nonnegative integers.
fn compositions_count(n: u64, k: u64) -> u64 {
    // C(n + k − 1, k − 1), saturating
    let mut c: u128 = 1;
    for i in 1..k as u128 {
        c = c * (n as u128 + i) / i;
        if c > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    c as u64
}

fn for_each_composition(left: usize, counts: &mut [usize], pos: usize, f: &mut impl FnMut(&[usize])) {
    if pos == counts.len() - 1 {
        counts[pos] = left;
        f(counts);
        return;
    }
    for c in 0..=left {
        counts[pos] = c;
        for_each_composition(left - c, counts, pos + 1, f);
    }
}

/// Euclidean projection onto `{a ≥ 0, Σ a = 1}`.
pub(crate) fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Maximizes `f` by Nelder–Mead, projecting every trial point onto the simplex.
fn nelder_mead_on_simplex(f: impl Fn(&[f64]) -> f64, start: &[f64], size: f64) -> (f64, Vec<f64>) {
    let n = start.len();
    let eval = |p: Vec<f64>| {
        let p = project_to_simplex(&p);
        (f(&p), p)
    };
    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n + 1);
    simplex.push(eval(start.to_vec()));
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += size;
        simplex.push(eval(p));
    }
    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };

    for _ in 0..200 * n {
        // best first
        simplex.sort_by(|a, b| b.0.total_cmp(&a.0));
        let spread = simplex[0].0 - simplex[n].0;
        let diameter = simplex[1..]
            .iter()
            .map(|(_, p)| p.iter().zip(&simplex[0].1).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
            .fold(0.0f64, f64::max);
        if spread <= 1e-15 * simplex[0].0.abs().max(1.0) && diameter < 1e-12 {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (_, p) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflected = eval(combine(&centroid, &worst.1, -1.0));
        if reflected.0 > simplex[0].0 {
            let expanded = eval(combine(&centroid, &worst.1, -2.0));
            simplex[n] = if expanded.0 > reflected.0 { expanded } else { reflected };
        } else if reflected.0 > simplex[n - 1].0 {
            simplex[n] = reflected;
        } else {
            let contracted = eval(combine(&centroid, &worst.1, 0.5));
            if contracted.0 > worst.0 {
                simplex[n] = contracted;
            } else {
                let best = simplex[0].1.clone();
                for v in simplex.iter_mut().skip(1) {
                    *v = eval(combine(&best, &v.1, 0.5));
                }
            }
        }
    }
    simplex.sort_by(|a, b| b.0.total_cmp(&a.0));
    simplex.swap_remove(0)
}
