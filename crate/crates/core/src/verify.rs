//! Self-checks across all modules, run as a table of named invariants.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ModelSpec;
use crate::phase::{optimize_form_factors, perron_instability_check, scan, ScanGrid, ScanOptions, Stability};
use crate::simulator::{exact_enumerate, quenched_run, run_block_gibbs, sample_disorder, Engine, SystemSize};
use crate::special::OneBody;
use crate::variational::{
    FixedPointOptions, NestedOptions, Phase, PiAscentOptions, Variational, CRITICAL_WINDOW,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    /// Random specs per solver check.
    pub random_specs: usize,
    /// Disorder samples for the finite-size checks.
    pub n_disorder: usize,
    /// System size for the exact-enumeration checks.
    pub enumeration_n: usize,
    pub gibbs_sweeps: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            random_specs: 10,
            n_disorder: 200,
            enumeration_n: 12,
            gibbs_sweeps: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Check = fn(&ModelSpec, &VerifyOptions, &mut ChaCha8Rng) -> Result<(bool, String)>;

const CHECKS: &[(&str, Check)] = &[
    ("quadrature_identities", quadrature_identities),
    ("pressure_convexity", pressure_convexity),
    ("model_solution", model_solution),
    ("solver_agreement", solver_agreement),
    ("phase_dichotomy", phase_dichotomy),
    ("phase_boundary_scan", phase_boundary_scan),
    ("form_factor_bound", form_factor_bound),
    ("hessian_sign", hessian_sign),
    ("perron_direction", perron_direction),
    ("enumeration_nishimori", enumeration_nishimori),
    ("spin_flip_symmetry", spin_flip_symmetry),
    ("gibbs_vs_enumeration", gibbs_vs_enumeration),
];

/// Names of all checks, in run order.
pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs every check on `spec` (where a check uses a model) and on seeded random models.
pub fn run_checks(spec: &ModelSpec, opts: &VerifyOptions, seed: u64) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(i, (name, check))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let start = Instant::now();
            let (passed, detail) = match check(spec, opts, &mut rng) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckOutcome {
                name: name.to_string(),
                passed,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    let mut a: Vec<f64> = e.iter().map(|v| v / s).collect();
    let rest: f64 = a[..k - 1].iter().sum();
    a[k - 1] = 1.0 - rest;
    a
}

fn random_spec(rng: &mut ChaCha8Rng, k: usize, mu: (f64, f64), h: (f64, f64)) -> Result<ModelSpec> {
    let alpha = simplex(rng, k);
    let mu = (0..k - 1).map(|_| rng.random_range(mu.0..=mu.1)).collect();
    let h = (0..k).map(|_| rng.random_range(h.0..=h.1)).collect();
    ModelSpec::new(alpha, mu, h)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn quadrature_identities(_: &ModelSpec, _: &VerifyOptions, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let ob = OneBody::standard();
    let mut worst = 0.0f64;
    for i in 0..25 {
        let h = 10f64.powf(-6.0 + 8.0 * i as f64 / 24.0);
        for n in 1..=3 {
            worst = worst.max(ob.nishimori_residual(h, n)?);
        }
    }
    Ok((worst < 1e-10, format!("worst residual {worst:.2e}")))
}

fn pressure_convexity(_: &ModelSpec, _: &VerifyOptions, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let ob = OneBody::standard();
    let d = 0.05;
    let (mut min_second, mut max_third) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..=500 {
        let x = 0.1 * i as f64;
        let lo = (x - d).max(0.0);
        let second = ob.pressure(lo + 2.0 * d)? - 2.0 * ob.pressure(lo + d)? + ob.pressure(lo)?;
        min_second = min_second.min(second);
        if x >= 0.1 {
            let third = ob.pressure(x + 2.0 * d)? - 2.0 * ob.pressure(x + d)? + 2.0 * ob.pressure(x - d)?
                - ob.pressure(x - 2.0 * d)?;
            max_third = max_third.max(third);
        }
    }
    Ok((
        min_second >= -1e-10 && max_third <= 1e-8,
        format!("min second difference {min_second:.2e}, max third difference {max_third:.2e}"),
    ))
}

fn model_solution(spec: &ModelSpec, _: &VerifyOptions, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let v = Variational::new(spec);
    let sol = v.solve_fixed_point(&FixedPointOptions::default())?;
    let ok = sol.phase == Phase::Unresolved || sol.gradient_norm < 1e-8;
    Ok((
        ok,
        format!("phase {}, rho {:.6}, gradient {:.2e}", sol.phase, sol.rho, sol.gradient_norm),
    ))
}

fn solver_agreement(_: &ModelSpec, opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    let mut worst_grad = 0.0f64;
    for i in 0..opts.random_specs {
        let k = 2 + i % 4;
        let s = random_spec(rng, k, (0.2, 4.0), (0.05, 1.0))?;
        let v = Variational::new(&s);
        let fp = v.solve_fixed_point(&FixedPointOptions::default())?;
        let nb = v.solve_nested_bisection(&NestedOptions::default())?;
        worst = worst.max(max_diff(fp.x_bar.as_slice(), nb.x_bar.as_slice()));
        worst_grad = worst_grad.max(fp.gradient_norm).max(nb.gradient_norm);
        if k % 2 == 0 {
            let pa = v.solve_pi_ascent(&PiAscentOptions::default())?;
            worst = worst.max(max_diff(fp.x_bar.as_slice(), pa.x_bar.as_slice()));
            worst_grad = worst_grad.max(pa.gradient_norm);
        }
    }
    Ok((
        worst < 1e-7 && worst_grad < 1e-8,
        format!("max disagreement {worst:.2e}, max gradient {worst_grad:.2e}"),
    ))
}

fn phase_dichotomy(_: &ModelSpec, opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut bad = 0;
    let mut tested = 0;
    for i in 0..opts.random_specs {
        let k = 2 + 2 * (i % 3);
        let s = random_spec(rng, k, (0.2, 4.0), (0.0, 0.0))?;
        let v = Variational::new(&s);
        let rho = v.spectral_radius();
        if (rho - 1.0).abs() < CRITICAL_WINDOW {
            continue;
        }
        tested += 1;
        let sol = v.solve_fixed_point(&FixedPointOptions::default())?;
        let zero = sol.x_bar.is_zero();
        let positive = sol.x_bar.as_slice().iter().all(|&x| x > 0.0);
        if (rho < 1.0 && !zero) || (rho > 1.0 && !positive) {
            bad += 1;
        }
    }
    Ok((bad == 0, format!("{bad} of {tested} specs disagree with the sign of rho - 1")))
}

fn phase_boundary_scan(_: &ModelSpec, _: &VerifyOptions, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let template = ModelSpec::new(vec![0.5, 0.5], vec![1.0], vec![0.0, 0.0])?;
    let grid = ScanGrid::MuEdge {
        edge: 1,
        values: ScanGrid::linspace(1.0, 3.0, 0.1)?,
    };
    let pts = scan(&template, &grid, &ScanOptions::default())?;
    let ok = pts.iter().all(|p| {
        let mu = p.grid_value[0];
        match p.phase() {
            Some(Phase::ZeroSolution) => mu < 2.0,
            Some(Phase::BrokenSymmetry) => mu > 2.0,
            Some(Phase::Unresolved) => (mu - 2.0).abs() < 1e-9,
            _ => false,
        }
    });
    Ok((ok, format!("{} points, flip at mu = 2", pts.len())))
}

fn form_factor_bound(_: &ModelSpec, opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    let mut unmatched = 0;
    for i in 0..opts.random_specs.min(6) {
        let k = 3 + i % 4;
        let mu: Vec<f64> = (0..k - 1).map(|_| rng.random_range(0.1..4.0)).collect();
        let opt = optimize_form_factors(&mu)?;
        worst = worst.max((opt.rho_star - opt.bound).abs());
        if opt.condition.is_none() {
            unmatched += 1;
        }
    }
    Ok((
        worst < 1e-6 && unmatched == 0,
        format!("max |rho* - max mu^2/4| {worst:.2e}, unmatched maximizers {unmatched}"),
    ))
}

fn hessian_sign(_: &ModelSpec, opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut bad = 0;
    let mut found = 0;
    let mut attempts = 0;
    while found < opts.random_specs.min(5) && attempts < 1000 {
        attempts += 1;
        let s = random_spec(rng, 4, (0.3, 3.0), (0.0, 0.0))?;
        let v = Variational::new(&s);
        if v.spectral_radius() >= 0.9 {
            continue;
        }
        found += 1;
        for _ in 0..5 {
            let xo: Vec<f64> = (0..2).map(|_| rng.random_range(0.01..0.95)).collect();
            if v.hessian_pi_eigenvalues(&xo)?.iter().any(|&e| e >= 0.0) {
                bad += 1;
            }
        }
    }
    Ok((
        bad == 0 && found > 0,
        format!("{found} subcritical specs, {bad} points with a nonnegative eigenvalue"),
    ))
}

fn perron_direction(_: &ModelSpec, opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut bad = 0;
    let mut found = 0;
    let mut attempts = 0;
    while found < opts.random_specs.min(5) && attempts < 1000 {
        attempts += 1;
        let s = random_spec(rng, 4, (1.0, 6.0), (0.0, 0.0))?;
        let v = Variational::new(&s);
        if v.spectral_radius() <= 1.1 {
            continue;
        }
        found += 1;
        let ev = v.hessian_pi_eigenvalues(&[0.0, 0.0])?;
        let report = perron_instability_check(&s)?;
        if ev.last().copied().unwrap_or(0.0) <= 0.0 || report.verdict != Stability::Unstable {
            bad += 1;
        }
    }
    Ok((
        bad == 0 && found > 0,
        format!("{found} supercritical specs, {bad} without an unstable Perron direction"),
    ))
}

fn enumeration_nishimori(_: &ModelSpec, opts: &VerifyOptions, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let spec = ModelSpec::new(vec![0.5, 0.5], vec![4.0], vec![0.1, 0.1])?;
    let size = SystemSize::from_alpha(spec.alpha(), opts.enumeration_n)?;
    let rep = quenched_run(&spec, &size, opts.n_disorder, 1, Engine::Enumeration)?;
    let layer_ok = (0..2).all(|r| (rep.mean_m[r] - rep.mean_q[r]).abs() < 4.0 * rep.stderr_m_minus_q[r]);
    let site = rep.site_identity.clone().unwrap_or(crate::simulator::SiteIdentity {
        gap: f64::NAN,
        stderr: 0.0,
    });
    let site_ok = site.gap.abs() < 4.0 * site.stderr;
    Ok((
        layer_ok && site_ok,
        format!(
            "E m - E q = {:.2e} (se {:.1e}), site gap {:.2e} (se {:.1e})",
            rep.mean_m[0] - rep.mean_q[0],
            rep.stderr_m_minus_q[0],
            site.gap,
            site.stderr
        ),
    ))
}

fn spin_flip_symmetry(_: &ModelSpec, opts: &VerifyOptions, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let spec = ModelSpec::new(vec![0.5, 0.5], vec![4.0], vec![0.0, 0.0])?;
    let size = SystemSize::from_alpha(spec.alpha(), opts.enumeration_n)?;
    let rep = quenched_run(&spec, &size, opts.n_disorder.min(50), 2, Engine::Enumeration)?;
    let worst = rep.mean_m.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((worst < 1e-12, format!("max |E m_r| {worst:.1e}")))
}

fn gibbs_vs_enumeration(_: &ModelSpec, opts: &VerifyOptions, _: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let spec = ModelSpec::new(vec![0.5, 0.5], vec![3.0], vec![0.2, 0.2])?;
    let size = SystemSize::from_alpha(spec.alpha(), 16)?;
    let d = sample_disorder(&spec, &size, 3)?;
    let exact = exact_enumerate(&d)?;
    let burn_in = opts.gibbs_sweeps / 20;
    let g = run_block_gibbs(&d, opts.gibbs_sweeps, burn_in, 4)?;
    let z = (0..2)
        .map(|r| (g.m[r] - exact.m[r]).abs() / g.stderr_m[r].max(1e-300))
        .fold(0.0f64, f64::max);
    Ok((z < 4.0, format!("largest deviation {z:.2} stderr")))
}
