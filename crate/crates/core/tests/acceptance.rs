//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any criterion fails.
//!
//! Every tolerance, threshold, sample count and seed is pinned below.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dbm_core::model::{dense_spectral_radius, ModelSpec};
use dbm_core::phase::{optimize_form_factors, perron_instability_check, Stability};
use dbm_core::simulator::{quenched_run, Engine, QuenchedReport, SystemSize};
use dbm_core::special::OneBody;
use dbm_core::variational::{FixedPointOptions, NestedOptions, PiAscentOptions, Variational};

const SEED: u64 = 42;

// criterion 1
const NISHIMORI_TOL: f64 = 1e-10;
const CONVEXITY_TOL: f64 = 1e-10;
const THIRD_DIFF_TOL: f64 = 1e-8;
const FD_STEP: f64 = 0.05;
// criterion 2
const ZERO_TOL: f64 = 1e-12;
const BROKEN_MIN: f64 = 0.1;
const RHO_GRID_STEP: f64 = 0.01;
// criterion 3
const RHO_STAR_TOL: f64 = 1e-6;
const CONDITION_TOL: f64 = 1e-3;
// criterion 4
const AGREEMENT_TOL: f64 = 1e-7;
const GRADIENT_TOL: f64 = 1e-8;
// criterion 6
const ENUMERATION_SIZES: [usize; 3] = [8, 16, 24];
const ENUMERATION_SAMPLES: usize = 200;
const GIBBS_N: usize = 2000;
const GIBBS_SAMPLES: usize = 100;
const GIBBS_SWEEPS: usize = 2000;
const GIBBS_BURN_IN: usize = 200;
const GIBBS_ABS_TOL: f64 = 0.02;
const STDERR_MULTIPLE: f64 = 4.0;
// criterion 8
const PRESSURE_SIZES: [usize; 2] = [10, 20];
const PRESSURE_SAMPLES: usize = 200;
const PRESSURE_TOL: f64 = 0.05;
const VAR_RATIO_RANGE: (f64, f64) = (1.0, 4.0);

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn run(id: usize, title: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let passed = out.passed && in_time;
    println!(
        "{} criterion {id} ({title}): {} [{:.1}s of {}s]",
        if passed { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    if !in_time {
        println!("     over the runtime budget");
    }
    passed
}

fn simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    let mut a: Vec<f64> = e.iter().map(|v| v / s).collect();
    let rest: f64 = a[..k - 1].iter().sum();
    a[k - 1] = 1.0 - rest;
    a
}

fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(SEED);
    r.set_stream(stream);
    r
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn balanced(mu: f64, h: f64) -> ModelSpec {
    ModelSpec::new(vec![0.5, 0.5], vec![mu], vec![h, h]).unwrap()
}

fn quadrature_identities() -> Outcome {
    let ob = OneBody::standard();
    let mut worst = 0.0f64;
    for i in 0..25 {
        let h = 10f64.powf(-6.0 + 8.0 * i as f64 / 24.0);
        for n in 1..=3 {
            worst = worst.max(ob.nishimori_residual(h, n).unwrap());
        }
    }
    let psi = |x: f64| ob.pressure(x).unwrap();
    let d = FD_STEP;
    let mut min_second = f64::INFINITY;
    let mut max_third = f64::NEG_INFINITY;
    for i in 1..=500 {
        let x = 0.1 * i as f64;
        min_second = min_second.min(psi(x + d) - 2.0 * psi(x) + psi(x - d));
        max_third = max_third.max(psi(x + 2.0 * d) - 2.0 * psi(x + d) + 2.0 * psi(x - d) - psi(x - 2.0 * d));
    }
    Outcome::new(
        worst < NISHIMORI_TOL && min_second >= -CONVEXITY_TOL && max_third <= THIRD_DIFF_TOL,
        format!(
            "worst Nishimori residual {worst:.2e}, min second difference {min_second:.2e}, \
             max third difference {max_third:.2e}"
        ),
    )
}

fn phase_boundary() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for mu in [1.0, 1.5, 1.9, 2.1, 2.5, 3.0] {
        let sol = Variational::new(&balanced(mu, 0.0))
            .solve_fixed_point(&FixedPointOptions::default())
            .unwrap();
        let x = sol.x_bar.as_slice();
        let good = if mu < 2.0 {
            x.iter().all(|v| v.abs() < ZERO_TOL)
        } else {
            x.iter().all(|&v| v > BROKEN_MIN)
        };
        ok &= good;
        notes.push(format!("mu {mu}: min x {:.4}", x.iter().cloned().fold(f64::INFINITY, f64::min)));
    }
    // sign change of rho - 1 on a grid of step 0.01
    let steps = ((3.0 - 1.0) / RHO_GRID_STEP).round() as usize;
    let rho = |mu: f64| dense_spectral_radius(&balanced(mu, 0.0).effective().m_squared_oo());
    let mut crossing = None;
    for i in 0..steps {
        let (a, b) = (1.0 + RHO_GRID_STEP * i as f64, 1.0 + RHO_GRID_STEP * (i + 1) as f64);
        if (rho(a) - 1.0) < 0.0 && (rho(b) - 1.0) >= 0.0 {
            crossing = Some((a, b));
            break;
        }
    }
    let located = crossing.is_some_and(|(a, b)| a <= 2.0 && 2.0 <= b && b - a <= RHO_GRID_STEP + 1e-12);
    Outcome::new(
        ok && located,
        format!("{}; rho crosses 1 in {crossing:?}", notes.join(", ")),
    )
}

/// Condition (a): `α_r = α_{r+1} = 1/2` on an edge of maximal coupling.
/// Condition (b): two maximal edges around layer `r` with `α_r = α_{r−1} + α_{r+1} = 1/2`.
fn satisfies_condition(mu: &[f64], alpha: &[f64]) -> bool {
    let top = mu.iter().cloned().fold(0.0, f64::max);
    let is_max = |e: usize| mu[e] == top;
    let half = |v: f64| (v - 0.5).abs() <= CONDITION_TOL;
    let a = (0..mu.len()).any(|e| is_max(e) && half(alpha[e]) && half(alpha[e + 1]));
    let b = (1..mu.len()).any(|e| is_max(e - 1) && is_max(e) && half(alpha[e]) && half(alpha[e - 1] + alpha[e + 1]));
    a || b
}

fn form_factor_optimum() -> Outcome {
    let mut rng = rng(3);
    let mut worst_value = 0.0f64;
    let mut worst_recomputed = 0.0f64;
    let mut unmatched = 0;
    for i in 0..10 {
        let k = 3 + i % 4;
        let mu: Vec<f64> = (0..k - 1).map(|_| rng.random_range(0.1..4.0)).collect();
        let opt = optimize_form_factors(&mu).unwrap();
        let bound = mu.iter().map(|m| m * m / 4.0).fold(0.0, f64::max);
        worst_value = worst_value.max((opt.rho_star - bound).abs());
        // the returned maximizer must actually attain rho_star
        let spec = ModelSpec::new(opt.alpha_star.clone(), mu.clone(), vec![0.0; k]).unwrap();
        worst_recomputed = worst_recomputed.max((dense_spectral_radius(&spec.effective().m_squared_oo()) - opt.rho_star).abs());
        if !satisfies_condition(&mu, &opt.alpha_star) {
            unmatched += 1;
        }
    }
    Outcome::new(
        worst_value < RHO_STAR_TOL && worst_recomputed < RHO_STAR_TOL && unmatched == 0,
        format!(
            "max |rho* - max mu^2/4| {worst_value:.2e}, max |rho(alpha*) - rho*| {worst_recomputed:.2e}, \
             {unmatched} of 10 maximizers match neither condition"
        ),
    )
}

fn solver_cross_validation() -> Outcome {
    let mut rng = rng(4);
    let mut worst = 0.0f64;
    let mut worst_grad = 0.0f64;
    let mut failures = 0;
    for i in 0..20 {
        let k = 2 + i % 4;
        let alpha = simplex(&mut rng, k);
        let mu = (0..k - 1).map(|_| rng.random_range(0.2..4.0)).collect();
        let h = (0..k).map(|_| rng.random_range(0.05..=1.0)).collect();
        let v = Variational::new(&ModelSpec::new(alpha, mu, h).unwrap());
        let mut sols = Vec::new();
        sols.push(v.solve_fixed_point(&FixedPointOptions::default()));
        if k % 2 == 0 {
            sols.push(v.solve_pi_ascent(&PiAscentOptions::default()));
        }
        sols.push(v.solve_nested_bisection(&NestedOptions::default()));
        let sols: Vec<_> = sols.into_iter().filter_map(|s| s.map_err(|_| failures += 1).ok()).collect();
        for s in &sols {
            worst = worst.max(max_abs_diff(s.x_bar.as_slice(), sols[0].x_bar.as_slice()));
            // recomputed from scratch rather than trusted from the solver
            let g = v.grad_p_var(s.x_bar.as_slice()).unwrap();
            worst_grad = worst_grad.max(g.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        }
    }
    Outcome::new(
        failures == 0 && worst < AGREEMENT_TOL && worst_grad < GRADIENT_TOL,
        format!("max disagreement {worst:.2e}, max gradient {worst_grad:.2e}, {failures} solver failures"),
    )
}

fn hessian_dichotomy() -> Outcome {
    let mut rng = rng(5);
    let mut sub_bad = 0;
    let mut sub_found = 0;
    let mut largest_sub = f64::NEG_INFINITY;
    while sub_found < 10 {
        let alpha = simplex(&mut rng, 4);
        let mu = (0..3).map(|_| rng.random_range(0.3..3.0)).collect();
        let h = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
        let spec = ModelSpec::new(alpha, mu, h).unwrap();
        let v = Variational::new(&spec);
        if v.spectral_radius() >= 0.9 {
            continue;
        }
        sub_found += 1;
        for _ in 0..5 {
            let xo: Vec<f64> = (0..2).map(|_| rng.random_range(0.01..0.99)).collect();
            let ev = v.hessian_pi_eigenvalues(&xo).unwrap();
            let top = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            largest_sub = largest_sub.max(top);
            if top >= 0.0 {
                sub_bad += 1;
            }
        }
    }
    let mut sup_bad = 0;
    let mut sup_found = 0;
    while sup_found < 10 {
        let alpha = simplex(&mut rng, 4);
        let mu = (0..3).map(|_| rng.random_range(1.0..6.0)).collect();
        let spec = ModelSpec::new(alpha, mu, vec![0.0; 4]).unwrap();
        let v = Variational::new(&spec);
        if v.spectral_radius() <= 1.1 {
            continue;
        }
        sup_found += 1;
        let ev = v.hessian_pi_eigenvalues(&[0.0, 0.0]).unwrap();
        let positive = ev.iter().any(|&e| e > 0.0);
        let verdict = perron_instability_check(&spec).unwrap().verdict;
        if !positive || verdict != Stability::Unstable {
            sup_bad += 1;
        }
    }
    Outcome::new(
        sub_bad == 0 && sup_bad == 0,
        format!(
            "rho < 0.9: {sub_bad} of 50 points with an eigenvalue >= 0 (largest {largest_sub:.3e}); \
             rho > 1.1: {sup_bad} of 10 specs not unstable at the origin"
        ),
    )
}

fn finite_size_model() -> ModelSpec {
    balanced(4.0, 0.1)
}

fn theory_x_bar(spec: &ModelSpec) -> Vec<f64> {
    Variational::new(spec)
        .solve_fixed_point(&FixedPointOptions::default())
        .unwrap()
        .x_bar
        .as_slice()
        .to_vec()
}

fn enumeration_runs(spec: &ModelSpec, sizes: &[usize], samples: usize) -> Vec<QuenchedReport> {
    sizes
        .iter()
        .map(|&n| {
            let size = SystemSize::from_alpha(spec.alpha(), n).unwrap();
            quenched_run(spec, &size, samples, SEED, Engine::Enumeration).unwrap()
        })
        .collect()
}

fn finite_n_convergence(runs: &[QuenchedReport]) -> Outcome {
    let spec = finite_size_model();
    let x = theory_x_bar(&spec);
    let mut ok = true;
    let mut notes = Vec::new();
    for r in 0..2 {
        let gaps: Vec<f64> = runs.iter().map(|rep| (rep.mean_m[r] - x[r]).abs()).collect();
        ok &= gaps.windows(2).all(|w| w[1] < w[0]);
        notes.push(format!(
            "layer {}: |E m - x| = {}",
            r + 1,
            gaps.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>().join(" > ")
        ));
    }
    let size = SystemSize::from_alpha(spec.alpha(), GIBBS_N).unwrap();
    let gibbs = quenched_run(
        &spec,
        &size,
        GIBBS_SAMPLES,
        SEED,
        Engine::BlockGibbs {
            sweeps: GIBBS_SWEEPS,
            burn_in: GIBBS_BURN_IN,
        },
    )
    .unwrap();
    for r in 0..2 {
        let tol = GIBBS_ABS_TOL.max(STDERR_MULTIPLE * gibbs.stderr_m[r]);
        let dev = (gibbs.mean_m[r] - x[r]).abs();
        ok &= dev < tol;
        notes.push(format!(
            "Gibbs N={GIBBS_N} layer {}: E m = {:.4} vs x = {:.4} (|diff| {dev:.4} < {tol:.4}, tau_int max {:.1})",
            r + 1,
            gibbs.mean_m[r],
            x[r],
            gibbs.max_autocorrelation.unwrap_or(f64::NAN)
        ));
    }
    Outcome::new(ok, notes.join("; "))
}

fn nishimori_identities(runs: &[QuenchedReport]) -> Outcome {
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut worst_site = 0.0f64;
    for rep in runs {
        for r in 0..rep.mean_m.len() {
            let z = (rep.mean_m[r] - rep.mean_q[r]).abs() / rep.stderr_m_minus_q[r];
            ok &= z < STDERR_MULTIPLE;
            worst = worst.max(z);
        }
        let site = rep.site_identity.as_ref().unwrap();
        let z = site.gap.abs() / site.stderr;
        ok &= z < STDERR_MULTIPLE;
        worst_site = worst_site.max(z);
    }
    Outcome::new(
        ok,
        format!("largest |E m - E q| {worst:.2} stderr, largest site gap {worst_site:.2} stderr"),
    )
}

fn pressure_convergence() -> Outcome {
    let spec = finite_size_model();
    let p_var = Variational::new(&spec)
        .solve_fixed_point(&FixedPointOptions::default())
        .unwrap()
        .pressure;
    let runs = enumeration_runs(&spec, &PRESSURE_SIZES, PRESSURE_SAMPLES);
    let cv: Vec<_> = runs.iter().map(|r| r.pressure_control_variate.clone().unwrap()).collect();
    let plain: Vec<f64> = runs.iter().map(|r| r.mean_pressure.unwrap()).collect();
    let var: Vec<f64> = runs.iter().map(|r| r.var_pressure.unwrap()).collect();
    let gap10 = (cv[0].mean - p_var).abs();
    let gap20 = (cv[1].mean - p_var).abs();
    let ratio = var[0] / var[1];
    let ok = gap20 < PRESSURE_TOL && gap20 < gap10 && (VAR_RATIO_RANGE.0..=VAR_RATIO_RANGE.1).contains(&ratio);
    Outcome::new(
        ok,
        format!(
            "p_var {p_var:.5}; E p_10 {:.5} (se {:.1e}), E p_20 {:.5} (se {:.1e}); gaps {gap10:.4} > {gap20:.4}; \
             Var p_10 / Var p_20 = {ratio:.3}; plain means {:.5} (se {:.1e}), {:.5} (se {:.1e})",
            cv[0].mean,
            cv[0].stderr,
            cv[1].mean,
            cv[1].stderr,
            plain[0],
            runs[0].stderr_pressure.unwrap(),
            plain[1],
            runs[1].stderr_pressure.unwrap(),
        ),
    )
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    results.push(run(1, "quadrature identities", Duration::from_secs(5), quadrature_identities));
    results.push(run(2, "phase boundary", Duration::from_secs(10), phase_boundary));
    results.push(run(3, "form-factor optimum", Duration::from_secs(120), form_factor_optimum));
    results.push(run(4, "solver cross-validation", Duration::from_secs(300), solver_cross_validation));
    results.push(run(5, "Hessian sign dichotomy", Duration::from_secs(60), hessian_dichotomy));

    let start = Instant::now();
    let spec = finite_size_model();
    let runs = enumeration_runs(&spec, &ENUMERATION_SIZES, ENUMERATION_SAMPLES);
    let enumeration_time = start.elapsed();
    results.push(run(6, "finite-N convergence", Duration::from_secs(900) - enumeration_time, || {
        finite_n_convergence(&runs)
    }));
    results.push(run(7, "finite-N Nishimori identities", Duration::from_secs(900), || {
        nishimori_identities(&runs)
    }));
    results.push(run(8, "pressure convergence", Duration::from_secs(600), pressure_convergence));

    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
