use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;

use dbm_core::phase::{fmt_real, optimize_form_factors_with, scan, write_scan_csv};
use dbm_core::simulator::{quenched_run, write_samples_csv, Engine, QuenchedReport, SystemSize};
use dbm_core::special::OneBody;
use dbm_core::variational::{Variational, VariationalSolution};
use dbm_core::verify::run_checks;
use dbm_core::Error;

use crate::config::{RunConfig, Solver};

/// How a command that ran to completion ended.
#[derive(Debug)]
pub enum Status {
    Ok,
    NotConverged(String),
    ChecksFailed(String),
}

fn create(dir: &Path, name: &str) -> anyhow::Result<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((path, BufWriter::new(f)))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<PathBuf> {
    let (path, mut w) = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(path)
}

fn write_with(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> dbm_core::Result<()>) -> anyhow::Result<PathBuf> {
    let (path, mut w) = create(dir, name)?;
    f(&mut w)?;
    w.flush()?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct SolverRecord {
    solver: Solver,
    status: &'static str,
    detail: Option<String>,
    solution: Option<VariationalSolution>,
}

#[derive(Debug, Serialize)]
struct SolveRecord<'a> {
    model: &'a dbm_core::model::ModelSpec,
    rho: f64,
    runs: Vec<SolverRecord>,
    max_disagreement: Option<f64>,
}

pub fn solve(cfg: &RunConfig) -> anyhow::Result<Status> {
    let one_body = OneBody::with_rule(cfg.quadrature.scheme, cfg.quadrature.order)?;
    let v = Variational::with_one_body(&cfg.model, one_body.into());
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for &solver in &cfg.solve.solvers {
        let result = match solver {
            Solver::FixedPoint => v.solve_fixed_point(&cfg.solve.fixed_point),
            Solver::PiAscent => v.solve_pi_ascent(&cfg.solve.pi_ascent),
            Solver::NestedBisection => v.solve_nested_bisection(&cfg.solve.nested_bisection),
        };
        let record = match result {
            Ok(sol) => SolverRecord {
                solver,
                status: "converged",
                detail: None,
                solution: Some(sol),
            },
            Err(e @ Error::Precondition(_)) => SolverRecord {
                solver,
                status: "skipped",
                detail: Some(e.to_string()),
                solution: None,
            },
            Err(e @ Error::NotConverged { .. }) => {
                failures.push(format!("{solver:?}: {e}"));
                SolverRecord {
                    solver,
                    status: "not_converged",
                    detail: Some(e.to_string()),
                    solution: None,
                }
            }
            Err(e) => return Err(e.into()),
        };
        runs.push(record);
    }
    let solved: Vec<&VariationalSolution> = runs.iter().filter_map(|r| r.solution.as_ref()).collect();
    let n_solved = solved.len();
    let max_disagreement = solved.first().map(|first| {
        solved
            .iter()
            .flat_map(|s| s.x_bar.as_slice().iter().zip(first.x_bar.as_slice()).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max)
    });

    println!("rho = {}", fmt_real(v.spectral_radius()));
    for r in &runs {
        match &r.solution {
            Some(s) => println!(
                "{:<16} {:<14} x_bar = [{}]  p = {}  |grad| = {:.2e}",
                format!("{:?}", r.solver),
                s.phase.to_string(),
                s.x_bar.as_slice().iter().map(|x| format!("{x:.10}")).collect::<Vec<_>>().join(", "),
                fmt_real(s.pressure),
                s.gradient_norm
            ),
            None => println!(
                "{:<16} {}: {}",
                format!("{:?}", r.solver),
                r.status,
                r.detail.as_deref().unwrap_or("")
            ),
        }
    }
    let record = SolveRecord {
        model: &cfg.model,
        rho: v.spectral_radius(),
        runs,
        max_disagreement,
    };
    let path = write_json(&cfg.out_dir, "solve.json", &record)?;
    println!("wrote {}", path.display());

    if n_solved == 0 && failures.is_empty() {
        bail!("none of the requested solvers applies to this model");
    }
    if let Some(d) = max_disagreement.filter(|&d| d > cfg.solve.agreement_tol) {
        failures.push(format!(
            "solvers disagree by {d:.3e} (agreement_tol = {:e})",
            cfg.solve.agreement_tol
        ));
    }
    Ok(if failures.is_empty() {
        Status::Ok
    } else {
        Status::NotConverged(failures.join("; "))
    })
}

pub fn phase_scan(cfg: &RunConfig) -> anyhow::Result<Status> {
    let grid = &cfg.phase_scan.grid;
    let points = scan(&cfg.model, grid, &cfg.phase_scan.options)?;
    let path = write_with(&cfg.out_dir, "phase_scan.csv", |w| write_scan_csv(grid, &points, w))?;
    let failed: Vec<String> = points
        .iter()
        .filter_map(|p| p.solution.as_ref().err().map(|e| format!("point {}: {e}", p.index + 1)))
        .collect();
    println!("{} grid points, {} failed; wrote {}", points.len(), failed.len(), path.display());
    Ok(if failed.is_empty() {
        Status::Ok
    } else {
        Status::NotConverged(failed.join("; "))
    })
}

pub fn optimize_alpha(cfg: &RunConfig) -> anyhow::Result<Status> {
    let opt = optimize_form_factors_with(cfg.model.mu(), &cfg.optimize_alpha)?;
    println!(
        "rho* = {}  bound = {}  alpha* = [{}]",
        fmt_real(opt.rho_star),
        fmt_real(opt.bound),
        opt.alpha_star.iter().map(|a| format!("{a:.6}")).collect::<Vec<_>>().join(", ")
    );
    match &opt.condition {
        Some(c) => println!("maximizer condition: {c:?}"),
        None => println!("maximizer matches neither characterization"),
    }
    let path = write_json(&cfg.out_dir, "optimize_alpha.json", &opt)?;
    println!("wrote {}", path.display());
    Ok(Status::Ok)
}

fn print_report(r: &QuenchedReport) {
    println!("N = {} (layers {:?}), {} disorder samples", r.n, r.layer_sizes, r.n_disorder);
    println!("{:>5} {:>12} {:>10} {:>12} {:>10} {:>12}", "layer", "E m", "stderr", "E q", "stderr", "x_bar");
    for l in 0..r.mean_m.len() {
        let theory = r.theory_x_bar.as_ref().map(|x| format!("{:.6}", x[l])).unwrap_or_default();
        println!(
            "{:>5} {:>12.6} {:>10.2e} {:>12.6} {:>10.2e} {:>12}",
            l + 1,
            r.mean_m[l],
            r.stderr_m[l],
            r.mean_q[l],
            r.stderr_q[l],
            theory
        );
    }
    if let (Some(p), Some(se)) = (r.mean_pressure, r.stderr_pressure) {
        println!("E p_N = {p:.8} (stderr {se:.2e})");
    }
    if let Some(t) = r.max_autocorrelation {
        println!("largest integrated autocorrelation time: {t:.2} sweeps");
    }
}

pub fn simulate(cfg: &RunConfig) -> anyhow::Result<Status> {
    let s = &cfg.simulate;
    let size = SystemSize::from_alpha(cfg.model.alpha(), s.n)?;
    let report = quenched_run(&cfg.model, &size, s.n_disorder, cfg.seed, s.engine)?;
    print_report(&report);
    let json = write_json(&cfg.out_dir, "simulate.json", &report)?;
    let csv = write_with(&cfg.out_dir, "simulate_samples.csv", |w| write_samples_csv(&report, w))?;
    println!("wrote {} and {}", json.display(), csv.display());
    Ok(Status::Ok)
}

pub fn enumerate(cfg: &RunConfig) -> anyhow::Result<Status> {
    let e = &cfg.enumerate;
    if e.sizes.is_empty() {
        bail!("enumerate.sizes is empty");
    }
    let mut reports = Vec::with_capacity(e.sizes.len());
    for &n in &e.sizes {
        let size = SystemSize::from_alpha(cfg.model.alpha(), n)?;
        let report = quenched_run(&cfg.model, &size, e.n_disorder, cfg.seed, Engine::Enumeration)?;
        print_report(&report);
        write_with(&cfg.out_dir, &format!("enumerate_samples_n{n}.csv"), |w| {
            write_samples_csv(&report, w)
        })?;
        reports.push(report);
    }
    let summary = write_with(&cfg.out_dir, "enumerate_summary.csv", |w| {
        write_enumeration_summary(&reports, w)
    })?;
    let json = write_json(&cfg.out_dir, "enumerate.json", &reports)?;
    println!("wrote {} and {}", summary.display(), json.display());
    Ok(Status::Ok)
}

fn write_enumeration_summary<W: Write>(reports: &[QuenchedReport], out: W) -> dbm_core::Result<()> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    let mut w = out;
    writeln!(
        w,
        "n,layer,mean_m,stderr_m,mean_q,stderr_q,stderr_m_minus_q,x_bar,mean_pressure,stderr_pressure,theory_pressure"
    )
    .map_err(io)?;
    let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
    for r in reports {
        for l in 0..r.mean_m.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.n,
                l + 1,
                fmt_real(r.mean_m[l]),
                fmt_real(r.stderr_m[l]),
                fmt_real(r.mean_q[l]),
                fmt_real(r.stderr_q[l]),
                fmt_real(r.stderr_m_minus_q[l]),
                opt(r.theory_x_bar.as_ref().map(|x| x[l])),
                opt(r.mean_pressure),
                opt(r.stderr_pressure),
                opt(r.theory_pressure),
            )
            .map_err(io)?;
        }
    }
    Ok(())
}

pub fn verify(cfg: &RunConfig) -> anyhow::Result<Status> {
    let outcomes = run_checks(&cfg.model, &cfg.verify, cfg.seed);
    println!("{:<24} {:<6} {:>8}  detail", "check", "result", "seconds");
    for o in &outcomes {
        println!(
            "{:<24} {:<6} {:>8.2}  {}",
            o.name,
            if o.passed { "PASS" } else { "FAIL" },
            o.seconds,
            o.detail
        );
    }
    let path = write_json(&cfg.out_dir, "verify.json", &outcomes)?;
    println!("wrote {}", path.display());
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
    Ok(if failed.is_empty() {
        Status::Ok
    } else {
        Status::ChecksFailed(format!("failed checks: {}", failed.join(", ")))
    })
}

pub fn quadrature_check(cfg: &RunConfig) -> anyhow::Result<Status> {
    let q = &cfg.quadrature_check;
    if !(q.h_min > 0.0 && q.h_max >= q.h_min && q.h_max.is_finite()) {
        bail!("quadrature_check needs 0 < h_min <= h_max, got [{}, {}]", q.h_min, q.h_max);
    }
    if q.points == 0 || q.moments.is_empty() || q.moments.contains(&0) {
        bail!("quadrature_check needs points >= 1 and moments >= 1");
    }
    let ob = OneBody::with_rule(cfg.quadrature.scheme, cfg.quadrature.order)?;
    let (lo, hi) = (q.h_min.ln(), q.h_max.ln());
    let mut rows = Vec::with_capacity(q.points * q.moments.len());
    for i in 0..q.points {
        let h = if q.points == 1 {
            q.h_min
        } else {
            (lo + (hi - lo) * i as f64 / (q.points - 1) as f64).exp()
        };
        for &n in &q.moments {
            rows.push((h, n, ob.nishimori_residual(h, n)?));
        }
    }
    let path = write_with(&cfg.out_dir, "quadrature_check.csv", |w| {
        let io = |e: std::io::Error| Error::Io(e.to_string());
        writeln!(w, "h,n,residual").map_err(io)?;
        for (h, n, r) in &rows {
            writeln!(w, "{},{n},{}", fmt_real(*h), fmt_real(*r)).map_err(io)?;
        }
        Ok(())
    })?;
    let worst = rows.iter().fold((0.0, 0u32, 0.0f64), |acc, &r| if r.2 > acc.2 { r } else { acc });
    let bad = rows.iter().filter(|r| !(r.2 < q.threshold)).count();
    println!(
        "{} residuals, worst {:.3e} at h = {:.3e}, n = {}; threshold {:e}",
        rows.len(),
        worst.2,
        worst.0,
        worst.1,
        q.threshold
    );
    println!("wrote {}", path.display());
    Ok(if bad == 0 {
        Status::Ok
    } else {
        Status::ChecksFailed(format!("{bad} residuals at or above {:e}", q.threshold))
    })
}
