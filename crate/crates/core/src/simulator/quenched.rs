use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{control_variate_mean, mean_stderr};
use super::{
    exact_enumerate, expected_control_statistics, run_block_gibbs, sample_disorder, sample_seed, GibbsEstimate,
    SystemSize,
};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::phase::{csv_error, fmt_real};
use crate::variational::{FixedPointOptions, Variational};

/// How each disorder sample is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case", deny_unknown_fields)]
pub enum Engine {
    Enumeration,
    BlockGibbs { sweeps: usize, burn_in: usize },
}

/// Per-sample results kept for export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub index: usize,
    pub seed: u64,
    pub m: Vec<f64>,
    pub q: Vec<f64>,
    pub pressure: Option<f64>,
    /// Mean over sites of `⟨σ_i⟩² − ⟨σ_i⟩`.
    pub site_gap: f64,
}

/// `E[⟨σ_i⟩² − ⟨σ_i⟩]` averaged over sites, with its standard error over disorder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteIdentity {
    pub gap: f64,
    pub stderr: f64,
}

/// `E[p_N]` with the disorder statistics of
/// [`DisorderSample::control_statistics`](super::DisorderSample::control_statistics)
/// as control variates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlVariateEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub coefficients: Vec<f64>,
}

/// Disorder averages over independent samples.
///
/// Standard errors are over disorder samples, so they include the thermal noise of
/// the Gibbs engine. `stderr_m_minus_q` is the standard error of the paired
/// per-sample difference `⟨m_r⟩ − ⟨q_r⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchedReport {
    pub spec: ModelSpec,
    pub layer_sizes: Vec<usize>,
    pub n: usize,
    pub n_disorder: usize,
    pub base_seed: u64,
    pub engine: Engine,
    pub mean_m: Vec<f64>,
    pub mean_q: Vec<f64>,
    pub stderr_m: Vec<f64>,
    pub stderr_q: Vec<f64>,
    pub stderr_m_minus_q: Vec<f64>,
    pub mean_pressure: Option<f64>,
    pub var_pressure: Option<f64>,
    pub stderr_pressure: Option<f64>,
    /// Lower-variance estimate of the mean pressure, when enough samples exist.
    pub pressure_control_variate: Option<ControlVariateEstimate>,
    /// Exact engines only: a time-averaged `⟨σ_i⟩²` is biased upwards.
    pub site_identity: Option<SiteIdentity>,
    /// Largest integrated autocorrelation time seen, Gibbs only.
    pub max_autocorrelation: Option<f64>,
    /// Variational solution for the same spec, when the solver converges.
    pub theory_x_bar: Option<Vec<f64>>,
    pub theory_pressure: Option<f64>,
    pub samples: Vec<SampleSummary>,
}

/// Runs `engine` on `n_disorder` independent samples, in parallel, and aggregates in
/// sample order.
pub fn quenched_run(
    spec: &ModelSpec,
    size: &SystemSize,
    n_disorder: usize,
    base_seed: u64,
    engine: Engine,
) -> Result<QuenchedReport> {
    if n_disorder == 0 {
        return Err(Error::Precondition("n_disorder must be at least 1".into()));
    }
    if size.k() != spec.k() {
        return Err(Error::Dimension {
            expected: spec.k(),
            got: size.k(),
        });
    }
    if let Engine::BlockGibbs { sweeps, burn_in } = engine {
        if sweeps <= burn_in {
            return Err(Error::Precondition(format!(
                "need sweeps > burn_in, got sweeps = {sweeps}, burn_in = {burn_in}"
            )));
        }
    }
    let estimates: Vec<(u64, GibbsEstimate, Vec<f64>)> = (0..n_disorder)
        .into_par_iter()
        .map(|d| {
            let seed = sample_seed(base_seed, d as u64);
            let disorder = sample_disorder(spec, size, seed)?;
            let est = match engine {
                Engine::Enumeration => exact_enumerate(&disorder)?,
                Engine::BlockGibbs { sweeps, burn_in } => run_block_gibbs(&disorder, sweeps, burn_in, seed)?,
            };
            Ok((seed, est, disorder.control_statistics().to_vec()))
        })
        .collect::<Result<_>>()?;

    let k = spec.k();
    let column = |f: &dyn Fn(&GibbsEstimate) -> f64| -> Vec<f64> { estimates.iter().map(|(_, e, _)| f(e)).collect() };
    let mut report = QuenchedReport {
        spec: spec.clone(),
        layer_sizes: size.layer_sizes().to_vec(),
        n: size.n(),
        n_disorder,
        base_seed,
        engine,
        mean_m: Vec::with_capacity(k),
        mean_q: Vec::with_capacity(k),
        stderr_m: Vec::with_capacity(k),
        stderr_q: Vec::with_capacity(k),
        stderr_m_minus_q: Vec::with_capacity(k),
        mean_pressure: None,
        var_pressure: None,
        stderr_pressure: None,
        pressure_control_variate: None,
        site_identity: None,
        max_autocorrelation: None,
        theory_x_bar: None,
        theory_pressure: None,
        samples: Vec::with_capacity(n_disorder),
    };
    for r in 0..k {
        let (m, _, se_m) = mean_stderr(&column(&|e| e.m[r]));
        let (q, _, se_q) = mean_stderr(&column(&|e| e.q[r]));
        let (_, _, se_d) = mean_stderr(&column(&|e| e.m[r] - e.q[r]));
        report.mean_m.push(m);
        report.mean_q.push(q);
        report.stderr_m.push(se_m);
        report.stderr_q.push(se_q);
        report.stderr_m_minus_q.push(se_d);
    }
    let gaps = column(&|e| {
        let s = &e.site_magnetization;
        s.iter().map(|v| v * v - v).sum::<f64>() / s.len() as f64
    });
    if matches!(engine, Engine::Enumeration) {
        let pressures = column(&|e| e.pressure.unwrap_or(f64::NAN));
        let (p, var, se) = mean_stderr(&pressures);
        let controls: Vec<Vec<f64>> = estimates.iter().map(|(_, _, c)| c.clone()).collect();
        let expected = expected_control_statistics(spec, size);
        report.pressure_control_variate =
            control_variate_mean(&pressures, &controls, &expected).map(|(mean, stderr, coefficients)| {
                ControlVariateEstimate {
                    mean,
                    stderr,
                    coefficients,
                }
            });
        report.mean_pressure = Some(p);
        report.var_pressure = Some(var);
        report.stderr_pressure = Some(se);
        let (gap, _, se) = mean_stderr(&gaps);
        report.site_identity = Some(SiteIdentity { gap, stderr: se });
    } else {
        report.max_autocorrelation = estimates
            .iter()
            .flat_map(|(_, e, _)| e.autocorrelation.iter().flatten().copied())
            .reduce(f64::max);
    }
    if let Ok(sol) = Variational::new(spec).solve_fixed_point(&FixedPointOptions::default()) {
        report.theory_x_bar = Some(sol.x_bar.as_slice().to_vec());
        report.theory_pressure = Some(sol.pressure);
    }
    report.samples = estimates
        .into_iter()
        .zip(gaps)
        .enumerate()
        .map(|(index, ((seed, e, _), site_gap))| SampleSummary {
            index,
            seed,
            m: e.m,
            q: e.q,
            pressure: e.pressure,
            site_gap,
        })
        .collect();
    Ok(report)
}

/// One CSV row per disorder sample: index, seed, m_1…m_K, q_1…q_K, pressure.
pub fn write_samples_csv<W: Write>(report: &QuenchedReport, out: W) -> Result<()> {
    let k = report.spec.k();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sample".to_string(), "seed".to_string()];
    header.extend((1..=k).map(|r| format!("m_{r}")));
    header.extend((1..=k).map(|r| format!("q_{r}")));
    header.push("pressure".into());
    w.write_record(&header).map_err(csv_error)?;
    for s in &report.samples {
        let mut row = vec![s.index.to_string(), s.seed.to_string()];
        row.extend(s.m.iter().chain(&s.q).map(|v| fmt_real(*v)));
        row.push(s.pressure.map(fmt_real).unwrap_or_default());
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}
