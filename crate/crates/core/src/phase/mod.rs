//! Phase diagrams: parameter scans, the form-factor optimum of the spectral radius
//! and the Perron-direction instability check.

mod form_factors;
mod instability;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::variational::{FixedPointOptions, OrderParameter, Phase, Variational, VariationalSolution};

pub use form_factors::{
    optimize_form_factors, optimize_form_factors_with, rho_for_alpha, FormFactorOptimum, FormFactorOptions,
    OptimumCondition,
};
pub use instability::{perron_instability_check, InstabilityReport, InstabilitySample, Stability, PERRON_EPSILONS};

/// Solver tolerance used for every scan point.
pub const SCAN_TOL: f64 = 1e-9;

/// Which parameter a scan varies, with its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScanGrid {
    /// `μ_{r,r+1}` for a single edge, `edge = r` counted from 1.
    MuEdge { edge: usize, values: Vec<f64> },
    /// Each row is a full form-factor vector on the simplex.
    AlphaSimplex { rows: Vec<Vec<f64>> },
    /// The same field on every layer.
    HUniform { values: Vec<f64> },
}

impl ScanGrid {
    pub fn len(&self) -> usize {
        match self {
            ScanGrid::MuEdge { values, .. } | ScanGrid::HUniform { values } => values.len(),
            ScanGrid::AlphaSimplex { rows } => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Evenly spaced values `start, start + step, …` up to `stop` (inclusive, rounded).
    /// Values are rounded to 13 significant digits, so `0.1` steps land on the decimals.
    pub fn linspace(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
        if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
            return Err(Error::Precondition(format!(
                "grid needs start <= stop and step > 0, got {start}..{stop} by {step}"
            )));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        Ok((0..=n)
            .map(|i| {
                let v = start + step * i as f64;
                format!("{v:.12e}").parse().unwrap_or(v)
            })
            .collect())
    }

    fn column_names(&self, k: usize) -> Vec<String> {
        match self {
            ScanGrid::MuEdge { edge, .. } => vec![format!("mu_{}_{}", edge, edge + 1)],
            ScanGrid::AlphaSimplex { .. } => (1..=k).map(|r| format!("alpha_{r}")).collect(),
            ScanGrid::HUniform { .. } => vec!["h".to_string()],
        }
    }

    fn grid_value(&self, i: usize) -> Vec<f64> {
        match self {
            ScanGrid::MuEdge { values, .. } | ScanGrid::HUniform { values } => vec![values[i]],
            ScanGrid::AlphaSimplex { rows } => rows[i].clone(),
        }
    }

    fn spec_at(&self, template: &ModelSpec, i: usize) -> Result<ModelSpec> {
        match self {
            ScanGrid::MuEdge { edge, values } => {
                let mut mu = template.mu().to_vec();
                mu[edge - 1] = values[i];
                template.with_mu(mu)
            }
            ScanGrid::AlphaSimplex { rows } => template.with_alpha(rows[i].clone()),
            ScanGrid::HUniform { values } => template.with_h(vec![values[i]; template.k()]),
        }
    }
}

/// One solved grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub index: usize,
    /// The scanned coordinate(s): one value, or a whole α row.
    pub grid_value: Vec<f64>,
    pub spec: ModelSpec,
    pub rho: f64,
    /// The solver's result, or its error message when the point failed.
    pub solution: std::result::Result<VariationalSolution, String>,
}

impl PhasePoint {
    pub fn x_bar(&self) -> Option<&OrderParameter> {
        self.solution.as_ref().ok().map(|s| &s.x_bar)
    }

    pub fn phase(&self) -> Option<Phase> {
        self.solution.as_ref().ok().map(|s| s.phase)
    }
}

/// Settings for [`scan`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            tol: SCAN_TOL,
            max_iter: FixedPointOptions::default().max_iter,
        }
    }
}

/// Solves the model at every grid point, in parallel, returning points in grid order.
///
/// Invalid grids are rejected up front. A solver failure at one point is recorded in
/// that point and the scan carries on.
pub fn scan(template: &ModelSpec, grid: &ScanGrid, opts: &ScanOptions) -> Result<Vec<PhasePoint>> {
    if let ScanGrid::MuEdge { edge, .. } = grid {
        if *edge == 0 || *edge >= template.k() {
            return Err(Error::Precondition(format!(
                "edge {edge} does not exist in a chain of {} layers",
                template.k()
            )));
        }
    }
    let specs = (0..grid.len())
        .map(|i| grid.spec_at(template, i))
        .collect::<Result<Vec<_>>>()?;
    let fp = FixedPointOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
        ..FixedPointOptions::default()
    };
    Ok(specs
        .into_par_iter()
        .enumerate()
        .map(|(index, spec)| {
            let v = Variational::new(&spec);
            let rho = v.spectral_radius();
            let solution = v.solve_fixed_point(&fp).map_err(|e| e.to_string());
            PhasePoint {
                index,
                grid_value: grid.grid_value(index),
                spec,
                rho,
                solution,
            }
        })
        .collect())
}

/// Writes scan results as CSV: grid value(s), ρ, x̄_1…x̄_K, pressure, phase.
///
/// Reals carry 17 significant digits. Failed points leave x̄ and the pressure empty
/// and report `Failed` as their phase.
pub fn write_scan_csv<W: Write>(grid: &ScanGrid, points: &[PhasePoint], out: W) -> Result<()> {
    let k = points.first().map_or(0, |p| p.spec.k());
    let mut w = csv::Writer::from_writer(out);
    let mut header = grid.column_names(k);
    header.push("rho".into());
    header.extend((1..=k).map(|r| format!("x_{r}")));
    header.push("pressure".into());
    header.push("phase".into());
    w.write_record(&header).map_err(csv_error)?;
    for p in points {
        let mut row: Vec<String> = p.grid_value.iter().map(|v| fmt_real(*v)).collect();
        row.push(fmt_real(p.rho));
        match &p.solution {
            Ok(s) => {
                row.extend(s.x_bar.as_slice().iter().map(|v| fmt_real(*v)));
                row.push(fmt_real(s.pressure));
                row.push(s.phase.to_string());
            }
            Err(_) => {
                row.extend(std::iter::repeat_n(String::new(), k + 1));
                row.push("Failed".into());
            }
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

/// A real with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(mu: f64) -> ModelSpec {
        ModelSpec::new(vec![0.5, 0.5], vec![mu], vec![0.0, 0.0]).unwrap()
    }

    #[test]
    fn linspace_includes_endpoint() {
        let g = ScanGrid::linspace(1.0, 3.0, 0.1).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[20], 3.0);
        assert_eq!(g[7], 1.7);
        assert!(ScanGrid::linspace(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn rejects_missing_edge_and_bad_rows() {
        let t = balanced(1.0);
        let g = ScanGrid::MuEdge { edge: 2, values: vec![1.0] };
        assert!(scan(&t, &g, &ScanOptions::default()).is_err());
        let g = ScanGrid::AlphaSimplex { rows: vec![vec![0.5, 0.6]] };
        assert!(scan(&t, &g, &ScanOptions::default()).is_err());
    }

    #[test]
    fn failed_points_are_marked() {
        let t = balanced(4.0);
        let g = ScanGrid::MuEdge { edge: 1, values: vec![1.0, 4.0] };
        let opts = ScanOptions { tol: 1e-9, max_iter: 1 };
        let pts = scan(&t, &g, &opts).unwrap();
        assert!(pts[1].solution.is_err());
        let mut buf = Vec::new();
        write_scan_csv(&g, &pts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let last = text.lines().last().unwrap();
        assert!(last.ends_with(",,,Failed"), "{last}");
    }
}
