use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use dbm_core::model::ModelSpec;
use dbm_core::phase::{FormFactorOptions, ScanGrid, ScanOptions};
use dbm_core::simulator::Engine;
use dbm_core::special::{QuadratureScheme, DEFAULT_ORDER};
use dbm_core::variational::{FixedPointOptions, NestedOptions, PiAscentOptions};
use dbm_core::verify::VerifyOptions;

pub const SCHEMA_VERSION: u32 = 1;

/// Everything a run needs. Every section is optional in the file and falls back to
/// the defaults below; the resolved values are echoed before each command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub out_dir: PathBuf,
    pub model: ModelSpec,
    pub quadrature: QuadratureConfig,
    pub solve: SolveConfig,
    pub phase_scan: PhaseScanConfig,
    pub optimize_alpha: FormFactorOptions,
    pub simulate: SimulateConfig,
    pub enumerate: EnumerateConfig,
    pub verify: VerifyOptions,
    pub quadrature_check: QuadratureCheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 42,
            threads: 0,
            out_dir: PathBuf::from("out"),
            model: ModelSpec::new(vec![0.5, 0.5], vec![4.0], vec![0.1, 0.1]).expect("default model is valid"),
            quadrature: QuadratureConfig::default(),
            solve: SolveConfig::default(),
            phase_scan: PhaseScanConfig::default(),
            optimize_alpha: FormFactorOptions::default(),
            simulate: SimulateConfig::default(),
            enumerate: EnumerateConfig::default(),
            verify: VerifyOptions::default(),
            quadrature_check: QuadratureCheckConfig::default(),
        }
    }
}

/// Rule used by `solve` and `quadrature-check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    pub scheme: QuadratureScheme,
    pub order: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            scheme: QuadratureScheme::default(),
            order: DEFAULT_ORDER,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    FixedPoint,
    PiAscent,
    NestedBisection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub solvers: Vec<Solver>,
    /// Largest allowed componentwise disagreement between solvers.
    pub agreement_tol: f64,
    pub fixed_point: FixedPointOptions,
    pub pi_ascent: PiAscentOptions,
    pub nested_bisection: NestedOptions,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            solvers: vec![Solver::FixedPoint, Solver::PiAscent, Solver::NestedBisection],
            agreement_tol: 1e-7,
            fixed_point: FixedPointOptions::default(),
            pi_ascent: PiAscentOptions::default(),
            nested_bisection: NestedOptions::default(),
        }
    }
}

/// The scanned model is `model` with one parameter replaced by the grid values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseScanConfig {
    pub grid: ScanGrid,
    pub options: ScanOptions,
}

impl Default for PhaseScanConfig {
    fn default() -> Self {
        Self {
            grid: ScanGrid::MuEdge {
                edge: 1,
                values: ScanGrid::linspace(1.0, 3.0, 0.1).expect("default grid is valid"),
            },
            options: ScanOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Total number of spins, split over layers in proportion to `alpha`.
    pub n: usize,
    pub n_disorder: usize,
    pub engine: Engine,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n: 200,
            n_disorder: 20,
            engine: Engine::BlockGibbs {
                sweeps: 2000,
                burn_in: 200,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnumerateConfig {
    pub sizes: Vec<usize>,
    pub n_disorder: usize,
}

impl Default for EnumerateConfig {
    fn default() -> Self {
        Self {
            sizes: vec![8, 16],
            n_disorder: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureCheckConfig {
    pub h_min: f64,
    pub h_max: f64,
    /// Log-spaced fields between `h_min` and `h_max`.
    pub points: usize,
    pub moments: Vec<u32>,
    pub threshold: f64,
}

impl Default for QuadratureCheckConfig {
    fn default() -> Self {
        Self {
            h_min: 1e-6,
            h_max: 100.0,
            points: 25,
            moments: vec![1, 2, 3],
            threshold: 1e-10,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub tol: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("invalid config {}", p.display()))?
            }
            None => Self::default(),
        };
        cfg.apply(overrides)?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        if cfg.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {}; this build reads version {SCHEMA_VERSION}",
                cfg.schema_version
            );
        }
        Ok(cfg)
    }

    /// `tol` sets the stopping tolerance of the fixed-point and π-ascent solvers and of scans.
    fn apply(&mut self, o: &Overrides) -> anyhow::Result<()> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(threads) = o.threads {
            self.threads = threads;
        }
        if let Some(dir) = &o.out_dir {
            self.out_dir = dir.clone();
        }
        if let Some(tol) = o.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                bail!("--tol must be positive and finite, got {tol}");
            }
            self.solve.fixed_point.tol = tol;
            self.solve.pi_ascent.tol = tol;
            self.phase_scan.options.tol = tol;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }
}
