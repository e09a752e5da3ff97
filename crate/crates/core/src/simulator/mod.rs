//! Finite-N disordered spin systems on the Nishimori line.
//!
//! Couplings follow the ordered-pair convention of the Hamiltonian: for every adjacent
//! pair of layers there is a block `J̃^{r,r+1}` (`N_r × N_{r+1}`) and an independent
//! block `J̃^{r+1,r}` (`N_{r+1} × N_r`), each entry `N(μ/2N, μ/2N)`. A spin pair
//! `(i, j)` across the two layers therefore interacts through
//! `J̃^{r,r+1}_{ij} + J̃^{r+1,r}_{ji} ~ N(μ/N, μ/N)`.
//!
//! # Random streams
//!
//! Every disorder sample carries a 64-bit seed. The couplings and fields come from
//! ChaCha8 seeded with it on stream [`DISORDER_STREAM`]; the two Gibbs replicas use
//! streams [`REPLICA_STREAMS`]. A quenched run derives the seed of sample `d` from the
//! base seed with [`sample_seed`], so results do not depend on the thread count.

mod enumerate;
mod gibbs;
mod quenched;
mod stats;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

pub use enumerate::{exact_enumerate, MAX_ENUMERATION_N};
pub use gibbs::{heat_bath_probability, run_block_gibbs};
pub use quenched::{
    quenched_run, write_samples_csv, ControlVariateEstimate, Engine, QuenchedReport, SampleSummary, SiteIdentity,
};
pub use stats::{control_variate_mean, mean_stderr, NeumaierSum};

pub const DISORDER_STREAM: u64 = 1;
pub const REPLICA_STREAMS: [u64; 2] = [2, 3];

/// Seed of disorder sample `index` in a run with `base_seed` (SplitMix64 finalizer).
pub fn sample_seed(base_seed: u64, index: u64) -> u64 {
    let mut z = base_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Layer sizes of a finite system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SystemSize {
    n: usize,
    layer_sizes: Vec<usize>,
}

impl SystemSize {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidModel("a system needs at least two layers".into()));
        }
        if let Some(r) = layer_sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidModel(format!("layer {} is empty", r + 1)));
        }
        Ok(Self {
            n: layer_sizes.iter().sum(),
            layer_sizes,
        })
    }

    /// `N_r = round(α_r N)` by largest remainder, then every empty layer takes one spin
    /// from the currently largest layer.
    pub fn from_alpha(alpha: &[f64], n: usize) -> Result<Self> {
        let k = alpha.len();
        if n < k {
            return Err(Error::InvalidModel(format!("N = {n} is smaller than K = {k}")));
        }
        let quotas: Vec<f64> = alpha.iter().map(|a| a * n as f64).collect();
        let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            let (fa, fb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let assigned: usize = sizes.iter().sum();
        for &r in order.iter().take(n.saturating_sub(assigned)) {
            sizes[r] += 1;
        }
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let largest = (0..k).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).unwrap();
            sizes[largest] -= 1;
            sizes[empty] += 1;
        }
        Self::new(sizes)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    /// Site index range of layer `r` (0-based).
    pub fn layer_range(&self, r: usize) -> std::ops::Range<usize> {
        let start: usize = self.layer_sizes[..r].iter().sum();
        start..start + self.layer_sizes[r]
    }
}

/// One draw of the couplings and fields.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderSample {
    size: SystemSize,
    forward: Vec<DMatrix<f64>>,
    backward: Vec<DMatrix<f64>>,
    fields: Vec<f64>,
    seed: u64,
}

impl DisorderSample {
    /// Assembles a sample from explicit blocks: `forward[r]` is `N_r × N_{r+1}`,
    /// `backward[r]` is `N_{r+1} × N_r`.
    pub fn from_parts(
        size: SystemSize,
        forward: Vec<DMatrix<f64>>,
        backward: Vec<DMatrix<f64>>,
        fields: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let k = size.k();
        if forward.len() != k - 1 || backward.len() != k - 1 {
            return Err(Error::Dimension {
                expected: k - 1,
                got: forward.len().min(backward.len()),
            });
        }
        let ls = size.layer_sizes();
        for r in 0..k - 1 {
            if forward[r].shape() != (ls[r], ls[r + 1]) || backward[r].shape() != (ls[r + 1], ls[r]) {
                return Err(Error::InvalidModel(format!(
                    "coupling blocks between layers {} and {} have the wrong shape",
                    r + 1,
                    r + 2
                )));
            }
        }
        if fields.len() != size.n() {
            return Err(Error::Dimension {
                expected: size.n(),
                got: fields.len(),
            });
        }
        Ok(Self {
            size,
            forward,
            backward,
            fields,
            seed,
        })
    }

    /// No couplings, no fields.
    pub fn zero(size: SystemSize) -> Self {
        let ls = size.layer_sizes().to_vec();
        let forward = (0..ls.len() - 1).map(|r| DMatrix::zeros(ls[r], ls[r + 1])).collect();
        let backward = (0..ls.len() - 1).map(|r| DMatrix::zeros(ls[r + 1], ls[r])).collect();
        let fields = vec![0.0; size.n()];
        Self {
            size,
            forward,
            backward,
            fields,
            seed: 0,
        }
    }

    pub fn size(&self) -> &SystemSize {
        &self.size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `J̃^{r,r+1}` (0-based `r`).
    pub fn forward(&self, r: usize) -> &DMatrix<f64> {
        &self.forward[r]
    }

    /// `J̃^{r+1,r}` (0-based `r`).
    pub fn backward(&self, r: usize) -> &DMatrix<f64> {
        &self.backward[r]
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    /// Disorder statistics with known means: `Σ J / N`, `Σ h̃ / N` and `Σ J² / N` over
    /// the symmetric interactions `J` of [`Self::effective_block`].
    pub fn control_statistics(&self) -> [f64; 3] {
        let n = self.size.n() as f64;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for r in 0..self.forward.len() {
            let j = self.effective_block(r);
            sum += j.sum();
            sq += j.iter().map(|v| v * v).sum::<f64>();
        }
        [sum / n, self.fields.iter().sum::<f64>() / n, sq / n]
    }

    /// Symmetric interaction between layers `r` and `r+1`: `J̃^{r,r+1} + (J̃^{r+1,r})ᵀ`.
    pub fn effective_block(&self, r: usize) -> DMatrix<f64> {
        &self.forward[r] + self.backward[r].transpose()
    }
}

/// Draws couplings and fields for `spec` at `size`, deterministically from `seed`.
pub fn sample_disorder(spec: &ModelSpec, size: &SystemSize, seed: u64) -> Result<DisorderSample> {
    if spec.k() != size.k() {
        return Err(Error::Dimension {
            expected: spec.k(),
            got: size.k(),
        });
    }
    let mut rng = stream_rng(seed, DISORDER_STREAM);
    let n = size.n() as f64;
    let ls = size.layer_sizes();
    let mut forward = Vec::with_capacity(ls.len() - 1);
    let mut backward = Vec::with_capacity(ls.len() - 1);
    for (r, &mu) in spec.mu().iter().enumerate() {
        let mean = mu / (2.0 * n);
        let law = Normal::new(mean, mean.sqrt()).map_err(|_| Error::Domain {
            what: "coupling variance",
            value: mean,
        })?;
        forward.push(DMatrix::from_fn(ls[r], ls[r + 1], |_, _| law.sample(&mut rng)));
        backward.push(DMatrix::from_fn(ls[r + 1], ls[r], |_, _| law.sample(&mut rng)));
    }
    let mut fields = Vec::with_capacity(size.n());
    for (r, &h) in spec.h().iter().enumerate() {
        let law = Normal::new(h, h.sqrt()).map_err(|_| Error::Domain {
            what: "field variance",
            value: h,
        })?;
        fields.extend((0..ls[r]).map(|_| law.sample(&mut rng)));
    }
    DisorderSample::from_parts(size.clone(), forward, backward, fields, seed)
}

/// Expectations of [`DisorderSample::control_statistics`] under the disorder law.
pub fn expected_control_statistics(spec: &ModelSpec, size: &SystemSize) -> [f64; 3] {
    let n = size.n() as f64;
    let ls = size.layer_sizes();
    let mut out = [0.0; 3];
    for (r, &mu) in spec.mu().iter().enumerate() {
        let pairs = (ls[r] * ls[r + 1]) as f64;
        out[0] += pairs * mu / n / n;
        out[2] += pairs * (mu / n + mu * mu / (n * n)) / n;
    }
    out[1] = spec.h().iter().zip(ls).map(|(h, &l)| h * l as f64).sum::<f64>() / n;
    out
}

/// `H_N(σ) = −Σ J̃ σσ − Σ h̃ σ` over both coupling blocks of every adjacent pair.
pub fn energy(sigma: &[i8], disorder: &DisorderSample) -> Result<f64> {
    let size = disorder.size();
    if sigma.len() != size.n() {
        return Err(Error::Dimension {
            expected: size.n(),
            got: sigma.len(),
        });
    }
    if sigma.iter().any(|&s| s != 1 && s != -1) {
        return Err(Error::InvalidModel("spins must be +1 or -1".into()));
    }
    let s: Vec<f64> = sigma.iter().map(|&v| v as f64).collect();
    let mut e = -disorder.fields.iter().zip(&s).map(|(h, v)| h * v).sum::<f64>();
    for r in 0..size.k() - 1 {
        let a = &s[size.layer_range(r)];
        let b = &s[size.layer_range(r + 1)];
        let j = disorder.effective_block(r);
        for (i, si) in a.iter().enumerate() {
            for (l, sl) in b.iter().enumerate() {
                e -= j[(i, l)] * si * sl;
            }
        }
    }
    Ok(e)
}

/// How per-layer averages were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateMethod {
    Enumeration,
    BlockGibbs,
}

/// Thermal averages for one disorder sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsEstimate {
    /// `⟨m_r⟩` per layer.
    pub m: Vec<f64>,
    /// `⟨q_r⟩` per layer, from two replicas sharing the disorder.
    pub q: Vec<f64>,
    /// `p_N = (1/N) log Z`; enumeration only.
    pub pressure: Option<f64>,
    pub stderr_m: Vec<f64>,
    pub stderr_q: Vec<f64>,
    pub method: EstimateMethod,
    /// `⟨σ_i⟩` per site (a time average for Gibbs sampling).
    pub site_magnetization: Vec<f64>,
    /// Integrated autocorrelation time of `m_r` in sweeps, Gibbs sampling only.
    pub autocorrelation: Option<Vec<f64>>,
}
