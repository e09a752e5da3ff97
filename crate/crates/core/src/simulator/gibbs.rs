//! Heat-bath sampling with the bipartite block schedule: all layers of one parity
//! class are conditionally independent given the other class, so each half-sweep
//! redraws a whole class at once.

use nalgebra::DMatrix;
use rand::Rng;

use super::stats::{mean_stderr, NeumaierSum};
use super::{stream_rng, DisorderSample, EstimateMethod, GibbsEstimate, REPLICA_STREAMS};
use crate::error::{Error, Result};

const BATCHES: usize = 20;

/// `P(σ_i = +1)` given the local field: `1 / (1 + exp(−2f))`.
pub fn heat_bath_probability(field: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * field).exp())
}

/// Runs two replicas for `sweeps` sweeps (the first `burn_in` discarded) from the
/// all-plus configuration.
pub fn run_block_gibbs(disorder: &DisorderSample, sweeps: usize, burn_in: usize, seed: u64) -> Result<GibbsEstimate> {
    if sweeps <= burn_in {
        return Err(Error::Precondition(format!(
            "need sweeps > burn_in, got sweeps = {sweeps}, burn_in = {burn_in}"
        )));
    }
    let size = disorder.size();
    let k = size.k();
    let blocks: Vec<DMatrix<f64>> = (0..k - 1).map(|r| disorder.effective_block(r)).collect();
    let h: Vec<&[f64]> = (0..k).map(|r| &disorder.fields()[size.layer_range(r)]).collect();
    let mut spins: Vec<DMatrix<f64>> = size
        .layer_sizes()
        .iter()
        .map(|&nr| DMatrix::from_element(nr, 2, 1.0))
        .collect();
    let mut fields: Vec<DMatrix<f64>> = size.layer_sizes().iter().map(|&nr| DMatrix::zeros(nr, 2)).collect();
    let mut rngs = REPLICA_STREAMS.map(|s| stream_rng(seed, s));

    let kept = sweeps - burn_in;
    let mut m_series = vec![Vec::with_capacity(kept); k];
    let mut q_series = vec![Vec::with_capacity(kept); k];
    let mut site_sum: Vec<NeumaierSum> = vec![NeumaierSum::default(); size.n()];

    for sweep in 0..sweeps {
        for parity in [0, 1] {
            for r in (parity..k).step_by(2) {
                let f = &mut fields[r];
                for c in 0..2 {
                    f.column_mut(c).copy_from_slice(h[r]);
                }
                if r > 0 {
                    f.gemm_tr(1.0, &blocks[r - 1], &spins[r - 1], 1.0);
                }
                if r + 1 < k {
                    f.gemm(1.0, &blocks[r], &spins[r + 1], 1.0);
                }
                let s = &mut spins[r];
                for (c, rng) in rngs.iter_mut().enumerate() {
                    for i in 0..s.nrows() {
                        let u: f64 = rng.random();
                        s[(i, c)] = if u < heat_bath_probability(f[(i, c)]) { 1.0 } else { -1.0 };
                    }
                }
            }
        }
        if sweep < burn_in {
            continue;
        }
        for r in 0..k {
            let s = &spins[r];
            let nr = s.nrows() as f64;
            let (a, b) = (s.column(0), s.column(1));
            m_series[r].push(0.5 * (a.sum() + b.sum()) / nr);
            q_series[r].push(a.dot(&b) / nr);
            for (i, site) in size.layer_range(r).enumerate() {
                site_sum[site].add(0.5 * (a[i] + b[i]));
            }
        }
    }

    let mut est = GibbsEstimate {
        m: Vec::with_capacity(k),
        q: Vec::with_capacity(k),
        pressure: None,
        stderr_m: Vec::with_capacity(k),
        stderr_q: Vec::with_capacity(k),
        method: EstimateMethod::BlockGibbs,
        site_magnetization: site_sum.iter().map(|s| s.value() / kept as f64).collect(),
        autocorrelation: Some(Vec::with_capacity(k)),
    };
    for r in 0..k {
        let (m, se_m, tau) = batch_means(&m_series[r]);
        let (q, se_q, _) = batch_means(&q_series[r]);
        est.m.push(m);
        est.q.push(q);
        est.stderr_m.push(se_m);
        est.stderr_q.push(se_q);
        est.autocorrelation.as_mut().unwrap().push(tau);
    }
    Ok(est)
}

/// Mean, batch-means standard error and integrated autocorrelation time of a series.
fn batch_means(series: &[f64]) -> (f64, f64, f64) {
    let n = series.len();
    let (mean, var, naive) = mean_stderr(series);
    let batches = BATCHES.min(n / 2);
    if batches < 2 {
        return (mean, naive, 0.5);
    }
    let len = n / batches;
    let means: Vec<f64> = series
        .chunks_exact(len)
        .take(batches)
        .map(|c| c.iter().copied().collect::<NeumaierSum>().value() / len as f64)
        .collect();
    let (_, var_b, se) = mean_stderr(&means);
    let tau = if var > 0.0 { 0.5 * len as f64 * var_b / var } else { 0.5 };
    (mean, se, tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_bath_ratio_is_boltzmann() {
        // single spin in field f: H(σ) = −fσ, so P(+)/P(−) = exp(2f)
        for f in [-3.0, -0.4, 0.0, 0.7, 5.0] {
            let p = heat_bath_probability(f);
            let ratio = p / (1.0 - p);
            assert!((ratio / (2.0 * f).exp() - 1.0).abs() < 1e-12, "f = {f}");
        }
    }

    #[test]
    fn batch_means_of_constant_series() {
        let (m, se, _) = batch_means(&[0.5; 100]);
        assert_eq!(m, 0.5);
        assert_eq!(se, 0.0);
    }
}
