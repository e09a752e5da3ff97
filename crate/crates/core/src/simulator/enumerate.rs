//! Exact Gibbs averages by summing over one parity class of layers.
//!
//! Layers alternate between two classes and couplings only join different classes,
//! so given the spins of one class the other class is a set of free spins in local
//! fields `f_j`. Summing those out leaves
//! `Z = Σ_{σ_E} exp(Σ_{i∈E} h̃_i σ_i) Π_{j∉E} 2cosh f_j(σ_E)`
//! over the smaller class `E`, walked in Gray-code order so each step flips one spin.

use nalgebra::DMatrix;

use super::{DisorderSample, EstimateMethod, GibbsEstimate};
use crate::error::{Error, Result};
use crate::special::log_2cosh;

/// Hard cap on the number of spins for exact enumeration.
pub const MAX_ENUMERATION_N: usize = 24;

pub fn exact_enumerate(disorder: &DisorderSample) -> Result<GibbsEstimate> {
    let size = disorder.size();
    let n = size.n();
    if n > MAX_ENUMERATION_N {
        return Err(Error::TooLarge {
            n,
            max: MAX_ENUMERATION_N,
        });
    }
    let k = size.k();
    let class_sites = |parity: usize| -> Vec<usize> {
        (0..k)
            .filter(|r| r % 2 == parity)
            .flat_map(|r| size.layer_range(r))
            .collect()
    };
    let (a, b) = (class_sites(0), class_sites(1));
    let (enumerated, free) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let ne = enumerated.len();
    let nf = free.len();

    // coupling[(e, f)] between enumerated site e and free site f
    let mut coupling = DMatrix::<f64>::zeros(ne, nf);
    let mut site_pos = vec![(false, 0usize); n];
    for (p, &i) in enumerated.iter().enumerate() {
        site_pos[i] = (true, p);
    }
    for (p, &j) in free.iter().enumerate() {
        site_pos[j] = (false, p);
    }
    for r in 0..k - 1 {
        let block = disorder.effective_block(r);
        let (lo, hi) = (size.layer_range(r), size.layer_range(r + 1));
        for (ii, i) in lo.clone().enumerate() {
            for (jj, j) in hi.clone().enumerate() {
                let (i_enum, pi) = site_pos[i];
                let (_, pj) = site_pos[j];
                if i_enum {
                    coupling[(pi, pj)] = block[(ii, jj)];
                } else {
                    coupling[(pj, pi)] = block[(ii, jj)];
                }
            }
        }
    }
    let h = disorder.fields();
    let h_enum: Vec<f64> = enumerated.iter().map(|&i| h[i]).collect();

    // start from all enumerated spins at −1
    let mut sigma = vec![-1.0f64; ne];
    let mut field: Vec<f64> = free
        .iter()
        .enumerate()
        .map(|(p, &j)| h[j] - (0..ne).map(|e| coupling[(e, p)]).sum::<f64>())
        .collect();
    let mut enum_term: f64 = -h_enum.iter().sum::<f64>();

    // streaming log-sum-exp: all sums are scaled by exp(−shift)
    let mut shift = f64::NEG_INFINITY;
    let mut z = 0.0;
    let mut s_enum = vec![0.0; ne];
    let mut s_free = vec![0.0; nf];
    let states: u64 = 1 << ne;
    for step in 0..states {
        if step > 0 {
            let e = step.trailing_zeros() as usize;
            let new = -sigma[e];
            sigma[e] = new;
            enum_term += 2.0 * new * h_enum[e];
            for (f, c) in field.iter_mut().zip(coupling.row(e).iter()) {
                *f += 2.0 * new * c;
            }
        }
        let lw = enum_term + field.iter().map(|&f| log_2cosh(f)).sum::<f64>();
        if lw > shift {
            let scale = (shift - lw).exp();
            z *= scale;
            s_enum.iter_mut().chain(s_free.iter_mut()).for_each(|v| *v *= scale);
            shift = lw;
        }
        let w = (lw - shift).exp();
        z += w;
        for (acc, s) in s_enum.iter_mut().zip(&sigma) {
            *acc += w * s;
        }
        for (acc, f) in s_free.iter_mut().zip(&field) {
            *acc += w * f.tanh();
        }
    }

    let mut site = vec![0.0; n];
    for (p, &i) in enumerated.iter().enumerate() {
        site[i] = s_enum[p] / z;
    }
    for (p, &j) in free.iter().enumerate() {
        site[j] = s_free[p] / z;
    }
    let mut m = Vec::with_capacity(k);
    let mut q = Vec::with_capacity(k);
    for r in 0..k {
        let range = size.layer_range(r);
        let len = range.len() as f64;
        m.push(site[range.clone()].iter().sum::<f64>() / len);
        q.push(site[range].iter().map(|v| v * v).sum::<f64>() / len);
    }
    Ok(GibbsEstimate {
        m,
        q,
        pressure: Some((shift + z.ln()) / n as f64),
        stderr_m: vec![0.0; k],
        stderr_q: vec![0.0; k],
        method: EstimateMethod::Enumeration,
        site_magnetization: site,
        autocorrelation: None,
    })
}
