use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::variational::Variational;

/// Step sizes tried along the Perron direction, largest first.
pub const PERRON_EPSILONS: [f64; 3] = [1e-2, 1e-3, 1e-4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    /// `π` decreases along the Perron direction at every tested step and `ρ < 1`.
    Stable,
    /// `π` increases along the Perron direction for some step and `ρ > 1`.
    Unstable,
    /// The measured sign disagrees with the side of `ρ = 1`.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstabilitySample {
    pub epsilon: f64,
    /// `π(εv) − π(0)`.
    pub delta_pi: f64,
    /// `(ε²/2)(v, (α̂^(oo)/2) v)(ρ − 1)`.
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstabilityReport {
    pub verdict: Stability,
    pub rho: f64,
    /// Unit-sum Perron vector of `[M²]^(oo)`.
    pub perron: Vec<f64>,
    /// The step that decided the verdict (the smallest step when none did).
    pub epsilon_used: f64,
    pub delta_pi: f64,
    pub predicted: f64,
    pub samples: Vec<InstabilitySample>,
}

/// Probes `π` at `εv` for the Perron vector `v` and compares with the quadratic
/// prediction from the Hessian at the origin.
pub fn perron_instability_check(spec: &ModelSpec) -> Result<InstabilityReport> {
    let k = spec.k();
    if !spec.field_free() {
        return Err(Error::Precondition("the Perron check needs h = 0".into()));
    }
    if k % 2 != 0 {
        return Err(Error::Precondition(format!("the Perron check needs K even, got K = {k}")));
    }
    if spec.alpha().iter().any(|&a| !(a > 0.0)) || spec.mu().iter().any(|&m| !(m > 0.0)) {
        return Err(Error::Precondition(
            "the Perron check needs every form factor and coupling positive".into(),
        ));
    }
    let v = Variational::new(spec);
    let rho = v.spectral_radius();
    let perron: Vec<f64> = v.effective().perron_vector()?.iter().copied().collect();
    let quad: f64 = perron
        .iter()
        .zip(spec.alpha().iter().step_by(2))
        .map(|(p, a)| 0.5 * a * p * p)
        .sum();
    let base = v.pi_value(&vec![0.0; perron.len()])?;
    let samples = PERRON_EPSILONS
        .iter()
        .map(|&eps| {
            let xo: Vec<f64> = perron.iter().map(|p| eps * p).collect();
            Ok(InstabilitySample {
                epsilon: eps,
                delta_pi: v.pi_value(&xo)? - base,
                predicted: 0.5 * eps * eps * quad * (rho - 1.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let decisive = if rho > 1.0 {
        samples.iter().find(|s| s.delta_pi > 0.0).map(|s| (Stability::Unstable, s))
    } else if rho < 1.0 && samples.iter().all(|s| s.delta_pi < 0.0) {
        samples.last().map(|s| (Stability::Stable, s))
    } else {
        None
    };
    let (verdict, chosen) = decisive.unwrap_or((Stability::Inconclusive, samples.last().unwrap()));
    Ok(InstabilityReport {
        verdict,
        rho,
        epsilon_used: chosen.epsilon,
        delta_pi: chosen.delta_pi,
        predicted: chosen.predicted,
        perron,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preconditions() {
        let s = ModelSpec::new(vec![0.5, 0.5], vec![4.0], vec![0.1, 0.0]).unwrap();
        assert!(perron_instability_check(&s).is_err());
        let s = ModelSpec::new(vec![0.3, 0.3, 0.4], vec![4.0, 4.0], vec![0.0; 3]).unwrap();
        assert!(perron_instability_check(&s).is_err());
        let s = ModelSpec::new(vec![0.5, 0.5, 0.0, 0.0], vec![4.0, 1.0, 1.0], vec![0.0; 4]).unwrap();
        assert!(perron_instability_check(&s).is_err());
    }
}
