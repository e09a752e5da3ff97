mod common;

use dbm_core::model::{dense_spectral_radius, ModelSpec, OddEvenSplit};
use dbm_core::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(|v| {
        let s: f64 = v.iter().sum();
        let mut a: Vec<f64> = v.iter().map(|x| x / s).collect();
        let rest: f64 = a[..a.len() - 1].iter().sum();
        *a.last_mut().unwrap() = 1.0 - rest;
        a
    })
}

fn spec_strategy(kmin: usize, kmax: usize, mu_max: f64) -> impl Strategy<Value = ModelSpec> {
    chain_strategy((kmin..=kmax).boxed(), mu_max)
}

fn even_spec_strategy(kmax: usize, mu_max: f64) -> impl Strategy<Value = ModelSpec> {
    chain_strategy((1..=kmax / 2).prop_map(|n| 2 * n).boxed(), mu_max)
}

fn chain_strategy(ks: BoxedStrategy<usize>, mu_max: f64) -> impl Strategy<Value = ModelSpec> {
    ks.prop_flat_map(move |k| {
        (simplex(k), prop::collection::vec(0.05f64..mu_max, k - 1), prop::collection::vec(0.0f64..1.0, k))
            .prop_map(|(a, m, h)| ModelSpec::new(a, m, h).unwrap())
    })
}

#[test]
fn build_effective_examples() {
    let s = ModelSpec::new(vec![0.5, 0.5], vec![4.0], vec![0.0; 2]).unwrap();
    let e = s.effective();
    assert_eq!(e.delta, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    assert_eq!(e.m, DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]));

    let s = ModelSpec::new(vec![0.1, 0.2, 0.3, 0.4], vec![1.0, 2.0, 3.0], vec![0.0; 4]).unwrap();
    let e = s.effective();
    assert!((e.m[(1, 2)] - 0.6).abs() < 1e-15);
    assert!((e.delta[(1, 2)] - 0.12).abs() < 1e-15);
    assert!((e.m[(2, 1)] - 0.4).abs() < 1e-15);
    assert!((e.m[(3, 2)] - 0.9).abs() < 1e-15);

    let s = ModelSpec::new(vec![0.5, 0.0, 0.5], vec![1.0, 2.0], vec![0.0; 3]).unwrap();
    let e = s.effective();
    assert!(e.delta.row(1).iter().all(|&v| v == 0.0));
    assert!(e.delta.column(1).iter().all(|&v| v == 0.0));
}

#[test]
fn parity_blocks_of_four_layer_chain() {
    let s = ModelSpec::new(vec![0.1, 0.2, 0.3, 0.4], vec![1.0, 2.0, 3.0], vec![0.0; 4]).unwrap();
    let m = s.effective().m;
    let split = OddEvenSplit::of(&m);
    // rows: even layers 2, 4; columns: odd layers 1, 3
    let expected_eo = DMatrix::from_row_slice(2, 2, &[m[(1, 0)], m[(1, 2)], 0.0, m[(3, 2)]]);
    assert_eq!(split.eo, expected_eo);
    assert_eq!(split.oe, DMatrix::from_row_slice(2, 2, &[m[(0, 1)], 0.0, m[(2, 1)], m[(2, 3)]]));
    assert!(split.oo.iter().all(|&v| v == 0.0));
    assert!(split.ee.iter().all(|&v| v == 0.0));
    assert_eq!(split.reassemble(), m);

    let id = OddEvenSplit::of(&DMatrix::identity(4, 4));
    assert_eq!(id.oo, DMatrix::identity(2, 2));
    assert_eq!(id.ee, DMatrix::identity(2, 2));
    assert!(id.oe.iter().chain(id.eo.iter()).all(|&v| v == 0.0));
}

#[test]
fn spectral_radius_examples() {
    let rho = |mu: f64| {
        ModelSpec::new(vec![0.5, 0.5], vec![mu], vec![0.0; 2])
            .unwrap()
            .effective()
            .spectral_radius_oo()
    };
    assert!((rho(2.0) - 1.0).abs() < 1e-12);
    assert!((rho(4.0) - 4.0).abs() < 1e-12);
    let s = ModelSpec::new(vec![0.3, 0.7], vec![3.0], vec![0.0; 2]).unwrap();
    assert!((s.effective().spectral_radius_oo() - 9.0 * 0.3 * 0.7).abs() < 1e-12);
}

#[test]
fn perron_vector_examples() {
    let s = ModelSpec::new(vec![0.5, 0.5], vec![3.0], vec![0.0; 2]).unwrap();
    let v = s.effective().perron_vector().unwrap();
    assert_eq!(v.len(), 1);
    assert!((v[0] - 1.0).abs() < 1e-15);

    let mut rng = common::Lcg(7);
    let a = rng.simplex(6);
    let mu: Vec<f64> = (0..5).map(|_| rng.range(0.5, 4.0)).collect();
    let e = ModelSpec::new(a, mu, vec![0.0; 6]).unwrap().effective();
    let v = e.perron_vector().unwrap();
    let rho = e.spectral_radius_oo();
    let resid = (e.m_squared_oo() * &v - &v * rho).amax();
    assert!(resid < 1e-10, "eigen-residual {resid:e}");
    assert!(v.iter().all(|&c| c > 0.0));
    assert!((v.sum() - 1.0).abs() < 1e-14);

    let s = ModelSpec::new(vec![0.0, 0.5, 0.5], vec![1.0, 3.0], vec![0.0; 3]).unwrap();
    assert!(matches!(s.effective().perron_vector(), Err(Error::Precondition(_))));
    let s = ModelSpec::new(vec![0.25; 4], vec![1.0, 0.0, 3.0], vec![0.0; 4]).unwrap();
    assert!(matches!(s.effective().perron_vector(), Err(Error::Precondition(_))));
}

#[test]
fn subcritical_couplings_stay_subcritical_on_simplex_grid() {
    // every μ < 2 on a simplex grid for K = 3, 4
    let steps = 20;
    for mu in [vec![1.99, 1.99], vec![1.5, 1.99], vec![1.9, 0.3]] {
        for i in 0..=steps {
            for j in 0..=steps - i {
                let a = [i as f64 / steps as f64, j as f64 / steps as f64];
                let alpha = vec![a[0], a[1], (1.0 - a[0] - a[1]).max(0.0)];
                let s = ModelSpec::new(alpha, mu.clone(), vec![0.0; 3]).unwrap();
                assert!(s.effective().spectral_radius_oo() < 1.0);
            }
        }
    }
    let mu = vec![1.99, 1.99, 1.99];
    let steps = 12;
    for i in 0..=steps {
        for j in 0..=steps - i {
            for l in 0..=steps - i - j {
                let (a, b, c) = (i as f64 / 12.0, j as f64 / 12.0, l as f64 / 12.0);
                let alpha = vec![a, b, c, (1.0 - a - b - c).max(0.0)];
                let s = ModelSpec::new(alpha, mu.clone(), vec![0.0; 4]).unwrap();
                assert!(s.effective().spectral_radius_oo() < 1.0);
            }
        }
    }
}

#[test]
fn serde_round_trip_and_rejections() {
    let s = ModelSpec::new(vec![0.25; 4], vec![1.0, 2.0, 3.0], vec![0.1; 4]).unwrap();
    let json = serde_json::to_string(&s).unwrap();
    assert!(json.contains("\"K\":4"));
    assert_eq!(serde_json::from_str::<ModelSpec>(&json).unwrap(), s);
    let full = r#"{"K":2,"alpha":[0.5,0.5],"mu":[[0,3],[3,0]],"h":[0,0]}"#;
    assert_eq!(serde_json::from_str::<ModelSpec>(full).unwrap().mu(), &[3.0]);
    let asym = r#"{"K":2,"alpha":[0.5,0.5],"mu":[[0,3],[2,0]],"h":[0,0]}"#;
    assert!(serde_json::from_str::<ModelSpec>(asym).is_err());
    let bad_sum = r#"{"K":2,"alpha":[0.5,0.6],"mu":[3],"h":[0,0]}"#;
    let err = serde_json::from_str::<ModelSpec>(bad_sum).unwrap_err().to_string();
    assert!(err.contains("sum to 1"), "{err}");
    let wrong_k = r#"{"K":3,"alpha":[0.5,0.5],"mu":[3],"h":[0,0]}"#;
    assert!(serde_json::from_str::<ModelSpec>(wrong_k).is_err());
    let extra = r#"{"K":2,"alpha":[0.5,0.5],"mu":[3],"h":[0,0],"beta":1}"#;
    assert!(serde_json::from_str::<ModelSpec>(extra).is_err());
}

proptest! {
    #[test]
    fn delta_equals_alpha_hat_times_m(s in spec_strategy(2, 7, 4.0)) {
        let e = s.effective();
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(s.alpha()));
        prop_assert!((&a * &e.m - &e.delta).amax() < 1e-15);
        prop_assert!((&e.delta - e.delta.transpose()).amax() == 0.0);
        prop_assert!(e.m.iter().all(|&v| v >= 0.0));
        for r in 0..s.k() {
            prop_assert_eq!(e.m[(r, r)], 0.0);
        }
    }

    #[test]
    fn split_reassembles(s in spec_strategy(2, 7, 4.0)) {
        let m = s.effective().m;
        let sq = &m * &m;
        prop_assert_eq!(OddEvenSplit::of(&sq).reassemble(), sq);
        let d = s.effective().delta;
        let split = OddEvenSplit::of(&d);
        if s.k() % 2 == 0 {
            prop_assert_eq!(split.oe.transpose(), split.eo);
        }
    }

    #[test]
    fn odd_and_even_radii_agree(s in even_spec_strategy(8, 4.0)) {
        let e = s.effective();
        let (o, ev) = (e.spectral_radius_oo(), e.spectral_radius_ee());
        prop_assert!((o - ev).abs() < 1e-10 * o.max(1.0), "{} vs {}", o, ev);
        prop_assert!((o - dense_spectral_radius(&e.m_squared_oo())).abs() < 1e-10 * o.max(1.0));
    }

    #[test]
    fn radius_reversal_invariant_and_homogeneous(s in spec_strategy(2, 7, 4.0), c in 0.1f64..3.0) {
        let rho = s.effective().spectral_radius_oo();
        let rev = s.reversed().effective().spectral_radius_oo();
        prop_assert!((rho - rev).abs() < 1e-10 * rho.max(1.0));
        let scaled = s.with_mu(s.mu().iter().map(|m| c * m).collect()).unwrap();
        let rs = scaled.effective().spectral_radius_oo();
        prop_assert!((rs - c * c * rho).abs() < 1e-10 * rs.max(1.0));
    }
}
