//! Importance-sampling estimates against deterministic 2-d adaptive quadrature.

use bayescv::mc::McOptions;
use bayescv::probit::{ccv_probit, GPrior, ProbitData, ProbitModel};
use bayescv::Dataset;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

mod support;
use support::quadrature::{adaptive_simpson, log_evidence};

fn toy(n: usize, seed: u64) -> ProbitData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&v| {
            let e: f64 = rng.sample(StandardNormal);
            f64::from(0.3 + 1.2 * v + e > 0.0)
        })
        .collect();
    let ds = Dataset::with_names(y, Some(DMatrix::from_column_slice(n, 1, &x)), vec!["x".into()]).unwrap();
    ProbitData::from_dataset(&ds, &["x"]).unwrap().0
}

#[test]
fn quadrature_oracle_reproduces_gaussian_integral() {
    let f = |x: f64| (-0.5 * x * x).exp();
    let v = adaptive_simpson(&|a| adaptive_simpson(&|b| f(a) * f(b), -12.0, 12.0, 1e-12), -12.0, 12.0, 1e-12);
    assert!((v - 2.0 * std::f64::consts::PI).abs() < 1e-9);
}

#[test]
fn log_marginal_matches_quadrature() {
    let data = toy(20, 1);
    let model = ProbitModel::new(&data, GPrior::new(20.0).unwrap()).unwrap();
    let all: Vec<usize> = (0..20).collect();
    let oracle = log_evidence(&model, &all);
    let est = model.is_log_marginal(10_000, 7).unwrap();
    assert!(!est.low_ess);
    assert!((est.value - oracle).abs() < 0.02, "estimate {} vs oracle {oracle}", est.value);
}

#[test]
fn block_predictive_matches_quadrature() {
    let data = toy(20, 2);
    let model = ProbitModel::new(&data, GPrior::new(20.0).unwrap()).unwrap();
    let train: Vec<usize> = (0..20).step_by(2).collect();
    let test: Vec<usize> = (1..20).step_by(2).collect();
    let all: Vec<usize> = (0..20).collect();
    let oracle = log_evidence(&model, &all) - log_evidence(&model, &train);
    let est = model.is_log_block_predictive(&train, &test, 10_000, 8).unwrap();
    assert!((est.value - oracle).abs() < 0.05, "estimate {} vs oracle {oracle}", est.value);
}

#[test]
fn leave_one_out_average_matches_quadrature() {
    let data = toy(20, 3);
    let model = ProbitModel::new(&data, GPrior::new(20.0).unwrap()).unwrap();
    let all: Vec<usize> = (0..20).collect();
    let full = log_evidence(&model, &all);
    let oracle = (0..20)
        .map(|i| {
            let train: Vec<usize> = all.iter().copied().filter(|&k| k != i).collect();
            full - log_evidence(&model, &train)
        })
        .sum::<f64>()
        / 20.0;
    let est = ccv_probit(&model, 1, 2_000, &McOptions::new(1, 9).exhaustive()).unwrap();
    assert_eq!(est.splits, 20);
    assert!((est.value - oracle).abs() < 0.05, "estimate {} vs oracle {oracle}", est.value);
}
