//! Order-invariance checks for general Bayesian updating on finite parameter sets.

use nalgebra::DMatrix;
use serde::Serialize;

use bayescv::general::{
    coherence_residual, general_update, log_pred_score, prequential_score, verify_coherence, CoherenceReport,
    DiscreteGeneralModel, ScoringFunction,
};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::OutputDir;

/// Two parameter values with equal prior mass and `w = 1`; losses (1, 2) on
/// the first observation and (3, 1) on the second.
#[derive(Clone, Debug, Serialize)]
pub struct WorkedExample {
    pub posterior_after_first: Vec<f64>,
    /// `exp` of the one-step score of the first observation.
    pub first_factor: f64,
    /// `exp` of the score of the second observation given the first.
    pub second_factor: f64,
    /// Product of the two factors.
    pub sequential: f64,
    /// `½e⁻⁴ + ½e⁻³`, the score of both observations at once.
    pub joint: f64,
    pub log_residual: f64,
    pub pass: bool,
}

pub fn worked_example() -> Result<WorkedExample, CliError> {
    let model = DiscreteGeneralModel::new(DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 1.0]), vec![0.5, 0.5], 1.0)?;
    let g = ScoringFunction::exp_neg(1.0);
    let post = general_update(&model, &[0])?;
    let first = log_pred_score(model.prior(), &[1.0, 2.0], &g)?;
    let second = log_pred_score(&post, &[3.0, 1.0], &g)?;
    let sequential = prequential_score(&model, &[0, 1], &g)?;
    let joint = (0.5 * (-4f64).exp() + 0.5 * (-3f64).exp()).ln();
    let log_residual = coherence_residual(&model, &g)?.max((sequential - joint).abs());
    Ok(WorkedExample {
        posterior_after_first: post,
        first_factor: first.exp(),
        second_factor: second.exp(),
        sequential: sequential.exp(),
        joint: joint.exp(),
        log_residual,
        pass: log_residual <= 1e-12,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CoherenceSuite {
    pub worked_example: WorkedExample,
    pub random: CoherenceReport,
    pub pass: bool,
}

pub fn coherence_suite(config: &ExperimentConfig) -> Result<CoherenceSuite, CliError> {
    config.validate()?;
    let worked_example = worked_example()?;
    let random = verify_coherence(config.trials, config.seed)?;
    let pass = worked_example.pass && random.pass;
    Ok(CoherenceSuite { worked_example, random, pass })
}

/// Writes `coherence.csv` (one row per scoring family) and `coherence.json`.
pub fn run_coherence_suite(config: &ExperimentConfig, out: &mut OutputDir) -> Result<CoherenceSuite, CliError> {
    use bayescv::numerics::sig6;
    let suite = coherence_suite(config)?;
    let rows: Vec<Vec<String>> = suite
        .random
        .families
        .iter()
        .map(|f| {
            vec![
                f.family.clone(),
                serde_json::to_value(f.expectation).unwrap().as_str().unwrap().to_string(),
                f.trials.to_string(),
                f.passed.to_string(),
                sig6(f.residuals.min),
                sig6(f.residuals.median),
                sig6(f.residuals.max),
                f.trivial.to_string(),
                f.pass.to_string(),
            ]
        })
        .collect();
    out.write_csv(
        "coherence.csv",
        &["family", "expectation", "trials", "passed", "residual_min", "residual_median", "residual_max", "trivial", "pass"],
        &rows,
    )?;
    out.write_json("coherence.json", &suite)?;
    Ok(suite)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example_values() {
        let w = worked_example().unwrap();
        assert!((w.posterior_after_first[0] - 0.731_059).abs() < 1e-6);
        assert!((w.first_factor - 0.251_607).abs() < 1e-6);
        assert!((w.second_factor - 0.135_335).abs() < 1e-6);
        assert!((w.sequential - 0.034_052).abs() < 1e-6);
        assert!((w.sequential - w.joint).abs() < 1e-15);
        assert!(w.pass);
    }

    #[test]
    fn suite_passes() {
        let s = coherence_suite(&ExperimentConfig { trials: 30, ..ExperimentConfig::default() }).unwrap();
        assert!(s.pass);
    }
}
