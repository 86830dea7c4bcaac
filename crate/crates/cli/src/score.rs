//! Scores a polynomial regression model on a user-supplied CSV.

use serde::Serialize;

use bayescv::conjugate::{ConjugateLinearModel, PolynomialSpec, PredictiveRoute};
use bayescv::exact::{decompose_marginal, prep_curve_from, write_prep_curve_csv, MAX_DECOMPOSITION_N};
use bayescv::mc::{estimate_ccv_exact_inner, repeat_runs, McOptions};
use bayescv::numerics::sig6;
use bayescv::seed::derive_seed;
use bayescv::{Dataset, ExactPredictiveModel, ScoreDecomposition};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::OutputDir;

#[derive(Clone, Debug, Serialize)]
pub struct CutScore {
    pub cut: usize,
    /// `S_CCV(y; P) · n / P`.
    pub value: f64,
    pub stderr: Option<f64>,
    pub exact: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScoreReport {
    pub data: String,
    pub n: usize,
    pub covariate: Option<String>,
    pub spec: PolynomialSpec,
    pub log_marginal: f64,
    pub ccv: Vec<CutScore>,
    /// Full decomposition when `n` is small enough to enumerate.
    pub decomposition: Option<ScoreDecomposition>,
}

/// Polynomial in the first covariate, or an intercept-only model when the
/// file has no covariates.
pub fn score(config: &ExperimentConfig) -> Result<ScoreReport, CliError> {
    config.validate()?;
    let path = config.data.as_ref().ok_or_else(|| CliError::Usage("`score` needs a data file".into()))?;
    let dataset = Dataset::from_csv_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let n = dataset.len();
    if n < 2 {
        return Err(CliError::Data("need at least two observations".into()));
    }
    let (x, covariate, degree) = match dataset.first_covariate() {
        Some(x) => (x, dataset.covariate_names().first().cloned(), config.degree),
        None => (vec![0.0; n], None, 0),
    };
    let spec = PolynomialSpec {
        degree,
        noise_variance: config.noise_variance,
        intercept_sd: config.intercept_sd,
        coef_variance: config.coef_variance,
    };
    let model = ConjugateLinearModel::polynomial(&x, dataset.y(), &spec)?.with_route(PredictiveRoute::SufficientStats);
    let all: Vec<usize> = (0..n).collect();
    let log_marginal = model.log_marginal(&all)?;
    let cuts: Vec<usize> = config.cut_fractions.iter().map(|&f| ExperimentConfig::cut_for(n, f)).collect();
    let (ccv, decomposition) = if n <= MAX_DECOMPOSITION_N {
        let d = decompose_marginal(&model)?;
        let ccv = cuts
            .iter()
            .map(|&cut| CutScore { cut, value: d.ccv[&cut] * n as f64 / cut as f64, stderr: None, exact: true })
            .collect();
        (ccv, Some(d))
    } else {
        let ccv = cuts
            .iter()
            .map(|&cut| {
                let one = |seed| estimate_ccv_exact_inner(&model, cut, &McOptions::new(config.splits, seed).with_aggregation(config.aggregation));
                let seed = derive_seed(config.seed, cut as u64);
                let est = if config.runs >= 2 { repeat_runs(config.runs, seed, one)? } else { one(seed)? };
                let est = est.scaled(n as f64 / cut as f64);
                Ok(CutScore { cut, value: est.value, stderr: est.stderr, exact: false })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        (ccv, None)
    };
    Ok(ScoreReport { data: path.display().to_string(), n, covariate, spec, log_marginal, ccv, decomposition })
}

/// Writes `score.csv` (`score, cut, value, stderr`), `score.json` and, for
/// small `n`, `prep_curve.csv`.
pub fn run_score(config: &ExperimentConfig, out: &mut OutputDir) -> Result<ScoreReport, CliError> {
    let report = score(config)?;
    let mut rows = vec![vec!["log_marginal".to_string(), String::new(), sig6(report.log_marginal), String::new()]];
    for c in &report.ccv {
        rows.push(vec!["ccv".into(), c.cut.to_string(), sig6(c.value), c.stderr.map(sig6).unwrap_or_default()]);
    }
    out.write_csv("score.csv", &["score", "cut", "value", "stderr"], &rows)?;
    out.write_json("score.json", &report)?;
    if let Some(d) = &report.decomposition {
        let mut bytes = Vec::new();
        write_prep_curve_csv(&prep_curve_from(d), &mut bytes)?;
        out.write_bytes("prep_curve.csv", &bytes)?;
    }
    Ok(report)
}
