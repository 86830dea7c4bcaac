//! Randomized checks of the exact score identities on conjugate instances.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use bayescv::conjugate::{ConjugateLinearModel, PolynomialSpec};
use bayescv::exact::{cumulative_score_exact, leave_p_out_score, preparatory_score, IDENTITY_TOLERANCE};
use bayescv::numerics::{sig6, CompensatedSum};
use bayescv::seed::SeedStream;
use bayescv::{ExactPredictiveModel, IndexedModel, Result};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::OutputDir;

const MAX_DEGREE: usize = 3;
const PRIOR_VARIANCES: [f64; 3] = [0.1, 1.0, 1e4];

/// Adds a constant to every single-point predictive. Used as a negative
/// control: the suite must reject it.
struct Perturbed<M> {
    inner: M,
    shift: f64,
}

impl<M: IndexedModel> IndexedModel for Perturbed<M> {
    fn n(&self) -> usize {
        self.inner.n()
    }
}

impl<M: ExactPredictiveModel> ExactPredictiveModel for Perturbed<M> {
    fn log_marginal(&self, subset: &[usize]) -> Result<f64> {
        self.inner.log_marginal(subset)
    }
    fn log_block_predictive(&self, train: &[usize], test: &[usize]) -> Result<f64> {
        self.inner.log_block_predictive(train, test)
    }
    fn log_pointwise_predictive(&self, train: &[usize], test: &[usize]) -> Result<Vec<f64>> {
        Ok(self.inner.log_pointwise_predictive(train, test)?.into_iter().map(|v| v + self.shift).collect())
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Instance {
    pub index: usize,
    pub n: usize,
    pub degree: usize,
    pub coef_variance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub instance: usize,
    /// `sum_over_p`, `preparatory` or `cumulative`.
    pub check: &'static str,
    pub cut: Option<usize>,
    pub value: f64,
    pub alternate: f64,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub seed: u64,
    pub tolerance: f64,
    pub corrupted: bool,
    pub instances: Vec<Instance>,
    pub checks: usize,
    pub failures: usize,
    pub max_residual: f64,
    pub pass: bool,
}

/// Instance 0 has a single observation; the others draw `n` from
/// `1..=max_n`, the degree from `0..=3` and the prior variance from
/// {0.1, 1, 10⁴}.
fn draw_instance(stream: &SeedStream, index: usize, max_n: usize) -> Result<(Instance, ConjugateLinearModel)> {
    let mut rng = stream.rng(index as u64);
    let n = if index == 0 { 1 } else { rng.random_range(1..=max_n) };
    let degree = rng.random_range(0..=MAX_DEGREE);
    let coef_variance = PRIOR_VARIANCES[rng.random_range(0..PRIOR_VARIANCES.len())];
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&v| {
            let e: f64 = rng.sample(StandardNormal);
            1.0 + 0.5 * v + e
        })
        .collect();
    let model = ConjugateLinearModel::polynomial(&x, &y, &PolynomialSpec::new(degree, coef_variance))?;
    Ok((Instance { index, n, degree, coef_variance }, model))
}

fn check_instance<M: ExactPredictiveModel>(index: usize, model: &M) -> Result<Vec<IdentityCheck>> {
    let n = model.n();
    let all: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    let mut push = |check, cut, value: f64, alternate: f64| {
        let residual = (value - alternate).abs();
        out.push(IdentityCheck { instance: index, check, cut, value, alternate, residual, pass: residual < IDENTITY_TOLERANCE });
    };
    let mut total = CompensatedSum::new();
    for p in 1..=n {
        total.add(leave_p_out_score(model, p)?);
    }
    push("sum_over_p", None, total.value(), model.log_marginal(&all)?);
    for cut in 1..n {
        let prep = preparatory_score(model, cut)?;
        push("preparatory", Some(cut), prep.value, prep.alternate);
        let cum = cumulative_score_exact(model, cut)?;
        push("cumulative", Some(cut), cum.value, cum.alternate);
    }
    Ok(out)
}

pub fn identity_suite(config: &ExperimentConfig) -> std::result::Result<(IdentityReport, Vec<IdentityCheck>), CliError> {
    config.validate()?;
    let stream = SeedStream::new(config.seed);
    let mut instances = Vec::new();
    let mut checks = Vec::new();
    for index in 0..config.instances {
        let (instance, model) = draw_instance(&stream, index, config.max_n)?;
        instances.push(instance);
        if config.corrupt {
            checks.extend(check_instance(index, &Perturbed { inner: model, shift: 1e-6 })?);
        } else {
            checks.extend(check_instance(index, &model)?);
        }
    }
    let failures = checks.iter().filter(|c| !c.pass).count();
    let max_residual = checks.iter().map(|c| c.residual).fold(0.0, f64::max);
    let report = IdentityReport {
        seed: config.seed,
        tolerance: IDENTITY_TOLERANCE,
        corrupted: config.corrupt,
        instances,
        checks: checks.len(),
        failures,
        max_residual,
        pass: failures == 0,
    };
    Ok((report, checks))
}

/// Writes `identities.csv` with one row per check and `identities.json`.
pub fn run_identity_suite(config: &ExperimentConfig, out: &mut OutputDir) -> std::result::Result<IdentityReport, CliError> {
    let (report, checks) = identity_suite(config)?;
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            let inst = &report.instances[c.instance];
            vec![
                c.instance.to_string(),
                inst.n.to_string(),
                inst.degree.to_string(),
                sig6(inst.coef_variance),
                c.check.to_string(),
                c.cut.map(|v| v.to_string()).unwrap_or_default(),
                sig6(c.value),
                sig6(c.alternate),
                sig6(c.residual),
                c.pass.to_string(),
            ]
        })
        .collect();
    out.write_csv(
        "identities.csv",
        &["instance", "n", "degree", "coef_variance", "check", "cut", "value", "alternate", "residual", "pass"],
        &rows,
    )?;
    out.write_json("identities.json", &report)?;
    Ok(report)
}
