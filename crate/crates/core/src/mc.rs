//! Monte Carlo estimators of the cumulative cross-validation score.
//!
//! Every split is an independent task: task `t` draws its split from ChaCha
//! stream `t` of the run seed and gets its own derived seed for any inner
//! sampler. Per-split terms are collected in task order and reduced with a
//! fixed tree, so estimates are bit-identical for any number of workers.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{ExactPredictiveModel, IndexedModel, PrepCurveRow};
use crate::numerics::{binomial, log_mean_exp, pairwise_mean, sample_sd};
use crate::seed::{derive_seed, SeedStream};
use crate::splits::{sample_split_with, Combinations, Split};

/// Default per-tail trim fraction for [`Aggregation::Trimmed`].
pub const DEFAULT_TRIM: f64 = 0.05;

/// How per-split terms are combined within a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Aggregation {
    Mean,
    Median,
    /// Mean after dropping `floor(alpha · T)` terms from each tail.
    Trimmed(f64),
}

impl Aggregation {
    fn apply(&self, values: &[f64]) -> f64 {
        match *self {
            Aggregation::Mean => pairwise_mean(values),
            Aggregation::Median => {
                let sorted = sorted(values);
                let k = sorted.len();
                if k % 2 == 1 {
                    sorted[k / 2]
                } else {
                    0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
                }
            }
            Aggregation::Trimmed(alpha) => {
                let sorted = sorted(values);
                let cut = (alpha * sorted.len() as f64).floor() as usize;
                let kept = &sorted[cut..sorted.len() - cut];
                pairwise_mean(kept)
            }
        }
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aggregation::Mean => write!(f, "mean"),
            Aggregation::Median => write!(f, "median"),
            Aggregation::Trimmed(a) => write!(f, "trimmed({a})"),
        }
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "mean" => Ok(Aggregation::Mean),
            "median" => Ok(Aggregation::Median),
            "trimmed" => Ok(Aggregation::Trimmed(DEFAULT_TRIM)),
            _ => {
                let alpha = s
                    .strip_prefix("trimmed(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|a| a.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::invalid(format!("unknown aggregation `{s}`")))?;
                if !(0.0..0.5).contains(&alpha) {
                    return Err(Error::invalid(format!("trim fraction must be in [0, 0.5), got {alpha}")));
                }
                Ok(Aggregation::Trimmed(alpha))
            }
        }
    }
}

impl From<Aggregation> for String {
    fn from(a: Aggregation) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for Aggregation {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSampling {
    /// `T` splits drawn uniformly with replacement.
    #[default]
    Random,
    /// Every one of the `C(n, P)` splits once; `T` is ignored.
    Exhaustive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McOptions {
    pub splits: usize,
    pub seed: u64,
    pub aggregation: Aggregation,
    /// Replaces non-finite split terms when set.
    pub floor: Option<f64>,
    pub sampling: SplitSampling,
}

impl McOptions {
    pub fn new(splits: usize, seed: u64) -> Self {
        Self { splits, seed, aggregation: Aggregation::Mean, floor: None, sampling: SplitSampling::Random }
    }

    pub fn with_aggregation(mut self, aggregation: Aggregation) -> Self {
        self.aggregation = aggregation;
        self
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = Some(floor);
        self
    }

    pub fn exhaustive(mut self) -> Self {
        self.sampling = SplitSampling::Exhaustive;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// What the standard error was computed from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StderrBasis {
    /// Sample SD of per-split terms over √T (single run, mean aggregation).
    Splits,
    /// Sample SD of run estimates over √R.
    Runs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: Option<f64>,
    pub stderr_basis: StderrBasis,
    #[serde(rename = "T")]
    pub splits: usize,
    /// Posterior draws per split; 0 when the inner term is exact.
    #[serde(rename = "B")]
    pub draws: usize,
    #[serde(rename = "R")]
    pub runs: usize,
    pub aggregation: Aggregation,
    pub per_run: Vec<f64>,
    pub degenerate_splits: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimate serializes")
    }

    /// Rescales value, stderr and per-run values by `factor` (e.g. `n / P`).
    pub fn scaled(&self, factor: f64) -> McEstimate {
        McEstimate {
            value: self.value * factor,
            stderr: self.stderr.map(|s| s * factor.abs()),
            per_run: self.per_run.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// A model that can draw from partial posteriors and evaluate block likelihoods.
pub trait SampledModel: IndexedModel + Sync {
    type Param: Send;

    /// `count` draws from the posterior given `train`, deterministic in `seed`.
    fn posterior_sample(&self, train: &[usize], count: usize, seed: u64) -> Result<Vec<Self::Param>>;

    /// `log f_θ(y_test)`.
    fn log_likelihood_block(&self, param: &Self::Param, test: &[usize]) -> f64;
}

/// Scores one train/test split; `seed` feeds any internal randomness.
pub trait SplitScorer: IndexedModel + Sync {
    fn score_split(&self, split: &Split, seed: u64) -> Result<f64>;
}

fn check_cut(n: usize, cut: usize) -> Result<()> {
    if cut == 0 || cut >= n {
        return Err(Error::invalid(format!("need 1 <= P < n, got P = {cut}, n = {n}")));
    }
    Ok(())
}

/// Evaluates `term(split, seed)` over the splits requested by `opts`.
fn split_terms<F>(n: usize, cut: usize, opts: &McOptions, term: F) -> Result<Vec<f64>>
where
    F: Fn(&Split, u64) -> Result<f64> + Sync,
{
    let stream = SeedStream::new(opts.seed);
    let wrap = |t: usize, r: Result<f64>| r.map_err(|e| Error::SplitFailure { index: t, source: Box::new(e) });
    match opts.sampling {
        SplitSampling::Random => {
            if opts.splits == 0 {
                return Err(Error::invalid("need at least one split"));
            }
            (0..opts.splits)
                .into_par_iter()
                .map(|t| {
                    let split = sample_split_with(&mut stream.rng(t as u64), n, cut)?;
                    wrap(t, term(&split, stream.task_seed(t as u64)))
                })
                .collect()
        }
        SplitSampling::Exhaustive => {
            crate::splits::check_enumeration(n, cut)?;
            Combinations::new(n, cut)
                .collect::<Vec<_>>()
                .into_par_iter()
                .enumerate()
                .map(|(t, test)| wrap(t, term(&Split::from_test(n, test), stream.task_seed(t as u64))))
                .collect()
        }
    }
}

/// Aggregates per-split terms into a single-run estimate.
fn summarize(mut terms: Vec<f64>, opts: &McOptions, draws: usize) -> Result<McEstimate> {
    let degenerate = terms.iter().filter(|v| !v.is_finite()).count();
    if let Some(floor) = opts.floor {
        for v in terms.iter_mut().filter(|v| !v.is_finite()) {
            *v = floor;
        }
    }
    let remaining = terms.iter().filter(|v| !v.is_finite()).count();
    if remaining > 0 && (opts.aggregation == Aggregation::Mean || terms.iter().any(|v| v.is_nan())) {
        return Err(Error::NonFiniteSplits { count: remaining });
    }
    let value = opts.aggregation.apply(&terms);
    let stderr = match opts.aggregation {
        Aggregation::Mean => sample_sd(&terms).map(|sd| sd / (terms.len() as f64).sqrt()),
        _ => None,
    };
    Ok(McEstimate {
        value,
        stderr,
        stderr_basis: StderrBasis::Splits,
        splits: terms.len(),
        draws,
        runs: 1,
        aggregation: opts.aggregation,
        per_run: vec![value],
        degenerate_splits: degenerate,
        seed: opts.seed,
    })
}

/// Split-averaged block log predictive `log p(ỹ_test | y_train)` with exact
/// inner terms. Its expectation under mean aggregation is `S_CCV(y; P)`.
pub fn estimate_ccv_exact_inner<M: ExactPredictiveModel + ?Sized>(
    model: &M,
    cut: usize,
    opts: &McOptions,
) -> Result<McEstimate> {
    let n = model.n();
    check_cut(n, cut)?;
    let terms = split_terms(n, cut, opts, |s, _| model.log_block_predictive(&s.train, &s.test))?;
    summarize(terms, opts, 0)
}

/// Same estimator with a caller-supplied split scorer (e.g. importance sampling).
pub fn estimate_ccv_with<S: SplitScorer + ?Sized>(scorer: &S, cut: usize, opts: &McOptions) -> Result<McEstimate> {
    let n = scorer.n();
    check_cut(n, cut)?;
    let terms = split_terms(n, cut, opts, |s, seed| scorer.score_split(s, seed))?;
    summarize(terms, opts, 0)
}

/// `(1/T) Σ_t log{(1/B) Σ_b f_{θ_b}(ỹ_test)}` with `θ_b` drawn from the
/// partial posterior. Biased for finite `B`.
pub fn estimate_ccv_sampled<S: SampledModel + ?Sized>(
    model: &S,
    cut: usize,
    draws: usize,
    opts: &McOptions,
) -> Result<McEstimate> {
    let n = model.n();
    check_cut(n, cut)?;
    if draws < 2 {
        return Err(Error::invalid(format!("need at least 2 posterior draws, got {draws}")));
    }
    let terms = split_terms(n, cut, opts, |s, seed| {
        let params = model.posterior_sample(&s.train, draws, seed)?;
        let logs: Vec<f64> = params.iter().map(|p| model.log_likelihood_block(p, &s.test)).collect();
        Ok(log_mean_exp(&logs))
    })?;
    summarize(terms, opts, draws)
}

/// `(P/T) Σ_t (1/p_t) Σ_j s(ỹ_j | y_train)` with `p_t ~ U{1, P}` and a uniform
/// split of test size `p_t`. Unbiased for `S_CCV(y; P)`.
pub fn estimate_ccv_mixed_p<M: ExactPredictiveModel + ?Sized>(
    model: &M,
    cut: usize,
    opts: &McOptions,
) -> Result<McEstimate> {
    let n = model.n();
    check_cut(n, cut)?;
    if opts.splits == 0 {
        return Err(Error::invalid("need at least one split"));
    }
    let stream = SeedStream::new(opts.seed);
    let terms = (0..opts.splits)
        .into_par_iter()
        .map(|t| {
            let mut rng: ChaCha8Rng = stream.rng(t as u64);
            let p = rng.random_range(1..=cut);
            let split = sample_split_with(&mut rng, n, p)?;
            let scores = model
                .log_pointwise_predictive(&split.train, &split.test)
                .map_err(|e| Error::SplitFailure { index: t, source: Box::new(e) })?;
            Ok(cut as f64 * scores.iter().sum::<f64>() / p as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    summarize(terms, &McOptions { sampling: SplitSampling::Random, ..*opts }, 0)
}

/// Split-averaged estimate of `S_CV(y; p)` from single-point predictives.
pub fn estimate_leave_p_out<M: ExactPredictiveModel + ?Sized>(
    model: &M,
    p: usize,
    opts: &McOptions,
) -> Result<McEstimate> {
    let n = model.n();
    if p == 0 || p > n {
        return Err(Error::invalid(format!("need 1 <= p <= n, got p = {p}, n = {n}")));
    }
    let terms = split_terms(n, p, opts, |s, _| {
        let scores = model.log_pointwise_predictive(&s.train, &s.test)?;
        Ok(scores.iter().sum::<f64>() / p as f64)
    })?;
    summarize(terms, opts, 0)
}

/// Runs `estimator` with seeds derived from `master_seed` for runs `0..R`.
/// The value is the mean of run values and the standard error is their
/// sample SD over √R.
pub fn repeat_runs<F>(runs: usize, master_seed: u64, estimator: F) -> Result<McEstimate>
where
    F: Fn(u64) -> Result<McEstimate>,
{
    if runs < 2 {
        return Err(Error::invalid(format!("need at least 2 runs for a run-level standard error, got {runs}")));
    }
    let estimates = (0..runs)
        .map(|r| estimator(derive_seed(master_seed, r as u64)))
        .collect::<Result<Vec<_>>>()?;
    let per_run: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let first = &estimates[0];
    Ok(McEstimate {
        value: pairwise_mean(&per_run),
        stderr: sample_sd(&per_run).map(|sd| sd / (runs as f64).sqrt()),
        stderr_basis: StderrBasis::Runs,
        splits: first.splits,
        draws: first.draws,
        runs,
        aggregation: first.aggregation,
        degenerate_splits: estimates.iter().map(|e| e.degenerate_splits).sum(),
        per_run,
        seed: master_seed,
    })
}

/// Preparatory-training curve for `p = 1..n−1`. Points with at most
/// `splits` distinct test sets are enumerated exactly; the rest use `splits`
/// random splits.
pub fn estimate_prep_curve<M: ExactPredictiveModel + ?Sized>(
    model: &M,
    splits: usize,
    seed: u64,
) -> Result<Vec<PrepCurveRow>> {
    let n = model.n();
    let stream = SeedStream::new(seed);
    (1..n)
        .map(|p| {
            let exact = binomial(n, p) <= splits as f64;
            let mut opts = McOptions::new(splits, stream.task_seed(p as u64));
            if exact {
                opts = opts.exhaustive();
            }
            let s_cv = estimate_leave_p_out(model, p, &opts)?.value;
            let s_ccv = estimate_ccv_exact_inner(model, p, &opts)?.value;
            Ok(PrepCurveRow {
                p,
                n_minus_p: n - p,
                s_cv,
                s_ccv_normalized: s_ccv * n as f64 / p as f64,
                exact,
            })
        })
        .collect()
}
