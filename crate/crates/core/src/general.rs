//! General Bayesian updating on a finite parameter set.
//!
//! Beliefs are updated by `π(θ | y) ∝ π(θ) exp{−w l(θ, y)}` and scored
//! prequentially with `s(ỹ | y) = log Σ_θ g{l(θ, ỹ)} π(θ | y)`. Only the choice
//! `g(l) = exp(−w l)` makes the cumulative score independent of the order and
//! batching of the data; [`verify_coherence`] checks this on random instances.

use std::fmt;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::log_sum_exp;
use crate::seed::SeedStream;

/// Finite-Θ general Bayesian model: `loss[(θ, i)] = l(θ, yᵢ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteGeneralModel {
    loss: DMatrix<f64>,
    prior: Vec<f64>,
    w: f64,
}

impl DiscreteGeneralModel {
    pub fn new(loss: DMatrix<f64>, prior: Vec<f64>, w: f64) -> Result<Self> {
        let m = loss.nrows();
        if m == 0 {
            return Err(Error::invalid("parameter set is empty"));
        }
        if prior.len() != m {
            return Err(Error::invalid(format!("prior has {} entries, loss has {m} rows", prior.len())));
        }
        if prior.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("prior entries must be finite and non-negative"));
        }
        let total: f64 = prior.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("prior sums to {total}, not 1")));
        }
        if loss.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::invalid("losses must be finite and non-negative"));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::invalid(format!("loss scale w must be positive, got {w}")));
        }
        Ok(Self { loss, prior, w })
    }

    pub fn theta_count(&self) -> usize {
        self.loss.nrows()
    }

    pub fn n(&self) -> usize {
        self.loss.ncols()
    }

    pub fn loss(&self) -> &DMatrix<f64> {
        &self.loss
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    fn log_prior(&self) -> Vec<f64> {
        self.prior.iter().map(|p| p.ln()).collect()
    }

    fn check_indices(&self, indices: &[usize]) -> Result<()> {
        match indices.iter().find(|&&i| i >= self.n()) {
            Some(i) => Err(Error::invalid(format!("observation index {i} out of range for n = {}", self.n()))),
            None => Ok(()),
        }
    }

    /// Σ_{i ∈ indices} l(θ, yᵢ) for every θ.
    fn summed_loss(&self, indices: &[usize]) -> Vec<f64> {
        (0..self.theta_count()).map(|t| indices.iter().map(|&i| self.loss[(t, i)]).sum()).collect()
    }
}

/// Tabulated scoring function: piecewise linear on `grid`, constant beyond
/// the last knot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedScore {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedScore {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::invalid("tabulated score needs at least two knots and one value per knot"));
        }
        if grid[0] != 0.0 {
            return Err(Error::invalid("tabulated score grid must start at 0"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("tabulated score grid must be finite and strictly increasing"));
        }
        if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("tabulated score values must be finite, non-negative and non-increasing"));
        }
        Ok(Self { grid, values })
    }

    fn eval(&self, l: f64) -> f64 {
        let k = self.grid.partition_point(|&g| g <= l);
        if k >= self.grid.len() {
            return *self.values.last().unwrap();
        }
        let (x0, x1) = (self.grid[k - 1], self.grid[k]);
        let (y0, y1) = (self.values[k - 1], self.values[k]);
        y0 + (y1 - y0) * (l - x0) / (x1 - x0)
    }
}

/// Continuous, non-increasing `g: [0, ∞) → [0, ∞)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScoringFunction {
    /// `exp(−λ l)`.
    ExpNeg { lambda: f64 },
    /// `1 / (1 + l)`.
    InverseShift,
    /// `(1 + l)^(−k)`.
    Power { k: f64 },
    /// `exp(−l²)`.
    Gaussian,
    Tabulated(TabulatedScore),
}

impl ScoringFunction {
    pub fn exp_neg(lambda: f64) -> Self {
        ScoringFunction::ExpNeg { lambda }
    }

    /// `log g(l)`, `-inf` where `g` vanishes.
    pub fn log_eval(&self, l: f64) -> f64 {
        match self {
            ScoringFunction::ExpNeg { lambda } => -lambda * l,
            ScoringFunction::InverseShift => -l.ln_1p(),
            ScoringFunction::Power { k } => -k * l.ln_1p(),
            ScoringFunction::Gaussian => -l * l,
            ScoringFunction::Tabulated(t) => t.eval(l).ln(),
        }
    }

    pub fn eval(&self, l: f64) -> f64 {
        self.log_eval(l).exp()
    }

    /// `g ≡ 1`: every score is zero.
    pub fn is_trivial(&self) -> bool {
        match self {
            ScoringFunction::ExpNeg { lambda } => *lambda == 0.0,
            ScoringFunction::Tabulated(t) => t.values.iter().all(|&v| v == t.values[0]) && t.values[0] == 1.0,
            _ => false,
        }
    }

    /// Checks parameters, then finiteness, non-negativity and monotonicity on
    /// a grid over `[0, 100]` plus a few large arguments.
    pub fn validate(&self) -> Result<()> {
        match self {
            ScoringFunction::ExpNeg { lambda } if !(*lambda >= 0.0) || !lambda.is_finite() => {
                return Err(Error::invalid(format!("exp_neg rate must be non-negative, got {lambda}")));
            }
            ScoringFunction::Power { k } if !(*k > 0.0) || !k.is_finite() => {
                return Err(Error::invalid(format!("power exponent must be positive, got {k}")));
            }
            _ => {}
        }
        let grid = (0..=10_000).map(|i| i as f64 * 0.01).chain([1e3, 1e6, 1e12]);
        let mut previous = f64::INFINITY;
        for l in grid {
            let g = self.eval(l);
            if !(g >= 0.0) || !g.is_finite() {
                return Err(Error::invalid(format!("{self} is not a finite non-negative value at l = {l}")));
            }
            if g > previous {
                return Err(Error::invalid(format!("{self} increases at l = {l}")));
            }
            previous = g;
        }
        Ok(())
    }
}

impl fmt::Display for ScoringFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoringFunction::ExpNeg { lambda } => write!(f, "exp_neg({lambda})"),
            ScoringFunction::InverseShift => write!(f, "inverse_shift"),
            ScoringFunction::Power { k } => write!(f, "power({k})"),
            ScoringFunction::Gaussian => write!(f, "gaussian"),
            ScoringFunction::Tabulated(_) => write!(f, "tabulated"),
        }
    }
}

fn normalize_log(mut log_weights: Vec<f64>) -> Result<Vec<f64>> {
    let total = log_sum_exp(&log_weights);
    if !total.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    for v in &mut log_weights {
        *v -= total;
    }
    Ok(log_weights)
}

fn update_log(model: &DiscreteGeneralModel, log_belief: &[f64], indices: &[usize]) -> Result<Vec<f64>> {
    let loss = model.summed_loss(indices);
    normalize_log(log_belief.iter().zip(&loss).map(|(lp, l)| lp - model.w * l).collect())
}

fn log_score(log_belief: &[f64], losses: &[f64], g: &ScoringFunction) -> f64 {
    let terms: Vec<f64> = log_belief.iter().zip(losses).map(|(lp, &l)| lp + g.log_eval(l)).collect();
    log_sum_exp(&terms)
}

/// Belief after observing `indices` (one batch), starting from the prior.
pub fn general_update(model: &DiscreteGeneralModel, indices: &[usize]) -> Result<Vec<f64>> {
    model.check_indices(indices)?;
    Ok(update_log(model, &model.log_prior(), indices)?.into_iter().map(f64::exp).collect())
}

/// `log Σ_θ g{l(θ, ỹ)} π(θ)`; `-inf` when every term vanishes.
pub fn log_pred_score(posterior: &[f64], losses: &[f64], g: &ScoringFunction) -> Result<f64> {
    if posterior.len() != losses.len() {
        return Err(Error::invalid(format!(
            "posterior has {} entries, losses have {}",
            posterior.len(),
            losses.len()
        )));
    }
    let log_post: Vec<f64> = posterior.iter().map(|p| p.ln()).collect();
    Ok(log_score(&log_post, losses, g))
}

/// Cumulative one-step-ahead score along `order`.
pub fn prequential_score(model: &DiscreteGeneralModel, order: &[usize], g: &ScoringFunction) -> Result<f64> {
    let batches: Vec<Vec<usize>> = order.iter().map(|&i| vec![i]).collect();
    batched_prequential_score(model, &batches, g)
}

/// Prequential score over batches: each batch is scored jointly through
/// `g(Σ_{i ∈ batch} l(θ, yᵢ))`, then absorbed into the belief.
pub fn batched_prequential_score(
    model: &DiscreteGeneralModel,
    batches: &[Vec<usize>],
    g: &ScoringFunction,
) -> Result<f64> {
    let mut belief = model.log_prior();
    let mut total = 0.0;
    for (k, batch) in batches.iter().enumerate() {
        model.check_indices(batch)?;
        total += log_score(&belief, &model.summed_loss(batch), g);
        if k + 1 < batches.len() {
            belief = update_log(model, &belief, batch)?;
        }
    }
    Ok(total)
}

/// `log Σ_θ g(Σᵢ l(θ, yᵢ)) π(θ)`: the whole data set scored as one batch.
pub fn joint_score(model: &DiscreteGeneralModel, g: &ScoringFunction) -> f64 {
    let all: Vec<usize> = (0..model.n()).collect();
    log_score(&model.log_prior(), &model.summed_loss(&all), g)
}

/// Orders compared against the identity: all of them when `n! ≤ 720`,
/// otherwise this many seeded random shuffles.
pub const SAMPLED_PERMUTATIONS: usize = 200;
const PERMUTATION_SEED: u64 = 0x5eed_0f_0dde_c0de;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n <= 6 {
        let mut out = Vec::new();
        let mut current: Vec<usize> = (0..n).collect();
        heap_permute(n, &mut current, &mut out);
        out
    } else {
        let mut rng = SeedStream::new(PERMUTATION_SEED).rng(n as u64);
        (0..SAMPLED_PERMUTATIONS)
            .map(|_| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect()
    }
}

fn heap_permute(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(a.clone());
        return;
    }
    for i in 0..k - 1 {
        heap_permute(k - 1, a, out);
        if k % 2 == 0 {
            a.swap(i, k - 1);
        } else {
            a.swap(0, k - 1);
        }
    }
    heap_permute(k - 1, a, out);
}

/// Largest of the joint-versus-chain gap and the chain's spread over
/// orderings. Zero for a coherent score.
pub fn coherence_residual(model: &DiscreteGeneralModel, g: &ScoringFunction) -> Result<f64> {
    let identity: Vec<usize> = (0..model.n()).collect();
    let chain = prequential_score(model, &identity, g)?;
    let mut residual = gap(chain, joint_score(model, g));
    for order in permutations(model.n()) {
        residual = residual.max(gap(prequential_score(model, &order, g)?, chain));
    }
    Ok(residual)
}

fn gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualQuantiles {
    pub min: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
    pub max: f64,
}

impl ResidualQuantiles {
    fn from(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
        Self { min: v[0], q05: q(0.05), median: q(0.5), q95: q(0.95), max: v[v.len() - 1] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    /// Residual below the coherence threshold in every trial.
    Coherent,
    /// Residual above the incoherence threshold in the required share of trials.
    Incoherent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: String,
    pub expectation: Expectation,
    pub trials: usize,
    /// Trials meeting the expectation.
    pub passed: usize,
    pub residuals: ResidualQuantiles,
    pub trivial: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub trials: usize,
    pub seed: u64,
    pub coherent_threshold: f64,
    pub incoherent_threshold: f64,
    pub incoherent_share: f64,
    pub families: Vec<FamilyReport>,
    pub pass: bool,
}

impl CoherenceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub const COHERENT_THRESHOLD: f64 = 1e-10;
pub const INCOHERENT_THRESHOLD: f64 = 1e-3;
pub const INCOHERENT_SHARE: f64 = 0.95;
const LOSS_SCALES: [f64; 3] = [0.5, 1.0, 2.0];

/// Random instance: `2 ≤ m ≤ 5`, `2 ≤ n ≤ 4`, losses `U[0, 5]`, flat
/// Dirichlet prior, `w` from {0.5, 1, 2}.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R) -> DiscreteGeneralModel {
    let m = rng.random_range(2..=5);
    let n = rng.random_range(2..=4);
    let loss = DMatrix::from_fn(m, n, |_, _| rng.random_range(0.0..5.0));
    let raw: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    let mut prior: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let drift = 1.0 - prior.iter().sum::<f64>();
    prior[0] += drift;
    let w = LOSS_SCALES[rng.random_range(0..LOSS_SCALES.len())];
    DiscreteGeneralModel::new(loss, prior, w).expect("random instance is valid")
}

enum Family {
    Matched,
    Mismatched,
    Constant,
    Fixed(ScoringFunction),
}

impl Family {
    fn scoring(&self, w: f64) -> ScoringFunction {
        match self {
            Family::Matched => ScoringFunction::exp_neg(w),
            Family::Mismatched => ScoringFunction::exp_neg(2.0 * w),
            Family::Constant => ScoringFunction::exp_neg(0.0),
            Family::Fixed(g) => g.clone(),
        }
    }

    fn label(&self) -> String {
        match self {
            Family::Matched => "exp_neg(w)".into(),
            Family::Mismatched => "exp_neg(2w)".into(),
            Family::Constant => "exp_neg(0)".into(),
            Family::Fixed(g) => g.to_string(),
        }
    }
}

/// Scores the matched exponential, the constant `g ≡ 1`, a mismatched
/// exponential and the inverse-shift, power(2) and Gaussian families on
/// `trials` random instances.
pub fn verify_coherence(trials: usize, seed: u64) -> Result<CoherenceReport> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let families = [
        (Family::Matched, Expectation::Coherent),
        (Family::Constant, Expectation::Coherent),
        (Family::Mismatched, Expectation::Incoherent),
        (Family::Fixed(ScoringFunction::InverseShift), Expectation::Incoherent),
        (Family::Fixed(ScoringFunction::Power { k: 2.0 }), Expectation::Incoherent),
        (Family::Fixed(ScoringFunction::Gaussian), Expectation::Incoherent),
    ];
    let stream = SeedStream::new(seed);
    let residuals: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let model = random_instance(&mut stream.rng(t as u64));
            families
                .iter()
                .map(|(family, _)| coherence_residual(&model, &family.scoring(model.w())))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let reports: Vec<FamilyReport> = families
        .iter()
        .enumerate()
        .map(|(k, (family, expectation))| {
            let values: Vec<f64> = residuals.iter().map(|r| r[k]).collect();
            let (passed, pass) = match expectation {
                Expectation::Coherent => {
                    let passed = values.iter().filter(|&&r| r < COHERENT_THRESHOLD).count();
                    (passed, passed == trials)
                }
                Expectation::Incoherent => {
                    let passed = values.iter().filter(|&&r| r > INCOHERENT_THRESHOLD).count();
                    (passed, passed as f64 >= INCOHERENT_SHARE * trials as f64)
                }
            };
            FamilyReport {
                family: family.label(),
                expectation: *expectation,
                trials,
                passed,
                residuals: ResidualQuantiles::from(&values),
                trivial: family.scoring(1.0).is_trivial(),
                pass,
            }
        })
        .collect();
    let pass = reports.iter().all(|r| r.pass);
    Ok(CoherenceReport {
        trials,
        seed,
        coherent_threshold: COHERENT_THRESHOLD,
        incoherent_threshold: INCOHERENT_THRESHOLD,
        incoherent_share: INCOHERENT_SHARE,
        families: reports,
        pass,
    })
}
