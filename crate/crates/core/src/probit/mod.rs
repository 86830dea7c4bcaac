//! Probit regression under a g-prior `θ ~ N(0, g (XᵀX)⁻¹)`.
//!
//! Rows are stored in a canonical order (sorted by covariates, then
//! response), so every estimate is independent of the order of the input rows.

mod gibbs;
pub mod normal;

use std::cmp::Ordering;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exact::IndexedModel;
use crate::mc::{estimate_ccv_with, McEstimate, McOptions, SplitScorer};
use crate::numerics::{log_mean_exp, pairwise_sum};
use crate::seed::rng_from_seed;
use crate::splits::Split;

pub use gibbs::{gibbs_posterior, write_chain_csv, GibbsChain};
use normal::{inverse_mills, log_cdf, LN_SQRT_2PI};

/// Importance-sampling estimates with fewer effective draws are flagged.
pub const LOW_ESS: f64 = 10.0;
pub const MAX_NEWTON_ITERATIONS: usize = 100;
pub const DIVERGENCE_BOUND: f64 = 1e3;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;

/// Column means and population standard deviations used to standardize a design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    /// Moments are summed over sorted values, so they do not depend on row order.
    pub fn fit(x: &DMatrix<f64>, names: &[String]) -> Result<Self> {
        let n = x.nrows() as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut sds = Vec::with_capacity(x.ncols());
        for j in 0..x.ncols() {
            let mut col: Vec<f64> = x.column(j).iter().copied().collect();
            col.sort_by(f64::total_cmp);
            let mean = pairwise_sum(&col) / n;
            let mut sq: Vec<f64> = col.iter().map(|v| (v - mean) * (v - mean)).collect();
            sq.sort_by(f64::total_cmp);
            let sd = (pairwise_sum(&sq) / n).sqrt();
            if !(sd > 1e-12 * mean.abs().max(1.0)) {
                let column = names.get(j).cloned().unwrap_or_else(|| format!("#{j}"));
                return Err(Error::DegenerateCovariate { column });
            }
            means.push(mean);
            sds.push(sd);
        }
        Ok(Self { names: names.to_vec(), means, sds })
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.means[j]) / self.sds[j])
    }
}

/// Standardizes every column to mean 0 and variance 1 (divisor n).
pub fn standardize(x: &DMatrix<f64>, names: &[String]) -> Result<(DMatrix<f64>, Standardizer)> {
    let s = Standardizer::fit(x, names)?;
    Ok((s.apply(x), s))
}

/// Binary response with a design whose first column is the intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbitData {
    y: Vec<f64>,
    x: DMatrix<f64>,
    names: Vec<String>,
    standardized: bool,
}

impl ProbitData {
    /// `names` label the non-intercept columns.
    pub fn new(y: Vec<f64>, x: DMatrix<f64>, names: Vec<String>, standardized: bool) -> Result<Self> {
        if y.is_empty() || x.nrows() != y.len() {
            return Err(Error::invalid(format!("design has {} rows for {} responses", x.nrows(), y.len())));
        }
        if x.ncols() == 0 || x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::invalid("first design column must be all ones"));
        }
        if names.len() + 1 != x.ncols() {
            return Err(Error::invalid("need one name per non-intercept column"));
        }
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("probit responses must be 0 or 1"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design entries must be finite"));
        }
        if standardized {
            let n = x.nrows() as f64;
            for j in 1..x.ncols() {
                let mean = x.column(j).sum() / n;
                let var = x.column(j).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                if mean.abs() > 1e-8 || (var - 1.0).abs() > 1e-8 {
                    return Err(Error::invalid(format!("column `{}` is not standardized", names[j - 1])));
                }
            }
        }
        Ok(Self { y, x, names, standardized })
    }

    pub fn intercept_only(y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(y, DMatrix::from_element(n, 1, 1.0), Vec::new(), false)
    }

    /// Standardizes the named covariates of `dataset` and prepends an intercept.
    pub fn from_dataset(dataset: &Dataset, columns: &[&str]) -> Result<(Self, Standardizer)> {
        dataset.require_binary()?;
        let selected = dataset.select(columns)?;
        let n = dataset.len();
        let names: Vec<String> = columns.iter().map(|s| s.to_string()).collect();
        let (z, standardizer) = match selected.x() {
            Some(raw) => standardize(raw, &names)?,
            None => (DMatrix::zeros(n, 0), Standardizer { names: Vec::new(), means: Vec::new(), sds: Vec::new() }),
        };
        let x = DMatrix::from_fn(n, z.ncols() + 1, |i, j| if j == 0 { 1.0 } else { z[(i, j - 1)] });
        Ok((Self::new(dataset.y().to_vec(), x, names, true)?, standardizer))
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// `"intercept"` followed by the covariate names.
    pub fn parameter_names(&self) -> Vec<String> {
        std::iter::once("intercept".to_string()).chain(self.names.iter().cloned()).collect()
    }
}

fn point_log_lik(eta: f64, y: f64) -> f64 {
    if y == 1.0 {
        log_cdf(eta)
    } else {
        log_cdf(-eta)
    }
}

/// `Σᵢ yᵢ log Φ(ηᵢ) + (1 − yᵢ) log Φ(−ηᵢ)` with `η = Xθ`.
pub fn log_likelihood(theta: &DVector<f64>, data: &ProbitData) -> f64 {
    let eta = &data.x * theta;
    eta.iter().zip(&data.y).map(|(&e, &y)| point_log_lik(e, y)).sum()
}

fn score_and_information(theta: &DVector<f64>, x: &DMatrix<f64>, y: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
    let d = x.ncols();
    let eta = x * theta;
    let mut ll = 0.0;
    let mut grad = DVector::zeros(d);
    let mut info = DMatrix::zeros(d, d);
    for i in 0..y.len() {
        let (s, e) = if y[i] == 1.0 { (1.0, eta[i]) } else { (-1.0, -eta[i]) };
        ll += log_cdf(e);
        let lambda = inverse_mills(e);
        let row = x.row(i).transpose();
        grad.axpy(s * lambda, &row, 1.0);
        info.ger(lambda * (e + lambda), &row, &row, 1.0);
    }
    (ll, grad, info)
}

/// Maximum-likelihood fit with the inverse observed information as covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct MleFit {
    pub theta: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub log_likelihood: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
}

/// Newton–Raphson with step halving. Fails with [`Error::Separation`] when
/// the response is constant, the iterate leaves the ball of radius 10³, or
/// 100 iterations pass without convergence.
pub fn fit_mle(data: &ProbitData) -> Result<MleFit> {
    fit_rows(&data.x, &data.y)
}

fn fit_rows(x: &DMatrix<f64>, y: &[f64]) -> Result<MleFit> {
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::Separation("all responses are equal".into()));
    }
    let mut theta = DVector::zeros(x.ncols());
    let (mut ll, mut grad, mut info) = score_and_information(&theta, x, y);
    for iteration in 0..=MAX_NEWTON_ITERATIONS {
        let chol = Cholesky::new(info.clone())
            .ok_or_else(|| Error::Separation("observed information is not positive definite".into()))?;
        let step = chol.solve(&grad);
        // Under separation the gradient vanishes while Newton steps keep growing.
        if grad.norm() < GRADIENT_TOLERANCE && step.norm() < 1e-6 * (1.0 + theta.norm()) {
            return Ok(MleFit {
                covariance: chol.inverse(),
                gradient_norm: grad.norm(),
                log_likelihood: ll,
                theta,
                iterations: iteration,
            });
        }
        if iteration == MAX_NEWTON_ITERATIONS {
            break;
        }
        let mut t = 1.0;
        loop {
            let candidate = &theta + &step * t;
            let (c_ll, c_grad, c_info) = score_and_information(&candidate, x, y);
            if c_ll >= ll - 1e-12 * ll.abs().max(1.0) || t < 1e-10 {
                theta = candidate;
                ll = c_ll;
                grad = c_grad;
                info = c_info;
                break;
            }
            t *= 0.5;
        }
        if theta.norm() > DIVERGENCE_BOUND {
            return Err(Error::Separation(format!("coefficient norm exceeded {DIVERGENCE_BOUND}")));
        }
    }
    Err(Error::Separation(format!("no convergence in {MAX_NEWTON_ITERATIONS} Newton iterations")))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GPrior {
    pub g: f64,
}

impl GPrior {
    pub fn new(g: f64) -> Result<Self> {
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::invalid(format!("g must be positive and finite, got {g}")));
        }
        Ok(Self { g })
    }
}

/// Importance-sampling proposal family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Proposal {
    /// `N(θ̂, Σ̂)` from the full-data fit, widened by `n / |train|` for partial posteriors.
    #[default]
    Mle,
    /// Mixture of the above (weight `1 − prior_weight`) and the prior. The
    /// first `prior_weight · S` draws come from the prior, the rest from the
    /// Gaussian component; weights use the mixture density.
    Defensive { prior_weight: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsEstimate {
    pub value: f64,
    pub effective_sample_size: f64,
    pub samples: usize,
    pub low_ess: bool,
}

impl IsEstimate {
    fn from_weights(value: f64, log_weights: &[f64]) -> Self {
        let ess = effective_sample_size(log_weights);
        Self { value, effective_sample_size: ess, samples: log_weights.len(), low_ess: ess < LOW_ESS }
    }
}

/// `(Σ wᵢ)² / Σ wᵢ²` from log weights.
pub fn effective_sample_size(log_weights: &[f64]) -> f64 {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return 0.0;
    }
    let w: Vec<f64> = log_weights.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    s * s / s2
}

/// Probit model with a fixed g-prior elicited from the full standardized design.
#[derive(Clone, Debug)]
pub struct ProbitModel {
    y: Vec<f64>,
    x: DMatrix<f64>,
    names: Vec<String>,
    /// `canonical[original row]`.
    canonical: Vec<usize>,
    prior: GPrior,
    gram: DMatrix<f64>,
    gram_chol: Cholesky<f64, Dyn>,
    prior_log_norm: f64,
    fit: std::result::Result<MleFit, String>,
    proposal: Proposal,
}

impl ProbitModel {
    pub fn new(data: &ProbitData, prior: GPrior) -> Result<Self> {
        let n = data.n();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| compare_rows(data, a, b));
        let mut canonical = vec![0; n];
        for (k, &i) in order.iter().enumerate() {
            canonical[i] = k;
        }
        let x = DMatrix::from_fn(n, data.dim(), |k, j| data.x[(order[k], j)]);
        let y: Vec<f64> = order.iter().map(|&i| data.y[i]).collect();
        let gram = x.transpose() * &x;
        let gram_chol = Cholesky::new(gram.clone())
            .ok_or_else(|| Error::NumericalDegeneracy("XᵀX is singular; the g-prior is improper".into()))?;
        let d = data.dim() as f64;
        let log_det_gram: f64 = 2.0 * gram_chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let prior_log_norm = -d * LN_SQRT_2PI + 0.5 * log_det_gram - 0.5 * d * prior.g.ln();
        let fit = fit_rows(&x, &y).map_err(|e| e.to_string());
        Ok(Self {
            y,
            x,
            names: data.parameter_names(),
            canonical,
            prior,
            gram,
            gram_chol,
            prior_log_norm,
            fit,
            proposal: Proposal::Mle,
        })
    }

    pub fn with_proposal(mut self, proposal: Proposal) -> Self {
        self.proposal = proposal;
        self
    }

    pub fn prior(&self) -> GPrior {
        self.prior
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.names
    }

    pub fn mle(&self) -> Result<&MleFit> {
        self.fit.as_ref().map_err(|e| Error::Separation(e.clone()))
    }

    /// `g (XᵀX)⁻¹`.
    pub fn prior_covariance(&self) -> DMatrix<f64> {
        self.gram_chol.inverse() * self.prior.g
    }

    pub fn log_prior(&self, theta: &DVector<f64>) -> f64 {
        self.prior_log_norm - 0.5 * (theta.transpose() * &self.gram * theta)[(0, 0)] / self.prior.g
    }

    pub(crate) fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub(crate) fn canonical_x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub(crate) fn canonical_y(&self) -> &[f64] {
        &self.y
    }

    /// Canonical positions of original rows, ascending.
    fn canonical_rows(&self, rows: &[usize]) -> Result<Vec<usize>> {
        let n = self.y.len();
        let mut out = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= n {
                return Err(Error::invalid(format!("row {r} out of range for n = {n}")));
            }
            out.push(self.canonical[r]);
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Log likelihood of original rows `rows`.
    pub fn log_likelihood_rows(&self, theta: &DVector<f64>, rows: &[usize]) -> Result<f64> {
        let rows = self.canonical_rows(rows)?;
        Ok(rows.iter().map(|&k| point_log_lik((self.x.row(k) * theta)[0], self.y[k])).sum())
    }

    /// Proposal draws as columns, with their log proposal densities. The
    /// Gaussian component is the full-data fit with covariance times `scale`.
    fn proposal_draws(&self, scale: f64, samples: usize, seed: u64) -> Result<(DMatrix<f64>, Vec<f64>)> {
        if samples == 0 {
            return Err(Error::invalid("need at least one importance sample"));
        }
        let fit = self.mle()?;
        let d = self.dim();
        let l = Cholesky::new(&fit.covariance * scale)
            .ok_or_else(|| Error::NumericalDegeneracy("proposal covariance is not positive definite".into()))?
            .l();
        let log_norm = -(l.diagonal().iter().map(|v| v.ln()).sum::<f64>()) - d as f64 * LN_SQRT_2PI;
        let from_prior = match self.proposal {
            Proposal::Defensive { prior_weight } if !(prior_weight > 0.0 && prior_weight < 1.0) => {
                return Err(Error::invalid(format!("defensive prior weight must lie in (0, 1), got {prior_weight}")));
            }
            Proposal::Defensive { prior_weight } => (prior_weight * samples as f64).round() as usize,
            Proposal::Mle => 0,
        };
        let mut rng = rng_from_seed(seed);
        let mut thetas = DMatrix::zeros(d, samples);
        let mut log_q = Vec::with_capacity(samples);
        for s in 0..samples {
            let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            match self.proposal {
                Proposal::Mle => {
                    thetas.set_column(s, &(&fit.theta + &l * &z));
                    log_q.push(log_norm - 0.5 * z.norm_squared());
                }
                Proposal::Defensive { prior_weight } => {
                    let theta = if s < from_prior {
                        let w = self.gram_chol.l().tr_solve_lower_triangular(&z).expect("triangular factor");
                        w * self.prior.g.sqrt()
                    } else {
                        &fit.theta + &l * &z
                    };
                    let r = l.solve_lower_triangular(&(&theta - &fit.theta)).expect("triangular factor");
                    let gauss = (1.0 - prior_weight).ln() + log_norm - 0.5 * r.norm_squared();
                    let prior = prior_weight.ln() + self.log_prior(&theta);
                    log_q.push(crate::numerics::log_sum_exp(&[gauss, prior]));
                    thetas.set_column(s, &theta);
                }
            }
        }
        Ok((thetas, log_q))
    }

    /// Per-draw `log π(θ) + log f_θ(y_train) − log q(θ)` and `log f_θ(y_test)`.
    fn weighted_draws(
        &self,
        train: &[usize],
        test: &[usize],
        scale: f64,
        samples: usize,
        seed: u64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let (thetas, log_q) = self.proposal_draws(scale, samples, seed)?;
        let eta = &self.x * &thetas;
        let block = |s: usize, rows: &[usize]| -> f64 {
            rows.iter().map(|&k| point_log_lik(eta[(k, s)], self.y[k])).sum()
        };
        let mut log_w = Vec::with_capacity(samples);
        let mut log_test = Vec::with_capacity(samples);
        for s in 0..samples {
            let theta = thetas.column(s).into_owned();
            log_w.push(self.log_prior(&theta) + block(s, train) - log_q[s]);
            log_test.push(block(s, test));
        }
        Ok((log_w, log_test))
    }

    /// Importance-sampling estimate of `log p(y)`.
    pub fn is_log_marginal(&self, samples: usize, seed: u64) -> Result<IsEstimate> {
        let all: Vec<usize> = (0..self.y.len()).collect();
        let (log_w, _) = self.weighted_draws(&all, &[], 1.0, samples, seed)?;
        Ok(IsEstimate::from_weights(log_mean_exp(&log_w), &log_w))
    }

    /// `log Ẑ(train ∪ test) − log Ẑ(train)` from one set of draws whose
    /// Gaussian component is widened by `n / |train|`. The effective sample
    /// size refers to the training-set weights.
    pub fn is_log_block_predictive(&self, train: &[usize], test: &[usize], samples: usize, seed: u64) -> Result<IsEstimate> {
        if train.is_empty() {
            return Err(Error::invalid("training block is empty"));
        }
        if samples == 0 {
            return Err(Error::invalid("need at least one importance sample"));
        }
        if test.is_empty() {
            return Ok(IsEstimate { value: 0.0, effective_sample_size: samples as f64, samples, low_ess: false });
        }
        let train = self.canonical_rows(train)?;
        let test = self.canonical_rows(test)?;
        let scale = self.y.len() as f64 / train.len() as f64;
        let (log_w, log_test) = self.weighted_draws(&train, &test, scale, samples, seed)?;
        let joint: Vec<f64> = log_w.iter().zip(&log_test).map(|(a, b)| a + b).collect();
        Ok(IsEstimate::from_weights(log_mean_exp(&joint) - log_mean_exp(&log_w), &log_w))
    }
}

impl IndexedModel for ProbitModel {
    fn n(&self) -> usize {
        self.y.len()
    }
}

/// Block predictive scorer for the split estimators.
pub struct ImportanceScorer<'a> {
    pub model: &'a ProbitModel,
    pub samples: usize,
}

impl IndexedModel for ImportanceScorer<'_> {
    fn n(&self) -> usize {
        self.model.n()
    }
}

impl SplitScorer for ImportanceScorer<'_> {
    fn score_split(&self, split: &Split, seed: u64) -> Result<f64> {
        Ok(self.model.is_log_block_predictive(&split.train, &split.test, self.samples, seed)?.value)
    }
}

/// Split-averaged importance-sampling estimate of `S_CCV(y; P)`.
pub fn ccv_probit(model: &ProbitModel, cut: usize, samples: usize, opts: &McOptions) -> Result<McEstimate> {
    let mut est = estimate_ccv_with(&ImportanceScorer { model, samples }, cut, opts)?;
    est.draws = samples;
    Ok(est)
}

fn compare_rows(data: &ProbitData, a: usize, b: usize) -> Ordering {
    for j in 0..data.dim() {
        match data.x[(a, j)].total_cmp(&data.x[(b, j)]) {
            Ordering::Equal => {}
            other => return other,
        }
    }
    data.y[a].total_cmp(&data.y[b])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::McOptions;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `y = 1{θ₀ + θ₁ x + ε > 0}` with standardized `x ~ N(0, 1)`.
    pub(crate) fn toy(n: usize, theta: (f64, f64), seed: u64) -> ProbitData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| {
                let e: f64 = rng.sample(StandardNormal);
                if theta.0 + theta.1 * v + e > 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let ds = Dataset::with_names(y, Some(DMatrix::from_column_slice(n, 1, &x)), vec!["x".into()]).unwrap();
        ProbitData::from_dataset(&ds, &["x"]).unwrap().0
    }

    fn balanced(n: usize) -> ProbitData {
        ProbitData::intercept_only((0..n).map(|i| (i % 2) as f64).collect()).unwrap()
    }

    #[test]
    fn standardize_examples() {
        let names = vec!["a".to_string()];
        let (z, s) = standardize(&DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]), &names).unwrap();
        assert_abs_diff_eq!(z[(0, 0)], -1.224_745, epsilon = 1e-6);
        assert_eq!(z[(1, 0)], 0.0);
        assert_abs_diff_eq!(z[(2, 0)], 1.224_745, epsilon = 1e-6);
        assert_eq!(s.means, vec![2.0]);
        let (again, _) = standardize(&z, &names).unwrap();
        for (a, b) in again.iter().zip(z.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let err = standardize(&DMatrix::from_element(4, 1, 7.0), &names).unwrap_err();
        assert!(matches!(err, Error::DegenerateCovariate { ref column } if column == "a"));
    }

    #[test]
    fn data_validation() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 1.0, -0.5]);
        assert!(ProbitData::new(vec![0.0, 2.0], x.clone(), vec!["a".into()], false).is_err());
        assert!(ProbitData::new(vec![0.0, 1.0], x.clone(), vec![], false).is_err());
        assert!(ProbitData::new(vec![0.0, 1.0], x.clone(), vec!["a".into()], true).is_err());
        let no_intercept = DMatrix::from_row_slice(2, 1, &[2.0, 1.0]);
        assert!(ProbitData::new(vec![0.0, 1.0], no_intercept, vec![], false).is_err());
        let ok = ProbitData::new(vec![0.0, 1.0], DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]), vec!["a".into()], true);
        assert!(ok.unwrap().is_standardized());
    }

    #[test]
    fn likelihood_examples() {
        let data = toy(15, (0.2, 1.0), 1);
        assert_abs_diff_eq!(log_likelihood(&DVector::zeros(2), &data), 15.0 * 0.5f64.ln(), epsilon = 1e-12);
        let one = ProbitData::intercept_only(vec![1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(log_likelihood(&DVector::from_element(1, 0.0), &one), 2.0 * -0.693_147_180_559_945_3, epsilon = 1e-15);
        let single = ProbitData::intercept_only(vec![1.0]).unwrap();
        let far = log_likelihood(&DVector::from_element(1, -40.0), &single);
        assert!(far.is_finite());
        // Mills-ratio tail: log Φ(−40) ≈ −800 − log 40 − log √(2π) + log(1 − r + 3r² − 15r³), r = 1/1600
        let r: f64 = 1.0 / 1600.0;
        let series = 1.0 - r + 3.0 * r * r - 15.0 * r * r * r;
        assert_abs_diff_eq!(far, -800.0 - 40f64.ln() - LN_SQRT_2PI + series.ln(), epsilon = 1e-10);
        for k in -100..=100 {
            let v = log_likelihood(&DVector::from_element(1, k as f64), &one);
            assert!(v.is_finite());
        }
    }

    #[test]
    fn mle_examples() {
        let fit = fit_mle(&balanced(40)).unwrap();
        assert_abs_diff_eq!(fit.theta[0], 0.0, epsilon = 1e-10);
        let y: Vec<f64> = (0..40).map(|i| if i % 4 == 0 { 0.0 } else { 1.0 }).collect();
        let fit = fit_mle(&ProbitData::intercept_only(y).unwrap()).unwrap();
        assert_abs_diff_eq!(fit.theta[0], 0.674_490, epsilon = 1e-6);
        assert!(fit.gradient_norm < GRADIENT_TOLERANCE);
        assert!(matches!(fit_mle(&ProbitData::intercept_only(vec![1.0; 10]).unwrap()), Err(Error::Separation(_))));

        let x = DMatrix::from_fn(10, 2, |i, j| if j == 0 { 1.0 } else { i as f64 - 4.5 });
        let y: Vec<f64> = (0..10).map(|i| if i >= 5 { 1.0 } else { 0.0 }).collect();
        let separated = ProbitData::new(y, x, vec!["x".into()], false).unwrap();
        assert!(matches!(fit_mle(&separated), Err(Error::Separation(_))));
    }

    #[test]
    fn mle_is_stationary_with_positive_information() {
        for seed in 0..5 {
            let data = toy(60, (-0.3, 0.8), seed);
            let fit = fit_mle(&data).unwrap();
            let (_, grad, info) = score_and_information(&fit.theta, &data.x, &data.y);
            assert!(grad.norm() < GRADIENT_TOLERANCE);
            assert!(Cholesky::new(info).is_some());
        }
    }

    #[test]
    fn single_draw_estimate() {
        let model = ProbitModel::new(&toy(20, (0.0, 1.0), 2), GPrior::new(20.0).unwrap()).unwrap();
        let est = model.is_log_marginal(1, 4).unwrap();
        assert_eq!(est.samples, 1);
        assert_eq!(est.effective_sample_size, 1.0);
        assert!(est.low_ess);
        let fit = model.mle().unwrap();
        let l = Cholesky::new(fit.covariance.clone()).unwrap().l();
        let mut rng = rng_from_seed(4);
        let z = DVector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
        let theta = &fit.theta + &l * &z;
        let log_q = -l.diagonal().iter().map(|v| v.ln()).sum::<f64>() - 2.0 * LN_SQRT_2PI - 0.5 * z.norm_squared();
        let all: Vec<usize> = (0..20).collect();
        let direct = model.log_prior(&theta) + model.log_likelihood_rows(&theta, &all).unwrap() - log_q;
        assert_abs_diff_eq!(est.value, direct, epsilon = 1e-10);
    }

    #[test]
    fn collapsed_prior_limit() {
        let data = toy(20, (0.1, 0.5), 5);
        let prior = GPrior::new(1e-6).unwrap();
        let target = 20.0 * 0.5f64.ln();
        let plain = ProbitModel::new(&data, prior).unwrap().is_log_marginal(10_000, 1).unwrap();
        assert!(plain.low_ess, "{plain:?}");
        let defensive = ProbitModel::new(&data, prior)
            .unwrap()
            .with_proposal(Proposal::Defensive { prior_weight: 0.1 })
            .is_log_marginal(10_000, 1)
            .unwrap();
        assert!(!defensive.low_ess);
        assert_abs_diff_eq!(defensive.value, target, epsilon = 0.01);
    }

    #[test]
    fn defensive_and_plain_agree_for_moderate_prior() {
        let data = toy(20, (0.1, 1.0), 6);
        let prior = GPrior::new(20.0).unwrap();
        let plain = ProbitModel::new(&data, prior).unwrap().is_log_marginal(20_000, 3).unwrap();
        let mixed = ProbitModel::new(&data, prior)
            .unwrap()
            .with_proposal(Proposal::Defensive { prior_weight: 0.2 })
            .is_log_marginal(20_000, 3)
            .unwrap();
        assert!((plain.value - mixed.value).abs() < 0.02);
    }

    #[test]
    fn row_permutation_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 30;
        let x: Vec<f64> = (0..2 * n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..n).map(|i| if x[i] + rng.sample::<f64, _>(StandardNormal) > 0.0 { 1.0 } else { 0.0 }).collect();
        let ds = Dataset::with_names(y, Some(DMatrix::from_column_slice(n, 2, &x)), vec!["a".into(), "b".into()]).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.reverse();
        order.swap(3, 17);
        let permuted = ds.permuted(&order).unwrap();
        let value = |d: &Dataset| {
            let data = ProbitData::from_dataset(d, &["a", "b"]).unwrap().0;
            ProbitModel::new(&data, GPrior::new(n as f64).unwrap()).unwrap().is_log_marginal(500, 77).unwrap()
        };
        let a = value(&ds);
        let b = value(&permuted);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.effective_sample_size.to_bits(), b.effective_sample_size.to_bits());
    }

    #[test]
    fn prior_predictive_variance_is_linear_in_g() {
        let data = toy(25, (0.0, 1.0), 10);
        let xrow = DVector::from_vec(vec![1.0, 0.7]);
        let var = |g: f64| {
            let m = ProbitModel::new(&data, GPrior::new(g).unwrap()).unwrap();
            (xrow.transpose() * m.prior_covariance() * &xrow)[(0, 0)]
        };
        let slope = var(1.0);
        for g in [0.5, 2.0, 25.0, 250.0] {
            assert_abs_diff_eq!(var(g), slope * g, epsilon = 1e-12 * g * slope);
        }
        assert!(GPrior::new(0.0).is_err());
        assert!(GPrior::new(f64::INFINITY).is_err());
    }

    #[test]
    fn block_predictive_basics() {
        let data = toy(20, (0.2, 1.0), 11);
        let model = ProbitModel::new(&data, GPrior::new(20.0).unwrap()).unwrap();
        let train: Vec<usize> = (0..10).collect();
        let empty = model.is_log_block_predictive(&train, &[], 100, 1).unwrap();
        assert_eq!(empty.value, 0.0);
        assert!(model.is_log_block_predictive(&[], &[1], 100, 1).is_err());

        // Chain rule: p(t₁ ∪ t₂ | train) = p(t₁ | train) p(t₂ | train ∪ t₁).
        let (t1, t2): (Vec<usize>, Vec<usize>) = ((10..14).collect(), (14..20).collect());
        let joint = model.is_log_block_predictive(&train, &(10..20).collect::<Vec<_>>(), 20_000, 2).unwrap();
        let first = model.is_log_block_predictive(&train, &t1, 20_000, 3).unwrap();
        let train2: Vec<usize> = (0..14).collect();
        let second = model.is_log_block_predictive(&train2, &t2, 20_000, 4).unwrap();
        assert!((joint.value - first.value - second.value).abs() < 0.05);
    }

    #[test]
    fn single_split_ccv_is_one_block_predictive() {
        let data = toy(12, (0.0, 1.0), 12);
        let model = ProbitModel::new(&data, GPrior::new(12.0).unwrap()).unwrap();
        let opts = McOptions::new(1, 5);
        let est = ccv_probit(&model, 3, 200, &opts).unwrap();
        let stream = crate::seed::SeedStream::new(5);
        let split = crate::splits::sample_split_with(&mut stream.rng(0), 12, 3).unwrap();
        let direct = model.is_log_block_predictive(&split.train, &split.test, 200, stream.task_seed(0)).unwrap();
        assert_eq!(est.value, direct.value);
        assert_eq!(est.draws, 200);
        assert_eq!(est.splits, 1);
    }

    /// Batch-means standard error.
    fn mc_error(values: &[f64]) -> f64 {
        let batches = 20;
        let size = values.len() / batches;
        let means: Vec<f64> = (0..batches).map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
        crate::numerics::sample_sd(&means).unwrap() / (batches as f64).sqrt()
    }

    #[test]
    fn gibbs_symmetric_intercept() {
        let model = ProbitModel::new(&balanced(50), GPrior::new(50.0).unwrap()).unwrap();
        let chain = gibbs_posterior(&model, 6_000, 1_000, 13).unwrap();
        assert_eq!(chain.len(), 5_000);
        let c = chain.column(0);
        assert!(chain.mean(0).abs() < 3.0 * mc_error(&c), "{} vs {}", chain.mean(0), mc_error(&c));
        assert!(gibbs_posterior(&model, 10, 10, 1).is_err());
    }

    #[test]
    fn gibbs_spread_matches_asymptotic_sd() {
        let data = toy(200, (0.3, 0.8), 14);
        let model = ProbitModel::new(&data, GPrior::new(200.0).unwrap()).unwrap();
        let chain = gibbs_posterior(&model, 5_000, 500, 15).unwrap();
        let fit = model.mle().unwrap();
        for j in 0..2 {
            let asymptotic = fit.covariance[(j, j)].sqrt();
            let ratio = chain.sd(j) / asymptotic;
            assert!((0.75..1.25).contains(&ratio), "parameter {j}: ratio {ratio}");
        }
    }

    #[test]
    fn gibbs_posterior_mean_is_prior_robust() {
        let data = toy(200, (0.2, 1.5), 16);
        let run = |g: f64| {
            let model = ProbitModel::new(&data, GPrior::new(g).unwrap()).unwrap();
            gibbs_posterior(&model, 6_000, 1_000, 17).unwrap()
        };
        let a = run(200.0);
        let b = run(2_000.0);
        for j in 0..2 {
            assert!((a.mean(j) - b.mean(j)).abs() < 0.05);
        }
    }

    #[test]
    fn chain_csv_export() {
        let model = ProbitModel::new(&toy(30, (0.0, 1.0), 18), GPrior::new(30.0).unwrap()).unwrap();
        let chain = gibbs_posterior(&model, 20, 10, 1).unwrap();
        let mut out = Vec::new();
        write_chain_csv(&chain, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iteration,intercept,x");
        assert_eq!(lines.count(), 10);
    }
}
