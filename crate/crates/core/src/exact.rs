//! Exhaustive-enumeration scores for models with exact (block) log
//! posterior predictives.
//!
//! Each quantity is available in two algebraically equivalent forms: a sum of
//! leave-p-out scores built from single-point predictives, and an average of
//! subset log evidences or block predictives. Both are computed and the
//! residual is returned, so the identities are checked rather than assumed.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{binomial, pairwise_mean, sig6, CompensatedSum};
use crate::splits::{check_enumeration, Combinations, Split};

/// Tolerance for the exact identities in double precision.
pub const IDENTITY_TOLERANCE: f64 = 1e-8;

/// Largest n for which [`decompose_marginal`] memoizes all 2ⁿ subset evidences.
pub const MAX_DECOMPOSITION_N: usize = 20;

/// A model bound to `n` exchangeable observations addressed by index.
pub trait IndexedModel {
    fn n(&self) -> usize;
}

impl<M: IndexedModel + ?Sized> IndexedModel for &M {
    fn n(&self) -> usize {
        (**self).n()
    }
}

/// A model addressable by data indices with exact predictive densities.
///
/// `log_block_predictive(&[], s)` must equal `log_marginal(s)`: with no
/// training data the predictive is the prior predictive.
pub trait ExactPredictiveModel: IndexedModel + Sync {
    /// Log evidence of the rows in `subset`; zero for the empty set.
    fn log_marginal(&self, subset: &[usize]) -> Result<f64>;

    /// Joint log predictive of `test` given `train`.
    fn log_block_predictive(&self, train: &[usize], test: &[usize]) -> Result<f64>;

    /// Log predictive of each test point on its own given `train`.
    fn log_pointwise_predictive(&self, train: &[usize], test: &[usize]) -> Result<Vec<f64>> {
        test.iter().map(|&j| self.log_block_predictive(train, &[j])).collect()
    }
}

impl<M: ExactPredictiveModel + ?Sized> ExactPredictiveModel for &M {
    fn log_marginal(&self, subset: &[usize]) -> Result<f64> {
        (**self).log_marginal(subset)
    }
    fn log_block_predictive(&self, train: &[usize], test: &[usize]) -> Result<f64> {
        (**self).log_block_predictive(train, test)
    }
    fn log_pointwise_predictive(&self, train: &[usize], test: &[usize]) -> Result<Vec<f64>> {
        (**self).log_pointwise_predictive(train, test)
    }
}

/// Per-p leave-p-out scores with the cumulative and preparatory sums.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreDecomposition {
    pub n: usize,
    /// `S_CV(y; p)` for `p = 1..=n`.
    pub per_p: BTreeMap<usize, f64>,
    pub log_marginal: f64,
    /// `S_CCV(y; P) = Σ_{p ≤ P} S_CV(y; p)` for `1 ≤ P < n`.
    pub ccv: BTreeMap<usize, f64>,
    /// `S_PCV(y; P) = Σ_{p > P} S_CV(y; p)` for `1 ≤ P < n`.
    pub pcv: BTreeMap<usize, f64>,
    /// `|Σ_p S_CV(y; p) − log p(y)|`.
    pub identity_residual: f64,
}

impl ScoreDecomposition {
    fn from_per_p(n: usize, per_p: BTreeMap<usize, f64>, log_marginal: f64) -> Self {
        let mut ccv = BTreeMap::new();
        let mut pcv = BTreeMap::new();
        for cut in 1..n {
            let mut low = CompensatedSum::new();
            let mut high = CompensatedSum::new();
            for (&p, &v) in &per_p {
                if p <= cut {
                    low.add(v);
                } else {
                    high.add(v);
                }
            }
            ccv.insert(cut, low.value());
            pcv.insert(cut, high.value());
        }
        let mut total = CompensatedSum::new();
        per_p.values().for_each(|&v| total.add(v));
        Self {
            n,
            per_p,
            log_marginal,
            ccv,
            pcv,
            identity_residual: (total.value() - log_marginal).abs(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("decomposition serializes")
    }
}

fn check_model_p(n: usize, p: usize) -> Result<u64> {
    check_enumeration(n, p)
}

fn all_tests(n: usize, p: usize) -> Vec<Vec<usize>> {
    Combinations::new(n, p).collect()
}

/// `S_CV(y; p)`: average over all size-p test sets of the mean single-point
/// log predictive given the training set.
pub fn leave_p_out_score<M: ExactPredictiveModel + ?Sized>(model: &M, p: usize) -> Result<f64> {
    let n = model.n();
    check_model_p(n, p)?;
    let terms = all_tests(n, p)
        .into_par_iter()
        .map(|test| {
            let split = Split::from_test(n, test);
            let scores = model.log_pointwise_predictive(&split.train, &split.test)?;
            Ok(scores.iter().sum::<f64>() / p as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_mean(&terms))
}

fn subset_of(mask: usize, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| mask & (1 << i) != 0).collect()
}

/// Log evidences of all 2ⁿ subsets, indexed by bitmask.
pub fn subset_log_marginals<M: ExactPredictiveModel + ?Sized>(model: &M) -> Result<Vec<f64>> {
    let n = model.n();
    if n > MAX_DECOMPOSITION_N {
        return Err(Error::EnumerationCap {
            n,
            p: n,
            count: 2f64.powi(n as i32) - 1.0,
            cap: 1 << MAX_DECOMPOSITION_N,
        });
    }
    (0..1usize << n)
        .into_par_iter()
        .map(|mask| model.log_marginal(&subset_of(mask, n)))
        .collect()
}

/// All `S_CV(y; p)` from memoized subset evidences, with `log p(y)` taken
/// from the model directly. Fails if the identity residual exceeds
/// [`IDENTITY_TOLERANCE`].
pub fn decompose_marginal<M: ExactPredictiveModel + ?Sized>(model: &M) -> Result<ScoreDecomposition> {
    let n = model.n();
    if n == 0 {
        return Err(Error::invalid("cannot decompose an empty dataset"));
    }
    let memo = subset_log_marginals(model)?;
    let full = (1usize << n) - 1;
    let mut sums = vec![CompensatedSum::new(); n + 1];
    for mask in 0..full {
        let base = memo[mask];
        let p = n - mask.count_ones() as usize;
        for j in 0..n {
            if mask & (1 << j) == 0 {
                sums[p].add(memo[mask | (1 << j)] - base);
            }
        }
    }
    let per_p = (1..=n)
        .map(|p| (p, sums[p].value() / (binomial(n, p) * p as f64)))
        .collect();
    let log_marginal = model.log_marginal(&(0..n).collect::<Vec<_>>())?;
    let out = ScoreDecomposition::from_per_p(n, per_p, log_marginal);
    if !(out.identity_residual < IDENTITY_TOLERANCE) {
        return Err(Error::NumericalDegeneracy(format!(
            "sum of leave-p-out scores differs from the log marginal by {:e}",
            out.identity_residual
        )));
    }
    Ok(out)
}

/// A score computed two ways.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormCheck {
    pub value: f64,
    pub alternate: f64,
    pub residual: f64,
}

impl FormCheck {
    fn new(value: f64, alternate: f64) -> Self {
        Self { value, alternate, residual: (value - alternate).abs() }
    }

    pub fn agrees(&self, tol: f64) -> bool {
        self.residual < tol
    }
}

fn check_cut(n: usize, cut: usize) -> Result<()> {
    if cut == 0 || cut >= n {
        return Err(Error::invalid(format!("need 1 <= P < n, got P = {cut}, n = {n}")));
    }
    Ok(())
}

/// `S_PCV(y; P)`. `value` is the average log evidence over all training sets
/// of size `n − P`; `alternate` is `Σ_{p=P+1}^{n} S_CV(y; p)`.
pub fn preparatory_score<M: ExactPredictiveModel + ?Sized>(model: &M, cut: usize) -> Result<FormCheck> {
    let n = model.n();
    check_cut(n, cut)?;
    check_model_p(n, cut)?;
    let terms = all_tests(n, cut)
        .into_par_iter()
        .map(|test| model.log_marginal(&Split::from_test(n, test).train))
        .collect::<Result<Vec<f64>>>()?;
    let value = pairwise_mean(&terms);
    let mut sum = CompensatedSum::new();
    for p in cut + 1..=n {
        sum.add(leave_p_out_score(model, p)?);
    }
    Ok(FormCheck::new(value, sum.value()))
}

/// `S_CCV(y; P)`. `value` is `Σ_{p=1}^{P} S_CV(y; p)`; `alternate` is the
/// average block log predictive of all size-P test sets given the rest.
pub fn cumulative_score_exact<M: ExactPredictiveModel + ?Sized>(model: &M, cut: usize) -> Result<FormCheck> {
    let n = model.n();
    check_cut(n, cut)?;
    check_model_p(n, cut)?;
    let mut sum = CompensatedSum::new();
    for p in 1..=cut {
        sum.add(leave_p_out_score(model, p)?);
    }
    let terms = all_tests(n, cut)
        .into_par_iter()
        .map(|test| {
            let split = Split::from_test(n, test);
            model.log_block_predictive(&split.train, &split.test)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(FormCheck::new(sum.value(), pairwise_mean(&terms)))
}

/// One point of the preparatory-training curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepCurveRow {
    pub p: usize,
    pub n_minus_p: usize,
    pub s_cv: f64,
    /// `S_CCV(y; P) · n / P` at `P = p`.
    pub s_ccv_normalized: f64,
    /// Whether both values came from complete enumeration.
    pub exact: bool,
}

/// Curve rows for `p = 1..n−1` from a decomposition. The `p = n` terms are
/// left out; they remain in the decomposition itself.
pub fn prep_curve_from(decomposition: &ScoreDecomposition) -> Vec<PrepCurveRow> {
    let n = decomposition.n;
    (1..n)
        .map(|p| PrepCurveRow {
            p,
            n_minus_p: n - p,
            s_cv: decomposition.per_p[&p],
            s_ccv_normalized: decomposition.ccv[&p] * n as f64 / p as f64,
            exact: true,
        })
        .collect()
}

pub fn prep_curve<M: ExactPredictiveModel + ?Sized>(model: &M) -> Result<Vec<PrepCurveRow>> {
    Ok(prep_curve_from(&decompose_marginal(model)?))
}

/// Writes `p, n_minus_p, s_cv, s_ccv_normalized`.
pub fn write_prep_curve_csv<W: Write>(rows: &[PrepCurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p", "n_minus_p", "s_cv", "s_ccv_normalized"])?;
    for r in rows {
        w.write_record([
            r.p.to_string(),
            r.n_minus_p.to_string(),
            sig6(r.s_cv),
            sig6(r.s_ccv_normalized),
        ])?;
    }
    w.flush()?;
    Ok(())
}
