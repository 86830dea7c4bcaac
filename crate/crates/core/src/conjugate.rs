//! Conjugate Gaussian linear regression with known noise variance.
//!
//! Densities over observations are evaluated through a Cholesky factor of the
//! predictive covariance `X Σ Xᵀ + σ² I`; posterior moments use the precision
//! form `Σ⁻¹ + XᵀX / σ²`, factored the same way.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exact::{ExactPredictiveModel, IndexedModel};
use crate::mc::SampledModel;
use crate::seed::rng_from_seed;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Polynomial regression `y = θᵀ φ_r(x) + ε`, `ε ~ N(0, σ²)`, with prior
/// `θ₀ ~ N(0, intercept_sd²)` and `θ_d ~ N(0, s²)` for `d ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PolynomialSpec {
    pub degree: usize,
    pub noise_variance: f64,
    pub intercept_sd: f64,
    pub coef_variance: f64,
}

impl PolynomialSpec {
    pub fn new(degree: usize, coef_variance: f64) -> Self {
        Self { degree, noise_variance: 1.0, intercept_sd: 100.0, coef_variance }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("noise variance", self.noise_variance),
            ("intercept sd", self.intercept_sd),
            ("coefficient variance", self.coef_variance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn prior(&self) -> Result<GaussianBelief> {
        self.validate()?;
        let mut diag = vec![self.coef_variance; self.dim()];
        diag[0] = self.intercept_sd * self.intercept_sd;
        GaussianBelief::new(
            DVector::zeros(self.dim()),
            DMatrix::from_diagonal(&DVector::from_vec(diag)),
        )
    }
}

/// Gaussian prior or posterior over regression coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::invalid(format!(
                "covariance is {}x{} but mean has length {d}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let scale = cov.amax().max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid("covariance is not symmetric"));
                }
            }
        }
        if cov.clone().cholesky().is_none() {
            return Err(Error::NumericalDegeneracy("covariance is not positive definite".into()));
        }
        Ok(Self { mean, cov })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn precision(&self) -> Result<DMatrix<f64>> {
        Ok(cholesky(self.cov.clone(), "prior covariance")?.inverse())
    }
}

fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    m.cholesky()
        .ok_or_else(|| Error::NumericalDegeneracy(format!("Cholesky factorization of the {what} failed")))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Rows `φ_r(x_i) = [1, x_i, …, x_i^r]`.
pub fn build_design(x: &[f64], degree: usize) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), degree + 1, |i, j| x[i].powi(j as i32))
}

fn check_shapes(belief: &GaussianBelief, design: &DMatrix<f64>, y: &[f64], noise_variance: f64) -> Result<()> {
    if design.nrows() != y.len() {
        return Err(Error::invalid(format!(
            "design has {} rows but y has length {}",
            design.nrows(),
            y.len()
        )));
    }
    if design.ncols() != belief.dim() {
        return Err(Error::invalid(format!(
            "design has {} columns but the belief has dimension {}",
            design.ncols(),
            belief.dim()
        )));
    }
    if !(noise_variance.is_finite() && noise_variance > 0.0) {
        return Err(Error::invalid(format!("noise variance must be > 0, got {noise_variance}")));
    }
    Ok(())
}

/// Conjugate update of `prior` on observations `(design, y)`.
pub fn posterior_update(
    prior: &GaussianBelief,
    design: &DMatrix<f64>,
    y: &[f64],
    noise_variance: f64,
) -> Result<GaussianBelief> {
    check_shapes(prior, design, y, noise_variance)?;
    if y.is_empty() {
        return Ok(prior.clone());
    }
    let prior_precision = prior.precision()?;
    let yv = DVector::from_column_slice(y);
    let precision = &prior_precision + design.tr_mul(design) / noise_variance;
    let shift = &prior_precision * &prior.mean + design.tr_mul(&yv) / noise_variance;
    let chol = cholesky(precision, "posterior precision")?;
    let mean = chol.solve(&shift);
    let mut cov = chol.inverse();
    symmetrize(&mut cov);
    GaussianBelief::new(mean, cov)
}

/// Log density of `N(mean, cov)` at `y`.
fn gaussian_log_density(mean: &DVector<f64>, cov: DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let chol = cholesky(cov, "predictive covariance")?;
    let resid = y - mean;
    let white = chol.l_dirty().solve_lower_triangular(&resid).ok_or_else(|| {
        Error::NumericalDegeneracy("triangular solve with the predictive Cholesky factor failed".into())
    })?;
    let half_log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    Ok(-0.5 * y.len() as f64 * LN_2PI - half_log_det - 0.5 * white.norm_squared())
}

fn predictive_density(belief: &GaussianBelief, design: &DMatrix<f64>, y: &[f64], noise_variance: f64) -> Result<f64> {
    let mean = design * &belief.mean;
    let mut cov = design * &belief.cov * design.transpose();
    for i in 0..y.len() {
        cov[(i, i)] += noise_variance;
    }
    symmetrize(&mut cov);
    gaussian_log_density(&mean, cov, &DVector::from_column_slice(y))
}

/// `log p(y)` under `y ~ N(X m, X Σ Xᵀ + σ² I)`; zero for empty data.
pub fn log_marginal(prior: &GaussianBelief, design: &DMatrix<f64>, y: &[f64], noise_variance: f64) -> Result<f64> {
    check_shapes(prior, design, y, noise_variance)?;
    if y.is_empty() {
        return Ok(0.0);
    }
    predictive_density(prior, design, y, noise_variance)
}

/// Joint log predictive density of a nonempty test block given `posterior`.
pub fn log_posterior_predictive_block(
    posterior: &GaussianBelief,
    design_test: &DMatrix<f64>,
    y_test: &[f64],
    noise_variance: f64,
) -> Result<f64> {
    check_shapes(posterior, design_test, y_test, noise_variance)?;
    if y_test.is_empty() {
        return Err(Error::invalid("test block must be nonempty"));
    }
    predictive_density(posterior, design_test, y_test, noise_variance)
}

/// How [`ConjugateLinearModel`] evaluates block predictives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PredictiveRoute {
    /// Posterior update on the training rows, then a Cholesky factor of the
    /// block predictive covariance.
    #[default]
    BlockCholesky,
    /// Difference of log evidences computed from summed per-row statistics in
    /// coefficient space. Costs O(n d²) per call regardless of block size.
    SufficientStats,
}

/// A conjugate linear model bound to a dataset, addressable by row indices.
#[derive(Clone, Debug)]
pub struct ConjugateLinearModel {
    design: DMatrix<f64>,
    y: Vec<f64>,
    prior: GaussianBelief,
    noise_variance: f64,
    route: PredictiveRoute,
    prior_precision: DMatrix<f64>,
    prior_shift: DVector<f64>,
    prior_quad: f64,
    prior_log_det_precision: f64,
}

impl ConjugateLinearModel {
    pub fn new(design: DMatrix<f64>, y: Vec<f64>, prior: GaussianBelief, noise_variance: f64) -> Result<Self> {
        check_shapes(&prior, &design, &y, noise_variance)?;
        let chol = cholesky(prior.cov.clone(), "prior covariance")?;
        let prior_precision = chol.inverse();
        let prior_shift = &prior_precision * &prior.mean;
        let prior_quad = prior.mean.dot(&prior_shift);
        let prior_log_det_precision = -2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self {
            design,
            y,
            prior,
            noise_variance,
            route: PredictiveRoute::default(),
            prior_precision,
            prior_shift,
            prior_quad,
            prior_log_det_precision,
        })
    }

    /// Polynomial model of `spec.degree` on covariate `x`.
    pub fn polynomial(x: &[f64], y: &[f64], spec: &PolynomialSpec) -> Result<Self> {
        spec.validate()?;
        Self::new(build_design(x, spec.degree), y.to_vec(), spec.prior()?, spec.noise_variance)
    }

    pub fn with_route(mut self, route: PredictiveRoute) -> Self {
        self.route = route;
        self
    }

    pub fn route(&self) -> PredictiveRoute {
        self.route
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn prior(&self) -> &GaussianBelief {
        &self.prior
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    fn check_indices(&self, idx: &[usize]) -> Result<()> {
        match idx.iter().find(|&&i| i >= self.y.len()) {
            Some(i) => Err(Error::invalid(format!("row index {i} out of range for n = {}", self.y.len()))),
            None => Ok(()),
        }
    }

    pub fn rows(&self, idx: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
        let d = self.design.ncols();
        let design = DMatrix::from_fn(idx.len(), d, |i, j| self.design[(idx[i], j)]);
        let y = idx.iter().map(|&i| self.y[i]).collect();
        (design, y)
    }

    /// Posterior after observing rows `train`.
    pub fn posterior(&self, train: &[usize]) -> Result<GaussianBelief> {
        self.check_indices(train)?;
        let (design, y) = self.rows(train);
        posterior_update(&self.prior, &design, &y, self.noise_variance)
    }

    /// Log evidence of the rows in `subset` from coefficient-space statistics.
    pub fn log_evidence_stats(&self, subset: &[usize]) -> Result<f64> {
        self.check_indices(subset)?;
        if subset.is_empty() {
            return Ok(0.0);
        }
        let d = self.design.ncols();
        let s2 = self.noise_variance;
        let mut xtx = DMatrix::<f64>::zeros(d, d);
        let mut xty = DVector::<f64>::zeros(d);
        let mut yty = 0.0;
        for &i in subset {
            let row = self.design.row(i);
            let yi = self.y[i];
            for a in 0..d {
                xty[a] += row[a] * yi;
                for b in 0..=a {
                    xtx[(a, b)] += row[a] * row[b];
                }
            }
            yty += yi * yi;
        }
        for a in 0..d {
            for b in 0..a {
                xtx[(b, a)] = xtx[(a, b)];
            }
        }
        let precision = &self.prior_precision + xtx / s2;
        let shift = &self.prior_shift + xty / s2;
        let chol = cholesky(precision, "posterior precision")?;
        let solved = chol.solve(&shift);
        let log_det_precision = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let m = subset.len() as f64;
        Ok(-0.5 * m * (LN_2PI + s2.ln()) - 0.5 * yty / s2 - 0.5 * self.prior_quad
            + 0.5 * shift.dot(&solved)
            + 0.5 * (self.prior_log_det_precision - log_det_precision))
    }
}

impl IndexedModel for ConjugateLinearModel {
    fn n(&self) -> usize {
        self.y.len()
    }
}

impl ExactPredictiveModel for ConjugateLinearModel {
    fn log_marginal(&self, subset: &[usize]) -> Result<f64> {
        self.check_indices(subset)?;
        let (design, y) = self.rows(subset);
        log_marginal(&self.prior, &design, &y, self.noise_variance)
    }

    fn log_block_predictive(&self, train: &[usize], test: &[usize]) -> Result<f64> {
        self.check_indices(test)?;
        if test.is_empty() {
            return Ok(0.0);
        }
        match self.route {
            PredictiveRoute::BlockCholesky => {
                let posterior = self.posterior(train)?;
                let (design, y) = self.rows(test);
                log_posterior_predictive_block(&posterior, &design, &y, self.noise_variance)
            }
            PredictiveRoute::SufficientStats => {
                let joint: Vec<usize> = train.iter().chain(test).copied().collect();
                Ok(self.log_evidence_stats(&joint)? - self.log_evidence_stats(train)?)
            }
        }
    }

    fn log_pointwise_predictive(&self, train: &[usize], test: &[usize]) -> Result<Vec<f64>> {
        self.check_indices(test)?;
        let posterior = self.posterior(train)?;
        test.iter()
            .map(|&j| {
                let row = self.design.row(j).transpose();
                let mean = row.dot(&posterior.mean);
                let var = (row.transpose() * &posterior.cov * &row)[(0, 0)] + self.noise_variance;
                if !(var > 0.0) {
                    return Err(Error::NumericalDegeneracy("non-positive predictive variance".into()));
                }
                Ok(-0.5 * (LN_2PI + var.ln()) - 0.5 * (self.y[j] - mean).powi(2) / var)
            })
            .collect()
    }
}

impl SampledModel for ConjugateLinearModel {
    type Param = DVector<f64>;

    fn posterior_sample(&self, train: &[usize], count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        let posterior = self.posterior(train)?;
        let chol = cholesky(posterior.cov.clone(), "posterior covariance")?;
        let l = chol.l();
        let mut rng = rng_from_seed(seed);
        let d = posterior.dim();
        Ok((0..count)
            .map(|_| {
                let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                &posterior.mean + &l * z
            })
            .collect())
    }

    fn log_likelihood_block(&self, param: &DVector<f64>, test: &[usize]) -> f64 {
        let s2 = self.noise_variance;
        test.iter()
            .map(|&j| {
                let mean = self.design.row(j).transpose().dot(param);
                -0.5 * (LN_2PI + s2.ln()) - 0.5 * (self.y[j] - mean).powi(2) / s2
            })
            .sum()
    }
}

/// Scalar location model `y = θ + ε` used throughout the tests.
pub fn scalar_location_model(y: &[f64], prior_var: f64, noise_variance: f64) -> Result<ConjugateLinearModel> {
    let prior = GaussianBelief::new(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, prior_var))?;
    ConjugateLinearModel::new(DMatrix::from_element(y.len(), 1, 1.0), y.to_vec(), prior, noise_variance)
}
