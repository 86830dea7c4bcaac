//! Data-augmentation Gibbs sampler: latent utilities `zᵢ ~ N(xᵢᵀθ, 1)`
//! truncated to the sign of `yᵢ`, alternating with a Gaussian draw of `θ`.

use std::io::Write;

use nalgebra::{Cholesky, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::normal::sample_signed;
use super::ProbitModel;
use crate::error::{Error, Result};
use crate::numerics::sig6;
use crate::seed::rng_from_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct GibbsChain {
    pub names: Vec<String>,
    pub draws: Vec<DVector<f64>>,
}

impl GibbsChain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }

    pub fn mean(&self, j: usize) -> f64 {
        self.draws.iter().map(|d| d[j]).sum::<f64>() / self.len() as f64
    }

    pub fn sd(&self, j: usize) -> f64 {
        let m = self.mean(j);
        (self.draws.iter().map(|d| (d[j] - m).powi(2)).sum::<f64>() / (self.len() - 1) as f64).sqrt()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Runs `iterations` sweeps from `θ = 0` and keeps those after `burn_in`.
pub fn gibbs_posterior(model: &ProbitModel, iterations: usize, burn_in: usize, seed: u64) -> Result<GibbsChain> {
    if burn_in >= iterations {
        return Err(Error::invalid(format!("burn-in {burn_in} leaves no draws out of {iterations}")));
    }
    let x = model.canonical_x();
    let y = model.canonical_y();
    let g = model.prior().g;
    let shrink = g / (1.0 + g);
    let chol = Cholesky::new(model.gram().clone())
        .ok_or_else(|| Error::NumericalDegeneracy("XᵀX is singular".into()))?;
    let l = chol.l();
    let sd = shrink.sqrt();
    let d = model.dim();
    let mut rng = rng_from_seed(seed);
    let mut theta = DVector::zeros(d);
    let mut z = DVector::zeros(y.len());
    let mut draws = Vec::with_capacity(iterations - burn_in);
    for it in 0..iterations {
        let eta = x * &theta;
        for i in 0..y.len() {
            z[i] = sample_signed(&mut rng, eta[i], y[i] == 1.0);
        }
        let mean = chol.solve(&(x.transpose() * &z)) * shrink;
        let e = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let noise = l.tr_solve_lower_triangular(&e).expect("triangular factor") * sd;
        theta = mean + noise;
        if it >= burn_in {
            draws.push(theta.clone());
        }
    }
    Ok(GibbsChain { names: model.parameter_names().to_vec(), draws })
}

/// One row per draw, one column per parameter.
pub fn write_chain_csv<W: Write>(chain: &GibbsChain, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once("iteration".to_string()).chain(chain.names.iter().cloned()))?;
    for (i, d) in chain.draws.iter().enumerate() {
        w.write_record(std::iter::once(i.to_string()).chain(d.iter().map(|&v| sig6(v))))?;
    }
    w.flush()?;
    Ok(())
}
