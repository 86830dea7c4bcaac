//! Deterministic 2-d adaptive quadrature for probit log evidences.

use bayescv::probit::ProbitModel;
use nalgebra::{Cholesky, DVector};

fn simpson_step<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, fa, m, fm, lm, flm, left, 0.5 * eps, depth - 1)
        + simpson_step(f, m, fm, b, fb, rm, frm, right, 0.5 * eps, depth - 1)
}

/// Adaptive Simpson over `[a, b]`, started from 32 panels.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, eps: f64) -> f64 {
    let panels = 32;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let m = 0.5 * (lo + hi);
            let (flo, fhi, fm) = (f(lo), f(hi), f(m));
            let whole = h / 6.0 * (flo + 4.0 * fm + fhi);
            simpson_step(f, lo, flo, hi, fhi, m, fm, whole, eps / panels as f64, 40)
        })
        .sum()
}

/// `log ∫ π(θ) f_θ(y_rows) dθ` in coordinates whitened by the full-data fit,
/// widened by `n / |rows|`.
pub fn log_evidence(model: &ProbitModel, rows: &[usize]) -> f64 {
    let fit = model.mle().unwrap();
    let scale = model_n(model) as f64 / rows.len() as f64;
    let l = Cholesky::new(&fit.covariance * scale).unwrap().l();
    let log_det = l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let log_f = |u1: f64, u2: f64| {
        let theta = &fit.theta + &l * DVector::from_vec(vec![u1, u2]);
        model.log_prior(&theta) + model.log_likelihood_rows(&theta, rows).unwrap()
    };
    let half = 12.0;
    let mut shift = f64::NEG_INFINITY;
    for i in 0..=40 {
        for j in 0..=40 {
            let u = |k: i32| -half + 2.0 * half * k as f64 / 40.0;
            shift = shift.max(log_f(u(i), u(j)));
        }
    }
    let inner = |u1: f64| adaptive_simpson(&|u2| (log_f(u1, u2) - shift).exp(), -half, half, 1e-8);
    let total = adaptive_simpson(&inner, -half, half, 1e-7);
    shift + log_det + total.ln()
}

fn model_n(model: &ProbitModel) -> usize {
    use bayescv::IndexedModel;
    model.n()
}
