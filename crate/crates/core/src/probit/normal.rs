//! Standard normal tails and truncated-normal sampling.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use rand::Rng;
use rand_distr::{Exp, StandardNormal};
use libm::erfc;
use statrs::function::erf::erfc_inv;

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument `log Φ` switches to the asymptotic series.
const ASYMPTOTIC_CUTOFF: f64 = -20.0;
/// Truncation points beyond this use exponential rejection.
const TAIL_SWITCH: f64 = 6.0;

pub fn log_density(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `log Φ(x)`, finite for all finite `x`.
pub fn log_cdf(x: f64) -> f64 {
    if x > 5.0 {
        (-0.5 * erfc(x * FRAC_1_SQRT_2)).ln_1p()
    } else if x >= ASYMPTOTIC_CUTOFF {
        (0.5 * erfc(-x * FRAC_1_SQRT_2)).ln()
    } else {
        // Φ(x) = φ(x)/|x| · (1 − 1/x² + 3/x⁴ − 15/x⁶ + …)
        let r = 1.0 / (x * x);
        let series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r * (1.0 - 9.0 * r * (1.0 - 11.0 * r)))));
        log_density(x) - (-x).ln() + series.ln()
    }
}

/// `φ(x) / Φ(x)`, the derivative of `log Φ`.
pub fn inverse_mills(x: f64) -> f64 {
    (log_density(x) - log_cdf(x)).exp()
}

/// `Φ⁻¹(p)`.
pub fn quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Draws `Z ~ N(0, 1)` conditioned on `Z ≥ a`.
pub fn sample_lower_truncated<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    if a <= TAIL_SWITCH {
        if a < -TAIL_SWITCH {
            // The truncation removes almost no mass.
            loop {
                let z: f64 = rng.sample(StandardNormal);
                if z >= a {
                    return z;
                }
            }
        }
        // Z = −Φ⁻¹(U · Φ(−a)) keeps precision in the upper tail.
        let upper = cdf(-a);
        let u = 1.0 - rng.random::<f64>();
        let z = -quantile(u * upper);
        return z.max(a);
    }
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    let exp = Exp::new(alpha).expect("positive rate");
    loop {
        let z = a + rng.sample(exp);
        let d = z - alpha;
        if rng.random::<f64>() <= (-0.5 * d * d).exp() {
            return z;
        }
    }
}

/// Draws `Z ~ N(mean, 1)` restricted to `Z > 0` when `positive`, else `Z ≤ 0`.
pub fn sample_signed<R: Rng + ?Sized>(rng: &mut R, mean: f64, positive: bool) -> f64 {
    if positive {
        mean + sample_lower_truncated(rng, -mean)
    } else {
        mean - sample_lower_truncated(rng, mean)
    }
}
