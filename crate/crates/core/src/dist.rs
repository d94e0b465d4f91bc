//! Small sampling primitives shared by the samplers and generators.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// Bound on `|logit(λ)|` applied before Pólya-gamma and Gaussian steps.
pub const LOGIT_CLAMP: f64 = 35.0;

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn clamp_logit(x: f64) -> f64 {
    x.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
}

/// Log of a Gamma(shape, 1) draw, accurate for small shapes where the draw
/// itself would underflow.
pub fn log_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).expect("positive shape").sample(rng).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
        let u: f64 = rng.random::<f64>();
        // u is in [0, 1); use 1 - u so the log is finite.
        g.ln() + (1.0 - u).ln() / shape
    }
}

/// Dirichlet draw computed in log space. Zero concentrations give exact zeros
/// (the draw lives on the face spanned by the positive entries).
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> =
        alpha.iter().map(|&a| if a > 0.0 { log_gamma_draw(a, rng) } else { f64::NEG_INFINITY }).collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(m.is_finite(), "Dirichlet needs at least one positive concentration");
    let mut out: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    out
}

/// Index drawn from unnormalized non-negative weights.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}
