//! Exact Pólya-gamma sampling.
//!
//! `PG(1, c)` draws use the alternating-series rejection sampler on the
//! exponential / truncated inverse-Gaussian mixture proposal; `PG(b, c)` for
//! integer `b` is the sum of `b` independent `PG(1, c)` draws.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Crossing point of the two series representations of the Jacobi density.
pub const TRUNCATION: f64 = 0.64;

/// Parameters of `PG(b, c)` with integer shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgParams {
    b: u32,
    c: f64,
}

impl PgParams {
    pub fn new(b: u32, c: f64) -> Result<Self> {
        if b == 0 {
            return Err(Error::Argument("Polya-gamma shape b must be >= 1".into()));
        }
        if !c.is_finite() {
            return Err(Error::Argument(format!("Polya-gamma tilt c = {c} is not finite")));
        }
        Ok(Self { b, c })
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

/// One draw from `PG(b, c)`.
pub fn pg_sample<R: Rng + ?Sized>(params: PgParams, rng: &mut R) -> f64 {
    let z = 0.5 * params.c.abs();
    (0..params.b).map(|_| 0.25 * sample_jacobi_star(z, rng)).sum()
}

/// Convenience wrapper validating the arguments.
pub fn pg_draw<R: Rng + ?Sized>(b: u32, c: f64, rng: &mut R) -> Result<f64> {
    Ok(pg_sample(PgParams::new(b, c)?, rng))
}

/// `E[PG(b, c)] = b / (2c) · tanh(c / 2)`, with limit `b / 4` at zero.
pub fn pg_mean(b: f64, c: f64) -> f64 {
    if c.abs() < 1e-6 {
        b / 4.0 * (1.0 - c * c / 12.0)
    } else {
        b / (2.0 * c) * (0.5 * c).tanh()
    }
}

/// `Var[PG(b, c)] = b (sinh c − c) / (4 c³ cosh²(c/2))`, with limit `b / 24`;
/// near zero `b / 24 · (1 − c² / 5)`.
pub fn pg_variance(b: f64, c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-3 {
        b / 24.0 * (1.0 - c * c / 5.0)
    } else {
        let sech = 1.0 / (0.5 * c).cosh();
        b * (c.sinh() - c) / (4.0 * c.powi(3)) * sech * sech
    }
}

fn ln_std_normal_cdf(x: f64) -> f64 {
    (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
}

/// Probability that the proposal comes from the exponential tail piece.
fn exponential_mass(z: f64) -> f64 {
    let t = TRUNCATION;
    let fz = PI * PI / 8.0 + 0.5 * z * z;
    let b = (1.0 / t).sqrt() * (t * z - 1.0);
    let a = -(1.0 / t).sqrt() * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + ln_std_normal_cdf(b);
    let xa = x0 + z + ln_std_normal_cdf(a);
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// n-th coefficient of the alternating series, piecewise at the truncation.
fn series_coefficient(n: u32, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > TRUNCATION {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        let nh = n as f64 + 0.5;
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * nh * nh / x).exp()
    } else {
        0.0
    }
}

/// Inverse-Gaussian(1/z, 1) truncated to `(0, TRUNCATION)`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNCATION;
    if z < 1.0 / t {
        // Mean above the truncation: propose from the z = 0 law, accept by tilt.
        loop {
            let x = loop {
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / t {
                    let d = 1.0 + e1 * t;
                    break t / (d * d);
                }
            };
            let alpha = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= alpha {
                return x;
            }
        }
    } else {
        let mu = 1.0 / z;
        loop {
            let y: f64 = StandardNormal.sample(rng);
            let y = y * y;
            let mu_y = mu * y;
            let mut x = mu + 0.5 * mu * mu_y - 0.5 * mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x < t {
                return x;
            }
        }
    }
}

/// Draw from `J*(1, z)`; `PG(1, 2z) = J*(1, z) / 4`.
fn sample_jacobi_star<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let fz = PI * PI / 8.0 + 0.5 * z * z;
    let mass = exponential_mass(z);
    loop {
        let x = if rng.random::<f64>() < mass {
            let e: f64 = Exp1.sample(rng);
            TRUNCATION + e / fz
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        let mut s = series_coefficient(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0u32;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coefficient(n, x);
                if y <= s {
                    return x;
                }
            } else {
                s += series_coefficient(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn moments(b: u32, c: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = PgParams::new(b, c).unwrap();
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = pg_sample(p, &mut rng);
            assert!(x > 0.0);
            s += x;
            s2 += x * x;
        }
        let m = s / n as f64;
        (m, s2 / n as f64 - m * m)
    }

    #[test]
    fn pg10_mean_and_variance() {
        let (m, v) = moments(1, 0.0, 200_000, 1);
        assert!((m - 0.25).abs() < 4.0 * (pg_variance(1.0, 0.0) / 200_000f64).sqrt());
        assert!((v - 1.0 / 24.0).abs() < 0.002, "{v}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PgParams::new(0, 1.0).is_err());
        assert!(PgParams::new(1, f64::NAN).is_err());
        assert!(PgParams::new(1, f64::INFINITY).is_err());
    }

    #[test]
    fn closed_form_moments_match_limits() {
        assert!((pg_mean(2.0, 2.0) - 0.5 * 1f64.tanh()).abs() < 1e-15);
        assert!((pg_mean(2.0, 2.0) - 0.380797).abs() < 1e-6);
        assert!((pg_mean(3.0, 1e-9) - 0.75).abs() < 1e-12);
        assert!((pg_variance(1.0, 1e-4) - pg_variance(1.0, 2e-3)).abs() < 1e-5);
        // Variance is continuous across the series switch.
        assert!((pg_variance(1.0, 0.999e-3) - pg_variance(1.0, 1.001e-3)).abs() < 1e-9);
    }

    #[test]
    fn proposal_mass_is_a_probability() {
        for z in [0.0, 0.1, 1.0, 1.5625, 3.0, 17.5, 200.0] {
            let m = exponential_mass(z);
            assert!((0.0..=1.0).contains(&m), "{z}: {m}");
        }
    }

    #[test]
    fn extreme_tilt_is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let x = pg_draw(3, 500.0, &mut rng).unwrap();
            assert!(x.is_finite() && x > 0.0);
        }
    }
}
