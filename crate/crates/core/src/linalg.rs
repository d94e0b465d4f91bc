//! Dense linear-algebra helpers on top of nalgebra: Cholesky with error
//! reporting, Gaussian and inverse-Wishart draws.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Chol = Cholesky<f64, Dyn>;

/// Symmetry tolerance used by the positive-definiteness checks.
pub const SYMMETRY_TOL: f64 = 1e-10;

pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Chol> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{what} is {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("{what} has non-finite entries")));
    }
    Cholesky::new(m.clone()).ok_or_else(|| Error::Numeric(format!("{what} is not positive definite")))
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * (1.0 + m[(i, j)].abs())))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Checks symmetry and positive definiteness (by Cholesky attempt).
pub fn check_spd(m: &DMatrix<f64>, what: &str) -> Result<Chol> {
    if !is_symmetric(m, SYMMETRY_TOL) {
        return Err(Error::Validation(format!("{what} is not symmetric")));
    }
    cholesky(m, what)
}

pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let mut inv = cholesky(m, what)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn standard_normal_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(rng)))
}

/// Draws `mean + L z` with `L` the lower Cholesky factor of the covariance.
pub fn sample_mvn_chol<R: Rng + ?Sized>(mean: &DVector<f64>, chol: &Chol, rng: &mut R) -> DVector<f64> {
    let z = standard_normal_vector(mean.len(), rng);
    mean + chol.l() * z
}

pub fn sample_mvn<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let chol = cholesky(cov, "covariance")?;
    Ok(sample_mvn_chol(mean, &chol, rng))
}

/// Wishart(df, scale) draw by the Bartlett decomposition.
pub fn sample_wishart<R: Rng + ?Sized>(df: f64, scale: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let dim = scale.nrows();
    if !(df > dim as f64 - 1.0) {
        return Err(Error::Argument(format!(
            "Wishart degrees of freedom {df} must exceed dimension - 1 = {}",
            dim as f64 - 1.0
        )));
    }
    let l = cholesky(scale, "Wishart scale")?.l();
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        let chi = ChiSquared::new(df - i as f64).map_err(|e| Error::Numeric(format!("chi-square draw: {e}")))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let la = l * a;
    let mut w = &la * la.transpose();
    symmetrize(&mut w);
    Ok(w)
}

/// InverseWishart(df, scale) draw: the inverse of a Wishart(df, scale⁻¹) draw.
/// Mean is `scale / (df - dim - 1)` when `df > dim + 1`.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(df: f64, scale: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let scale_inv = spd_inverse(scale, "inverse-Wishart scale")?;
    let w = sample_wishart(df, &scale_inv, rng)?;
    spd_inverse(&w, "Wishart draw")
}

/// Gaussian log density via a precomputed Cholesky factor.
pub fn mvn_logpdf_chol(x: &DVector<f64>, mean: &DVector<f64>, chol: &Chol) -> f64 {
    let d = x.len() as f64;
    let diff = x - mean;
    let sol = chol.l().solve_lower_triangular(&diff).expect("triangular factor is invertible");
    let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det + sol.norm_squared())
}

pub fn identity(dim: usize) -> DMatrix<f64> {
    DMatrix::identity(dim, dim)
}

pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

pub fn from_row_major(rows: usize, cols: usize, values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, values)
}
