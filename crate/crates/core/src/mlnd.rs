//! Multivariate logistic-normal distribution on a product of simplices.
//!
//! A Gaussian vector on the stacked logit scale is pushed blockwise through
//! the softmax with the last category of each block as reference:
//! `x_h = exp(y_h) / (1 + Σ_k exp(y_k))`, `x_H = 1 / (1 + Σ_k exp(y_k))`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Chol};

/// Simplex sizes `H_1..H_G` of the product space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupShape {
    sizes: Vec<usize>,
}

impl GroupShape {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Argument("shape needs at least one block".into()));
        }
        if let Some(h) = sizes.iter().find(|&&h| h < 2) {
            return Err(Error::Argument(format!("simplex block of size {h}; each needs >= 2")));
        }
        Ok(Self { sizes })
    }

    /// `G` blocks of size 2.
    pub fn binary(groups: usize) -> Self {
        Self { sizes: vec![2; groups.max(1)] }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn groups(&self) -> usize {
        self.sizes.len()
    }

    /// `Σ_g (H_g − 1)`.
    pub fn latent_dim(&self) -> usize {
        self.sizes.iter().map(|h| h - 1).sum()
    }

    /// `Σ_g H_g`.
    pub fn simplex_len(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Offset of block `g` on the logit scale.
    pub fn latent_offset(&self, g: usize) -> usize {
        self.sizes[..g].iter().map(|h| h - 1).sum()
    }

    /// Offset of block `g` in the concatenated simplex vector.
    pub fn simplex_offset(&self, g: usize) -> usize {
        self.sizes[..g].iter().sum()
    }
}

/// Mean and covariance on the stacked logit scale.
#[derive(Debug, Clone)]
pub struct MlndParams {
    shape: GroupShape,
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    chol: Chol,
}

impl PartialEq for MlndParams {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.mu == other.mu && self.sigma == other.sigma
    }
}

impl MlndParams {
    pub fn new(shape: GroupShape, mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let k = shape.latent_dim();
        if mu.len() != k || sigma.nrows() != k || sigma.ncols() != k {
            return Err(Error::Dimension(format!(
                "shape needs mean length {k} and {k}x{k} covariance, got {} and {}x{}",
                mu.len(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let chol = linalg::check_spd(&sigma, "MLND covariance")?;
        Ok(Self { shape, mu, sigma, chol })
    }

    pub fn shape(&self) -> &GroupShape {
        &self.shape
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn chol(&self) -> &Chol {
        &self.chol
    }
}

/// A point of the product simplex, blocks concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint {
    shape: GroupShape,
    values: Vec<f64>,
}

impl SimplexPoint {
    /// Validates block sums (±1e−12) and strict interiority.
    pub fn new(shape: GroupShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.simplex_len() {
            return Err(Error::Dimension(format!(
                "{} values for a shape of total size {}",
                values.len(),
                shape.simplex_len()
            )));
        }
        let point = Self { shape, values };
        for g in 0..point.shape.groups() {
            let block = point.block(g);
            let sum: f64 = block.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!("block {} sums to {sum}", g + 1)));
            }
            if block.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::Domain(format!("block {} has a coordinate at 0 or 1", g + 1)));
            }
        }
        Ok(point)
    }

    pub fn shape(&self) -> &GroupShape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn block(&self, g: usize) -> &[f64] {
        let off = self.shape.simplex_offset(g);
        &self.values[off..off + self.shape.sizes[g]]
    }

    /// Clips every coordinate to `[eps, 1 − eps]` and renormalizes each
    /// block. For user-supplied points in diagnostics only.
    pub fn clipped(shape: GroupShape, values: &[f64], eps: f64) -> Result<Self> {
        if values.len() != shape.simplex_len() {
            return Err(Error::Dimension("clipped point length".into()));
        }
        let mut out = Vec::with_capacity(values.len());
        for g in 0..shape.groups() {
            let off = shape.simplex_offset(g);
            let block: Vec<f64> = values[off..off + shape.sizes[g]].iter().map(|v| v.clamp(eps, 1.0 - eps)).collect();
            let s: f64 = block.iter().sum();
            out.extend(block.iter().map(|v| v / s));
        }
        Ok(Self { shape, values: out })
    }
}

/// Blockwise softmax with the last category as reference.
pub fn to_simplex(y: &[f64], shape: &GroupShape) -> Result<SimplexPoint> {
    if y.len() != shape.latent_dim() {
        return Err(Error::Dimension(format!(
            "logit vector of length {} for latent dimension {}",
            y.len(),
            shape.latent_dim()
        )));
    }
    let mut values = Vec::with_capacity(shape.simplex_len());
    for g in 0..shape.groups() {
        let off = shape.latent_offset(g);
        let block = &y[off..off + shape.sizes[g] - 1];
        let m = block.iter().copied().fold(0.0f64, f64::max);
        let denom: f64 = (-m).exp() + block.iter().map(|v| (v - m).exp()).sum::<f64>();
        values.extend(block.iter().map(|v| (v - m).exp() / denom));
        values.push((-m).exp() / denom);
    }
    Ok(SimplexPoint { shape: shape.clone(), values })
}

/// Inverse of [`to_simplex`]: `log(x_h / x_H)` per block.
pub fn to_logits(x: &SimplexPoint) -> Result<Vec<f64>> {
    let shape = x.shape();
    let mut y = Vec::with_capacity(shape.latent_dim());
    for g in 0..shape.groups() {
        let block = x.block(g);
        if block.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Domain(format!("block {} has a coordinate at 0 or 1", g + 1)));
        }
        let last = block[block.len() - 1].ln();
        y.extend(block[..block.len() - 1].iter().map(|v| v.ln() - last));
    }
    Ok(y)
}

/// Log density: Gaussian log density of the logits minus `Σ log x`.
pub fn logpdf(x: &SimplexPoint, params: &MlndParams) -> Result<f64> {
    if x.shape() != params.shape() {
        return Err(Error::Dimension("point and parameters have different shapes".into()));
    }
    let y = DVector::from_vec(to_logits(x)?);
    let gauss = linalg::mvn_logpdf_chol(&y, params.mu(), params.chol());
    let jac: f64 = x.values().iter().map(|v| v.ln()).sum();
    Ok(gauss - jac)
}

/// Gaussian logits via Cholesky, pushed to the simplex.
pub fn sample<R: Rng + ?Sized>(params: &MlndParams, rng: &mut R) -> SimplexPoint {
    let y = linalg::sample_mvn_chol(params.mu(), params.chol(), rng);
    to_simplex(y.as_slice(), params.shape()).expect("latent dimension matches shape")
}

fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Compound construction: group logit means `μ ~ N(μ₀, Σ₀)` with independent
/// per-group logistic normals `Σ^{(g)}` give `MLND(μ₀, Σ₀ + blockdiag(Σ^{(g)}))`.
pub fn compound_params(
    shape: &GroupShape,
    mu0: &DVector<f64>,
    sigma0: &DMatrix<f64>,
    group_sigmas: &[DMatrix<f64>],
) -> Result<MlndParams> {
    if group_sigmas.len() != shape.groups() {
        return Err(Error::Dimension(format!(
            "{} group covariances for {} groups",
            group_sigmas.len(),
            shape.groups()
        )));
    }
    for (g, s) in group_sigmas.iter().enumerate() {
        let k = shape.sizes()[g] - 1;
        if s.nrows() != k || s.ncols() != k {
            return Err(Error::Dimension(format!("group {} covariance must be {k}x{k}", g + 1)));
        }
    }
    let k = shape.latent_dim();
    if sigma0.nrows() != k || sigma0.ncols() != k {
        return Err(Error::Dimension(format!("Sigma0 must be {k}x{k}")));
    }
    MlndParams::new(shape.clone(), mu0.clone(), sigma0 + block_diag(group_sigmas))
}

fn check_blocks(shape: &GroupShape, blocks: &[DMatrix<f64>]) -> Result<GroupShape> {
    if blocks.len() != shape.groups() {
        return Err(Error::Dimension(format!("{} blocks for {} groups", blocks.len(), shape.groups())));
    }
    for (g, b) in blocks.iter().enumerate() {
        if b.ncols() != shape.sizes()[g] - 1 || b.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "block {} is {}x{}, needs q x {}",
                g + 1,
                b.nrows(),
                b.ncols(),
                shape.sizes()[g] - 1
            )));
        }
    }
    GroupShape::new(blocks.iter().map(|b| b.nrows() + 1).collect())
}

/// Group-preserving linear map of the logits: `MLND(Bμ, BΣBᵀ)` over blocks of
/// size `q_g + 1`, where `B = blockdiag(B^{(g)})` with `B^{(g)}` of size
/// `q_g × (H_g − 1)`.
pub fn linear_transform(params: &MlndParams, blocks: &[DMatrix<f64>]) -> Result<MlndParams> {
    let shape = check_blocks(params.shape(), blocks)?;
    let b = block_diag(blocks);
    let mut sigma = &b * params.sigma() * b.transpose();
    linalg::symmetrize(&mut sigma);
    MlndParams::new(shape, &b * params.mu(), sigma)
}

/// The pointwise map matching [`linear_transform`]:
/// `x'_q ∝ Π_h (x_h / x_H)^{b_{qh}}` within each block.
pub fn transform_point(x: &SimplexPoint, blocks: &[DMatrix<f64>]) -> Result<SimplexPoint> {
    let shape = check_blocks(x.shape(), blocks)?;
    let y = DVector::from_vec(to_logits(x)?);
    let y2 = block_diag(blocks) * y;
    to_simplex(y2.as_slice(), &shape)
}

fn latent_index(params: &MlndParams, h: usize, g: usize) -> Result<usize> {
    let shape = params.shape();
    if g >= shape.groups() {
        return Err(Error::Argument(format!("group {g} out of range")));
    }
    if h >= shape.sizes()[g] - 1 {
        return Err(Error::Argument(format!(
            "category {h} of group {g} is the reference or out of range (0..{})",
            shape.sizes()[g] - 1
        )));
    }
    Ok(shape.latent_offset(g) + h)
}

/// `E[log((X^{(g)}_h / X^{(g)}_H) / (X^{(g2)}_{h2} / X^{(g2)}_H))] = μ^{(g)}_h − μ^{(g2)}_{h2}`.
/// Indices are 0-based; `h` ranges over the non-reference categories.
pub fn log_odds_mean(params: &MlndParams, h: usize, g: usize, h2: usize, g2: usize) -> Result<f64> {
    let a = latent_index(params, h, g)?;
    let b = latent_index(params, h2, g2)?;
    Ok(params.mu()[a] - params.mu()[b])
}

/// Expected odds ratio, the lognormal mean of the log-odds difference.
pub fn odds_ratio_mean(params: &MlndParams, h: usize, g: usize, h2: usize, g2: usize) -> Result<f64> {
    let a = latent_index(params, h, g)?;
    let b = latent_index(params, h2, g2)?;
    let s = params.sigma();
    let var = s[(a, a)] + s[(b, b)] - 2.0 * s[(a, b)];
    Ok((params.mu()[a] - params.mu()[b] + 0.5 * var).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(sizes: Vec<usize>, mu: &[f64], sigma: &[f64]) -> MlndParams {
        let shape = GroupShape::new(sizes).unwrap();
        let k = shape.latent_dim();
        MlndParams::new(shape, DVector::from_row_slice(mu), DMatrix::from_row_slice(k, k, sigma)).unwrap()
    }

    #[test]
    fn transform_examples() {
        let s2 = GroupShape::new(vec![2]).unwrap();
        assert_eq!(to_simplex(&[0.0], &s2).unwrap().values(), &[0.5, 0.5]);
        let x = to_simplex(&[2f64.ln()], &s2).unwrap();
        assert!((x.values()[0] - 2.0 / 3.0).abs() < 1e-15 && (x.values()[1] - 1.0 / 3.0).abs() < 1e-15);
        let s23 = GroupShape::new(vec![2, 3]).unwrap();
        let x = to_simplex(&[0.0, 0.0, 0.0], &s23).unwrap();
        for (a, b) in x.values().iter().zip([0.5, 0.5, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(to_simplex(&[0.0], &s23).is_err());
    }

    #[test]
    fn logit_examples() {
        let s2 = GroupShape::new(vec![2]).unwrap();
        let half = SimplexPoint::new(s2.clone(), vec![0.5, 0.5]).unwrap();
        assert_eq!(to_logits(&half).unwrap(), vec![0.0]);
        let x = SimplexPoint::new(s2.clone(), vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!((to_logits(&x).unwrap()[0] - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(SimplexPoint::new(s2.clone(), vec![1.0, 0.0]), Err(Error::Domain(_))));
        let boundary = SimplexPoint { shape: s2, values: vec![1.0, 0.0] };
        assert!(matches!(to_logits(&boundary), Err(Error::Domain(_))));
    }

    #[test]
    fn logpdf_at_center() {
        let p = params(vec![2], &[0.0], &[1.0]);
        let x = SimplexPoint::new(GroupShape::new(vec![2]).unwrap(), vec![0.5, 0.5]).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.25f64.ln();
        assert!((logpdf(&x, &p).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 0.467).abs() < 1e-3);
    }

    #[test]
    fn compound_examples() {
        let shape = GroupShape::binary(2);
        let mu0 = DVector::zeros(2);
        let p = compound_params(
            &shape,
            &mu0,
            &DMatrix::identity(2, 2),
            &[DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)],
        )
        .unwrap();
        assert_eq!(p.sigma(), &DMatrix::from_diagonal_element(2, 2, 2.0));
        let s0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let p0 = compound_params(&shape, &mu0, &s0, &[DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)]).unwrap();
        assert_eq!(p0.sigma(), &s0);
        assert!(compound_params(&shape, &mu0, &s0, &[DMatrix::zeros(1, 1)]).is_err());
    }

    #[test]
    fn identity_transform_is_noop() {
        let p = params(vec![3, 2], &[0.1, -0.2, 0.4], &[1.0, 0.2, 0.1, 0.2, 1.5, 0.0, 0.1, 0.0, 0.7]);
        let out = linear_transform(&p, &[DMatrix::identity(2, 2), DMatrix::identity(1, 1)]).unwrap();
        assert_eq!(out, p);
        assert!(linear_transform(&p, &[DMatrix::identity(1, 1), DMatrix::identity(1, 1)]).is_err());
    }

    #[test]
    fn moment_examples() {
        let p = params(vec![2, 2], &[1.0, 0.5], &[1.0, 0.0, 0.0, 1.0]);
        assert!((log_odds_mean(&p, 0, 0, 0, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((odds_ratio_mean(&p, 0, 0, 0, 1).unwrap() - 1.5f64.exp()).abs() < 1e-12);
        let eq = params(vec![2, 2], &[0.3, 0.3], &[2.0, -0.4, -0.4, 1.0]);
        assert_eq!(log_odds_mean(&eq, 0, 0, 0, 1).unwrap(), 0.0);
        assert!(log_odds_mean(&p, 1, 0, 0, 1).is_err());
        assert!(odds_ratio_mean(&p, 0, 2, 0, 1).is_err());
    }

    #[test]
    fn draws_are_interior_points() {
        let p = params(vec![2, 2], &[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let x = sample(&p, &mut rng);
            SimplexPoint::new(x.shape().clone(), x.values().to_vec()).unwrap();
        }
    }

    #[test]
    fn non_pd_covariance_is_rejected() {
        let shape = GroupShape::binary(2);
        let r = MlndParams::new(shape, DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(matches!(r, Err(Error::Numeric(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(y in proptest::collection::vec(-20.0f64..20.0, 6)) {
            let shape = GroupShape::new(vec![3, 2, 4]).unwrap();
            let x = to_simplex(&y, &shape).unwrap();
            for g in 0..3 {
                prop_assert!((x.block(g).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            let back = to_logits(&x).unwrap();
            for (a, b) in y.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
