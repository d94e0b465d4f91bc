//! The individual conditional updates of one sweep.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::state::{ChainState, KernelSet, LatentState};
use crate::data::{CategoricalDataset, GroupPartition, Hyperparams};
use crate::dist::{clamp_logit, logistic, sample_dirichlet};
use crate::error::{Error, Result};
use crate::linalg;
use crate::polya_gamma::{pg_sample, PgParams};
use crate::rng::{StepTag, StreamRoot};

/// Stream addressing for one sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepStreams {
    root: StreamRoot,
    iteration: u64,
}

impl SweepStreams {
    pub fn new(root: StreamRoot, iteration: u64) -> Self {
        Self { root, iteration }
    }

    /// Streams used while building the initial state.
    pub fn init(root: StreamRoot) -> Self {
        Self { root, iteration: u64::MAX }
    }

    pub fn open(&self, step: StepTag, index: u64) -> rand_chacha::ChaCha8Rng {
        self.root.stream(self.iteration, step, index)
    }
}

/// Dirichlet parameters `α^{(j)}_k + #{i : z_ij = h, x_ij = k}`.
pub fn kernel_posterior_params(
    z: &[u8],
    dataset: &CategoricalDataset,
    hyper: &Hyperparams,
    j: usize,
    h: usize,
) -> Vec<f64> {
    let p = dataset.p();
    let mut params = hyper.alpha[j].clone();
    for i in 0..dataset.n() {
        if z[i * p + j] as usize == h {
            params[dataset.code(i, j)] += 1.0;
        }
    }
    params
}

/// Step 1: kernels from their Dirichlet full conditionals.
pub fn update_kernels(
    state: &ChainState,
    dataset: &CategoricalDataset,
    hyper: &Hyperparams,
    streams: SweepStreams,
) -> KernelSet {
    let p = dataset.p();
    let profiles = state.kernels.profiles();
    let theta: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let mut row = Vec::with_capacity(profiles * dataset.levels()[j]);
            for h in 0..profiles {
                let params = kernel_posterior_params(&state.latent.z, dataset, hyper, j, h);
                let mut rng = streams.open(StepTag::Kernels, (j * profiles + h) as u64);
                row.extend(sample_dirichlet(&params, &mut rng));
            }
            row
        })
        .collect();
    KernelSet::from_flat(profiles, dataset.levels().to_vec(), theta)
}

/// `pr(Z = 2 | −) = λ θ₂ₓ / ((1 − λ) θ₁ₓ + λ θ₂ₓ)`.
pub fn indicator_probability(lambda: f64, theta1: f64, theta2: f64) -> Result<f64> {
    let num = lambda * theta2;
    let den = (1.0 - lambda) * theta1 + num;
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::Numeric(format!(
            "indicator probability has zero denominator (lambda {lambda}, theta {theta1}, {theta2})"
        )));
    }
    Ok(num / den)
}

/// Same as [`indicator_probability`] with `λ = logistic(ψ)`, computed in a
/// way that keeps `1 − λ` accurate when λ is close to one.
fn indicator_probability_logit(psi: f64, theta1: f64, theta2: f64) -> Result<f64> {
    let (l, one_minus) = (logistic(psi), logistic(-psi));
    let num = l * theta2;
    let den = one_minus * theta1 + num;
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::Numeric(format!(
            "indicator probability has zero denominator (lambda {l}, theta {theta1}, {theta2})"
        )));
    }
    Ok(num / den)
}

/// Step 2: profile indicators, independently per subject and variable.
pub fn update_indicators(
    state: &ChainState,
    dataset: &CategoricalDataset,
    partition: &GroupPartition,
    streams: SweepStreams,
) -> Result<Vec<u8>> {
    let (n, p, g) = (dataset.n(), dataset.p(), partition.groups());
    let kernels = &state.kernels;
    let psi = &state.latent.psi;
    let rows: Vec<Result<Vec<u8>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.open(StepTag::Indicators, i as u64);
            let mut row = Vec::with_capacity(p);
            for j in 0..p {
                let x = dataset.code(i, j);
                let pr = indicator_probability_logit(
                    psi[i * g + partition.group_of(j)],
                    kernels.prob(j, 0, x),
                    kernels.prob(j, 1, x),
                )?;
                row.push(u8::from(rng.random::<f64>() < pr));
            }
            Ok(row)
        })
        .collect();
    let mut z = Vec::with_capacity(n * p);
    for r in rows {
        z.extend(r?);
    }
    Ok(z)
}

/// Step 3: `ω^{(g)}_i ~ PG(p_g, logit λ^{(g)}_i)`.
pub fn update_omega(latent: &LatentState, partition: &GroupPartition, streams: SweepStreams) -> Result<Vec<f64>> {
    let g = partition.groups();
    let rows: Vec<Result<Vec<f64>>> = (0..latent.n())
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.open(StepTag::Omega, i as u64);
            (0..g)
                .map(|gg| {
                    let c = clamp_logit(latent.psi[i * g + gg]);
                    Ok(pg_sample(PgParams::new(partition.sizes()[gg] as u32, c)?, &mut rng))
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(latent.n() * g);
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// Gaussian conditional of one subject's logits:
/// `Σ* = (diag ω + Σ⁻¹)⁻¹`, `μ* = Σ*(Σ⁻¹ m + k)` for prior mean `m`.
pub fn score_conditional(
    omega: &[f64],
    k: &[f64],
    prior_mean: &DVector<f64>,
    sigma_inv: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mut prec = sigma_inv.clone();
    for (d, &w) in omega.iter().enumerate() {
        prec[(d, d)] += w;
    }
    let chol = linalg::cholesky(&prec, "score precision")?;
    let rhs = sigma_inv * prior_mean + DVector::from_row_slice(k);
    let mean = chol.solve(&rhs);
    let mut cov = chol.inverse();
    linalg::symmetrize(&mut cov);
    Ok((mean, cov))
}

/// Draws every subject's logits from its Gaussian conditional, with
/// subject-specific prior mean and prior precision.
pub(crate) fn draw_scores<'a, M, P>(
    latent: &LatentState,
    prior_mean: M,
    prior_precision: P,
    streams: SweepStreams,
) -> Result<Vec<f64>>
where
    M: Fn(usize) -> DVector<f64> + Sync,
    P: Fn(usize) -> &'a DMatrix<f64> + Sync,
{
    let g = latent.groups();
    let rows: Vec<Result<Vec<f64>>> = (0..latent.n())
        .into_par_iter()
        .map(|i| {
            let prec0 = prior_precision(i);
            let mut prec = prec0.clone();
            for d in 0..g {
                prec[(d, d)] += latent.omega[i * g + d];
            }
            let chol = linalg::cholesky(&prec, "score precision")?;
            let rhs = prec0 * prior_mean(i) + DVector::from_row_slice(&latent.k[i * g..(i + 1) * g]);
            let mean = chol.solve(&rhs);
            let mut rng = streams.open(StepTag::Scores, i as u64);
            let e = linalg::standard_normal_vector(g, &mut rng);
            // L Lᵀ = precision, so L⁻ᵀ e has covariance precision⁻¹.
            let noise = chol.l().transpose().solve_upper_triangular(&e).expect("invertible factor");
            Ok((mean + noise).iter().map(|&v| clamp_logit(v)).collect())
        })
        .collect();
    let mut out = Vec::with_capacity(latent.n() * g);
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// Step 4: membership scores given `μ`, `Σ`, `ω` and `k`. Returns the new
/// logits `n × G`.
pub fn update_lambda(state: &ChainState, streams: SweepStreams) -> Result<Vec<f64>> {
    let sigma_inv = linalg::spd_inverse(&state.sigma, "Sigma")?;
    draw_scores(&state.latent, |_| state.mu.clone(), |_| &sigma_inv, streams)
}

/// Pseudo-observation of one subject for the mean update: `k_i / ω_i` with
/// noise `diag(1/ω_i)`, shifted by a known offset.
pub struct PseudoObservation<'a> {
    pub omega: &'a [f64],
    pub k: &'a [f64],
    pub offset: Option<DVector<f64>>,
}

/// Gaussian conditional of a shared mean with the scores integrated out:
/// `Υ_i = (diag(1/ω_i) + Σ)⁻¹`, `Σ* = (Σ_i Υ_i + Σ₀⁻¹)⁻¹`,
/// `μ* = Σ*(Σ_i Υ_i (k_i/ω_i − offset_i) + Σ₀⁻¹ μ₀)`.
pub fn mean_conditional<'a>(
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    observations: impl IntoIterator<Item = PseudoObservation<'a>>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let g = prior_mean.len();
    let prior_prec = linalg::spd_inverse(prior_cov, "prior covariance")?;
    let mut prec = prior_prec.clone();
    let mut rhs = &prior_prec * prior_mean;
    for obs in observations {
        let mut m = sigma.clone();
        for d in 0..g {
            m[(d, d)] += 1.0 / obs.omega[d];
        }
        let upsilon = linalg::spd_inverse(&m, "marginal pseudo-observation covariance")?;
        let mut y = DVector::from_iterator(g, (0..g).map(|d| obs.k[d] / obs.omega[d]));
        if let Some(off) = &obs.offset {
            y -= off;
        }
        rhs += &upsilon * y;
        prec += upsilon;
    }
    let mut cov = linalg::spd_inverse(&prec, "mean posterior precision")?;
    linalg::symmetrize(&mut cov);
    let mean = &cov * rhs;
    Ok((mean, cov))
}

/// Step 5: `μ` with the scores integrated out.
pub fn update_mu(state: &ChainState, hyper: &Hyperparams, streams: SweepStreams) -> Result<DVector<f64>> {
    let g = state.mu.len();
    let lat = &state.latent;
    let obs = (0..lat.n()).map(|i| PseudoObservation {
        omega: &lat.omega[i * g..(i + 1) * g],
        k: &lat.k[i * g..(i + 1) * g],
        offset: None,
    });
    let (mean, cov) = mean_conditional(&hyper.mu0, &hyper.sigma0, &state.sigma, obs)?;
    let mut rng = streams.open(StepTag::Mean, 0);
    linalg::sample_mvn(&mean, &cov, &mut rng)
}

/// Inverse-Wishart conditional `IW(ν₀ + n, Ψ₀ + Σ_i r_i r_iᵀ)`.
pub fn covariance_conditional(
    nu0: f64,
    psi0: &DMatrix<f64>,
    residuals: impl IntoIterator<Item = DVector<f64>>,
) -> (f64, DMatrix<f64>) {
    let mut scale = psi0.clone();
    let mut count = 0usize;
    for r in residuals {
        scale += &r * r.transpose();
        count += 1;
    }
    linalg::symmetrize(&mut scale);
    (nu0 + count as f64, scale)
}

/// Step 6: `Σ ~ IW(ν₀ + n, Ψ₀ + Σ_i (ψ_i − μ)(ψ_i − μ)ᵀ)`.
pub fn update_sigma(state: &ChainState, hyper: &Hyperparams, streams: SweepStreams) -> Result<DMatrix<f64>> {
    let lat = &state.latent;
    let (df, scale) = covariance_conditional(hyper.nu0, &hyper.psi0, (0..lat.n()).map(|i| lat.psi_row(i) - &state.mu));
    let mut rng = streams.open(StepTag::Covariance, 0);
    linalg::sample_inverse_wishart(df, &scale, &mut rng)
}
