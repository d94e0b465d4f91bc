//! Space-time extension of the score model.
//!
//! For subject `i` observed in epoch `t` at location `s_i`,
//! `ψ_i ~ N(β_t + ζ_i, Σ_t)` where `ψ_i` are the score logits,
//! `β_t ~ N(β, Σ_β)` shares a common hyperprior across epochs, and the
//! spatial effect is `ζ_i = L_t ζ̃_i` with `L_t` the lower Cholesky factor of
//! `Σ_t`. Each whitened component `ζ̃^{(g)}_t` is an independent zero-mean
//! Gaussian process over the epoch's locations with a squared-exponential
//! correlation.
//!
//! The sweep replaces the mean and covariance steps of the plain sampler:
//! epoch effects with the scores integrated out, then scores, whitened
//! spatial effects, epoch covariances (Metropolis-Hastings with an
//! inverse-Wishart proposal), the hierarchy `(β, Σ_β)`, and finally the
//! length scales by random-walk Metropolis on the log scale.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CategoricalDataset, GroupPartition, Hyperparams};
use crate::dist::logistic;
use crate::error::{Error, Result};
use crate::gibbs::{
    self, covariance_conditional, drive, mean_conditional, ChainConfig, ChainMeta, ChainSamples, ChainState, Draw,
    PseudoObservation, RetainFields, SweepStreams, Sweeper,
};
use crate::linalg::{self, Chol};
use crate::rng::{StepTag, StreamRoot};

/// Epoch and planar coordinates of every subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeCovariates {
    time_id: Vec<usize>,
    coords: Vec<[f64; 2]>,
    labels: Vec<String>,
    members: Vec<Vec<usize>>,
}

impl SpaceTimeCovariates {
    /// `time_id[i]` indexes `labels`; every epoch needs at least one subject.
    pub fn new(time_id: Vec<usize>, coords: Vec<[f64; 2]>, labels: Vec<String>) -> Result<Self> {
        if time_id.len() != coords.len() {
            return Err(Error::Dimension(format!("{} epochs for {} coordinates", time_id.len(), coords.len())));
        }
        if labels.is_empty() {
            return Err(Error::Validation("at least one epoch is required".into()));
        }
        let mut members = vec![Vec::new(); labels.len()];
        for (i, &t) in time_id.iter().enumerate() {
            if t >= labels.len() {
                return Err(Error::Validation(format!("subject {} has epoch index {t} of {}", i + 1, labels.len())));
            }
            if coords[i].iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("subject {} has non-finite coordinates", i + 1)));
            }
            members[t].push(i);
        }
        if let Some(t) = members.iter().position(Vec::is_empty) {
            return Err(Error::Validation(format!("epoch '{}' has no subjects", labels[t])));
        }
        Ok(Self { time_id, coords, labels, members })
    }

    /// All subjects in a single epoch.
    pub fn single_epoch(coords: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(vec![0; coords.len()], coords, vec!["1".into()])
    }

    pub fn n(&self) -> usize {
        self.time_id.len()
    }

    pub fn epochs(&self) -> usize {
        self.labels.len()
    }

    pub fn time_id(&self) -> &[usize] {
        &self.time_id
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Subjects of epoch `t`, increasing.
    pub fn members(&self, t: usize) -> &[usize] {
        &self.members[t]
    }

    fn epoch_coords(&self, t: usize) -> Vec<[f64; 2]> {
        self.members[t].iter().map(|&i| self.coords[i]).collect()
    }
}

/// Unnormalized squared-exponential form `exp{−½ Σ_d γ_d (a_d − b_d)²}`.
pub fn se_kernel(a: &[f64; 2], b: &[f64; 2], gammas: &[f64; 2]) -> f64 {
    let q: f64 = (0..2).map(|d| gammas[d] * (a[d] - b[d]).powi(2)).sum();
    (-0.5 * q).exp()
}

/// Squared-exponential correlation with nugget, normalized to unit diagonal:
/// `(exp{−½ Σ_d γ_d (a_d − b_d)²} + τ·1(same)) / (1 + τ)`.
///
/// `same` marks the diagonal (the same subject), not coincident locations.
pub fn se_correlation(a: &[f64; 2], b: &[f64; 2], gammas: &[f64; 2], tau: f64, same: bool) -> f64 {
    (se_kernel(a, b, gammas) + if same { tau } else { 0.0 }) / (1.0 + tau)
}

/// Correlation matrix of a set of locations.
pub fn correlation_matrix(coords: &[[f64; 2]], gammas: &[f64; 2], tau: f64) -> DMatrix<f64> {
    let n = coords.len();
    DMatrix::from_fn(n, n, |r, c| se_correlation(&coords[r], &coords[c], gammas, tau, r == c))
}

/// GP conditional mean and variance at `test` locations given noise-free
/// values of the process at `train` locations (the nugget is the only noise).
/// The prior variance at a new location is 1.
pub fn gp_conditional(
    train: &[[f64; 2]],
    values: &[f64],
    test: &[[f64; 2]],
    gammas: &[f64; 2],
    tau: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if train.len() != values.len() {
        return Err(Error::Dimension(format!("{} locations for {} values", train.len(), values.len())));
    }
    if let Some(bad) = test.iter().position(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(Error::Domain(format!("prediction point {} has non-finite coordinates", bad + 1)));
    }
    let chol = linalg::cholesky(&correlation_matrix(train, gammas, tau), "spatial correlation matrix")?;
    let alpha = chol.solve(&DVector::from_row_slice(values));
    let mut means = Vec::with_capacity(test.len());
    let mut vars = Vec::with_capacity(test.len());
    for s in test {
        let kstar = DVector::from_iterator(train.len(), train.iter().map(|x| se_kernel(s, x, gammas) / (1.0 + tau)));
        means.push(kstar.dot(&alpha));
        let v = chol.l().solve_lower_triangular(&kstar).expect("triangular factor is invertible");
        vars.push((1.0 - v.norm_squared()).max(0.0));
    }
    Ok((means, vars))
}

/// Hyperparameters of the space-time layer. The epoch covariances `Σ_t` use
/// `IW(ν₀, Ψ₀)` from [`Hyperparams`]; `μ₀`, `Σ₀` there are unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StHyper {
    /// Prior of the grand mean `β ~ N(beta_mean, beta_cov)`.
    pub beta_mean: DVector<f64>,
    pub beta_cov: DMatrix<f64>,
    /// `Σ_β ~ IW(nu_beta, psi_beta)`.
    pub nu_beta: f64,
    pub psi_beta: DMatrix<f64>,
    /// `log γ ~ N(log_gamma_mean, log_gamma_sd²)`.
    pub log_gamma_mean: f64,
    pub log_gamma_sd: f64,
    pub nugget: f64,
    /// Initial random-walk sd on `log γ`.
    pub proposal_sd: f64,
    pub target_acceptance: f64,
    /// When false, `ζ ≡ 0` and the length scales are not updated.
    pub spatial: bool,
    /// When true, `β = beta_mean` and `Σ_β = beta_cov` are held fixed.
    pub fixed_hierarchy: bool,
}

impl StHyper {
    /// `β ~ N(0, I)`, `Σ_β ~ IW(G + 1, I)`, `log γ ~ N(0, 2²)`, `τ = 1e−6`.
    pub fn default_for(groups: usize) -> Self {
        Self {
            beta_mean: DVector::zeros(groups),
            beta_cov: DMatrix::identity(groups, groups),
            nu_beta: groups as f64 + 1.0,
            psi_beta: DMatrix::identity(groups, groups),
            log_gamma_mean: 0.0,
            log_gamma_sd: 2.0,
            nugget: 1e-6,
            proposal_sd: 0.3,
            target_acceptance: 0.44,
            spatial: true,
            fixed_hierarchy: false,
        }
    }

    /// No spatial effect and `β_t ~ N(μ₀, Σ₀)` directly: with one epoch this
    /// is the plain model.
    pub fn without_space(hyper: &Hyperparams) -> Self {
        Self {
            beta_mean: hyper.mu0.clone(),
            beta_cov: hyper.sigma0.clone(),
            spatial: false,
            fixed_hierarchy: true,
            ..Self::default_for(hyper.mu0.len())
        }
    }

    pub fn validate(&self, groups: usize) -> Result<()> {
        if self.beta_mean.len() != groups || self.beta_cov.nrows() != groups || self.psi_beta.nrows() != groups {
            return Err(Error::Dimension(format!("space-time hyperparameters must have dimension G = {groups}")));
        }
        linalg::check_spd(&self.beta_cov, "beta covariance")?;
        linalg::check_spd(&self.psi_beta, "Psi_beta")?;
        if !(self.nu_beta > groups as f64 - 1.0) {
            return Err(Error::Validation(format!("nu_beta = {} must exceed G - 1", self.nu_beta)));
        }
        if !(self.nugget > 0.0) {
            return Err(Error::Validation("nugget must be positive".into()));
        }
        if !(self.log_gamma_sd > 0.0) || !self.log_gamma_mean.is_finite() {
            return Err(Error::Validation("length-scale prior needs a finite mean and positive sd".into()));
        }
        if !(self.proposal_sd >= 0.0) {
            return Err(Error::Validation("proposal sd must be non-negative".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Validation("target acceptance must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Space-time parameters of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StBlock {
    pub beta_t: Vec<DVector<f64>>,
    pub beta: DVector<f64>,
    pub sigma_beta: DMatrix<f64>,
    pub sigma_t: Vec<DMatrix<f64>>,
    /// Whitened spatial effects `ζ̃`, `n × G` row-major.
    pub zeta_tilde: Vec<f64>,
    /// `γ^{(g)}_{td}` at index `(t·G + g)·2 + d`.
    pub length_scales: Vec<f64>,
    pub nugget: f64,
    /// Current random-walk sd per length scale.
    pub proposal_sd: Vec<f64>,
    pub accepted: Vec<u64>,
    pub proposed: Vec<u64>,
}

impl StBlock {
    pub fn epochs(&self) -> usize {
        self.beta_t.len()
    }

    pub fn groups(&self) -> usize {
        self.beta.len()
    }

    pub fn gammas(&self, t: usize, g: usize) -> [f64; 2] {
        let o = (t * self.groups() + g) * 2;
        [self.length_scales[o], self.length_scales[o + 1]]
    }

    /// `ζ_i = L_t ζ̃_i` for subject `i` in epoch `t`.
    pub fn zeta(&self, i: usize, t: usize) -> Result<DVector<f64>> {
        let g = self.groups();
        let l = linalg::cholesky(&self.sigma_t[t], "Sigma_t")?.l();
        Ok(l * DVector::from_row_slice(&self.zeta_tilde[i * g..(i + 1) * g]))
    }

    /// Acceptance rate of each length-scale update so far.
    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .zip(&self.proposed)
            .map(|(&a, &p)| if p == 0 { 0.0 } else { a as f64 / p as f64 })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        linalg::check_spd(&self.sigma_beta, "Sigma_beta")?;
        for (t, s) in self.sigma_t.iter().enumerate() {
            linalg::check_spd(s, &format!("Sigma_t for epoch {}", t + 1))?;
        }
        if self.length_scales.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Validation("length scales must be positive".into()));
        }
        if !(self.nugget > 0.0) {
            return Err(Error::Validation("nugget must be positive".into()));
        }
        Ok(())
    }
}

/// Retained space-time fields of one draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StDraw {
    /// `T × G` row-major.
    pub beta_t: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma_beta: Vec<f64>,
    /// Per epoch, `G × G` row-major.
    pub sigma_t: Vec<Vec<f64>>,
    pub length_scales: Vec<f64>,
    /// `n × G` row-major.
    pub zeta_tilde: Vec<f64>,
}

impl StDraw {
    pub fn from_block(block: &StBlock) -> Self {
        Self {
            beta_t: block.beta_t.iter().flat_map(|b| b.iter().copied()).collect(),
            beta: block.beta.iter().copied().collect(),
            sigma_beta: linalg::to_row_major(&block.sigma_beta),
            sigma_t: block.sigma_t.iter().map(linalg::to_row_major).collect(),
            length_scales: block.length_scales.clone(),
            zeta_tilde: block.zeta_tilde.clone(),
        }
    }

    pub fn groups(&self) -> usize {
        self.beta.len()
    }

    pub fn epochs(&self) -> usize {
        self.sigma_t.len()
    }

    pub fn beta_t(&self, t: usize) -> &[f64] {
        let g = self.groups();
        &self.beta_t[t * g..(t + 1) * g]
    }

    pub fn sigma_t(&self, t: usize) -> DMatrix<f64> {
        let g = self.groups();
        linalg::from_row_major(g, g, &self.sigma_t[t])
    }

    pub fn gammas(&self, t: usize, g: usize) -> [f64; 2] {
        let o = (t * self.groups() + g) * 2;
        [self.length_scales[o], self.length_scales[o + 1]]
    }
}

/// Epoch effects with the scores integrated out: conjugate Gaussian draw of
/// each `β_t` from the pseudo-observations `k_i/ω_i − ζ_i` of its subjects.
pub fn update_beta_t(
    state: &ChainState,
    block: &StBlock,
    cov: &SpaceTimeCovariates,
    streams: SweepStreams,
) -> Result<Vec<DVector<f64>>> {
    let g = block.groups();
    let lat = &state.latent;
    (0..block.epochs())
        .map(|t| {
            let l = linalg::cholesky(&block.sigma_t[t], "Sigma_t")?.l();
            let obs = cov.members(t).iter().map(|&i| PseudoObservation {
                omega: &lat.omega()[i * g..(i + 1) * g],
                k: &lat.k()[i * g..(i + 1) * g],
                offset: Some(&l * DVector::from_row_slice(&block.zeta_tilde[i * g..(i + 1) * g])),
            });
            let (mean, c) = mean_conditional(&block.beta, &block.sigma_beta, &block.sigma_t[t], obs)?;
            let mut rng = streams.open(StepTag::EpochMeans, t as u64);
            linalg::sample_mvn(&mean, &c, &mut rng)
        })
        .collect()
}

/// Scores given `β_t + ζ_i` and `Σ_t`.
pub fn update_scores(
    state: &ChainState,
    block: &StBlock,
    cov: &SpaceTimeCovariates,
    streams: SweepStreams,
) -> Result<Vec<f64>> {
    let g = block.groups();
    let precisions: Vec<DMatrix<f64>> =
        block.sigma_t.iter().map(|s| linalg::spd_inverse(s, "Sigma_t")).collect::<Result<_>>()?;
    let factors: Vec<DMatrix<f64>> =
        block.sigma_t.iter().map(|s| Ok(linalg::cholesky(s, "Sigma_t")?.l())).collect::<Result<_>>()?;
    let tid = cov.time_id();
    gibbs::steps::draw_scores(
        &state.latent,
        |i| &block.beta_t[tid[i]] + &factors[tid[i]] * DVector::from_row_slice(&block.zeta_tilde[i * g..(i + 1) * g]),
        |i| &precisions[tid[i]],
        streams,
    )
}

/// Whitened residuals `L_t⁻¹(ψ_i − β_t)` for the subjects of epoch `t`,
/// one vector per group.
fn whitened_residuals(
    state: &ChainState,
    block: &StBlock,
    cov: &SpaceTimeCovariates,
    t: usize,
) -> Result<Vec<Vec<f64>>> {
    let g = block.groups();
    let l = linalg::cholesky(&block.sigma_t[t], "Sigma_t")?.l();
    let mut out = vec![Vec::with_capacity(cov.members(t).len()); g];
    for &i in cov.members(t) {
        let r = state.latent.psi_row(i) - &block.beta_t[t];
        let w = l.solve_lower_triangular(&r).expect("triangular factor is invertible");
        for (gg, o) in out.iter_mut().enumerate() {
            o.push(w[gg]);
        }
    }
    Ok(out)
}

/// Posterior draw of a GP vector `f ~ N(0, K)` observed as `y = f + e`,
/// `e ~ N(0, I)`, by pathwise conditioning:
/// `f₀ + K (K + I)⁻¹ (y − f₀ − e₀)` with `f₀ ~ N(0, K)`, `e₀ ~ N(0, I)`.
pub fn gp_posterior_draw<R: Rng + ?Sized>(k: &DMatrix<f64>, y: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let n = y.len();
    let kc = linalg::cholesky(k, "spatial correlation matrix")?;
    let mut kpi = k.clone();
    for d in 0..n {
        kpi[(d, d)] += 1.0;
    }
    let kpic = linalg::cholesky(&kpi, "spatial posterior matrix")?;
    let f0 = kc.l() * linalg::standard_normal_vector(n, rng);
    let e0 = linalg::standard_normal_vector(n, rng);
    let r = DVector::from_row_slice(y) - &f0 - e0;
    Ok((f0 + k * kpic.solve(&r)).iter().copied().collect())
}

/// Whitened spatial effects, independently per (epoch, group).
pub fn update_zeta(
    state: &ChainState,
    block: &StBlock,
    cov: &SpaceTimeCovariates,
    streams: SweepStreams,
) -> Result<Vec<f64>> {
    let g = block.groups();
    let jobs: Vec<(usize, usize)> = (0..block.epochs()).flat_map(|t| (0..g).map(move |gg| (t, gg))).collect();
    let residuals: Vec<Vec<Vec<f64>>> =
        (0..block.epochs()).map(|t| whitened_residuals(state, block, cov, t)).collect::<Result<_>>()?;
    let draws: Vec<Result<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(t, gg)| {
            let k = correlation_matrix(&cov.epoch_coords(t), &block.gammas(t, gg), block.nugget);
            let mut rng = streams.open(StepTag::Spatial, (t * g + gg) as u64);
            gp_posterior_draw(&k, &residuals[t][gg], &mut rng)
        })
        .collect();
    let mut zt = vec![0.0; block.zeta_tilde.len()];
    for (&(t, gg), d) in jobs.iter().zip(draws) {
        for (&i, v) in cov.members(t).iter().zip(d?) {
            zt[i * g + gg] = v;
        }
    }
    Ok(zt)
}

/// `−½ Σ_g ζ̃_gᵀ (K_g⁻¹ − I) ζ̃_g`: the part of the spatial prior density that
/// the inverse-Wishart proposal for `Σ_t` does not account for.
fn spatial_correction(zt: &[Vec<f64>], kchols: &[Chol]) -> f64 {
    zt.iter()
        .zip(kchols)
        .map(|(z, c)| {
            let v = DVector::from_row_slice(z);
            let w = c.l().solve_lower_triangular(&v).expect("triangular factor is invertible");
            -0.5 * (w.norm_squared() - v.norm_squared())
        })
        .sum()
}

/// Epoch covariances given scores, `β_t` and the spatial effects `ζ`.
///
/// Without spatial effects this is the conjugate `IW(ν₀ + n_t, Ψ₀ + Σ r rᵀ)`
/// draw. With them, `Σ_t` also enters the prior of `ζ` through `L_t`; a
/// Metropolis-Hastings step proposes from `IW(ν₀ + 2n_t, Ψ₀ + Σ r rᵀ + Σ ζζᵀ)`
/// and corrects for the non-identity spatial correlation. `ζ` is held fixed,
/// so `ζ̃` is recomputed under the accepted `Σ_t`. Returns the covariances
/// and the updated `ζ̃`.
pub fn update_sigma_t(
    state: &ChainState,
    block: &StBlock,
    hyper: &Hyperparams,
    st_hyper: &StHyper,
    cov: &SpaceTimeCovariates,
    streams: SweepStreams,
) -> Result<(Vec<DMatrix<f64>>, Vec<f64>)> {
    let g = block.groups();
    let mut sigma_t = block.sigma_t.clone();
    let mut zt_all = block.zeta_tilde.clone();
    for t in 0..block.epochs() {
        let members = cov.members(t);
        let l_old = linalg::cholesky(&block.sigma_t[t], "Sigma_t")?.l();
        let zetas: Vec<DVector<f64>> =
            members.iter().map(|&i| &l_old * DVector::from_row_slice(&block.zeta_tilde[i * g..(i + 1) * g])).collect();
        let residuals = members.iter().zip(&zetas).map(|(&i, z)| state.latent.psi_row(i) - &block.beta_t[t] - z);
        let mut rng = streams.open(StepTag::Covariance, t as u64);
        if !st_hyper.spatial {
            let (df, scale) = covariance_conditional(hyper.nu0, &hyper.psi0, residuals);
            sigma_t[t] = linalg::sample_inverse_wishart(df, &scale, &mut rng)?;
            continue;
        }
        let (df, scale) = covariance_conditional(hyper.nu0, &hyper.psi0, residuals.chain(zetas.iter().cloned()));
        let proposal = linalg::sample_inverse_wishart(df, &scale, &mut rng)?;
        let coords = cov.epoch_coords(t);
        let kchols: Vec<Chol> = (0..g)
            .map(|gg| {
                linalg::cholesky(
                    &correlation_matrix(&coords, &block.gammas(t, gg), block.nugget),
                    "spatial correlation matrix",
                )
            })
            .collect::<Result<_>>()?;
        let whiten = |l: &DMatrix<f64>| -> Vec<Vec<f64>> {
            let mut out = vec![Vec::with_capacity(members.len()); g];
            for z in &zetas {
                let w = l.solve_lower_triangular(z).expect("triangular factor is invertible");
                for (gg, o) in out.iter_mut().enumerate() {
                    o.push(w[gg]);
                }
            }
            out
        };
        let l_new = linalg::cholesky(&proposal, "proposed Sigma_t")?.l();
        let zt_new = whiten(&l_new);
        let log_ratio = spatial_correction(&zt_new, &kchols) - spatial_correction(&whiten(&l_old), &kchols);
        let u: f64 = rng.random();
        if u.ln() < log_ratio {
            sigma_t[t] = proposal;
            for (m, &i) in members.iter().enumerate() {
                for (gg, col) in zt_new.iter().enumerate() {
                    zt_all[i * g + gg] = col[m];
                }
            }
        }
    }
    Ok((sigma_t, zt_all))
}

/// Grand mean `β` and covariance `Σ_β` given the epoch effects.
pub fn update_hierarchy(
    block: &StBlock,
    st_hyper: &StHyper,
    streams: SweepStreams,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if st_hyper.fixed_hierarchy {
        return Ok((st_hyper.beta_mean.clone(), st_hyper.beta_cov.clone()));
    }
    let tt = block.epochs() as f64;
    let prior_prec = linalg::spd_inverse(&st_hyper.beta_cov, "beta covariance")?;
    let sb_inv = linalg::spd_inverse(&block.sigma_beta, "Sigma_beta")?;
    let sum: DVector<f64> = block.beta_t.iter().fold(DVector::zeros(block.groups()), |a, b| a + b);
    let mut post_cov = linalg::spd_inverse(&(&prior_prec + &sb_inv * tt), "beta posterior precision")?;
    linalg::symmetrize(&mut post_cov);
    let post_mean = &post_cov * (&prior_prec * &st_hyper.beta_mean + &sb_inv * sum);
    let beta = linalg::sample_mvn(&post_mean, &post_cov, &mut streams.open(StepTag::Hierarchy, 0))?;
    let (df, scale) =
        covariance_conditional(st_hyper.nu_beta, &st_hyper.psi_beta, block.beta_t.iter().map(|b| b - &beta));
    let sigma_beta = linalg::sample_inverse_wishart(df, &scale, &mut streams.open(StepTag::Hierarchy, 1))?;
    Ok((beta, sigma_beta))
}

/// GP log density of one whitened component; `None` when the correlation
/// matrix fails to factor.
fn gp_log_likelihood(values: &DVector<f64>, coords: &[[f64; 2]], gammas: &[f64; 2], tau: f64) -> Option<f64> {
    let chol = linalg::cholesky(&correlation_matrix(coords, gammas, tau), "spatial correlation matrix").ok()?;
    Some(linalg::mvn_logpdf_chol(values, &DVector::zeros(values.len()), &chol))
}

/// Log density of the normal prior on `log γ`, up to a constant.
fn log_gamma_prior(log_gamma: f64, st_hyper: &StHyper) -> f64 {
    let z = (log_gamma - st_hyper.log_gamma_mean) / st_hyper.log_gamma_sd;
    -0.5 * z * z
}

/// Length scales by random-walk Metropolis on `log γ`, one coordinate at a
/// time, targeting the GP density of `ζ̃^{(g)}_t` times the prior on `log γ`.
/// Target and proposal are both on the log scale, so the ratio carries no
/// Jacobian. Returns new values and per-coordinate acceptance flags.
pub fn update_length_scales(
    block: &StBlock,
    st_hyper: &StHyper,
    cov: &SpaceTimeCovariates,
    streams: SweepStreams,
) -> Vec<(f64, bool)> {
    let g = block.groups();
    let jobs: Vec<(usize, usize)> = (0..block.epochs()).flat_map(|t| (0..g).map(move |gg| (t, gg))).collect();
    let out: Vec<[(f64, bool); 2]> = jobs
        .par_iter()
        .map(|&(t, gg)| {
            let coords = cov.epoch_coords(t);
            let values =
                DVector::from_iterator(coords.len(), cov.members(t).iter().map(|&i| block.zeta_tilde[i * g + gg]));
            let mut gammas = block.gammas(t, gg);
            let mut flags = [false; 2];
            let mut current = gp_log_likelihood(&values, &coords, &gammas, block.nugget);
            for d in 0..2 {
                let idx = (t * g + gg) * 2 + d;
                let mut rng = streams.open(StepTag::LengthScales, idx as u64);
                let step: f64 = StandardNormal.sample(&mut rng);
                let u: f64 = rng.random();
                let sd = block.proposal_sd[idx];
                if sd == 0.0 {
                    flags[d] = true;
                    continue;
                }
                let (old_log, new_log) = (gammas[d].ln(), gammas[d].ln() + sd * step);
                let mut cand = gammas;
                cand[d] = new_log.exp();
                if !(cand[d] > 0.0 && cand[d].is_finite()) {
                    continue;
                }
                let proposed = gp_log_likelihood(&values, &coords, &cand, block.nugget);
                let ratio = match (current, proposed) {
                    (Some(c), Some(n)) => {
                        n + log_gamma_prior(new_log, st_hyper) - c - log_gamma_prior(old_log, st_hyper)
                    }
                    (None, Some(_)) => f64::INFINITY,
                    _ => f64::NEG_INFINITY,
                };
                if u.ln() < ratio {
                    gammas = cand;
                    current = proposed;
                    flags[d] = true;
                }
            }
            [(gammas[0], flags[0]), (gammas[1], flags[1])]
        })
        .collect();
    out.into_iter().flatten().collect()
}

/// Robbins-Monro style tuning applied every `ADAPT_WINDOW` sweeps during
/// burn-in.
const ADAPT_WINDOW: usize = 50;

/// Space-time sampler.
#[derive(Debug, Clone)]
pub struct StSampler {
    dataset: CategoricalDataset,
    partition: GroupPartition,
    hyper: Hyperparams,
    st_hyper: StHyper,
    covariates: SpaceTimeCovariates,
    root: StreamRoot,
    state: ChainState,
    block: StBlock,
    next_iteration: usize,
    adapt_until: usize,
    adaptation: StAdaptation,
}

/// Proposal tuning state carried across sweeps during burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StAdaptation {
    /// Acceptances per length scale in the current tuning window.
    pub window_accepts: Vec<u64>,
    /// Tuning windows completed so far.
    pub rounds: usize,
}

impl StSampler {
    pub fn new(
        dataset: CategoricalDataset,
        partition: GroupPartition,
        hyper: Hyperparams,
        st_hyper: StHyper,
        covariates: SpaceTimeCovariates,
        seed: u64,
    ) -> Result<Self> {
        if covariates.n() != dataset.n() {
            return Err(Error::Dimension(format!(
                "{} subjects have covariates, dataset has {}",
                covariates.n(),
                dataset.n()
            )));
        }
        let g = partition.groups();
        st_hyper.validate(g)?;
        let root = StreamRoot::new(seed);
        let mut state = gibbs::init_state(&dataset, &partition, &hyper, root)?;
        let tt = covariates.epochs();
        let block = StBlock {
            beta_t: vec![st_hyper.beta_mean.clone(); tt],
            beta: st_hyper.beta_mean.clone(),
            sigma_beta: st_hyper.beta_cov.clone(),
            sigma_t: vec![hyper.psi0.clone(); tt],
            zeta_tilde: vec![0.0; dataset.n() * g],
            length_scales: vec![st_hyper.log_gamma_mean.exp(); tt * g * 2],
            nugget: st_hyper.nugget,
            proposal_sd: vec![st_hyper.proposal_sd; tt * g * 2],
            accepted: vec![0; tt * g * 2],
            proposed: vec![0; tt * g * 2],
        };
        state.mu = block.beta.clone();
        state.sigma = block.sigma_beta.clone();
        let len = block.length_scales.len();
        Ok(Self {
            dataset,
            partition,
            hyper,
            st_hyper,
            covariates,
            root,
            state,
            block,
            next_iteration: 0,
            adapt_until: 0,
            adaptation: StAdaptation { window_accepts: vec![0; len], rounds: 0 },
        })
    }

    /// Resumes from stored states.
    #[allow(clippy::too_many_arguments)]
    pub fn from_state(
        dataset: CategoricalDataset,
        partition: GroupPartition,
        hyper: Hyperparams,
        st_hyper: StHyper,
        covariates: SpaceTimeCovariates,
        seed: u64,
        state: ChainState,
        block: StBlock,
        adaptation: StAdaptation,
        next_iteration: usize,
    ) -> Result<Self> {
        let mut s = Self::new(dataset, partition, hyper, st_hyper, covariates, seed)?;
        if block.zeta_tilde.len() != s.block.zeta_tilde.len()
            || block.epochs() != s.block.epochs()
            || adaptation.window_accepts.len() != block.length_scales.len()
        {
            return Err(Error::Dimension("stored space-time state does not match the covariates".into()));
        }
        s.state = state;
        s.block = block;
        s.adaptation = adaptation;
        s.next_iteration = next_iteration;
        Ok(s)
    }

    pub fn adaptation(&self) -> &StAdaptation {
        &self.adaptation
    }

    /// Proposal sds adapt during sweeps `0..iterations` and are frozen after.
    pub fn with_adaptation(mut self, iterations: usize) -> Self {
        self.adapt_until = iterations;
        self
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut ChainState {
        &mut self.state
    }

    pub fn block(&self) -> &StBlock {
        &self.block
    }

    pub fn block_mut(&mut self) -> &mut StBlock {
        &mut self.block
    }

    pub fn covariates(&self) -> &SpaceTimeCovariates {
        &self.covariates
    }

    pub fn st_hyper(&self) -> &StHyper {
        &self.st_hyper
    }

    pub fn set_codes(&mut self, codes: Vec<u16>) -> Result<()> {
        self.dataset.set_codes(codes)
    }

    fn adapt(&mut self) {
        let it = self.next_iteration;
        if it >= self.adapt_until || !(it + 1).is_multiple_of(ADAPT_WINDOW) {
            return;
        }
        self.adaptation.rounds += 1;
        let delta = (1.0 / (self.adaptation.rounds as f64).sqrt()).min(0.1);
        for (sd, acc) in self.block.proposal_sd.iter_mut().zip(self.adaptation.window_accepts.iter_mut()) {
            let rate = *acc as f64 / ADAPT_WINDOW as f64;
            *sd *= if rate > self.st_hyper.target_acceptance { delta.exp() } else { (-delta).exp() };
            *acc = 0;
        }
    }
}

impl Sweeper for StSampler {
    fn iteration(&self) -> usize {
        self.next_iteration
    }

    fn sweep(&mut self) -> Result<()> {
        let streams = SweepStreams::new(self.root, self.next_iteration as u64);
        let (ds, part, hyper, sth, cov) =
            (&self.dataset, &self.partition, &self.hyper, &self.st_hyper, &self.covariates);
        let st = &mut self.state;
        let b = &mut self.block;
        st.kernels = gibbs::update_kernels(st, ds, hyper, streams);
        st.latent.z = gibbs::update_indicators(st, ds, part, streams)?;
        st.latent.refresh_k(part);
        st.latent.omega = gibbs::update_omega(&st.latent, part, streams)?;
        b.beta_t = update_beta_t(st, b, cov, streams)?;
        st.latent.psi = update_scores(st, b, cov, streams)?;
        if sth.spatial {
            b.zeta_tilde = update_zeta(st, b, cov, streams)?;
        }
        let (sigma_t, zt) = update_sigma_t(st, b, hyper, sth, cov, streams)?;
        b.sigma_t = sigma_t;
        b.zeta_tilde = zt;
        let (beta, sigma_beta) = update_hierarchy(b, sth, streams)?;
        b.beta = beta;
        b.sigma_beta = sigma_beta;
        st.mu = b.beta.clone();
        st.sigma = b.sigma_beta.clone();
        if sth.spatial {
            let moves = update_length_scales(b, sth, cov, streams);
            for (idx, (v, acc)) in moves.into_iter().enumerate() {
                b.length_scales[idx] = v;
                b.proposed[idx] += 1;
                if acc {
                    b.accepted[idx] += 1;
                    self.adaptation.window_accepts[idx] += 1;
                }
            }
            self.adapt();
        }
        debug_assert!(self.state.validate(&self.partition).is_ok() && self.block.validate().is_ok());
        self.next_iteration += 1;
        Ok(())
    }

    fn record(&self, retain: RetainFields) -> Draw {
        let mut d = Draw::from_state(self.next_iteration - 1, &self.state, retain);
        d.st = Some(StDraw::from_block(&self.block));
        d
    }
}

/// Runs a fresh space-time chain. Proposal sds adapt during burn-in only.
pub fn run_st_chain(
    dataset: &CategoricalDataset,
    partition: &GroupPartition,
    hyper: &Hyperparams,
    st_hyper: &StHyper,
    covariates: &SpaceTimeCovariates,
    config: &ChainConfig,
) -> Result<ChainSamples> {
    config.validate()?;
    let mut sampler = StSampler::new(
        dataset.clone(),
        partition.clone(),
        hyper.clone(),
        st_hyper.clone(),
        covariates.clone(),
        config.seed,
    )?
    .with_adaptation(config.burn_in);
    let mut meta = ChainMeta::new(dataset, partition, config, "spatiotemporal");
    meta.epochs = Some(covariates.time_id().to_vec());
    let mut samples = ChainSamples { meta, draws: Vec::with_capacity(config.retained_count()) };
    drive(&mut sampler, config, &mut samples)?;
    Ok(samples)
}

/// Posterior summary of the spatial effect at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPrediction {
    /// 0-based epoch and group.
    pub epoch: usize,
    pub group: usize,
    pub x: f64,
    pub y: f64,
    /// Posterior mean and sd of `ζ^{(g)}_t(s)`.
    pub mean: f64,
    pub sd: f64,
    /// Posterior mean of `logistic(β^{(g)}_t + ζ^{(g)}_t(s))` with `ζ` at its
    /// conditional mean in each draw.
    pub prob_scale_mean: f64,
}

/// Posterior predictive summaries of `ζ_t` on a grid, per epoch and group.
///
/// In each draw the whitened effects at the grid points follow the GP
/// conditional given `ζ̃` at the epoch's training locations; they are mapped
/// through `L_t`. Means and variances are combined across draws by the law
/// of total variance.
pub fn predict_zeta(
    grid: &[[f64; 2]],
    covariates: &SpaceTimeCovariates,
    samples: &ChainSamples,
    nugget: f64,
) -> Result<Vec<GridPrediction>> {
    if let Some(bad) = grid.iter().position(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(Error::Domain(format!("grid point {} has non-finite coordinates", bad + 1)));
    }
    let draws: Vec<&StDraw> = samples
        .draws
        .iter()
        .map(|d| d.st.as_ref().ok_or_else(|| Error::Config("space-time fields were not retained".into())))
        .collect::<Result<_>>()?;
    let first = draws.first().ok_or_else(|| Error::Config("no retained draws".into()))?;
    let (tt, g) = (first.epochs(), first.groups());
    if tt != covariates.epochs() || first.zeta_tilde.len() != covariates.n() * g {
        return Err(Error::Dimension("covariates do not match the chain".into()));
    }
    let m = grid.len();
    let per_draw: Vec<Result<Vec<(f64, f64, f64)>>> = draws
        .par_iter()
        .map(|d| {
            let mut out = Vec::with_capacity(tt * g * m);
            for t in 0..tt {
                let coords = covariates.epoch_coords(t);
                let mut means = Vec::with_capacity(g);
                let mut vars = Vec::with_capacity(g);
                for gg in 0..g {
                    let vals: Vec<f64> = covariates.members(t).iter().map(|&i| d.zeta_tilde[i * g + gg]).collect();
                    let (mu, var) = gp_conditional(&coords, &vals, grid, &d.gammas(t, gg), nugget)?;
                    means.push(mu);
                    vars.push(var);
                }
                let l = linalg::cholesky(&d.sigma_t(t), "Sigma_t")?.l();
                let beta = d.beta_t(t);
                for gg in 0..g {
                    for s in 0..m {
                        let mean: f64 = (0..g).map(|h| l[(gg, h)] * means[h][s]).sum();
                        let var: f64 = (0..g).map(|h| l[(gg, h)].powi(2) * vars[h][s]).sum();
                        out.push((mean, var, logistic(beta[gg] + mean)));
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let nd = draws.len() as f64;
    let mut acc = vec![(0.0, 0.0, 0.0, 0.0); tt * g * m];
    for d in per_draw {
        for (a, (mean, var, prob)) in acc.iter_mut().zip(d?) {
            a.0 += mean;
            a.1 += mean * mean;
            a.2 += var;
            a.3 += prob;
        }
    }
    let mut out = Vec::with_capacity(tt * g * m);
    for t in 0..tt {
        for gg in 0..g {
            for (s, pt) in grid.iter().enumerate() {
                let a = acc[(t * g + gg) * m + s];
                let mean = a.0 / nd;
                let var = (a.2 / nd + (a.1 / nd - mean * mean)).max(0.0);
                out.push(GridPrediction {
                    epoch: t,
                    group: gg,
                    x: pt[0],
                    y: pt[1],
                    mean,
                    sd: var.sqrt(),
                    prob_scale_mean: a.3 / nd,
                });
            }
        }
    }
    Ok(out)
}

/// Writes grid predictions as CSV: `epoch,group,x,y,mean,sd,prob_scale_mean`
/// with the epoch label and a 1-based group.
pub fn write_grid_csv<W: std::io::Write>(out: W, predictions: &[GridPrediction], labels: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Config(format!("writing grid predictions: {e}"));
    w.write_record(["epoch", "group", "x", "y", "mean", "sd", "prob_scale_mean"]).map_err(io)?;
    for p in predictions {
        let label = labels.get(p.epoch).cloned().unwrap_or_else(|| (p.epoch + 1).to_string());
        w.write_record([
            label,
            (p.group + 1).to_string(),
            p.x.to_string(),
            p.y.to_string(),
            p.mean.to_string(),
            p.sd.to_string(),
            p.prob_scale_mean.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing grid predictions: {e}")))?;
    Ok(())
}
