use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{CategoricalDataset, GroupPartition};
use crate::dist::logistic;
use crate::error::{Error, Result};
use crate::linalg;

/// Kernel probabilities `θ^{(j)}_h` for every variable and profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSet {
    profiles: usize,
    levels: Vec<usize>,
    /// Per variable, `profiles × d_j` row-major (profile-major).
    theta: Vec<Vec<f64>>,
}

impl KernelSet {
    /// `theta[j][h]` is the probability vector of variable `j` under profile `h`.
    pub fn new(theta: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let profiles = theta.first().map(Vec::len).unwrap_or(0);
        if profiles == 0 {
            return Err(Error::Argument("kernel set needs at least one variable and profile".into()));
        }
        let mut levels = Vec::with_capacity(theta.len());
        let mut flat = Vec::with_capacity(theta.len());
        for (j, per_var) in theta.into_iter().enumerate() {
            if per_var.len() != profiles {
                return Err(Error::Dimension(format!("variable {} has {} profiles", j + 1, per_var.len())));
            }
            let d = per_var[0].len();
            let mut row = Vec::with_capacity(profiles * d);
            for (h, v) in per_var.into_iter().enumerate() {
                if v.len() != d {
                    return Err(Error::Dimension(format!("variable {} profile {} length", j + 1, h + 1)));
                }
                check_probability_vector(&v, j, h)?;
                row.extend(v);
            }
            levels.push(d);
            flat.push(row);
        }
        Ok(Self { profiles, levels, theta: flat })
    }

    pub(crate) fn from_flat(profiles: usize, levels: Vec<usize>, theta: Vec<Vec<f64>>) -> Self {
        Self { profiles, levels, theta }
    }

    pub fn profiles(&self) -> usize {
        self.profiles
    }

    pub fn p(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    #[inline]
    pub fn prob(&self, j: usize, h: usize, k: usize) -> f64 {
        self.theta[j][h * self.levels[j] + k]
    }

    pub fn profile(&self, j: usize, h: usize) -> &[f64] {
        let d = self.levels[j];
        &self.theta[j][h * d..(h + 1) * d]
    }

    pub(crate) fn profile_mut(&mut self, j: usize, h: usize) -> &mut [f64] {
        let d = self.levels[j];
        &mut self.theta[j][h * d..(h + 1) * d]
    }

    /// Flattened `profiles × d_j` block of variable `j`.
    pub fn variable(&self, j: usize) -> &[f64] {
        &self.theta[j]
    }

    /// Copy with profiles reordered so that output profile `h` is input
    /// profile `perm[h]` for every variable in `variables`.
    pub fn permuted(&self, variables: &[usize], perm: &[usize]) -> Self {
        let mut out = self.clone();
        for &j in variables {
            for (h, &src) in perm.iter().enumerate() {
                let v = self.profile(j, src).to_vec();
                out.profile_mut(j, h).copy_from_slice(&v);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for j in 0..self.p() {
            for h in 0..self.profiles {
                check_probability_vector(self.profile(j, h), j, h)?;
            }
        }
        Ok(())
    }
}

fn check_probability_vector(v: &[f64], j: usize, h: usize) -> Result<()> {
    let s: f64 = v.iter().sum();
    if v.iter().any(|&x| !(x >= 0.0)) || (s - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(format!(
            "kernel of variable {} profile {} is not a probability vector (sum {s})",
            j + 1,
            h + 1
        )));
    }
    Ok(())
}

/// Per-subject latent quantities of the two-profile sampler.
///
/// `lambda[i, g]` is the probability of profile 2 in group `g`; the latent
/// Gaussian coordinate is `psi = logit(lambda)`, i.e. the simplex block is
/// ordered `(λ, 1 − λ)` with profile 1 as the reference category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub(crate) n: usize,
    pub(crate) groups: usize,
    pub(crate) p: usize,
    /// `n × p`, 0 for profile 1 and 1 for profile 2.
    pub(crate) z: Vec<u8>,
    /// `n × G` row-major logits, clamped to `±LOGIT_CLAMP`.
    pub(crate) psi: Vec<f64>,
    pub(crate) omega: Vec<f64>,
    pub(crate) k: Vec<f64>,
}

impl LatentState {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    /// Profile (1 or 2) of subject `i` on variable `j`.
    pub fn profile(&self, i: usize, j: usize) -> usize {
        self.z[i * self.p + j] as usize + 1
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    pub fn lambda(&self, i: usize, g: usize) -> f64 {
        logistic(self.psi[i * self.groups + g])
    }

    /// Row-major `n × G` matrix of scores.
    pub fn lambda_matrix(&self) -> Vec<f64> {
        self.psi.iter().map(|&v| logistic(v)).collect()
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn psi_row(&self, i: usize) -> DVector<f64> {
        DVector::from_row_slice(&self.psi[i * self.groups..(i + 1) * self.groups])
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn set_psi(&mut self, psi: Vec<f64>) -> Result<()> {
        if psi.len() != self.n * self.groups {
            return Err(Error::Dimension("psi length".into()));
        }
        self.psi = psi.into_iter().map(crate::dist::clamp_logit).collect();
        Ok(())
    }

    pub(crate) fn refresh_k(&mut self, partition: &GroupPartition) {
        let g_count = self.groups;
        let mut k = vec![0.0; self.n * g_count];
        for i in 0..self.n {
            for j in 0..self.p {
                k[i * g_count + partition.group_of(j)] += self.z[i * self.p + j] as f64;
            }
            for g in 0..g_count {
                k[i * g_count + g] -= partition.sizes()[g] as f64 / 2.0;
            }
        }
        self.k = k;
    }

    pub fn validate(&self, partition: &GroupPartition) -> Result<()> {
        for i in 0..self.n {
            for g in 0..self.groups {
                let l = self.lambda(i, g);
                if !(l > 0.0 && l < 1.0) {
                    return Err(Error::Validation(format!("lambda[{i},{g}] = {l} not interior")));
                }
                if !(self.omega[i * self.groups + g] > 0.0) {
                    return Err(Error::Validation(format!("omega[{i},{g}] not positive")));
                }
                let half = partition.sizes()[g] as f64 / 2.0;
                if self.k[i * self.groups + g].abs() > half {
                    return Err(Error::Validation(format!("k[{i},{g}] out of range")));
                }
            }
        }
        Ok(())
    }
}

/// One Gibbs state: kernels, latents, and the score mean and covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub kernels: KernelSet,
    pub latent: LatentState,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl ChainState {
    pub fn validate(&self, partition: &GroupPartition) -> Result<()> {
        self.kernels.validate()?;
        self.latent.validate(partition)?;
        linalg::check_spd(&self.sigma, "Sigma")?;
        Ok(())
    }

    pub(crate) fn empty_latent(dataset: &CategoricalDataset, partition: &GroupPartition) -> LatentState {
        let (n, p, g) = (dataset.n(), dataset.p(), partition.groups());
        LatentState {
            n,
            groups: g,
            p,
            z: vec![0; n * p],
            psi: vec![0.0; n * g],
            omega: vec![1.0; n * g],
            k: vec![0.0; n * g],
        }
    }
}
