//! Synthetic data from the simulation scenarios.
//!
//! Two groups of `p_g` variables with `d` levels each. Scenarios 1 to 4 use
//! two profiles per group with kernels drawn from Dirichlet laws and differ
//! in the joint law of the two profile-2 scores:
//!
//! 1. bivariate normal truncated to the unit square;
//! 2. logistic normal, `λ_g = logistic(y_g)` with `y ~ N(μ, Σ)`;
//! 3. one uniform score shared by both groups;
//! 4. two independent uniform scores.
//!
//! The misspecified scenario gives group 1 four profiles with fixed kernels
//! and Dirichlet(¼, ¼, ¼, ¼) scores; group 2 follows scenario 4.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::path::Path;

use crate::data::{CategoricalDataset, GroupPartition};
use crate::dist::{logistic, sample_categorical, sample_dirichlet};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{StepTag, StreamRoot};

/// Kernel Dirichlet parameters `φ^{(g)}_h` of scenarios 1 to 4.
pub const PHI: [[[f64; 4]; 2]; 2] =
    [[[10.0, 3.0, 2.0, 1.0], [1.0, 1.0, 1.0, 11.0]], [[5.0, 5.0, 1.0, 0.0], [1.0, 1.0, 1.0, 8.0]]];

/// Fixed group-1 kernels of the misspecified scenario.
pub const MISSPEC_KERNELS: [[f64; 4]; 4] =
    [[0.85, 0.05, 0.05, 0.05], [0.05, 0.85, 0.05, 0.05], [0.05, 0.05, 0.85, 0.05], [0.05, 0.05, 0.05, 0.85]];

/// Dirichlet law of the group-1 scores in the misspecified scenario.
pub const MISSPEC_ALPHA: [f64; 4] = [0.25; 4];

pub const SCENARIO1_MEAN: [f64; 2] = [0.5, 0.5];
pub const SCENARIO1_COV: [f64; 4] = [0.05, 0.02, 0.02, 0.05];
pub const SCENARIO2_MEAN: [f64; 2] = [-1.2, 1.0];
pub const SCENARIO2_COV: [f64; 4] = [3.0, -2.4, -2.4, 3.5];

/// Rejection sampling gives up below this acceptance probability.
pub const MIN_ACCEPTANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    TruncatedNormal,
    LogisticNormal,
    SharedUniform,
    IndependentUniform,
    Misspecified,
}

impl Scenario {
    /// `1`–`4` or `misspec`.
    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "1" => Ok(Scenario::TruncatedNormal),
            "2" => Ok(Scenario::LogisticNormal),
            "3" => Ok(Scenario::SharedUniform),
            "4" => Ok(Scenario::IndependentUniform),
            "misspec" => Ok(Scenario::Misspecified),
            other => Err(Error::Argument(format!("unknown scenario '{other}' (expected 1, 2, 3, 4 or misspec)"))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Scenario::TruncatedNormal => "1",
            Scenario::LogisticNormal => "2",
            Scenario::SharedUniform => "3",
            Scenario::IndependentUniform => "4",
            Scenario::Misspecified => "misspec",
        }
    }

    /// Number of true profiles per group.
    pub fn profiles(&self) -> [usize; 2] {
        match self {
            Scenario::Misspecified => [4, 2],
            _ => [2, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub group_size: usize,
    pub levels: usize,
    /// `φ^{(g)}_h` for the Dirichlet-drawn kernels, `[g][h]`.
    pub phi: Vec<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Defaults: `n = 1000`, `p_g = 5`, `d = 4`.
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        Self {
            scenario,
            n: 1000,
            group_size: 5,
            levels: 4,
            phi: PHI.iter().map(|g| g.iter().map(|h| h.to_vec()).collect()).collect(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.group_size == 0 {
            return Err(Error::Validation("n and group size must be positive".into()));
        }
        if self.levels < 2 || self.levels > u16::MAX as usize {
            return Err(Error::Validation(format!("invalid number of levels {}", self.levels)));
        }
        if self.scenario == Scenario::Misspecified && self.levels != 4 {
            return Err(Error::Validation("the misspecified scenario has 4 levels".into()));
        }
        if self.phi.len() != 2 || self.phi.iter().any(|g| g.len() != 2) {
            return Err(Error::Validation("phi needs two profiles for each of two groups".into()));
        }
        for (g, per) in self.phi.iter().enumerate() {
            for (h, v) in per.iter().enumerate() {
                if v.len() != self.levels {
                    return Err(Error::Validation(format!("phi[{}][{}] has length {}", g + 1, h + 1, v.len())));
                }
                if v.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) || !v.iter().any(|&a| a > 0.0) {
                    return Err(Error::Validation(format!(
                        "phi[{}][{}] needs non-negative entries with at least one positive",
                        g + 1,
                        h + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn partition(&self) -> GroupPartition {
        let assignment = (0..2 * self.group_size).map(|j| j / self.group_size).collect();
        GroupPartition::new(assignment, 2).expect("two non-empty groups")
    }
}

/// Ground truth of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub scenario: Scenario,
    pub seed: u64,
    pub n: usize,
    /// True number of profiles per group.
    pub profiles: Vec<usize>,
    /// Per subject, the concatenated per-group score vectors (profile order
    /// as in `kernels`).
    pub scores: Vec<Vec<f64>>,
    /// `kernels[j][h]` is the level distribution of variable `j` under
    /// profile `h`.
    pub kernels: Vec<Vec<Vec<f64>>>,
    /// 0-based group of each variable.
    pub assignment: Vec<usize>,
}

impl Truth {
    /// Profile-2 scores, `n × G` row-major; `None` if a group has more than
    /// two profiles.
    pub fn lambda(&self) -> Option<Vec<f64>> {
        if self.profiles.iter().any(|&h| h != 2) {
            return None;
        }
        let g = self.profiles.len();
        Some(self.scores.iter().flat_map(|s| (0..g).map(move |gg| s[2 * gg + 1])).collect())
    }

    /// Score vector of subject `i` in group `g`.
    pub fn group_scores(&self, i: usize, g: usize) -> &[f64] {
        let off: usize = self.profiles[..g].iter().sum();
        &self.scores[i][off..off + self.profiles[g]]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Rejection draw from `N(μ, Σ)` restricted to `[0, 1]²`.
///
/// Fails when the acceptance probability is below [`MIN_ACCEPTANCE`]: either
/// the bound `min_d P(X_d ∈ [0, 1])` already is, or no proposal is accepted
/// in `20 / MIN_ACCEPTANCE` attempts.
pub fn sample_truncated_bvn<R: Rng + ?Sized>(mu: &[f64; 2], sigma: &DMatrix<f64>, rng: &mut R) -> Result<[f64; 2]> {
    let chol = linalg::check_spd(sigma, "truncated normal covariance")?;
    let bound = (0..2)
        .map(|d| {
            let n = Normal::new(mu[d], sigma[(d, d)].sqrt()).map_err(|e| Error::Argument(e.to_string()))?;
            Ok(n.cdf(1.0) - n.cdf(0.0))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(1.0, f64::min);
    if bound < MIN_ACCEPTANCE {
        return Err(Error::Config(format!("truncated normal acceptance bound {bound:e} is below {MIN_ACCEPTANCE:e}")));
    }
    let mean = DVector::from_row_slice(mu);
    let attempts = (20.0 / MIN_ACCEPTANCE) as usize;
    for _ in 0..attempts {
        let x = linalg::sample_mvn_chol(&mean, &chol, rng);
        if (0.0..=1.0).contains(&x[0]) && (0.0..=1.0).contains(&x[1]) {
            return Ok([x[0], x[1]]);
        }
    }
    Err(Error::Config(format!("truncated normal accepted nothing in {attempts} attempts")))
}

fn draw_scores<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Vec<f64>> {
    let pair = |a: f64, b: f64| vec![1.0 - a, a, 1.0 - b, b];
    Ok(match spec.scenario {
        Scenario::TruncatedNormal => {
            let s = DMatrix::from_row_slice(2, 2, &SCENARIO1_COV);
            let [a, b] = sample_truncated_bvn(&SCENARIO1_MEAN, &s, rng)?;
            pair(a, b)
        }
        Scenario::LogisticNormal => {
            let s = DMatrix::from_row_slice(2, 2, &SCENARIO2_COV);
            let y = linalg::sample_mvn(&DVector::from_row_slice(&SCENARIO2_MEAN), &s, rng)?;
            pair(logistic(y[0]), logistic(y[1]))
        }
        Scenario::SharedUniform => {
            let u: f64 = rng.random();
            pair(u, u)
        }
        Scenario::IndependentUniform => {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            pair(a, b)
        }
        Scenario::Misspecified => {
            let mut v = sample_dirichlet(&MISSPEC_ALPHA, rng);
            let b: f64 = rng.random();
            v.extend([1.0 - b, b]);
            v
        }
    })
}

/// Generates a dataset and its ground truth. Kernels are drawn
/// independently per variable; subjects use their own keyed streams, so the
/// output depends only on the spec.
pub fn generate(spec: &ScenarioSpec) -> Result<(CategoricalDataset, Truth)> {
    spec.validate()?;
    let root = StreamRoot::new(spec.seed);
    let partition = spec.partition();
    let p = partition.len();
    let profiles = spec.scenario.profiles();
    let kernels: Vec<Vec<Vec<f64>>> = (0..p)
        .map(|j| {
            let g = partition.group_of(j);
            if spec.scenario == Scenario::Misspecified && g == 0 {
                return MISSPEC_KERNELS.iter().map(|k| k.to_vec()).collect();
            }
            let mut rng = root.stream(0, StepTag::Simulation, j as u64);
            (0..2).map(|h| sample_dirichlet(&spec.phi[g][h], &mut rng)).collect()
        })
        .collect();
    let offsets = [0, profiles[0]];
    let rows: Vec<Result<(Vec<f64>, Vec<u16>)>> = (0..spec.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.stream(1, StepTag::Simulation, i as u64);
            let scores = draw_scores(spec, &mut rng)?;
            let codes = (0..p)
                .map(|j| {
                    let g = partition.group_of(j);
                    let z = sample_categorical(&scores[offsets[g]..offsets[g] + profiles[g]], &mut rng);
                    sample_categorical(&kernels[j][z], &mut rng) as u16
                })
                .collect();
            Ok((scores, codes))
        })
        .collect();
    let mut scores = Vec::with_capacity(spec.n);
    let mut codes = Vec::with_capacity(spec.n * p);
    for r in rows {
        let (s, c) = r?;
        scores.push(s);
        codes.extend(c);
    }
    let names = (0..p).map(|j| format!("x{}", j + 1)).collect();
    let dataset = CategoricalDataset::new(names, vec![spec.levels; p], codes)?;
    let truth = Truth {
        scenario: spec.scenario,
        seed: spec.seed,
        n: spec.n,
        profiles: profiles.to_vec(),
        scores,
        kernels,
        assignment: partition.assignment().to_vec(),
    };
    Ok((dataset, truth))
}

/// Closed-form moment `E[∏_h λ_h^{n_h}]` of a Dirichlet(α) vector.
pub fn dirichlet_moment(alpha: &[f64], counts: &[usize]) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let a0: f64 = alpha.iter().sum();
    let n: usize = counts.iter().sum();
    let mut l = ln_gamma(a0) - ln_gamma(a0 + n as f64);
    for (&a, &c) in alpha.iter().zip(counts) {
        l += ln_gamma(a + c as f64) - ln_gamma(a);
    }
    l.exp()
}
