use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::state::{ChainState, KernelSet};
use super::steps::{self, SweepStreams};
use crate::data::{validate_partition, CategoricalDataset, GroupPartition, Hyperparams};
use crate::dist::sample_dirichlet;
use crate::error::{Error, Result};
use crate::rng::{StepTag, StreamRoot, GENERATOR_NAME};
use crate::spatiotemporal::StDraw;

/// Order of the mean and score updates within a sweep.
///
/// `MeanFirst` draws `μ` with the scores integrated out and then the scores
/// given the new `μ`, a valid blocked draw of `(μ, λ)`. `AsPrinted` updates
/// the scores first and then `μ` marginally, which leaves `μ` and `λ`
/// mismatched for the covariance step; kept for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepOrder {
    #[default]
    MeanFirst,
    AsPrinted,
}

/// Which per-draw fields to keep besides `μ` and `Σ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetainFields {
    pub kernels: bool,
    pub lambda: bool,
    pub z: bool,
    pub omega: bool,
}

impl Default for RetainFields {
    fn default() -> Self {
        Self { kernels: true, lambda: true, z: false, omega: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    #[serde(default)]
    pub retain: RetainFields,
    #[serde(default)]
    pub order: SweepOrder,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            burn_in: 1000,
            thin: 1,
            seed: 1,
            retain: RetainFields::default(),
            order: SweepOrder::default(),
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be >= 1".into()));
        }
        Ok(())
    }

    /// `floor((iterations − burn_in) / thin)`.
    pub fn retained_count(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn retains(&self, iteration: usize) -> bool {
        iteration >= self.burn_in && (iteration - self.burn_in + 1).is_multiple_of(self.thin)
    }
}

/// One retained draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: usize,
    pub mu: Vec<f64>,
    /// `G × G` row-major.
    pub sigma: Vec<f64>,
    pub kernels: Option<KernelSet>,
    /// `n × G` row-major probabilities of profile 2.
    pub lambda: Option<Vec<f64>>,
    pub z: Option<Vec<u8>>,
    pub omega: Option<Vec<f64>>,
    pub st: Option<StDraw>,
}

impl Draw {
    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        let g = self.mu.len();
        DMatrix::from_row_slice(g, g, &self.sigma)
    }

    pub(crate) fn from_state(iteration: usize, state: &ChainState, retain: RetainFields) -> Self {
        let g = state.mu.len();
        let mut sigma = Vec::with_capacity(g * g);
        for r in 0..g {
            for c in 0..g {
                sigma.push(state.sigma[(r, c)]);
            }
        }
        Draw {
            iteration,
            mu: state.mu.iter().copied().collect(),
            sigma,
            kernels: retain.kernels.then(|| state.kernels.clone()),
            lambda: retain.lambda.then(|| state.latent.lambda_matrix()),
            z: retain.z.then(|| state.latent.z.clone()),
            omega: retain.omega.then(|| state.latent.omega.clone()),
            st: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub dataset_digest: String,
    pub n: usize,
    pub p: usize,
    pub groups: usize,
    pub levels: Vec<usize>,
    /// 0-based group of each variable.
    pub assignment: Vec<usize>,
    pub generator: String,
    pub variant: String,
    pub order: SweepOrder,
    pub retain: RetainFields,
    /// Epoch of each subject, for the spatio-temporal variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<Vec<usize>>,
}

impl ChainMeta {
    pub fn new(dataset: &CategoricalDataset, partition: &GroupPartition, config: &ChainConfig, variant: &str) -> Self {
        ChainMeta {
            seed: config.seed,
            iterations: config.iterations,
            burn_in: config.burn_in,
            thin: config.thin,
            dataset_digest: dataset.digest(),
            n: dataset.n(),
            p: dataset.p(),
            groups: partition.groups(),
            levels: dataset.levels().to_vec(),
            assignment: partition.assignment().to_vec(),
            generator: GENERATOR_NAME.to_string(),
            variant: variant.to_string(),
            order: config.order,
            retain: config.retain,
            epochs: None,
        }
    }

    pub fn partition(&self) -> Result<GroupPartition> {
        GroupPartition::new(self.assignment.clone(), self.groups)
    }
}

/// Thinned post-burn-in draws with run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSamples {
    pub meta: ChainMeta,
    pub draws: Vec<Draw>,
}

impl ChainSamples {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Posterior mean of the scores, `n × G` row-major.
    pub fn lambda_mean(&self) -> Result<Vec<f64>> {
        let mut acc: Option<Vec<f64>> = None;
        let mut count = 0usize;
        for d in &self.draws {
            let l = d.lambda.as_ref().ok_or_else(|| Error::Config("scores were not retained".into()))?;
            match acc.as_mut() {
                None => acc = Some(l.clone()),
                Some(a) => a.iter_mut().zip(l).for_each(|(a, b)| *a += b),
            }
            count += 1;
        }
        let mut acc = acc.ok_or_else(|| Error::Config("no retained draws".into()))?;
        acc.iter_mut().for_each(|v| *v /= count as f64);
        Ok(acc)
    }

    /// Posterior mean kernels.
    pub fn kernel_mean(&self) -> Result<KernelSet> {
        let first = self
            .draws
            .first()
            .and_then(|d| d.kernels.as_ref())
            .ok_or_else(|| Error::Config("kernels were not retained".into()))?;
        let mut acc: Vec<Vec<f64>> = (0..first.p()).map(|j| vec![0.0; first.variable(j).len()]).collect();
        for d in &self.draws {
            let k = d.kernels.as_ref().ok_or_else(|| Error::Config("kernels were not retained".into()))?;
            for (j, a) in acc.iter_mut().enumerate() {
                a.iter_mut().zip(k.variable(j)).for_each(|(a, b)| *a += b);
            }
        }
        let n = self.draws.len() as f64;
        acc.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x /= n));
        Ok(KernelSet::from_flat(first.profiles(), first.levels().to_vec(), acc))
    }
}

/// Anything that advances a chain by one sweep and can report a draw.
pub trait Sweeper {
    /// Index of the next sweep to run (0-based).
    fn iteration(&self) -> usize;
    fn sweep(&mut self) -> Result<()>;
    fn record(&self, retain: RetainFields) -> Draw;
}

/// Runs `sampler` until `config.iterations` sweeps are done, appending the
/// retained draws.
pub fn drive<S: Sweeper>(sampler: &mut S, config: &ChainConfig, samples: &mut ChainSamples) -> Result<()> {
    config.validate()?;
    while sampler.iteration() < config.iterations {
        let it = sampler.iteration();
        sampler.sweep().map_err(|e| Error::AtIteration { iteration: it, source: Box::new(e) })?;
        if config.retains(it) {
            samples.draws.push(sampler.record(config.retain));
        }
    }
    Ok(())
}

/// Initial state: prior kernels, `λ = 0.5`, `μ = μ₀`, `Σ = Ψ₀`, indicators
/// from their conditionals and `ω` from one Pólya-gamma pass.
pub fn init_state(
    dataset: &CategoricalDataset,
    partition: &GroupPartition,
    hyper: &Hyperparams,
    root: StreamRoot,
) -> Result<ChainState> {
    validate_partition(dataset, partition)?;
    hyper.validate(dataset, partition)?;
    let streams = SweepStreams::init(root);
    let profiles = 2;
    let theta = (0..dataset.p())
        .map(|j| {
            let mut row = Vec::new();
            for h in 0..profiles {
                let mut rng = streams.open(StepTag::Kernels, (j * profiles + h) as u64);
                row.extend(sample_dirichlet(&hyper.alpha[j], &mut rng));
            }
            row
        })
        .collect();
    let mut state = ChainState {
        kernels: KernelSet::from_flat(profiles, dataset.levels().to_vec(), theta),
        latent: ChainState::empty_latent(dataset, partition),
        mu: hyper.mu0.clone(),
        sigma: hyper.psi0.clone(),
    };
    state.latent.z = steps::update_indicators(&state, dataset, partition, streams)?;
    state.latent.refresh_k(partition);
    state.latent.omega = steps::update_omega(&state.latent, partition, streams)?;
    Ok(state)
}

/// Gibbs sampler for the two-profile multivariate mixed membership model.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    dataset: CategoricalDataset,
    partition: GroupPartition,
    hyper: Hyperparams,
    root: StreamRoot,
    order: SweepOrder,
    state: ChainState,
    next_iteration: usize,
}

impl GibbsSampler {
    pub fn new(dataset: CategoricalDataset, partition: GroupPartition, hyper: Hyperparams, seed: u64) -> Result<Self> {
        let root = StreamRoot::new(seed);
        let state = init_state(&dataset, &partition, &hyper, root)?;
        Ok(Self { dataset, partition, hyper, root, order: SweepOrder::default(), state, next_iteration: 0 })
    }

    /// Resumes from a stored state; `next_iteration` sweeps were already run.
    pub fn from_state(
        dataset: CategoricalDataset,
        partition: GroupPartition,
        hyper: Hyperparams,
        seed: u64,
        state: ChainState,
        next_iteration: usize,
    ) -> Result<Self> {
        validate_partition(&dataset, &partition)?;
        hyper.validate(&dataset, &partition)?;
        if state.latent.n() != dataset.n() || state.kernels.p() != dataset.p() || state.mu.len() != partition.groups() {
            return Err(Error::Dimension("stored state does not match the dataset".into()));
        }
        Ok(Self {
            dataset,
            partition,
            hyper,
            root: StreamRoot::new(seed),
            order: SweepOrder::default(),
            state,
            next_iteration,
        })
    }

    pub fn with_order(mut self, order: SweepOrder) -> Self {
        self.order = order;
        self
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut ChainState {
        &mut self.state
    }

    pub fn dataset(&self) -> &CategoricalDataset {
        &self.dataset
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    /// Replaces the observed codes (simulation-based checks).
    pub fn set_codes(&mut self, codes: Vec<u16>) -> Result<()> {
        self.dataset.set_codes(codes)
    }

    fn streams(&self) -> SweepStreams {
        SweepStreams::new(self.root, self.next_iteration as u64)
    }
}

impl Sweeper for GibbsSampler {
    fn iteration(&self) -> usize {
        self.next_iteration
    }

    fn sweep(&mut self) -> Result<()> {
        let streams = self.streams();
        let (ds, part, hyper) = (&self.dataset, &self.partition, &self.hyper);
        let st = &mut self.state;
        st.kernels = steps::update_kernels(st, ds, hyper, streams);
        st.latent.z = steps::update_indicators(st, ds, part, streams)?;
        st.latent.refresh_k(part);
        st.latent.omega = steps::update_omega(&st.latent, part, streams)?;
        match self.order {
            SweepOrder::MeanFirst => {
                st.mu = steps::update_mu(st, hyper, streams)?;
                st.latent.psi = steps::update_lambda(st, streams)?;
            }
            SweepOrder::AsPrinted => {
                st.latent.psi = steps::update_lambda(st, streams)?;
                st.mu = steps::update_mu(st, hyper, streams)?;
            }
        }
        st.sigma = steps::update_sigma(st, hyper, streams)?;
        debug_assert!(st.validate(part).is_ok(), "state invariants violated: {:?}", st.validate(part));
        self.next_iteration += 1;
        Ok(())
    }

    fn record(&self, retain: RetainFields) -> Draw {
        Draw::from_state(self.next_iteration - 1, &self.state, retain)
    }
}

/// Runs a fresh chain and returns its retained draws.
pub fn run_chain(
    dataset: &CategoricalDataset,
    partition: &GroupPartition,
    hyper: &Hyperparams,
    config: &ChainConfig,
) -> Result<ChainSamples> {
    config.validate()?;
    let mut sampler =
        GibbsSampler::new(dataset.clone(), partition.clone(), hyper.clone(), config.seed)?.with_order(config.order);
    let mut samples = ChainSamples {
        meta: ChainMeta::new(dataset, partition, config, "plain"),
        draws: Vec::with_capacity(config.retained_count()),
    };
    drive(&mut sampler, config, &mut samples)?;
    Ok(samples)
}

/// Convenience: posterior mean of `μ` over the retained draws.
pub fn mu_mean(samples: &ChainSamples) -> DVector<f64> {
    let g = samples.meta.groups;
    let mut acc = DVector::zeros(g);
    for d in &samples.draws {
        acc += DVector::from_row_slice(&d.mu);
    }
    acc / samples.draws.len().max(1) as f64
}
