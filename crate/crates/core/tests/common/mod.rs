//! Geweke-style joint distribution checks shared by the integration and
//! acceptance targets.
//!
//! The marginal-conditional simulator draws (parameters, data) from the
//! prior; the successive-conditional simulator alternates one sweep with a
//! fresh draw of the data given the current indicators and kernels. Both
//! target the same joint law, so the moments of any test function agree.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mmm_core::data::{CategoricalDataset, GroupPartition, Hyperparams};
use mmm_core::dist::{logistic, sample_categorical, sample_dirichlet};
use mmm_core::gibbs::{ChainState, GibbsSampler, KernelSet, Sweeper};
use mmm_core::linalg;
use mmm_core::spatiotemporal::{correlation_matrix, SpaceTimeCovariates, StBlock, StHyper, StSampler};
use mmm_core::stats;

pub struct Toy {
    pub levels: Vec<usize>,
    pub partition: GroupPartition,
    pub hyper: Hyperparams,
    pub n: usize,
}

/// `n = 3`, two variables with 3 levels in two groups; `ν₀ = 8` so the
/// inverse-Wishart draws have finite variance.
pub fn plain_toy() -> Toy {
    let levels = vec![3, 3];
    let partition = GroupPartition::new(vec![0, 1], 2).unwrap();
    let hyper = Hyperparams {
        alpha: vec![vec![1.0, 1.0, 1.0], vec![0.5, 1.0, 2.0]],
        mu0: DVector::from_vec(vec![0.3, -0.2]),
        sigma0: DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]),
        nu0: 8.0,
        psi0: DMatrix::from_row_slice(2, 2, &[5.0, 1.0, 1.0, 4.0]),
    };
    Toy { levels, partition, hyper, n: 3 }
}

/// Two epochs of two subjects at distinct locations.
pub fn st_toy() -> (Toy, SpaceTimeCovariates, StHyper) {
    let mut toy = plain_toy();
    toy.n = 4;
    let cov = SpaceTimeCovariates::new(
        vec![0, 0, 1, 1],
        vec![[0.0, 0.0], [0.5, 0.3], [0.2, 0.1], [0.9, 0.4]],
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    let mut sth = StHyper::default_for(2);
    sth.nu_beta = 8.0;
    sth.psi_beta = DMatrix::from_row_slice(2, 2, &[5.0, -1.0, -1.0, 5.0]);
    sth.beta_mean = DVector::from_vec(vec![-0.2, 0.4]);
    sth.log_gamma_sd = 1.0;
    sth.proposal_sd = 1.2;
    (toy, cov, sth)
}

fn draw_kernels(toy: &Toy, rng: &mut ChaCha8Rng) -> KernelSet {
    KernelSet::new(
        (0..toy.levels.len()).map(|j| (0..2).map(|_| sample_dirichlet(&toy.hyper.alpha[j], rng)).collect()).collect(),
    )
    .unwrap()
}

/// Codes given kernels, scores and fresh indicators.
fn draw_codes(toy: &Toy, k: &KernelSet, lambda: &[f64], rng: &mut ChaCha8Rng) -> Vec<u16> {
    let (p, g) = (toy.levels.len(), toy.partition.groups());
    let mut codes = Vec::with_capacity(toy.n * p);
    for i in 0..toy.n {
        for j in 0..p {
            let l = lambda[i * g + toy.partition.group_of(j)];
            let z = sample_categorical(&[1.0 - l, l], rng);
            codes.push(sample_categorical(k.profile(j, z), rng) as u16);
        }
    }
    codes
}

/// Codes given the indicators of the current state.
fn redraw_codes(toy: &Toy, state: &ChainState, rng: &mut ChaCha8Rng) -> Vec<u16> {
    let p = toy.levels.len();
    let mut codes = Vec::with_capacity(toy.n * p);
    for i in 0..toy.n {
        for j in 0..p {
            let z = state.latent.profile(i, j) - 1;
            codes.push(sample_categorical(state.kernels.profile(j, z), rng) as u16);
        }
    }
    codes
}

pub const PLAIN_NAMES: [&str; 10] = [
    "theta[1,1,1]",
    "theta[2,2,3]",
    "lambda[1,1]",
    "lambda[3,2]",
    "lambda[1,1]*lambda[1,2]",
    "mu[1]",
    "mu[2]",
    "Sigma[1,1]",
    "Sigma[1,2]",
    "Sigma[2,2]",
];

fn plain_stats(k: &KernelSet, lambda: &[f64], mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Vec<f64> {
    vec![
        k.prob(0, 0, 0),
        k.prob(1, 1, 2),
        lambda[0],
        lambda[5],
        lambda[0] * lambda[1],
        mu[0],
        mu[1],
        sigma[(0, 0)],
        sigma[(0, 1)],
        sigma[(1, 1)],
    ]
}

fn columns(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let m = rows[0].len();
    (0..m).map(|c| rows.iter().map(|r| r[c]).collect()).collect()
}

/// Prior draws of the plain model's test functions, one column each.
pub fn plain_forward(toy: &Toy, draws: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = &toy.hyper;
    let rows = (0..draws)
        .map(|_| {
            let k = draw_kernels(toy, &mut rng);
            let sigma = linalg::sample_inverse_wishart(h.nu0, &h.psi0, &mut rng).unwrap();
            let mu = linalg::sample_mvn(&h.mu0, &h.sigma0, &mut rng).unwrap();
            let lambda: Vec<f64> = (0..toy.n)
                .flat_map(|_| {
                    linalg::sample_mvn(&mu, &sigma, &mut rng).unwrap().iter().map(|&y| logistic(y)).collect::<Vec<_>>()
                })
                .collect();
            plain_stats(&k, &lambda, &mu, &sigma)
        })
        .collect();
    columns(rows)
}

/// Successive-conditional simulation of the plain sampler.
pub fn plain_successive(toy: &Toy, sweeps: usize, burn_in: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let k = draw_kernels(toy, &mut rng);
    let codes = draw_codes(toy, &k, &vec![0.5; toy.n * 2], &mut rng);
    let names = (0..toy.levels.len()).map(|j| format!("x{j}")).collect();
    let ds = CategoricalDataset::new(names, toy.levels.clone(), codes).unwrap();
    let mut s = GibbsSampler::new(ds, toy.partition.clone(), toy.hyper.clone(), seed).unwrap();
    let mut rows = Vec::with_capacity(sweeps);
    for it in 0..burn_in + sweeps {
        s.sweep().unwrap();
        let st = s.state();
        if it >= burn_in {
            rows.push(plain_stats(&st.kernels, &st.latent.lambda_matrix(), &st.mu, &st.sigma));
        }
        let codes = redraw_codes(toy, st, &mut rng);
        s.set_codes(codes).unwrap();
    }
    columns(rows)
}

pub const ST_NAMES: [&str; 12] = [
    "theta[1,1,1]",
    "lambda[1,1]",
    "lambda[4,2]",
    "beta[1]",
    "Sigma_beta[1,1]",
    "beta_t[1,1]",
    "beta_t[2,2]",
    "Sigma_t[1][1,1]",
    "Sigma_t[2][1,2]",
    "log gamma[1,1,1]",
    "zeta_tilde[1,1]^2",
    "zeta_tilde[1,2]*zeta_tilde[2,2]",
];

fn st_stats(k: &KernelSet, lambda: &[f64], b: &StBlock) -> Vec<f64> {
    vec![
        k.prob(0, 0, 0),
        lambda[0],
        lambda[7],
        b.beta[0],
        b.sigma_beta[(0, 0)],
        b.beta_t[0][0],
        b.beta_t[1][1],
        b.sigma_t[0][(0, 0)],
        b.sigma_t[1][(0, 1)],
        b.length_scales[0].ln(),
        b.zeta_tilde[0].powi(2),
        b.zeta_tilde[1] * b.zeta_tilde[3],
    ]
}

/// Prior draws of the space-time model's test functions.
pub fn st_forward(toy: &Toy, cov: &SpaceTimeCovariates, sth: &StHyper, draws: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (g, tt) = (2, cov.epochs());
    let rows = (0..draws)
        .map(|_| {
            let k = draw_kernels(toy, &mut rng);
            let sigma_beta = linalg::sample_inverse_wishart(sth.nu_beta, &sth.psi_beta, &mut rng).unwrap();
            let beta = linalg::sample_mvn(&sth.beta_mean, &sth.beta_cov, &mut rng).unwrap();
            let beta_t: Vec<DVector<f64>> =
                (0..tt).map(|_| linalg::sample_mvn(&beta, &sigma_beta, &mut rng).unwrap()).collect();
            let sigma_t: Vec<DMatrix<f64>> = (0..tt)
                .map(|_| linalg::sample_inverse_wishart(toy.hyper.nu0, &toy.hyper.psi0, &mut rng).unwrap())
                .collect();
            let length_scales: Vec<f64> = (0..tt * g * 2)
                .map(|_| (sth.log_gamma_mean + sth.log_gamma_sd * linalg::standard_normal_vector(1, &mut rng)[0]).exp())
                .collect();
            let mut zeta_tilde = vec![0.0; toy.n * g];
            for t in 0..tt {
                let coords: Vec<[f64; 2]> = cov.members(t).iter().map(|&i| cov.coords()[i]).collect();
                for gg in 0..g {
                    let o = (t * g + gg) * 2;
                    let kmat = correlation_matrix(&coords, &[length_scales[o], length_scales[o + 1]], sth.nugget);
                    let z = linalg::sample_mvn(&DVector::zeros(coords.len()), &kmat, &mut rng).unwrap();
                    for (m, &i) in cov.members(t).iter().enumerate() {
                        zeta_tilde[i * g + gg] = z[m];
                    }
                }
            }
            let lambda: Vec<f64> = (0..toy.n)
                .flat_map(|i| {
                    let t = cov.time_id()[i];
                    let l = linalg::cholesky(&sigma_t[t], "Sigma_t").unwrap().l();
                    let mean = &beta_t[t] + &l * DVector::from_row_slice(&zeta_tilde[i * g..(i + 1) * g]);
                    linalg::sample_mvn(&mean, &sigma_t[t], &mut rng)
                        .unwrap()
                        .iter()
                        .map(|&y| logistic(y))
                        .collect::<Vec<_>>()
                })
                .collect();
            let block = StBlock {
                beta_t,
                beta,
                sigma_beta,
                sigma_t,
                zeta_tilde,
                length_scales,
                nugget: sth.nugget,
                proposal_sd: vec![],
                accepted: vec![],
                proposed: vec![],
            };
            st_stats(&k, &lambda, &block)
        })
        .collect();
    columns(rows)
}

/// Successive-conditional simulation of the space-time sampler (no
/// proposal adaptation).
pub fn st_successive(
    toy: &Toy,
    cov: &SpaceTimeCovariates,
    sth: &StHyper,
    sweeps: usize,
    burn_in: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let k = draw_kernels(toy, &mut rng);
    let codes = draw_codes(toy, &k, &vec![0.5; toy.n * 2], &mut rng);
    let names = (0..toy.levels.len()).map(|j| format!("x{j}")).collect();
    let ds = CategoricalDataset::new(names, toy.levels.clone(), codes).unwrap();
    let mut s = StSampler::new(ds, toy.partition.clone(), toy.hyper.clone(), sth.clone(), cov.clone(), seed).unwrap();
    let mut rows = Vec::with_capacity(sweeps);
    for it in 0..burn_in + sweeps {
        s.sweep().unwrap();
        let st = s.state();
        if it >= burn_in {
            rows.push(st_stats(&st.kernels, &st.latent.lambda_matrix(), s.block()));
        }
        let codes = redraw_codes(toy, st, &mut rng);
        s.set_codes(codes).unwrap();
    }
    columns(rows)
}

/// `(name, forward mean, successive mean, z)` per test function; the
/// forward draws are independent, the chain uses batch-means errors.
pub fn compare(names: &[&str], fwd: &[Vec<f64>], sc: &[Vec<f64>]) -> Vec<(String, f64, f64, f64)> {
    names
        .iter()
        .zip(fwd.iter().zip(sc))
        .map(|(n, (a, b))| {
            let se = (stats::iid_se(a).powi(2) + stats::batch_means_se(b, 100).powi(2)).sqrt();
            let (ma, mb) = (stats::mean(a), stats::mean(b));
            (n.to_string(), ma, mb, (ma - mb) / se)
        })
        .collect()
}

/// Model-implied marginal pmf of every variable, averaged over retained
/// draws and subjects. Invariant to label switching.
pub fn implied_marginals(samples: &mmm_core::gibbs::ChainSamples, partition: &GroupPartition) -> Vec<Vec<f64>> {
    let g = partition.groups();
    let first = samples.draws[0].kernels.as_ref().expect("kernels retained");
    let mut acc: Vec<Vec<f64>> = first.levels().iter().map(|&d| vec![0.0; d]).collect();
    for d in &samples.draws {
        let k = d.kernels.as_ref().expect("kernels retained");
        let l = d.lambda.as_ref().expect("scores retained");
        let n = l.len() / g;
        for (j, a) in acc.iter_mut().enumerate() {
            let gj = partition.group_of(j);
            let lbar = (0..n).map(|i| l[i * g + gj]).sum::<f64>() / n as f64;
            for (c, v) in a.iter_mut().enumerate() {
                *v += (1.0 - lbar) * k.prob(j, 0, c) + lbar * k.prob(j, 1, c);
            }
        }
    }
    let m = samples.draws.len() as f64;
    acc.iter_mut().for_each(|a| a.iter_mut().for_each(|v| *v /= m));
    acc
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Pooled `logit λ` of subject 0 in every group from the plain sampler and
/// the single-epoch space-time sampler without a spatial effect, on the same
/// data for each seed.
pub fn collapse_draws(seeds: std::ops::Range<u64>, iterations: usize, thin: usize) -> (Vec<f64>, Vec<f64>) {
    use mmm_core::data::default_hyperparams;
    use mmm_core::dist::logit;
    use mmm_core::gibbs::{run_chain, ChainConfig};
    use mmm_core::simgen::{generate, Scenario, ScenarioSpec};
    use mmm_core::spatiotemporal::run_st_chain;

    let (mut plain, mut st) = (Vec::new(), Vec::new());
    for seed in seeds {
        let mut spec = ScenarioSpec::new(Scenario::LogisticNormal, seed);
        spec.n = 40;
        spec.group_size = 2;
        let (ds, _) = generate(&spec).unwrap();
        let part = spec.partition();
        let hyper = default_hyperparams(&ds, &part);
        let coords = (0..ds.n()).map(|i| [i as f64 / ds.n() as f64, 0.0]).collect();
        let cov = SpaceTimeCovariates::single_epoch(coords).unwrap();
        let sth = StHyper::without_space(&hyper);
        let config = ChainConfig { iterations, burn_in: iterations / 5, thin, seed: 1000 + seed, ..Default::default() };
        let a = run_chain(&ds, &part, &hyper, &config).unwrap();
        let b = run_st_chain(&ds, &part, &hyper, &sth, &cov, &ChainConfig { seed: 5000 + seed, ..config }).unwrap();
        for (out, s) in [(&mut plain, a), (&mut st, b)] {
            for d in &s.draws {
                let l = d.lambda.as_ref().unwrap();
                out.extend((0..part.groups()).map(|g| logit(l[g])));
            }
        }
    }
    (plain, st)
}
