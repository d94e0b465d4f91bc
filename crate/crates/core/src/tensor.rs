//! Tensor identities for the joint pmf of `p` categorical variables.
//!
//! Under the mixed membership model the joint pmf is a Tucker-type tensor
//! `π_{x1…xp} = Σ_{h1…hp} a_{h1…hp} ∏_j θ^{(j)}_{h_j x_j}` whose core `a`
//! collects moments of the membership scores. With one score per subject the
//! core is symmetric; with one score per group it is group-symmetric
//! (invariant under permutations of indices within a group).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::HashMap;

use crate::data::GroupPartition;
use crate::dist::sample_dirichlet;
use crate::error::{Error, Result};
use crate::gibbs::KernelSet;

/// Largest dense tensor built by this module.
pub const MAX_CELLS: usize = 1 << 22;

/// Largest target accepted by [`best_constrained_fit`].
pub const MAX_FIT_CELLS: usize = 4096;

const NORMALIZATION_TOL: f64 = 1e-10;

/// `C(H + p − 1, p)`: distinct entries of a symmetric `H^p` tensor.
pub fn count_distinct_symmetric(h: u64, p: u64) -> Result<u128> {
    if h == 0 || p == 0 {
        return Err(Error::Argument(format!("H = {h} and p = {p} must be positive")));
    }
    let mut acc: u128 = 1;
    for i in 1..=p as u128 {
        // acc · (H + i − 1) / i stays integral: it is C(H + i − 1, i).
        acc = acc
            .checked_mul(h as u128 + i - 1)
            .ok_or_else(|| Error::Domain(format!("symmetric count for H = {h}, p = {p} overflows 128 bits")))?
            / i;
    }
    Ok(acc)
}

/// `∏_g C(H + p_g − 1, p_g)`: distinct entries of a group-symmetric tensor.
pub fn count_distinct_group_symmetric(h: u64, group_sizes: &[usize]) -> Result<u128> {
    if group_sizes.is_empty() {
        return Err(Error::Argument("at least one group is required".into()));
    }
    group_sizes.iter().try_fold(1u128, |acc, &s| {
        acc.checked_mul(count_distinct_symmetric(h, s as u64)?)
            .ok_or_else(|| Error::Domain(format!("group-symmetric count for H = {h} overflows 128 bits")))
    })
}

fn cell_count(dims: &[usize]) -> Result<usize> {
    let mut n: usize = 1;
    for &d in dims {
        n = n
            .checked_mul(d)
            .filter(|&v| v <= MAX_CELLS)
            .ok_or_else(|| Error::Domain(format!("tensor with dims {dims:?} exceeds {MAX_CELLS} cells")))?;
    }
    Ok(n)
}

fn check_normalized(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Validation(format!("{what} has negative or non-finite entries")));
    }
    let s: f64 = values.iter().sum();
    if (s - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Validation(format!("{what} sums to {s}")));
    }
    Ok(())
}

/// Row-major multi-index of a flat offset.
fn unravel(mut offset: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = offset % dims[k];
        offset /= dims[k];
    }
}

/// Mixing weights `a_{h1…hp}`, dense, row-major with `h_1` slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreTensor {
    h: usize,
    p: usize,
    weights: Vec<f64>,
}

impl CoreTensor {
    pub fn new(h: usize, p: usize, weights: Vec<f64>) -> Result<Self> {
        if h == 0 || p == 0 {
            return Err(Error::Argument("core tensor needs H >= 1 and p >= 1".into()));
        }
        let cells = cell_count(&vec![h; p])?;
        if weights.len() != cells {
            return Err(Error::Dimension(format!("{} weights for {cells} cells", weights.len())));
        }
        check_normalized(&weights, "core tensor")?;
        Ok(Self { h, p, weights })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.weights[index.iter().fold(0, |o, &i| o * self.h + i)]
    }

    /// Whether every permutation of indices within a group leaves the
    /// weights unchanged, within `tol`.
    pub fn is_group_symmetric(&self, partition: &GroupPartition, tol: f64) -> bool {
        let classes = SymmetryClasses::new(self.h, partition);
        let mut rep: HashMap<usize, f64> = HashMap::new();
        self.weights.iter().enumerate().all(|(c, &w)| {
            let first = *rep.entry(classes.class_of[c]).or_insert(w);
            (first - w).abs() <= tol
        })
    }
}

/// Dense probability tensor over `d_1 × … × d_p`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTensor {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl ProbabilityTensor {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Argument(format!("invalid tensor dims {dims:?}")));
        }
        let cells = cell_count(&dims)?;
        if values.len() != cells {
            return Err(Error::Dimension(format!("{} values for {cells} cells", values.len())));
        }
        check_normalized(&values, "probability tensor")?;
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.values[index.iter().zip(&self.dims).fold(0, |o, (&i, &d)| o * d + i)]
    }

    /// Uniformly random tensor on the probability simplex.
    pub fn random<R: Rng + ?Sized>(dims: Vec<usize>, rng: &mut R) -> Result<Self> {
        let cells = cell_count(&dims)?;
        let values = sample_dirichlet(&vec![1.0; cells], rng);
        Self::new(dims, values)
    }

    /// Empirical joint frequencies of the listed variables.
    pub fn empirical(dataset: &crate::data::CategoricalDataset, variables: &[usize]) -> Result<Self> {
        let dims: Vec<usize> = variables.iter().map(|&j| dataset.levels()[j]).collect();
        let cells = cell_count(&dims)?;
        let mut values = vec![0.0; cells];
        for i in 0..dataset.n() {
            let o = variables.iter().zip(&dims).fold(0, |o, (&j, &d)| o * d + dataset.code(i, j));
            values[o] += 1.0;
        }
        let n = dataset.n() as f64;
        values.iter_mut().for_each(|v| *v /= n);
        Self::new(dims, values)
    }
}

/// Mode-`j` product: replaces axis `j` of length `from` by one of length `to`
/// using `out[.., x, ..] = Σ_h t[.., h, ..] m[h·to + x]` (`m` is `from × to`).
fn mode_product(t: &[f64], dims: &[usize], j: usize, m: &[f64], to: usize) -> Vec<f64> {
    let from = dims[j];
    let outer: usize = dims[..j].iter().product();
    let inner: usize = dims[j + 1..].iter().product();
    let mut out = vec![0.0; outer * to * inner];
    for o in 0..outer {
        for h in 0..from {
            let src = &t[(o * from + h) * inner..(o * from + h + 1) * inner];
            for x in 0..to {
                let w = m[h * to + x];
                if w == 0.0 {
                    continue;
                }
                let dst = &mut out[(o * to + x) * inner..(o * to + x + 1) * inner];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += w * s);
            }
        }
    }
    out
}

/// `π = Σ_h a_h ∏_j θ^{(j)}_{h_j x_j}` by successive mode products.
fn contract(weights: &[f64], h: usize, kernels: &[Vec<f64>], levels: &[usize]) -> Vec<f64> {
    let p = levels.len();
    let mut dims = vec![h; p];
    let mut t = weights.to_vec();
    for j in 0..p {
        t = mode_product(&t, &dims, j, &kernels[j], levels[j]);
        dims[j] = levels[j];
    }
    t
}

/// Joint pmf implied by a core tensor and kernels.
pub fn joint_pmf(core: &CoreTensor, kernels: &KernelSet) -> Result<ProbabilityTensor> {
    if kernels.p() != core.p() || kernels.profiles() != core.h() {
        return Err(Error::Dimension(format!(
            "core tensor is {}^{} but kernels have {} profiles over {} variables",
            core.h(),
            core.p(),
            kernels.profiles(),
            kernels.p()
        )));
    }
    cell_count(kernels.levels())?;
    let flat: Vec<Vec<f64>> = (0..kernels.p()).map(|j| kernels.variable(j).to_vec()).collect();
    let mut values = contract(core.weights(), core.h(), &flat, kernels.levels());
    let s: f64 = values.iter().sum();
    if (s - 1.0).abs() > 1e-8 {
        return Err(Error::Numeric(format!("joint pmf sums to {s}")));
    }
    values.iter_mut().for_each(|v| *v /= s);
    ProbabilityTensor::new(kernels.levels().to_vec(), values)
}

/// Monte Carlo core tensor `ā_{h1…hp} = E[∏_j λ^{(g_j)}_{h_j}]`.
///
/// Each sample holds the `G` score vectors of one subject, `G × H`
/// row-major (each block on the simplex).
pub fn core_tensor_from_scores(samples: &[Vec<f64>], h: usize, partition: &GroupPartition) -> Result<CoreTensor> {
    if samples.is_empty() {
        return Err(Error::Argument("no score samples".into()));
    }
    let (p, g) = (partition.len(), partition.groups());
    let cells = cell_count(&vec![h; p])?;
    for (s, x) in samples.iter().enumerate() {
        if x.len() != g * h {
            return Err(Error::Dimension(format!("score sample {} has length {}, expected {}", s + 1, x.len(), g * h)));
        }
    }
    let chunk = samples.len().div_ceil(rayon::current_num_threads().max(1) * 4).max(1);
    let partials: Vec<Vec<f64>> = samples
        .par_chunks(chunk)
        .map(|block| {
            let mut acc = vec![0.0; cells];
            let mut t = Vec::with_capacity(cells);
            for x in block {
                t.clear();
                t.push(1.0);
                for j in 0..p {
                    let gg = partition.group_of(j);
                    let lam = &x[gg * h..(gg + 1) * h];
                    let prev = std::mem::take(&mut t);
                    t.reserve(prev.len() * h);
                    for v in &prev {
                        t.extend(lam.iter().map(|l| v * l));
                    }
                }
                acc.iter_mut().zip(&t).for_each(|(a, b)| *a += b);
            }
            acc
        })
        .collect();
    let mut w = vec![0.0; cells];
    for part in partials {
        w.iter_mut().zip(part).for_each(|(a, b)| *a += b);
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    CoreTensor::new(h, p, w)
}

/// Two-profile convenience: samples are `G`-vectors of profile-2 weights.
pub fn core_tensor_from_lambda(samples: &[Vec<f64>], partition: &GroupPartition) -> Result<CoreTensor> {
    let expanded: Vec<Vec<f64>> = samples.iter().map(|s| s.iter().flat_map(|&l| [1.0 - l, l]).collect()).collect();
    core_tensor_from_scores(&expanded, 2, partition)
}

/// `‖a − b‖_F`.
pub fn frobenius_distance(a: &ProbabilityTensor, b: &ProbabilityTensor) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension(format!("dims {:?} and {:?} differ", a.dims(), b.dims())));
    }
    Ok(a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

/// Equivalence classes of core indices under within-group permutations.
#[derive(Debug, Clone)]
pub struct SymmetryClasses {
    /// Class id of each core cell.
    pub class_of: Vec<usize>,
    /// Number of cells per class.
    pub sizes: Vec<usize>,
}

impl SymmetryClasses {
    pub fn new(h: usize, partition: &GroupPartition) -> Self {
        let p = partition.len();
        let cells = h.pow(p as u32);
        let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut class_of = Vec::with_capacity(cells);
        let mut sizes = Vec::new();
        let mut idx = vec![0usize; p];
        for c in 0..cells {
            unravel(c, &vec![h; p], &mut idx);
            // Class key: per group, how many indices take each profile.
            let mut key = vec![0usize; partition.groups() * h];
            for (j, &hj) in idx.iter().enumerate() {
                key[partition.group_of(j) * h + hj] += 1;
            }
            let next = ids.len();
            let id = *ids.entry(key).or_insert(next);
            if id == sizes.len() {
                sizes.push(0);
            }
            sizes[id] += 1;
            class_of.push(id);
        }
        Self { class_of, sizes }
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }
}

/// Constraint on the core tensor of a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// Invariant under every permutation of the `p` indices.
    Symmetric,
    /// Invariant under permutations within each group.
    GroupSymmetric(GroupPartition),
}

impl Constraint {
    fn classes(&self, h: usize, p: usize) -> Result<SymmetryClasses> {
        let partition = match self {
            Constraint::Symmetric => GroupPartition::single(p)?,
            Constraint::GroupSymmetric(part) => {
                if part.len() != p {
                    return Err(Error::Dimension(format!("partition covers {} of {p} variables", part.len())));
                }
                part.clone()
            }
        };
        Ok(SymmetryClasses::new(h, &partition))
    }
}

/// Search effort of [`best_constrained_fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitBudget {
    pub starts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for FitBudget {
    fn default() -> Self {
        Self { starts: 32, iterations: 2000, seed: 1 }
    }
}

/// Best model found by [`best_constrained_fit`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub core: CoreTensor,
    pub kernels: KernelSet,
    pub distance: f64,
    /// True when the best start used its full iteration budget without
    /// meeting the convergence tolerance.
    pub exhausted: bool,
}

/// Parameters of a constrained fit: class weights `v` on the simplex (core
/// cell weight `v_c / |c|`) and kernels per variable, profile-major.
#[derive(Clone)]
struct FitPoint {
    v: Vec<f64>,
    theta: Vec<Vec<f64>>,
}

struct FitProblem<'a> {
    target: &'a ProbabilityTensor,
    h: usize,
    classes: SymmetryClasses,
}

impl FitProblem<'_> {
    fn core(&self, v: &[f64]) -> Vec<f64> {
        self.classes.class_of.iter().map(|&c| v[c] / self.classes.sizes[c] as f64).collect()
    }

    fn residual(&self, x: &FitPoint) -> Vec<f64> {
        let pi = contract(&self.core(&x.v), self.h, &x.theta, self.target.dims());
        pi.iter().zip(self.target.values()).map(|(a, b)| a - b).collect()
    }

    fn objective(&self, x: &FitPoint) -> f64 {
        self.residual(x).iter().map(|r| r * r).sum()
    }

    /// Gradient of `‖π − target‖²`.
    fn gradient(&self, x: &FitPoint) -> FitPoint {
        let r = self.residual(x);
        let dims = self.target.dims();
        let p = dims.len();
        let h = self.h;
        // Contracting the residual with every kernel transpose gives ∂f/∂a.
        let transposed: Vec<Vec<f64>> = (0..p)
            .map(|j| {
                let d = dims[j];
                let mut t = vec![0.0; d * h];
                for hh in 0..h {
                    for xx in 0..d {
                        t[xx * h + hh] = x.theta[j][hh * d + xx];
                    }
                }
                t
            })
            .collect();
        let mut ga = r.clone();
        let mut gd = dims.to_vec();
        for j in 0..p {
            ga = mode_product(&ga, &gd, j, &transposed[j], h);
            gd[j] = h;
        }
        let mut gv = vec![0.0; self.classes.len()];
        for (cell, &c) in self.classes.class_of.iter().enumerate() {
            gv[c] += 2.0 * ga[cell] / self.classes.sizes[c] as f64;
        }
        let core = self.core(&x.v);
        let gtheta = (0..p)
            .map(|j| {
                // Core contracted with every kernel except j keeps axis j at H.
                let mut t = core.clone();
                let mut td = vec![h; p];
                for k in 0..p {
                    if k != j {
                        t = mode_product(&t, &td, k, &x.theta[k], dims[k]);
                        td[k] = dims[k];
                    }
                }
                let outer: usize = dims[..j].iter().product();
                let inner: usize = dims[j + 1..].iter().product();
                let d = dims[j];
                let mut g = vec![0.0; h * d];
                for o in 0..outer {
                    for xx in 0..d {
                        let rr = &r[(o * d + xx) * inner..(o * d + xx + 1) * inner];
                        for hh in 0..h {
                            let tt = &t[(o * h + hh) * inner..(o * h + hh + 1) * inner];
                            g[hh * d + xx] += 2.0 * rr.iter().zip(tt).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
                g
            })
            .collect();
        FitPoint { v: gv, theta: gtheta }
    }

    fn project_step(&self, x: &FitPoint, g: &FitPoint, eta: f64) -> FitPoint {
        let dims = self.target.dims();
        let v = project_simplex(&x.v.iter().zip(&g.v).map(|(a, b)| a - eta * b).collect::<Vec<_>>());
        let theta = (0..dims.len())
            .map(|j| {
                let d = dims[j];
                let mut out = Vec::with_capacity(self.h * d);
                for hh in 0..self.h {
                    let block: Vec<f64> =
                        (0..d).map(|xx| x.theta[j][hh * d + xx] - eta * g.theta[j][hh * d + xx]).collect();
                    out.extend(project_simplex(&block));
                }
                out
            })
            .collect();
        FitPoint { v, theta }
    }

    /// `x + β(x − prev)`, projected back onto the simplices.
    fn feasible_extrapolation(&self, x: &FitPoint, prev: &FitPoint, beta: f64) -> FitPoint {
        let lin = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u + beta * (u - v)).collect::<Vec<_>>();
        let dims = self.target.dims();
        let theta = (0..dims.len())
            .map(|j| {
                let d = dims[j];
                let moved = lin(&x.theta[j], &prev.theta[j]);
                moved.chunks(d).flat_map(project_simplex).collect()
            })
            .collect();
        FitPoint { v: project_simplex(&lin(&x.v, &prev.v)), theta }
    }

    /// Accelerated projected gradient with backtracking and restarts when
    /// the objective goes up. Returns the final point, its objective and
    /// whether the iteration budget ran out.
    fn descend(&self, mut x: FitPoint, iterations: usize) -> (FitPoint, f64, bool) {
        let mut f = self.objective(&x);
        let mut y = x.clone();
        let mut fy = f;
        let mut t = 1.0f64;
        let mut eta = 1.0;
        for _ in 0..iterations {
            let g = self.gradient(&y);
            let mut accepted = None;
            for _ in 0..60 {
                let z = self.project_step(&y, &g, eta);
                let (mut lin, mut sq) = (0.0, 0.0);
                for (a, (b, gg)) in z.v.iter().zip(y.v.iter().zip(&g.v)) {
                    lin += gg * (a - b);
                    sq += (a - b).powi(2);
                }
                for j in 0..y.theta.len() {
                    for (a, (b, gg)) in z.theta[j].iter().zip(y.theta[j].iter().zip(&g.theta[j])) {
                        lin += gg * (a - b);
                        sq += (a - b).powi(2);
                    }
                }
                let fz = self.objective(&z);
                if fz <= fy + lin + sq / (2.0 * eta) {
                    accepted = Some((z, fz, sq));
                    break;
                }
                eta *= 0.5;
            }
            let Some((z, fz, sq)) = accepted else {
                return (x, f, false);
            };
            if fz > f {
                // Momentum overshot: restart from the best point.
                y = x.clone();
                fy = f;
                t = 1.0;
                continue;
            }
            let improvement = f - fz;
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            let prev = std::mem::replace(&mut x, z);
            f = fz;
            if sq < 1e-26 && improvement < 1e-20 {
                return (x, f, false);
            }
            y = self.feasible_extrapolation(&x, &prev, beta);
            fy = self.objective(&y);
            t = t_next;
            eta *= 1.5;
        }
        (x, f, true)
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> FitPoint {
        let dims = self.target.dims();
        let v = sample_dirichlet(&vec![1.0; self.classes.len()], rng);
        let theta =
            dims.iter().map(|&d| (0..self.h).flat_map(|_| sample_dirichlet(&vec![1.0; d], rng)).collect()).collect();
        FitPoint { v, theta }
    }

    fn finish(&self, x: FitPoint, f: f64, exhausted: bool) -> Result<FitResult> {
        let dims = self.target.dims();
        let mut core = self.core(&x.v);
        let s: f64 = core.iter().sum();
        core.iter_mut().for_each(|c| *c /= s);
        Ok(FitResult {
            core: CoreTensor::new(self.h, dims.len(), core)?,
            kernels: KernelSet::from_flat(self.h, dims.to_vec(), x.theta),
            distance: f.max(0.0).sqrt(),
            exhausted,
        })
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumulative += uk;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            shift = t;
        }
    }
    y.iter().map(|&v| (v - shift).max(0.0)).collect()
}

fn fit_problem<'a>(target: &'a ProbabilityTensor, h: usize, constraint: &Constraint) -> Result<FitProblem<'a>> {
    if h == 0 {
        return Err(Error::Argument("H must be positive".into()));
    }
    if target.values().len() > MAX_FIT_CELLS {
        return Err(Error::Domain(format!("fit targets are limited to {MAX_FIT_CELLS} cells")));
    }
    let p = target.dims().len();
    cell_count(&vec![h; p])?;
    Ok(FitProblem { target, h, classes: constraint.classes(h, p)? })
}

/// Best rank-`H` Tucker fit of `target` with a constrained core, by
/// multi-start projected gradient descent over (class weights, kernels).
/// Starts run in parallel on keyed streams; the result does not depend on
/// the worker count.
pub fn best_constrained_fit(
    target: &ProbabilityTensor,
    h: usize,
    constraint: &Constraint,
    budget: FitBudget,
) -> Result<FitResult> {
    let problem = fit_problem(target, h, constraint)?;
    if budget.starts == 0 {
        return Err(Error::Argument("at least one start is required".into()));
    }
    let runs: Vec<(FitPoint, f64, bool)> = (0..budget.starts)
        .into_par_iter()
        .map(|s| {
            let mut key = [0u8; 32];
            key[..8].copy_from_slice(&budget.seed.to_le_bytes());
            key[8..16].copy_from_slice(&(s as u64).to_le_bytes());
            let mut rng = ChaCha8Rng::from_seed(key);
            problem.descend(problem.random_start(&mut rng), budget.iterations)
        })
        .collect();
    let (x, f, exhausted) =
        runs.into_iter().reduce(|best, r| if r.1 < best.1 { r } else { best }).expect("at least one start");
    problem.finish(x, f, exhausted)
}

/// Continues a fit from a given model under `constraint`. The starting core
/// must satisfy the constraint (a symmetric core satisfies every
/// group-symmetric constraint).
pub fn refine_fit(
    target: &ProbabilityTensor,
    constraint: &Constraint,
    start: &FitResult,
    iterations: usize,
) -> Result<FitResult> {
    let h = start.core.h();
    let problem = fit_problem(target, h, constraint)?;
    let mut v = vec![0.0; problem.classes.len()];
    for (cell, &c) in problem.classes.class_of.iter().enumerate() {
        v[c] += start.core.weights()[cell];
    }
    let rebuilt = problem.core(&v);
    if rebuilt.iter().zip(start.core.weights()).any(|(a, b)| (a - b).abs() > 1e-9) {
        return Err(Error::Argument("starting core does not satisfy the constraint".into()));
    }
    let theta = (0..start.kernels.p()).map(|j| start.kernels.variable(j).to_vec()).collect();
    let (x, f, exhausted) = problem.descend(FitPoint { v, theta }, iterations);
    problem.finish(x, f, exhausted)
}
