//! Posterior predictive checks and posterior summaries of fitted chains.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CategoricalDataset, GroupPartition};
use crate::error::{Error, Result};
use crate::gibbs::{ChainSamples, Draw, KernelSet};
use crate::linalg;
use crate::stats;

fn kernels_of(d: &Draw) -> Result<&KernelSet> {
    d.kernels.as_ref().ok_or_else(|| Error::Config("kernels were not retained in this chain".into()))
}

fn lambda_of(d: &Draw) -> Result<&[f64]> {
    d.lambda.as_deref().ok_or_else(|| Error::Config("scores were not retained in this chain".into()))
}

fn require_draws(samples: &ChainSamples) -> Result<()> {
    if samples.draws.is_empty() {
        return Err(Error::Config("chain has no retained draws".into()));
    }
    Ok(())
}

/// Mean score `ā^{(g)}_h` over `subjects` for one draw, `G × 2` row-major.
fn first_moments(lambda: &[f64], groups: usize, subjects: &[usize]) -> Vec<f64> {
    let mut a = vec![0.0; groups * 2];
    for &i in subjects {
        for g in 0..groups {
            let l = lambda[i * groups + g];
            a[g * 2] += 1.0 - l;
            a[g * 2 + 1] += l;
        }
    }
    let n = subjects.len() as f64;
    a.iter_mut().for_each(|v| *v /= n);
    a
}

/// `ā^{(g, v)}_{h h'} = mean_i λ^{(g)}_{ih} λ^{(v)}_{ih'}` for one pair of groups.
fn second_moments(lambda: &[f64], groups: usize, subjects: &[usize], g: usize, v: usize) -> [[f64; 2]; 2] {
    let mut m = [[0.0; 2]; 2];
    for &i in subjects {
        let a = lambda[i * groups + g];
        let b = lambda[i * groups + v];
        let (pa, pb) = ([1.0 - a, a], [1.0 - b, b]);
        for h in 0..2 {
            for k in 0..2 {
                m[h][k] += pa[h] * pb[k];
            }
        }
    }
    let n = subjects.len() as f64;
    m.iter_mut().flatten().for_each(|x| *x /= n);
    m
}

/// `π^{(j)}_x = Σ_h ā^{(g_j)}_h θ^{(j)}_{hx}`.
pub fn marginal_from_moments(kernels: &KernelSet, j: usize, abar: [f64; 2]) -> Vec<f64> {
    (0..kernels.levels()[j]).map(|x| abar[0] * kernels.prob(j, 0, x) + abar[1] * kernels.prob(j, 1, x)).collect()
}

/// `π^{(j,k)}_{xy} = Σ_{h,h'} ā_{hh'} θ^{(j)}_{hx} θ^{(k)}_{h'y}`, `d_j × d_k` row-major.
pub fn bivariate_from_moments(kernels: &KernelSet, j: usize, k: usize, abar: [[f64; 2]; 2]) -> Vec<f64> {
    let (dj, dk) = (kernels.levels()[j], kernels.levels()[k]);
    let mut out = vec![0.0; dj * dk];
    for x in 0..dj {
        for y in 0..dk {
            let mut s = 0.0;
            for h in 0..2 {
                for h2 in 0..2 {
                    s += abar[h][h2] * kernels.prob(j, h, x) * kernels.prob(k, h2, y);
                }
            }
            out[x * dk + y] = s;
        }
    }
    out
}

fn all_subjects(samples: &ChainSamples) -> Vec<usize> {
    (0..samples.meta.n).collect()
}

/// Per-draw model marginal of variable `j`, with `ā` the mean score over
/// subjects in that draw.
pub fn marginal_pmf(samples: &ChainSamples, j: usize) -> Result<Vec<Vec<f64>>> {
    marginal_pmf_over(samples, j, &all_subjects(samples))
}

/// As [`marginal_pmf`] with `ā` averaged over a subset of subjects.
pub fn marginal_pmf_over(samples: &ChainSamples, j: usize, subjects: &[usize]) -> Result<Vec<Vec<f64>>> {
    if j >= samples.meta.p {
        return Err(Error::Argument(format!("variable index {} out of range (p = {})", j + 1, samples.meta.p)));
    }
    require_draws(samples)?;
    let g = samples.meta.groups;
    let gj = samples.meta.assignment[j];
    samples
        .draws
        .iter()
        .map(|d| {
            let a = first_moments(lambda_of(d)?, g, subjects);
            Ok(marginal_from_moments(kernels_of(d)?, j, [a[gj * 2], a[gj * 2 + 1]]))
        })
        .collect()
}

/// Per-draw model bivariate pmf of variables `j ≠ k`, `d_j × d_k` row-major.
pub fn bivariate_pmf(samples: &ChainSamples, j: usize, k: usize) -> Result<Vec<Vec<f64>>> {
    bivariate_pmf_over(samples, j, k, &all_subjects(samples))
}

pub fn bivariate_pmf_over(samples: &ChainSamples, j: usize, k: usize, subjects: &[usize]) -> Result<Vec<Vec<f64>>> {
    let p = samples.meta.p;
    if j >= p || k >= p {
        return Err(Error::Argument(format!("variable index out of range (p = {p})")));
    }
    if j == k {
        return Err(Error::Argument("bivariate pmf needs two distinct variables".into()));
    }
    require_draws(samples)?;
    let g = samples.meta.groups;
    let (gj, gk) = (samples.meta.assignment[j], samples.meta.assignment[k]);
    samples
        .draws
        .iter()
        .map(|d| Ok(bivariate_from_moments(kernels_of(d)?, j, k, second_moments(lambda_of(d)?, g, subjects, gj, gk))))
        .collect()
}

/// `Σ_c |a_c − b_c|`.
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Marginal L1 statistic of one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalL1 {
    /// 0-based epoch when the report is stratified.
    pub epoch: Option<usize>,
    pub variable: usize,
    pub l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateL1 {
    pub epoch: Option<usize>,
    pub first: usize,
    pub second: usize,
    pub l1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Summary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub max: f64,
}

impl L1Summary {
    fn of(values: &[f64], quantiles: (f64, f64)) -> Self {
        Self {
            mean: stats::mean(values),
            lower: stats::quantile(values, quantiles.0),
            upper: stats::quantile(values, quantiles.1),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// L1 distances between posterior-mean model pmfs and empirical frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub marginal: Vec<MarginalL1>,
    pub bivariate: Vec<BivariateL1>,
    pub marginal_summary: L1Summary,
    pub bivariate_summary: Option<L1Summary>,
    pub quantiles: (f64, f64),
}

/// Posterior predictive L1 fit report.
///
/// The model pmfs are averaged over draws and compared to the empirical
/// frequencies. When the chain records an epoch per subject, every
/// statistic is computed within epochs (pairs of variables observed in the
/// same epoch).
pub fn l1_fit_report(samples: &ChainSamples, dataset: &CategoricalDataset, quantiles: (f64, f64)) -> Result<FitReport> {
    if samples.meta.dataset_digest != dataset.digest() {
        return Err(Error::Validation("chain was not fitted on this dataset (digest mismatch)".into()));
    }
    require_draws(samples)?;
    let p = dataset.p();
    let strata: Vec<(Option<usize>, Vec<usize>)> = match &samples.meta.epochs {
        Some(ep) => {
            let tt = ep.iter().copied().max().map_or(0, |m| m + 1);
            (0..tt)
                .map(|t| (Some(t), (0..dataset.n()).filter(|&i| ep[i] == t).collect::<Vec<_>>()))
                .filter(|(_, s)| !s.is_empty())
                .collect()
        }
        None => vec![(None, (0..dataset.n()).collect())],
    };
    let nd = samples.draws.len() as f64;
    let mut marginal = Vec::new();
    let mut bivariate = Vec::new();
    for (epoch, subjects) in &strata {
        for j in 0..p {
            let draws = marginal_pmf_over(samples, j, subjects)?;
            let mut mean = vec![0.0; dataset.levels()[j]];
            for d in &draws {
                mean.iter_mut().zip(d).for_each(|(a, b)| *a += b / nd);
            }
            let f = dataset.frequencies_over(j, subjects.iter().copied());
            marginal.push(MarginalL1 { epoch: *epoch, variable: j, l1: l1_distance(&mean, &f) });
        }
        let pairs: Vec<(usize, usize)> = (0..p).flat_map(|j| (j + 1..p).map(move |k| (j, k))).collect();
        let rows: Vec<Result<BivariateL1>> = pairs
            .par_iter()
            .map(|&(j, k)| {
                let draws = bivariate_pmf_over(samples, j, k, subjects)?;
                let mut mean = vec![0.0; dataset.levels()[j] * dataset.levels()[k]];
                for d in &draws {
                    mean.iter_mut().zip(d).for_each(|(a, b)| *a += b / nd);
                }
                let f = crate::linalg::to_row_major(&dataset.pair_frequencies_over(j, k, subjects.iter().copied()));
                Ok(BivariateL1 { epoch: *epoch, first: j, second: k, l1: l1_distance(&mean, &f) })
            })
            .collect();
        for r in rows {
            bivariate.push(r?);
        }
    }
    let mvals: Vec<f64> = marginal.iter().map(|m| m.l1).collect();
    let bvals: Vec<f64> = bivariate.iter().map(|b| b.l1).collect();
    Ok(FitReport {
        marginal_summary: L1Summary::of(&mvals, quantiles),
        bivariate_summary: (!bvals.is_empty()).then(|| L1Summary::of(&bvals, quantiles)),
        marginal,
        bivariate,
        quantiles,
    })
}

/// Thresholds of the admissible-condition rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityRule {
    pub c1: f64,
    pub c2: f64,
    pub posterior_threshold: f64,
}

impl Default for AdmissibilityRule {
    fn default() -> Self {
        Self { c1: 1.7, c2: 0.35, posterior_threshold: 0.5 }
    }
}

impl AdmissibilityRule {
    pub fn new(c1: f64, c2: f64, posterior_threshold: f64) -> Result<Self> {
        let rule = Self { c1, c2, posterior_threshold };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 1.0) {
            return Err(Error::Validation(format!("c1 = {} must exceed 1", self.c1)));
        }
        if !(self.c2 > 0.0) {
            return Err(Error::Validation(format!("c2 = {} must be positive", self.c2)));
        }
        if !(self.posterior_threshold > 0.0 && self.posterior_threshold < 1.0) {
            return Err(Error::Validation("posterior threshold must be in (0, 1)".into()));
        }
        Ok(())
    }

    /// Whether one kernel value marks the level as admissible against the
    /// population frequency `f`. For `f = 0` only the ratio rule applies and
    /// it reduces to `θ > 0`.
    pub fn holds(&self, theta: f64, f: f64) -> bool {
        if f == 0.0 {
            return theta > 0.0;
        }
        theta > self.c1 * f || (theta - f) / f > self.c2
    }
}

/// Posterior frequency of the admissibility rule for one (variable, level,
/// profile).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleCondition {
    pub variable: usize,
    pub level: usize,
    pub profile: usize,
    pub frequency: f64,
    pub posterior_probability: f64,
    pub admissible: bool,
}

/// Evaluates the admissibility rule in every draw and flags conditions whose
/// posterior frequency exceeds the threshold. Levels never observed also
/// need the 0.1 posterior quantile of `θ` to be positive.
pub fn admissible_conditions(
    samples: &ChainSamples,
    dataset: &CategoricalDataset,
    rule: &AdmissibilityRule,
) -> Result<Vec<AdmissibleCondition>> {
    rule.validate()?;
    require_draws(samples)?;
    if samples.meta.dataset_digest != dataset.digest() {
        return Err(Error::Validation("chain was not fitted on this dataset (digest mismatch)".into()));
    }
    let kernels: Vec<&KernelSet> = samples.draws.iter().map(kernels_of).collect::<Result<_>>()?;
    let profiles = kernels[0].profiles();
    let nd = kernels.len() as f64;
    let mut out = Vec::new();
    for j in 0..dataset.p() {
        let f = dataset.frequencies(j);
        for h in 0..profiles {
            for (l, &fl) in f.iter().enumerate() {
                let values: Vec<f64> = kernels.iter().map(|k| k.prob(j, h, l)).collect();
                let prob = values.iter().filter(|&&t| rule.holds(t, fl)).count() as f64 / nd;
                let mut admissible = prob > rule.posterior_threshold;
                if fl == 0.0 {
                    admissible &= stats::quantile(&values, 0.1) > 0.0;
                }
                out.push(AdmissibleCondition {
                    variable: j,
                    level: l,
                    profile: h,
                    frequency: fl,
                    posterior_probability: prob,
                    admissible,
                });
            }
        }
    }
    Ok(out)
}

/// Options of [`tertile_rate_table`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTableConfig {
    pub min_count: usize,
    pub quantiles: (f64, f64),
}

impl Default for RateTableConfig {
    fn default() -> Self {
        Self { min_count: 3, quantiles: (0.1, 0.9) }
    }
}

/// Posterior summary of one cell; `None` when the cell had fewer than
/// `min_count` subjects in more than half of the draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Outcome rates by score tertiles of the first two groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    /// `cells[a][b]`: tertile `a` of group 1 and tertile `b` of group 2
    /// (0 = lowest). Empty when there is only one group.
    pub cells: Vec<Vec<Option<RateCell>>>,
    /// Marginal rates by tertile of group 1 (right-hand column of the table).
    pub rows: Vec<Option<RateCell>>,
    /// Marginal rates by tertile of group 2 (bottom row).
    pub columns: Vec<Option<RateCell>>,
}

impl RateTable {
    /// Adjacent cell pairs whose medians decrease as either score tertile
    /// increases; a perfect double gradient has none.
    pub fn gradient_violations(&self) -> usize {
        let mut count = 0;
        let n = self.cells.len();
        for a in 0..n {
            for b in 0..n {
                let Some(c) = self.cells[a][b] else { continue };
                if a + 1 < n {
                    if let Some(next) = self.cells[a + 1][b] {
                        count += usize::from(next.median < c.median);
                    }
                }
                if b + 1 < n {
                    if let Some(next) = self.cells[a][b + 1] {
                        count += usize::from(next.median < c.median);
                    }
                }
            }
        }
        count
    }
}

/// Tertile (0, 1, 2) of each value by the empirical 1/3 and 2/3 quantiles.
fn tertiles(values: &[f64]) -> Result<Vec<usize>> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Domain("fewer than 3 distinct score values; tertiles are undefined".into()));
    }
    let (q1, q2) = (stats::quantile_sorted(&sorted, 1.0 / 3.0), stats::quantile_sorted(&sorted, 2.0 / 3.0));
    Ok(values
        .iter()
        .map(|&v| {
            if v <= q1 {
                0
            } else if v <= q2 {
                1
            } else {
                2
            }
        })
        .collect())
}

fn summarize_cell(values: &[f64], draws: usize, q: (f64, f64)) -> Option<RateCell> {
    if 2 * values.len() <= draws {
        return None;
    }
    Some(RateCell {
        median: stats::median(values),
        lower: stats::quantile(values, q.0),
        upper: stats::quantile(values, q.1),
    })
}

/// Outcome rates cross-tabulated by score tertiles. In every draw each
/// group's scores over `subjects` are cut at their empirical tertiles and
/// the outcome is averaged within each cell; cells are then summarized
/// across draws.
pub fn tertile_rate_table(
    samples: &ChainSamples,
    outcome: &[f64],
    subjects: &[usize],
    config: RateTableConfig,
) -> Result<RateTable> {
    require_draws(samples)?;
    if outcome.len() != samples.meta.n {
        return Err(Error::Dimension(format!("{} outcome values for {} subjects", outcome.len(), samples.meta.n)));
    }
    if subjects.is_empty() {
        return Err(Error::Argument("no subjects selected".into()));
    }
    let g = samples.meta.groups;
    let two = g >= 2;
    let mut cell_vals = vec![Vec::new(); 9];
    let mut row_vals = vec![Vec::new(); 3];
    let mut col_vals = vec![Vec::new(); 3];
    for d in &samples.draws {
        let lambda = lambda_of(d)?;
        let t1 = tertiles(&subjects.iter().map(|&i| lambda[i * g]).collect::<Vec<_>>())?;
        let t2 =
            if two { Some(tertiles(&subjects.iter().map(|&i| lambda[i * g + 1]).collect::<Vec<_>>())?) } else { None };
        let mut sums = [0.0; 9];
        let mut counts = [0usize; 9];
        let (mut rs, mut rc, mut cs, mut cc) = ([0.0; 3], [0usize; 3], [0.0; 3], [0usize; 3]);
        for (m, &i) in subjects.iter().enumerate() {
            rs[t1[m]] += outcome[i];
            rc[t1[m]] += 1;
            if let Some(t2) = &t2 {
                cs[t2[m]] += outcome[i];
                cc[t2[m]] += 1;
                sums[t1[m] * 3 + t2[m]] += outcome[i];
                counts[t1[m] * 3 + t2[m]] += 1;
            }
        }
        for c in 0..9 {
            if counts[c] >= config.min_count {
                cell_vals[c].push(sums[c] / counts[c] as f64);
            }
        }
        for t in 0..3 {
            if rc[t] >= config.min_count {
                row_vals[t].push(rs[t] / rc[t] as f64);
            }
            if cc[t] >= config.min_count {
                col_vals[t].push(cs[t] / cc[t] as f64);
            }
        }
    }
    let nd = samples.draws.len();
    let q = config.quantiles;
    Ok(RateTable {
        cells: if two {
            (0..3).map(|a| (0..3).map(|b| summarize_cell(&cell_vals[a * 3 + b], nd, q)).collect()).collect()
        } else {
            Vec::new()
        },
        rows: row_vals.iter().map(|v| summarize_cell(v, nd, q)).collect(),
        columns: if two { col_vals.iter().map(|v| summarize_cell(v, nd, q)).collect() } else { Vec::new() },
    })
}

/// Posterior summary of a scalar per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl EpochSummary {
    fn of(epoch: usize, values: &[f64], q: (f64, f64)) -> Self {
        Self {
            epoch,
            mean: stats::mean(values),
            sd: if values.len() > 1 { stats::variance(values).sqrt() } else { 0.0 },
            median: stats::median(values),
            lower: stats::quantile(values, q.0),
            upper: stats::quantile(values, q.1),
        }
    }
}

/// Per-draw `(mean, covariance)` of the score logits for each epoch: the
/// epoch effects and covariances in space-time chains, `μ` and `Σ`
/// otherwise (one epoch).
fn epoch_parameters(d: &Draw) -> Vec<(Vec<f64>, DMatrix<f64>)> {
    match &d.st {
        Some(st) => (0..st.epochs()).map(|t| (st.beta_t(t).to_vec(), st.sigma_t(t))).collect(),
        None => vec![(d.mu.clone(), d.sigma_matrix())],
    }
}

/// `exp{β^{(g)}_t − β^{(v)}_t + ½(Σ_{gg} + Σ_{vv} − 2Σ_{gv})}`.
pub fn score_odds_ratio(mean: &[f64], sigma: &DMatrix<f64>, g: usize, v: usize) -> f64 {
    (mean[g] - mean[v] + 0.5 * (sigma[(g, g)] + sigma[(v, v)] - 2.0 * sigma[(g, v)])).exp()
}

/// Posterior distribution of the expected odds ratio between groups `g` and
/// `v`, per epoch.
pub fn score_odds_ratio_summary(
    samples: &ChainSamples,
    g: usize,
    v: usize,
    quantiles: (f64, f64),
) -> Result<Vec<EpochSummary>> {
    require_draws(samples)?;
    let groups = samples.meta.groups;
    if g >= groups || v >= groups || g == v {
        return Err(Error::Argument(format!(
            "groups {} and {} must be distinct and at most G = {groups}",
            g + 1,
            v + 1
        )));
    }
    let per_draw: Vec<Vec<f64>> = samples
        .draws
        .iter()
        .map(|d| epoch_parameters(d).iter().map(|(m, s)| score_odds_ratio(m, s, g, v)).collect())
        .collect();
    let tt = per_draw[0].len();
    Ok((0..tt).map(|t| EpochSummary::of(t, &per_draw.iter().map(|r| r[t]).collect::<Vec<_>>(), quantiles)).collect())
}

/// Cross-group correlation summary for one epoch and group pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub epoch: usize,
    pub first: usize,
    pub second: usize,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    /// When the credible interval contains 0, separate models per group are
    /// a viable simplification.
    pub interval_includes_zero: bool,
}

/// `Σ_{gv} / √(Σ_{gg} Σ_{vv})`.
pub fn correlation(sigma: &DMatrix<f64>, g: usize, v: usize) -> f64 {
    sigma[(g, v)] / (sigma[(g, g)] * sigma[(v, v)]).sqrt()
}

/// Posterior mean, sd and equal-tailed credible interval (`level`) of every
/// cross-group correlation, per epoch.
pub fn score_correlation_summary(samples: &ChainSamples, level: f64) -> Result<Vec<CorrelationSummary>> {
    require_draws(samples)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument("credible level must be in (0, 1)".into()));
    }
    let groups = samples.meta.groups;
    let params: Vec<Vec<(Vec<f64>, DMatrix<f64>)>> = samples.draws.iter().map(epoch_parameters).collect();
    let tt = params[0].len();
    let alpha = (1.0 - level) / 2.0;
    let mut out = Vec::new();
    for t in 0..tt {
        for g in 0..groups {
            for v in g + 1..groups {
                let vals: Vec<f64> = params.iter().map(|p| correlation(&p[t].1, g, v)).collect();
                let (lower, upper) = (stats::quantile(&vals, alpha), stats::quantile(&vals, 1.0 - alpha));
                out.push(CorrelationSummary {
                    epoch: t,
                    first: g,
                    second: v,
                    mean: stats::mean(&vals),
                    sd: if vals.len() > 1 { stats::variance(&vals).sqrt() } else { 0.0 },
                    lower,
                    upper,
                    interval_includes_zero: lower <= 0.0 && upper >= 0.0,
                });
            }
        }
    }
    Ok(out)
}

/// Options of [`label_switch_monitor`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchMonitorConfig {
    /// Number of leading draws used to choose the anchor.
    pub pilot: usize,
    pub max_switches: usize,
}

impl Default for SwitchMonitorConfig {
    fn default() -> Self {
        Self { pilot: 200, max_switches: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchReport {
    pub group: usize,
    pub anchor_variable: usize,
    pub anchor_level: usize,
    pub switches: usize,
    pub flagged: bool,
}

/// Counts label switches per group. The anchor is the (variable, level) of
/// the group with the largest mean profile separation `|θ_1 − θ_2|` over the
/// pilot draws; a switch is a change of sign of `θ_1 − θ_2` at the anchor
/// between consecutive draws.
pub fn label_switch_monitor(samples: &ChainSamples, config: SwitchMonitorConfig) -> Result<Vec<SwitchReport>> {
    require_draws(samples)?;
    let kernels: Vec<&KernelSet> = samples.draws.iter().map(kernels_of).collect::<Result<_>>()?;
    let partition: GroupPartition = samples.meta.partition()?;
    let pilot = &kernels[..config.pilot.clamp(1, kernels.len())];
    let mut out = Vec::with_capacity(partition.groups());
    for g in 0..partition.groups() {
        let mut best = (0usize, 0usize, f64::NEG_INFINITY);
        for j in partition.members(g) {
            for l in 0..kernels[0].levels()[j] {
                let sep =
                    pilot.iter().map(|k| k.prob(j, 0, l) - k.prob(j, 1, l)).sum::<f64>().abs() / pilot.len() as f64;
                if sep > best.2 {
                    best = (j, l, sep);
                }
            }
        }
        let (j, l, _) = best;
        let mut switches = 0;
        let mut last = 0.0f64;
        for k in &kernels {
            let s = (k.prob(j, 0, l) - k.prob(j, 1, l)).signum();
            if s == 0.0 {
                continue;
            }
            if last != 0.0 && s != last {
                switches += 1;
            }
            last = s;
        }
        out.push(SwitchReport {
            group: g,
            anchor_variable: j,
            anchor_level: l,
            switches,
            flagged: switches > config.max_switches,
        });
    }
    Ok(out)
}

/// Mean absolute error of estimated profile-2 scores against the truth, per
/// group, with each group's profile labels aligned (`λ` or `1 − λ`,
/// whichever is closer).
pub fn score_l1_error(estimate: &[f64], truth: &[f64], groups: usize) -> Result<Vec<f64>> {
    if estimate.len() != truth.len() || groups == 0 || !estimate.len().is_multiple_of(groups) {
        return Err(Error::Dimension(format!("score matrices of length {} and {}", estimate.len(), truth.len())));
    }
    let n = estimate.len() / groups;
    Ok((0..groups)
        .map(|g| {
            let (mut same, mut flipped) = (0.0, 0.0);
            for i in 0..n {
                let (e, t) = (estimate[i * groups + g], truth[i * groups + g]);
                same += (e - t).abs();
                flipped += (1.0 - e - t).abs();
            }
            same.min(flipped) / n as f64
        })
        .collect())
}

/// Posterior-mean covariance of the score logits (or `Σ_t` of epoch `t`).
pub fn mean_covariance(samples: &ChainSamples, epoch: Option<usize>) -> Result<DMatrix<f64>> {
    require_draws(samples)?;
    let g = samples.meta.groups;
    let mut acc = DMatrix::zeros(g, g);
    for d in &samples.draws {
        acc += match (epoch, &d.st) {
            (Some(t), Some(st)) if t < st.epochs() => st.sigma_t(t),
            (Some(t), _) => return Err(Error::Argument(format!("epoch {} is not available", t + 1))),
            (None, _) => d.sigma_matrix(),
        };
    }
    let mut m = acc / samples.draws.len() as f64;
    linalg::symmetrize(&mut m);
    Ok(m)
}
