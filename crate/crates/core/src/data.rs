//! Datasets, variable partitions, hyperparameters and CSV ingestion.
//!
//! Category codes are 1-based in files and 0-based in memory; the loader and
//! writer are the only places that convert.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;
use crate::spatiotemporal::SpaceTimeCovariates;

/// `n × p` matrix of category codes with per-variable level counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalDataset {
    names: Vec<String>,
    levels: Vec<usize>,
    n: usize,
    /// Row-major, 0-based.
    codes: Vec<u16>,
}

impl CategoricalDataset {
    /// Builds a dataset from 0-based codes laid out row-major.
    pub fn new(names: Vec<String>, levels: Vec<usize>, codes: Vec<u16>) -> Result<Self> {
        let p = levels.len();
        if p == 0 {
            return Err(Error::Validation("dataset needs at least one variable".into()));
        }
        if names.len() != p {
            return Err(Error::Dimension(format!("{} names for {p} variables", names.len())));
        }
        if codes.is_empty() || !codes.len().is_multiple_of(p) {
            return Err(Error::Validation(format!(
                "{} codes do not form rows of {p} variables (need n >= 1)",
                codes.len()
            )));
        }
        if let Some(j) = levels.iter().position(|&d| d < 2 || d > u16::MAX as usize) {
            return Err(Error::Validation(format!(
                "variable {} has {} levels; at least 2 required",
                names[j], levels[j]
            )));
        }
        let n = codes.len() / p;
        for (idx, &c) in codes.iter().enumerate() {
            let (i, j) = (idx / p, idx % p);
            if c as usize >= levels[j] {
                return Err(Error::Validation(format!(
                    "code {} at row {}, column {} ({}) outside 1..={}",
                    c as usize + 1,
                    i + 1,
                    j + 1,
                    names[j],
                    levels[j]
                )));
            }
        }
        Ok(Self { names, levels, n, codes })
    }

    /// Builds a dataset from 1-based codes, as they appear in files.
    pub fn from_one_based(names: Vec<String>, levels: Vec<usize>, codes: &[usize]) -> Result<Self> {
        let p = levels.len().max(1);
        let mut zero = Vec::with_capacity(codes.len());
        for (idx, &c) in codes.iter().enumerate() {
            if c == 0 {
                return Err(Error::Validation(format!(
                    "code 0 at row {}, column {}; codes are 1-based",
                    idx / p + 1,
                    idx % p + 1
                )));
            }
            zero.push(u16::try_from(c - 1).map_err(|_| Error::Validation(format!("code {c} too large")))?);
        }
        Self::new(names, levels, zero)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// 0-based code of subject `i`, variable `j`.
    #[inline]
    pub fn code(&self, i: usize, j: usize) -> usize {
        self.codes[i * self.p() + j] as usize
    }

    pub fn row(&self, i: usize) -> &[u16] {
        let p = self.p();
        &self.codes[i * p..(i + 1) * p]
    }

    pub fn codes(&self) -> &[u16] {
        &self.codes
    }

    /// Replaces all codes, keeping shape and levels. Used by simulation-based
    /// checks that regenerate data between sweeps.
    pub fn set_codes(&mut self, codes: Vec<u16>) -> Result<()> {
        let rebuilt = Self::new(self.names.clone(), self.levels.clone(), codes)?;
        if rebuilt.n != self.n {
            return Err(Error::Dimension(format!("expected {} rows, got {}", self.n, rebuilt.n)));
        }
        *self = rebuilt;
        Ok(())
    }

    /// Empirical category frequencies `f̂_{jc}` of variable `j`.
    pub fn frequencies(&self, j: usize) -> Vec<f64> {
        self.frequencies_over(j, 0..self.n)
    }

    pub fn frequencies_over(&self, j: usize, subjects: impl IntoIterator<Item = usize>) -> Vec<f64> {
        let mut f = vec![0.0; self.levels[j]];
        let mut count = 0usize;
        for i in subjects {
            f[self.code(i, j)] += 1.0;
            count += 1;
        }
        if count > 0 {
            f.iter_mut().for_each(|v| *v /= count as f64);
        }
        f
    }

    /// Empirical joint frequencies of variables `j` and `k` (row = level of j).
    pub fn pair_frequencies_over(&self, j: usize, k: usize, subjects: impl IntoIterator<Item = usize>) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(self.levels[j], self.levels[k]);
        let mut count = 0usize;
        for i in subjects {
            f[(self.code(i, j), self.code(i, k))] += 1.0;
            count += 1;
        }
        if count > 0 {
            f /= count as f64;
        }
        f
    }

    /// Canonical CSV: header of variable names, one row of 1-based codes per
    /// subject, `\n` line endings.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.codes.len() * 2 + 64);
        out.push_str(&self.names.join(","));
        out.push('\n');
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|&c| (c as usize + 1).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    /// Hex SHA-256 of the canonical CSV serialization.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv_string().as_bytes()))
    }
}

/// Assignment of variables to groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    /// 0-based group of each variable.
    assignment: Vec<usize>,
    groups: usize,
    sizes: Vec<usize>,
}

impl GroupPartition {
    /// Builds a partition from 1-based group ids, as written in schemas.
    pub fn from_one_based(assignment: &[usize], groups: usize) -> Result<Self> {
        if let Some(&bad) = assignment.iter().find(|&&g| g == 0 || g > groups) {
            return Err(Error::Validation(format!("group id {bad} outside 1..={groups}")));
        }
        Self::new(assignment.iter().map(|g| g - 1).collect(), groups)
    }

    /// Builds a partition from 0-based group ids.
    pub fn new(assignment: Vec<usize>, groups: usize) -> Result<Self> {
        if groups == 0 {
            return Err(Error::Validation("at least one group required".into()));
        }
        let mut sizes = vec![0usize; groups];
        for &g in &assignment {
            if g >= groups {
                return Err(Error::Validation(format!("group id {} outside 1..={groups}", g + 1)));
            }
            sizes[g] += 1;
        }
        if let Some(g) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Validation(format!("group {} has no variables", g + 1)));
        }
        Ok(Self { assignment, groups, sizes })
    }

    /// A single group holding all `p` variables.
    pub fn single(p: usize) -> Result<Self> {
        Self::new(vec![0; p], 1)
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn group_of(&self, j: usize) -> usize {
        self.assignment[j]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// `p_g` for each group.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.assignment[j] == g).collect()
    }
}

/// Succeeds iff the partition covers exactly the dataset's variables.
/// Empty groups are already excluded when a partition is built.
pub fn validate_partition(dataset: &CategoricalDataset, partition: &GroupPartition) -> Result<()> {
    if partition.len() != dataset.p() {
        return Err(Error::Validation(format!(
            "partition has {} entries but the dataset has {} variables",
            partition.len(),
            dataset.p()
        )));
    }
    Ok(())
}

/// Prior hyperparameters for kernels (Dirichlet), the score mean (Gaussian)
/// and the score covariance (inverse-Wishart).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha: Vec<Vec<f64>>,
    pub mu0: DVector<f64>,
    pub sigma0: DMatrix<f64>,
    pub nu0: f64,
    pub psi0: DMatrix<f64>,
}

impl Hyperparams {
    pub fn validate(&self, dataset: &CategoricalDataset, partition: &GroupPartition) -> Result<()> {
        let g = partition.groups();
        if self.alpha.len() != dataset.p() {
            return Err(Error::Dimension(format!("{} alpha vectors for {} variables", self.alpha.len(), dataset.p())));
        }
        for (j, a) in self.alpha.iter().enumerate() {
            if a.len() != dataset.levels()[j] {
                return Err(Error::Dimension(format!("alpha for variable {} has length {}", j + 1, a.len())));
            }
            if a.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::Validation(format!("alpha for variable {} must be positive", j + 1)));
            }
        }
        if self.mu0.len() != g || self.sigma0.nrows() != g || self.psi0.nrows() != g {
            return Err(Error::Dimension(format!("hyperparameters must have dimension G = {g}")));
        }
        linalg::check_spd(&self.sigma0, "Sigma0")?;
        linalg::check_spd(&self.psi0, "Psi0")?;
        if !(self.nu0 > g as f64 - 1.0) {
            return Err(Error::Validation(format!("nu0 = {} must exceed G - 1 = {}", self.nu0, g - 1)));
        }
        Ok(())
    }
}

/// `α^{(j)}_k = 1/d_j`, `μ₀ = 0`, `Σ₀ = Ψ₀ = I`, `ν₀ = G`.
pub fn default_hyperparams(dataset: &CategoricalDataset, partition: &GroupPartition) -> Hyperparams {
    let g = partition.groups();
    Hyperparams {
        alpha: dataset.levels().iter().map(|&d| vec![1.0 / d as f64; d]).collect(),
        mu0: DVector::zeros(g),
        sigma0: DMatrix::identity(g, g),
        nu0: g as f64,
        psi0: DMatrix::identity(g, g),
    }
}

/// Per-variable entry of a schema sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    /// CSV column; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    /// Level count, including the missing category when enabled.
    pub levels: usize,
    /// 1-based group id.
    pub group: usize,
    /// Blank cells map to the last level.
    #[serde(default)]
    pub missing_category: bool,
}

impl VariableSpec {
    fn column(&self) -> &str {
        self.column.as_deref().unwrap_or(&self.name)
    }
}

/// JSON sidecar describing how to read a CSV survey file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub variables: Vec<VariableSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinate_columns: Option<[String; 2]>,
}

impl Schema {
    /// Schema matching a dataset written by [`CategoricalDataset::write_csv`].
    pub fn for_dataset(dataset: &CategoricalDataset, partition: &GroupPartition) -> Self {
        Schema {
            variables: (0..dataset.p())
                .map(|j| VariableSpec {
                    name: dataset.names()[j].clone(),
                    column: None,
                    levels: dataset.levels()[j],
                    group: partition.group_of(j) + 1,
                    missing_category: false,
                })
                .collect(),
            groups: Some(partition.groups()),
            epoch_column: None,
            coordinate_columns: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn partition(&self) -> Result<GroupPartition> {
        let ids: Vec<usize> = self.variables.iter().map(|v| v.group).collect();
        let groups = self.groups.unwrap_or_else(|| ids.iter().copied().max().unwrap_or(0));
        GroupPartition::from_one_based(&ids, groups)
    }

    pub fn has_space_time(&self) -> bool {
        self.epoch_column.is_some() && self.coordinate_columns.is_some()
    }
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(RawTable { header, rows })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map(|pos| pos.line() as usize).unwrap_or(0);
    Error::Parse { path: path.into(), row, column: 0, message: e.to_string() }
}

fn column_index(table: &RawTable, name: &str, path: &Path) -> Result<usize> {
    table.header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
        path: path.into(),
        row: 1,
        column: 0,
        message: format!("missing column '{name}'"),
    })
}

/// Reads a CSV survey file according to `schema`.
///
/// Rows in error messages count the header as row 1; columns are 1-based.
pub fn load_dataset(path: &Path, schema: &Schema) -> Result<CategoricalDataset> {
    let table = read_table(path)?;
    let cols: Vec<usize> =
        schema.variables.iter().map(|v| column_index(&table, v.column(), path)).collect::<Result<_>>()?;
    let p = schema.variables.len();
    let mut codes = Vec::with_capacity(table.rows.len() * p);
    for (r, row) in table.rows.iter().enumerate() {
        let line = r + 2;
        for (spec, &c) in schema.variables.iter().zip(&cols) {
            let cell = row.get(c).map(String::as_str).unwrap_or("");
            let code = if cell.is_empty() {
                if spec.missing_category {
                    spec.levels
                } else {
                    return Err(Error::Parse {
                        path: path.into(),
                        row: line,
                        column: c + 1,
                        message: format!("blank cell for '{}' without a missing category", spec.name),
                    });
                }
            } else {
                cell.parse::<usize>().map_err(|_| Error::Parse {
                    path: path.into(),
                    row: line,
                    column: c + 1,
                    message: format!("'{cell}' is not a category code"),
                })?
            };
            if code == 0 || code > spec.levels {
                return Err(Error::Validation(format!(
                    "{}: code {code} at row {line}, column {} ('{}') outside 1..={}",
                    path.display(),
                    c + 1,
                    spec.name,
                    spec.levels
                )));
            }
            codes.push((code - 1) as u16);
        }
    }
    CategoricalDataset::new(
        schema.variables.iter().map(|v| v.name.clone()).collect(),
        schema.variables.iter().map(|v| v.levels).collect(),
        codes,
    )
}

/// Reads epoch labels and planar coordinates named by the schema, if any.
pub fn load_covariates(path: &Path, schema: &Schema) -> Result<Option<SpaceTimeCovariates>> {
    let (Some(epoch_col), Some([xc, yc])) = (&schema.epoch_column, &schema.coordinate_columns) else {
        return Ok(None);
    };
    let table = read_table(path)?;
    let e = column_index(&table, epoch_col, path)?;
    let x = column_index(&table, xc, path)?;
    let y = column_index(&table, yc, path)?;
    let parse = |r: usize, c: usize| -> Result<f64> {
        let cell = table.rows[r].get(c).map(String::as_str).unwrap_or("");
        cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
            path: path.into(),
            row: r + 2,
            column: c + 1,
            message: format!("'{cell}' is not a finite number"),
        })
    };
    let mut labels = Vec::with_capacity(table.rows.len());
    let mut coords = Vec::with_capacity(table.rows.len());
    for r in 0..table.rows.len() {
        let label = table.rows[r].get(e).cloned().unwrap_or_default();
        if label.is_empty() {
            return Err(Error::Parse { path: path.into(), row: r + 2, column: e + 1, message: "blank epoch".into() });
        }
        labels.push(label);
        coords.push([parse(r, x)?, parse(r, y)?]);
    }
    // Epochs are ordered numerically when every label is numeric.
    let mut ordered: Vec<String> =
        labels.iter().cloned().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    if ordered.iter().all(|l| l.parse::<f64>().is_ok()) {
        ordered.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    let epoch_of: BTreeMap<&str, usize> = ordered.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let time_id = labels.iter().map(|l| epoch_of[l.as_str()]).collect();
    SpaceTimeCovariates::new(time_id, coords, ordered).map(Some)
}
