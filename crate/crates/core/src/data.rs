//! Core data types: group partitions, dataset views, CSV ingestion with
//! dummy expansion, and column standardization.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    pub columns: Vec<usize>,
}

/// Disjoint, named column groups over `p` columns. Columns outside every
/// group are adjustment-only covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition {
    p: usize,
    groups: Vec<Group>,
    membership: Vec<Option<usize>>,
}

impl GroupPartition {
    pub fn new(p: usize, groups: Vec<Group>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Schema("partition must contain at least one group".into()));
        }
        let mut membership: Vec<Option<usize>> = vec![None; p];
        let mut seen_names = HashMap::new();
        for (m, g) in groups.iter().enumerate() {
            if g.columns.is_empty() {
                return Err(Error::Schema(format!("group '{}' is empty", g.name)));
            }
            if seen_names.insert(g.name.clone(), m).is_some() {
                return Err(Error::Schema(format!("duplicate group name '{}'", g.name)));
            }
            for &j in &g.columns {
                if j >= p {
                    return Err(Error::Schema(format!(
                        "group '{}' references column {j} but p = {p}",
                        g.name
                    )));
                }
                if let Some(other) = membership[j] {
                    return Err(Error::Schema(format!(
                        "column {j} belongs to both '{}' and '{}'",
                        groups[other].name, g.name
                    )));
                }
                membership[j] = Some(m);
            }
        }
        Ok(Self {
            p,
            groups,
            membership,
        })
    }

    /// Consecutive blocks of `size` columns named `g0, g1, ...`.
    pub fn contiguous(count: usize, size: usize) -> Self {
        let groups = (0..count)
            .map(|m| Group {
                name: format!("g{m}"),
                columns: (m * size..(m + 1) * size).collect(),
            })
            .collect();
        Self::new(count * size, groups).expect("contiguous partition is valid")
    }

    /// One group per column.
    pub fn singletons(p: usize) -> Self {
        Self::contiguous(p, 1)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group(&self, m: usize) -> &Group {
        &self.groups[m]
    }

    pub fn names(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.name.clone()).collect()
    }

    /// Group index of column `j`, or `None` when the column is ungrouped.
    pub fn group_of(&self, j: usize) -> Option<usize> {
        self.membership[j]
    }

    pub fn grouped_columns(&self) -> Vec<usize> {
        (0..self.p).filter(|&j| self.membership[j].is_some()).collect()
    }

    pub fn ungrouped_columns(&self) -> Vec<usize> {
        (0..self.p).filter(|&j| self.membership[j].is_none()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeFamily {
    Gaussian,
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Identity,
    Logit,
}

impl OutcomeFamily {
    pub fn link(self) -> Link {
        match self {
            OutcomeFamily::Gaussian => Link::Identity,
            OutcomeFamily::Binomial => Link::Logit,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeFamily::Gaussian => "gaussian",
            OutcomeFamily::Binomial => "binomial",
        }
    }
}

impl std::str::FromStr for OutcomeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(OutcomeFamily::Gaussian),
            "binomial" => Ok(OutcomeFamily::Binomial),
            other => Err(Error::Schema(format!("unknown family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnMeta {
    Continuous,
    /// One-hot indicator for `level` of categorical parent `parent`.
    Dummy { parent: usize, level: String },
}

/// A categorical predictor after L-1 dummy expansion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Categorical {
    pub name: String,
    pub reference: String,
    /// Dummy column indices, in the same order as `levels`.
    pub columns: Vec<usize>,
    pub levels: Vec<String>,
}

/// One site's design, outcome, and grouping.
#[derive(Debug, Clone)]
pub struct DatasetView {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub family: OutcomeFamily,
    pub partition: GroupPartition,
    pub column_names: Vec<String>,
    pub column_meta: Vec<ColumnMeta>,
    pub categoricals: Vec<Categorical>,
}

impl DatasetView {
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        family: OutcomeFamily,
        partition: GroupPartition,
        column_names: Vec<String>,
        column_meta: Vec<ColumnMeta>,
        categoricals: Vec<Categorical>,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 {
            return Err(Error::Dimension("dataset has no rows".into()));
        }
        if y.len() != n {
            return Err(Error::Dimension(format!("X has {n} rows but y has {}", y.len())));
        }
        if partition.p() != p || column_names.len() != p || column_meta.len() != p {
            return Err(Error::Dimension(format!(
                "X has {p} columns but metadata covers {}/{}/{}",
                partition.p(),
                column_names.len(),
                column_meta.len()
            )));
        }
        if family == OutcomeFamily::Binomial {
            if let Some((i, v)) = y.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
                return Err(Error::Data(format!(
                    "binomial outcome must be 0 or 1, found {v} at row {}",
                    i + 1
                )));
            }
        }
        for cat in &categoricals {
            for i in 0..n {
                let s: f64 = cat.columns.iter().map(|&j| x[(i, j)]).sum();
                let one_hot = cat.columns.iter().all(|&j| x[(i, j)] == 0.0 || x[(i, j)] == 1.0);
                if !one_hot || (s != 0.0 && s != 1.0) {
                    return Err(Error::Data(format!(
                        "dummy block of '{}' is not one-hot at row {}",
                        cat.name,
                        i + 1
                    )));
                }
            }
        }
        Ok(Self {
            x,
            y,
            family,
            partition,
            column_names,
            column_meta,
            categoricals,
        })
    }

    /// All-continuous view with generated column names `x0, x1, ...`.
    pub fn continuous(
        x: DMatrix<f64>,
        y: DVector<f64>,
        family: OutcomeFamily,
        partition: GroupPartition,
    ) -> Result<Self> {
        let p = x.ncols();
        let names = (0..p).map(|j| format!("x{j}")).collect();
        Self::new(x, y, family, partition, names, vec![ColumnMeta::Continuous; p], Vec::new())
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn with_outcome(&self, y: DVector<f64>) -> Result<Self> {
        Self::new(
            self.x.clone(),
            y,
            self.family,
            self.partition.clone(),
            self.column_names.clone(),
            self.column_meta.clone(),
            self.categoricals.clone(),
        )
    }

    pub fn is_continuous(&self, j: usize) -> bool {
        matches!(self.column_meta[j], ColumnMeta::Continuous)
    }

    /// Recover the original labels of categorical `parent` row by row.
    pub fn decode_categorical(&self, parent: usize) -> Vec<String> {
        let cat = &self.categoricals[parent];
        (0..self.n())
            .map(|i| {
                cat.columns
                    .iter()
                    .zip(&cat.levels)
                    .find(|(&j, _)| self.x[(i, j)] == 1.0)
                    .map(|(_, level)| level.clone())
                    .unwrap_or_else(|| cat.reference.clone())
            })
            .collect()
    }

    /// Stack datasets that share one column schema and outcome family.
    pub fn concat(parts: &[&DatasetView]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Data("nothing to concatenate".into()))?;
        for d in &parts[1..] {
            if d.column_names != first.column_names
                || d.partition != first.partition
                || d.column_meta != first.column_meta
            {
                return Err(Error::StrategyInapplicable(
                    "datasets do not share a column schema".into(),
                ));
            }
            if d.family != first.family {
                return Err(Error::StrategyInapplicable(
                    "datasets have different outcome families".into(),
                ));
            }
        }
        let n: usize = parts.iter().map(|d| d.n()).sum();
        let p = first.p();
        let mut x = DMatrix::zeros(n, p);
        let mut y = DVector::zeros(n);
        let mut row = 0;
        for d in parts {
            x.rows_mut(row, d.n()).copy_from(&d.x);
            y.rows_mut(row, d.n()).copy_from(&d.y);
            row += d.n();
        }
        Self::new(
            x,
            y,
            first.family,
            first.partition.clone(),
            first.column_names.clone(),
            first.column_meta.clone(),
            first.categoricals.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// Typed predictor columns plus the outcome column name.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSchema {
    pub outcome: String,
    pub predictors: Vec<ColumnSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub columns: Vec<String>,
}

/// Group definition document shared by every site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub groups: Vec<GroupSpec>,
    pub outcome: String,
    pub family: OutcomeFamily,
    /// Categorical predictor name to its admissible levels.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub categorical: BTreeMap<String, Vec<String>>,
}

impl PartitionSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Every non-outcome header column becomes a predictor; columns listed
    /// under `categorical` are typed as such, the rest are continuous.
    pub fn schema_for_header(&self, header: &[String]) -> DatasetSchema {
        let predictors = header
            .iter()
            .filter(|h| **h != self.outcome)
            .map(|h| ColumnSpec {
                name: h.clone(),
                kind: match self.categorical.get(h) {
                    Some(levels) => ColumnKind::Categorical {
                        levels: levels.clone(),
                    },
                    None => ColumnKind::Continuous,
                },
            })
            .collect();
        DatasetSchema {
            outcome: self.outcome.clone(),
            predictors,
        }
    }
}

/// Read the header row of a CSV file.
pub fn read_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    Ok(rdr.headers()?.iter().map(|s| s.trim().to_string()).collect())
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let t = cell.trim();
    if t.is_empty() {
        return Err(Error::Data(format!(
            "missing value at row {row}, column '{column}'"
        )));
    }
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            row,
            column: column.to_string(),
            message: format!("'{t}' is not a finite number"),
        })
}

/// Load a CSV into a [`DatasetView`], expanding each L-level categorical into
/// L-1 dummies (most frequent level is the reference).
pub fn load_dataset(
    path: impl AsRef<Path>,
    schema: &DatasetSchema,
    partition_spec: &PartitionSpec,
) -> Result<DatasetView> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let position = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };
    let outcome_pos = position(&schema.outcome)?;
    let predictor_pos = schema
        .predictors
        .iter()
        .map(|c| position(&c.name))
        .collect::<Result<Vec<_>>>()?;

    let mut y = Vec::new();
    let mut cont_values: Vec<Vec<f64>> = vec![Vec::new(); schema.predictors.len()];
    let mut cat_codes: Vec<Vec<usize>> = vec![Vec::new(); schema.predictors.len()];
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |pos: usize| record.get(pos).unwrap_or("");
        y.push(parse_number(cell(outcome_pos), row, &schema.outcome)?);
        for (c, spec) in schema.predictors.iter().enumerate() {
            let raw = cell(predictor_pos[c]);
            match &spec.kind {
                ColumnKind::Continuous => cont_values[c].push(parse_number(raw, row, &spec.name)?),
                ColumnKind::Categorical { levels } => {
                    let t = raw.trim();
                    if t.is_empty() {
                        return Err(Error::Data(format!(
                            "missing value at row {row}, column '{}'",
                            spec.name
                        )));
                    }
                    let code = levels.iter().position(|l| l == t).ok_or_else(|| {
                        Error::Data(format!(
                            "level '{t}' of '{}' at row {row} is not declared in the schema",
                            spec.name
                        ))
                    })?;
                    cat_codes[c].push(code);
                }
            }
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::Dimension("CSV has no data rows".into()));
    }

    // Expand predictors into design columns.
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut column_names = Vec::new();
    let mut column_meta = Vec::new();
    let mut categoricals = Vec::new();
    let mut expanded: HashMap<&str, Vec<usize>> = HashMap::new();
    for (c, spec) in schema.predictors.iter().enumerate() {
        match &spec.kind {
            ColumnKind::Continuous => {
                expanded.insert(&spec.name, vec![columns.len()]);
                columns.push(std::mem::take(&mut cont_values[c]));
                column_names.push(spec.name.clone());
                column_meta.push(ColumnMeta::Continuous);
            }
            ColumnKind::Categorical { levels } => {
                if levels.len() < 2 {
                    return Err(Error::Schema(format!(
                        "categorical '{}' needs at least two levels",
                        spec.name
                    )));
                }
                let mut counts = vec![0usize; levels.len()];
                for &code in &cat_codes[c] {
                    counts[code] += 1;
                }
                // Most frequent level; ties go to the first declared level.
                let reference = counts
                    .iter()
                    .enumerate()
                    .fold(0, |best, (l, &k)| if k > counts[best] { l } else { best });
                let parent = categoricals.len();
                let mut idx = Vec::new();
                let mut kept_levels = Vec::new();
                for (l, level) in levels.iter().enumerate() {
                    if l == reference {
                        continue;
                    }
                    idx.push(columns.len());
                    columns.push(
                        cat_codes[c]
                            .iter()
                            .map(|&code| if code == l { 1.0 } else { 0.0 })
                            .collect(),
                    );
                    column_names.push(format!("{}={}", spec.name, level));
                    column_meta.push(ColumnMeta::Dummy {
                        parent,
                        level: level.clone(),
                    });
                    kept_levels.push(level.clone());
                }
                expanded.insert(&spec.name, idx.clone());
                categoricals.push(Categorical {
                    name: spec.name.clone(),
                    reference: levels[reference].clone(),
                    columns: idx,
                    levels: kept_levels,
                });
            }
        }
    }
    let p = columns.len();
    let x = DMatrix::from_fn(n, p, |i, j| columns[j][i]);

    let groups = partition_spec
        .groups
        .iter()
        .map(|g| {
            let mut cols = Vec::new();
            for name in &g.columns {
                let idx = expanded.get(name.as_str()).ok_or_else(|| {
                    Error::Schema(format!("group '{}' names unknown column '{name}'", g.name))
                })?;
                cols.extend_from_slice(idx);
            }
            Ok(Group {
                name: g.name.clone(),
                columns: cols,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let partition = GroupPartition::new(p, groups)?;
    DatasetView::new(
        x,
        DVector::from_vec(y),
        partition_spec.family,
        partition,
        column_names,
        column_meta,
        categoricals,
    )
}

/// Per-column (mean, scale) for standardized columns; `None` for untouched ones.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationRecord {
    pub columns: Vec<Option<(f64, f64)>>,
}

impl StandardizationRecord {
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, t) in self.columns.iter().enumerate() {
            if let Some((mean, scale)) = t {
                out.column_mut(j).apply(|v| *v = (*v - mean) / scale);
            }
        }
        out
    }

    pub fn invert(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, t) in self.columns.iter().enumerate() {
            if let Some((mean, scale)) = t {
                out.column_mut(j).apply(|v| *v = *v * scale + mean);
            }
        }
        out
    }
}

/// Center and scale continuous columns to mean 0 and unit sample SD.
/// Dummy columns are left untouched.
pub fn standardize(d: &DatasetView) -> Result<(DatasetView, StandardizationRecord)> {
    let n = d.n();
    if n < 2 {
        return Err(Error::Dimension("standardization needs at least two rows".into()));
    }
    let mut columns = Vec::with_capacity(d.p());
    for j in 0..d.p() {
        if !d.is_continuous(j) {
            columns.push(None);
            continue;
        }
        let col = d.x.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let scale = var.sqrt();
        if !(scale > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::DegenerateColumn(d.column_names[j].clone()));
        }
        columns.push(Some((mean, scale)));
    }
    let record = StandardizationRecord { columns };
    let mut out = d.clone();
    out.x = record.apply(&d.x);
    Ok((out, record))
}
