//! Tabular design datasets: schema, CSV ingestion, normalization, target
//! selection and target-achievement ratios.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Maximize => f.write_str("maximize"),
            Direction::Minimize => f.write_str("minimize"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub name: String,
    pub direction: Direction,
}

impl ObjectiveSpec {
    pub fn new(name: impl Into<String>, direction: Direction) -> Self {
        ObjectiveSpec {
            name: name.into(),
            direction,
        }
    }
}

/// Column-role description of a dataset CSV.
///
/// ```json
/// {"design_continuous": ["x1"], "design_categorical": {"mat": ["steel", "al"]},
///  "performance": [{"name": "p1", "direction": "maximize"}], "feasibility": "ok"}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    #[serde(default)]
    pub design_continuous: Vec<String>,
    #[serde(default)]
    pub design_categorical: IndexMap<String, Vec<String>>,
    pub performance: Vec<ObjectiveSpec>,
    pub feasibility: String,
}

impl DatasetSchema {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let schema: DatasetSchema = serde_json::from_str(s)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let names = self
            .design_continuous
            .iter()
            .chain(self.design_categorical.keys())
            .chain(self.performance.iter().map(|o| &o.name))
            .chain(std::iter::once(&self.feasibility));
        for name in names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema {
                    column: name.clone(),
                    reason: "column assigned more than one role".into(),
                });
            }
        }
        if self.performance.is_empty() {
            return Err(Error::Schema {
                column: String::new(),
                reason: "at least one performance column is required".into(),
            });
        }
        if self.design_continuous.is_empty() && self.design_categorical.is_empty() {
            return Err(Error::Schema {
                column: String::new(),
                reason: "at least one design column is required".into(),
            });
        }
        for (name, levels) in &self.design_categorical {
            let unique: HashSet<_> = levels.iter().collect();
            if levels.is_empty() || unique.len() != levels.len() {
                return Err(Error::Schema {
                    column: name.clone(),
                    reason: "categorical levels must be non-empty and distinct".into(),
                });
            }
        }
        Ok(())
    }
}

/// One design variable as it appears in the encoded design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DesignColumn {
    Continuous { name: String, min: f64, max: f64 },
    Categorical { name: String, levels: Vec<String> },
}

impl DesignColumn {
    pub fn name(&self) -> &str {
        match self {
            DesignColumn::Continuous { name, .. } | DesignColumn::Categorical { name, .. } => name,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            DesignColumn::Continuous { .. } => 1,
            DesignColumn::Categorical { levels, .. } => levels.len(),
        }
    }
}

/// Position of each design variable inside an encoded row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignLayout {
    pub continuous: Vec<usize>,
    /// `(start, len)` of each one-hot group.
    pub categorical: Vec<(usize, usize)>,
    pub width: usize,
}

impl DesignLayout {
    pub fn from_columns(columns: &[DesignColumn]) -> Self {
        let mut layout = DesignLayout {
            continuous: Vec::new(),
            categorical: Vec::new(),
            width: 0,
        };
        for c in columns {
            match c {
                DesignColumn::Continuous { .. } => layout.continuous.push(layout.width),
                DesignColumn::Categorical { levels, .. } => {
                    layout.categorical.push((layout.width, levels.len()))
                }
            }
            layout.width += c.width();
        }
        layout
    }

    /// Output groups for a generator head: every continuous column is a
    /// singleton group (sigmoid), every categorical column a softmax group.
    pub fn output_groups(&self) -> Vec<(usize, usize)> {
        let mut groups: Vec<(usize, usize)> = self
            .continuous
            .iter()
            .map(|&i| (i, 1))
            .chain(self.categorical.iter().copied())
            .collect();
        groups.sort_unstable();
        groups
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    design_columns: Vec<DesignColumn>,
    performance_columns: Vec<ObjectiveSpec>,
    designs: Matrix,
    performances: Matrix,
    feasible: Vec<bool>,
}

impl Dataset {
    /// Validates the dataset invariants: finite entries, exact one-hot groups,
    /// strictly positive performances, at least one objective and two rows.
    pub fn new(
        design_columns: Vec<DesignColumn>,
        performance_columns: Vec<ObjectiveSpec>,
        designs: Matrix,
        performances: Matrix,
        feasible: Vec<bool>,
    ) -> Result<Self> {
        let n = designs.rows();
        let layout = DesignLayout::from_columns(&design_columns);
        if designs.cols() != layout.width {
            return Err(Error::Dimension(format!(
                "design matrix has {} columns, schema encodes {}",
                designs.cols(),
                layout.width
            )));
        }
        if performance_columns.is_empty() {
            return Err(Error::Schema {
                column: String::new(),
                reason: "at least one performance column is required".into(),
            });
        }
        let mut names = HashSet::new();
        for o in &performance_columns {
            if !names.insert(o.name.as_str()) {
                return Err(Error::Schema {
                    column: o.name.clone(),
                    reason: "duplicate objective name".into(),
                });
            }
        }
        if performances.rows() != n || feasible.len() != n {
            return Err(Error::Dimension(format!(
                "row counts disagree: designs {n}, performances {}, feasibility {}",
                performances.rows(),
                feasible.len()
            )));
        }
        if performances.cols() != performance_columns.len() {
            return Err(Error::Dimension(format!(
                "performance matrix has {} columns, schema lists {}",
                performances.cols(),
                performance_columns.len()
            )));
        }
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "dataset needs at least 2 rows, got {n}"
            )));
        }
        for i in 0..n {
            if designs.row(i).iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    row: i,
                    column: String::new(),
                    reason: "non-finite design value".into(),
                });
            }
            for &(start, len) in &layout.categorical {
                let s: f64 = designs.row(i)[start..start + len].iter().sum();
                let binary = designs.row(i)[start..start + len]
                    .iter()
                    .all(|&v| v == 0.0 || v == 1.0);
                if s != 1.0 || !binary {
                    return Err(Error::Parse {
                        row: i,
                        column: format!("encoded[{start}..{}]", start + len),
                        reason: "one-hot group does not sum to exactly 1".into(),
                    });
                }
            }
            for (k, o) in performance_columns.iter().enumerate() {
                let p = performances[(i, k)];
                if !p.is_finite() || p <= 0.0 {
                    return Err(Error::Parse {
                        row: i,
                        column: o.name.clone(),
                        reason: format!("performance must be finite and > 0, got {p}"),
                    });
                }
            }
        }
        Ok(Dataset {
            design_columns,
            performance_columns,
            designs,
            performances,
            feasible,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.designs.rows()
    }

    pub fn design_width(&self) -> usize {
        self.designs.cols()
    }

    pub fn objective_count(&self) -> usize {
        self.performance_columns.len()
    }

    pub fn design_columns(&self) -> &[DesignColumn] {
        &self.design_columns
    }

    pub fn performance_columns(&self) -> &[ObjectiveSpec] {
        &self.performance_columns
    }

    pub fn directions(&self) -> Vec<Direction> {
        self.performance_columns.iter().map(|o| o.direction).collect()
    }

    pub fn layout(&self) -> DesignLayout {
        DesignLayout::from_columns(&self.design_columns)
    }

    /// Raw encoded designs (continuous in data units, categoricals one-hot).
    pub fn designs(&self) -> &Matrix {
        &self.designs
    }

    pub fn performances(&self) -> &Matrix {
        &self.performances
    }

    pub fn feasible(&self) -> &[bool] {
        &self.feasible
    }

    pub fn feasible_indices(&self) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.feasible[i]).collect()
    }

    /// Writes the dataset as CSV with the column names of `schema()`.
    /// `preamble` lines are emitted first as `#` comments.
    pub fn write_csv<W: Write>(&self, out: W, preamble: &[String]) -> Result<()> {
        let mut out = out;
        for line in preamble {
            writeln!(out, "# {line}").map_err(|e| Error::io("<csv output>", e))?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.design_columns.iter().map(|c| c.name()).collect();
        header.extend(self.performance_columns.iter().map(|o| o.name.as_str()));
        header.push(FEASIBLE_DEFAULT_COLUMN);
        w.write_record(&header)?;
        let layout = self.layout();
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n_rows() {
            record.clear();
            let row = self.designs.row(i);
            let mut offset = 0;
            for c in &self.design_columns {
                match c {
                    DesignColumn::Continuous { .. } => record.push(row[offset].to_string()),
                    DesignColumn::Categorical { levels, .. } => {
                        let hot = (0..levels.len())
                            .find(|&l| row[offset + l] == 1.0)
                            .unwrap_or(0);
                        record.push(levels[hot].clone());
                    }
                }
                offset += c.width();
            }
            debug_assert_eq!(offset, layout.width);
            record.extend(self.performances.row(i).iter().map(|v| v.to_string()));
            record.push(if self.feasible[i] { "1" } else { "0" }.to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }

    /// Schema matching [`Dataset::write_csv`].
    pub fn schema(&self) -> DatasetSchema {
        let mut schema = DatasetSchema {
            design_continuous: Vec::new(),
            design_categorical: IndexMap::new(),
            performance: self.performance_columns.clone(),
            feasibility: FEASIBLE_DEFAULT_COLUMN.to_string(),
        };
        for c in &self.design_columns {
            match c {
                DesignColumn::Continuous { name, .. } => schema.design_continuous.push(name.clone()),
                DesignColumn::Categorical { name, levels } => {
                    schema.design_categorical.insert(name.clone(), levels.clone());
                }
            }
        }
        schema
    }
}

pub const FEASIBLE_DEFAULT_COLUMN: &str = "feasible";

/// Loads a dataset CSV. Lines starting with `#` are comments.
///
/// Encoded design columns are laid out continuous variables first, in schema
/// order, followed by each categorical variable's one-hot group.
pub fn load_dataset(path: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: Read>(input: R, schema: &DatasetSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_string(),
                reason: "declared column missing from CSV header".into(),
            })
    };
    let cont_idx: Vec<usize> = schema
        .design_continuous
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;
    let cat_idx: Vec<usize> = schema
        .design_categorical
        .keys()
        .map(|c| find(c))
        .collect::<Result<_>>()?;
    let perf_idx: Vec<usize> = schema
        .performance
        .iter()
        .map(|o| find(&o.name))
        .collect::<Result<_>>()?;
    let feas_idx = find(&schema.feasibility)?;

    let n_cont = cont_idx.len();
    let width = n_cont
        + schema
            .design_categorical
            .values()
            .map(Vec::len)
            .sum::<usize>();
    let t = perf_idx.len();

    let mut designs = Vec::new();
    let mut perfs = Vec::new();
    let mut feasible = Vec::new();
    let parse_num = |rec: &csv::StringRecord, row: usize, col: usize| -> Result<f64> {
        let cell = rec.get(col).unwrap_or("");
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Parse {
                row,
                column: headers.get(col).unwrap_or("").to_string(),
                reason: format!("`{cell}` is not a finite number"),
            }),
        }
    };

    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let mut encoded = vec![0.0; width];
        for (j, &c) in cont_idx.iter().enumerate() {
            encoded[j] = parse_num(&rec, row, c)?;
        }
        let mut offset = n_cont;
        for ((name, levels), &c) in schema.design_categorical.iter().zip(&cat_idx) {
            let cell = rec.get(c).unwrap_or("");
            let level = levels.iter().position(|l| l == cell).ok_or_else(|| Error::Parse {
                row,
                column: name.clone(),
                reason: format!("unknown categorical level `{cell}`"),
            })?;
            encoded[offset + level] = 1.0;
            offset += levels.len();
        }
        designs.extend(encoded);
        for &c in &perf_idx {
            perfs.push(parse_num(&rec, row, c)?);
        }
        let f = rec.get(feas_idx).unwrap_or("");
        feasible.push(match f {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Parse {
                    row,
                    column: schema.feasibility.clone(),
                    reason: format!("feasibility must be 0 or 1, got `{other}`"),
                })
            }
        });
    }

    let n = feasible.len();
    let designs = Matrix::from_vec(n, width, designs)?;
    let mut columns = Vec::with_capacity(n_cont + schema.design_categorical.len());
    for (j, name) in schema.design_continuous.iter().enumerate() {
        let col = designs.column(j);
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        columns.push(DesignColumn::Continuous {
            name: name.clone(),
            min,
            max,
        });
    }
    for (name, levels) in &schema.design_categorical {
        columns.push(DesignColumn::Categorical {
            name: name.clone(),
            levels: levels.clone(),
        });
    }
    Dataset::new(
        columns,
        schema.performance.clone(),
        designs,
        Matrix::from_vec(n, t, perfs)?,
        feasible,
    )
}

/// Writes encoded design rows with categorical groups decoded to levels.
pub fn write_designs_csv<W: Write>(
    columns: &[DesignColumn],
    designs: &Matrix,
    out: W,
    preamble: &[String],
) -> Result<()> {
    let width = DesignLayout::from_columns(columns).width;
    if designs.cols() != width {
        return Err(Error::Dimension(format!(
            "designs have {} columns, schema encodes {width}",
            designs.cols()
        )));
    }
    let mut out = out;
    for line in preamble {
        writeln!(out, "# {line}").map_err(|e| Error::io("<csv output>", e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns.iter().map(|c| c.name()))?;
    for row in designs.row_iter() {
        let mut record = Vec::with_capacity(columns.len());
        let mut offset = 0;
        for c in columns {
            match c {
                DesignColumn::Continuous { .. } => record.push(row[offset].to_string()),
                DesignColumn::Categorical { levels, .. } => {
                    let g = &row[offset..offset + levels.len()];
                    let hot = (0..levels.len())
                        .max_by(|&a, &b| g[a].total_cmp(&g[b]).then(b.cmp(&a)))
                        .unwrap_or(0);
                    record.push(levels[hot].clone());
                }
            }
            offset += c.width();
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// Reads design rows written by [`write_designs_csv`] (or any CSV holding
/// the named design columns) into the encoded layout of `columns`.
pub fn read_designs_csv<R: Read>(input: R, columns: &[DesignColumn]) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == c.name())
                .ok_or_else(|| Error::Schema {
                    column: c.name().to_string(),
                    reason: "design column missing from CSV header".into(),
                })
        })
        .collect::<Result<_>>()?;
    let width = DesignLayout::from_columns(columns).width;
    let mut values = Vec::new();
    let mut n = 0;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let mut offset = 0;
        let mut encoded = vec![0.0; width];
        for (c, &j) in columns.iter().zip(&idx) {
            let cell = rec.get(j).unwrap_or("");
            match c {
                DesignColumn::Continuous { name, .. } => {
                    encoded[offset] = match cell.parse::<f64>() {
                        Ok(v) if v.is_finite() => v,
                        _ => {
                            return Err(Error::Parse {
                                row,
                                column: name.clone(),
                                reason: format!("`{cell}` is not a finite number"),
                            })
                        }
                    }
                }
                DesignColumn::Categorical { name, levels } => {
                    let level = levels.iter().position(|l| l == cell).ok_or_else(|| Error::Parse {
                        row,
                        column: name.clone(),
                        reason: format!("unknown categorical level `{cell}`"),
                    })?;
                    encoded[offset + level] = 1.0;
                }
            }
            offset += c.width();
        }
        values.extend(encoded);
        n += 1;
    }
    Matrix::from_vec(n, width, values)
}

/// Affine maps between raw and normalized coordinates.
///
/// Continuous design variables are min-max scaled to `[0, 1]`; one-hot
/// columns pass through. Performances are z-scored with the population
/// standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub design_width: usize,
    pub continuous: Vec<ContinuousRange>,
    pub objectives: Vec<String>,
    pub perf_mean: Vec<f64>,
    pub perf_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousRange {
    pub name: String,
    pub index: usize,
    pub min: f64,
    pub max: f64,
}

pub fn fit_normalizer(data: &Dataset) -> Result<Normalizer> {
    let layout = data.layout();
    let mut continuous = Vec::with_capacity(layout.continuous.len());
    for (c, &index) in data
        .design_columns()
        .iter()
        .filter(|c| matches!(c, DesignColumn::Continuous { .. }))
        .zip(&layout.continuous)
    {
        let col = data.designs().column(index);
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(Error::DegenerateColumn {
                column: c.name().to_string(),
                reason: format!("constant design column (min = max = {min})"),
            });
        }
        continuous.push(ContinuousRange {
            name: c.name().to_string(),
            index,
            min,
            max,
        });
    }
    let mut perf_mean = Vec::new();
    let mut perf_std = Vec::new();
    for (k, o) in data.performance_columns().iter().enumerate() {
        let col = data.performances().column(k);
        let m = stats::mean(&col);
        let s = stats::population_std(&col);
        if !(s > 0.0) {
            return Err(Error::DegenerateColumn {
                column: o.name.clone(),
                reason: "constant performance column (std = 0)".into(),
            });
        }
        perf_mean.push(m);
        perf_std.push(s);
    }
    Ok(Normalizer {
        design_width: data.design_width(),
        continuous,
        objectives: data
            .performance_columns()
            .iter()
            .map(|o| o.name.clone())
            .collect(),
        perf_mean,
        perf_std,
    })
}

impl Normalizer {
    fn check_design_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.design_width {
            return Err(Error::Dimension(format!(
                "design batch has {} columns, normalizer expects {}",
                x.cols(),
                self.design_width
            )));
        }
        Ok(())
    }

    fn check_perf_width(&self, p: &Matrix) -> Result<()> {
        if p.cols() != self.perf_mean.len() {
            return Err(Error::Dimension(format!(
                "performance batch has {} columns, normalizer expects {}",
                p.cols(),
                self.perf_mean.len()
            )));
        }
        Ok(())
    }

    pub fn normalize_designs(&self, x: &Matrix) -> Result<Matrix> {
        self.check_design_width(x)?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for c in &self.continuous {
                row[c.index] = (row[c.index] - c.min) / (c.max - c.min);
            }
        }
        Ok(out)
    }

    pub fn denormalize_designs(&self, x: &Matrix) -> Result<Matrix> {
        self.check_design_width(x)?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for c in &self.continuous {
                row[c.index] = row[c.index] * (c.max - c.min) + c.min;
            }
        }
        Ok(out)
    }

    pub fn normalize_performances(&self, p: &Matrix) -> Result<Matrix> {
        self.check_perf_width(p)?;
        let mut out = p.clone();
        for i in 0..out.rows() {
            for (k, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.perf_mean[k]) / self.perf_std[k];
            }
        }
        Ok(out)
    }

    pub fn denormalize_performances(&self, p: &Matrix) -> Result<Matrix> {
        self.check_perf_width(p)?;
        let mut out = p.clone();
        for i in 0..out.rows() {
            for (k, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = *v * self.perf_std[k] + self.perf_mean[k];
            }
        }
        Ok(out)
    }
}

/// Per-objective targets with DTAI priority (`alpha`) and decay (`beta`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub targets: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub directions: Vec<Direction>,
}

impl TargetSpec {
    pub fn new(
        targets: Vec<f64>,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        directions: Vec<Direction>,
    ) -> Result<Self> {
        let spec = TargetSpec {
            targets,
            alpha,
            beta,
            directions,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.targets.len();
        if t == 0 {
            return Err(Error::Parameter("target vector is empty".into()));
        }
        if self.alpha.len() != t || self.beta.len() != t || self.directions.len() != t {
            return Err(Error::Dimension(format!(
                "targets {t}, alpha {}, beta {}, directions {} must agree",
                self.alpha.len(),
                self.beta.len(),
                self.directions.len()
            )));
        }
        for k in 0..t {
            if !(self.alpha[k] > 0.0) || !self.alpha[k].is_finite() {
                return Err(Error::Parameter(format!(
                    "alpha[{k}] must be > 0, got {}",
                    self.alpha[k]
                )));
            }
            if !(self.beta[k] > 0.0) || !self.beta[k].is_finite() {
                return Err(Error::Parameter(format!(
                    "beta[{k}] must be > 0, got {}",
                    self.beta[k]
                )));
            }
            if !(self.targets[k] > 0.0) || !self.targets[k].is_finite() {
                return Err(Error::Domain(format!(
                    "target[{k}] must be finite and > 0, got {}",
                    self.targets[k]
                )));
            }
        }
        Ok(())
    }

    pub fn objective_count(&self) -> usize {
        self.targets.len()
    }
}

/// Picks targets at the given percentile of the feasible rows, taken in each
/// objective's achievement direction (upper tail for maximize, lower tail
/// for minimize).
pub fn compute_targets(
    data: &Dataset,
    percentile: f64,
    alpha: &[f64],
    beta: &[f64],
) -> Result<TargetSpec> {
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(Error::Parameter(format!(
            "percentile must lie in (0, 100), got {percentile}"
        )));
    }
    let feasible = data.feasible_indices();
    if feasible.is_empty() {
        return Err(Error::InsufficientData(
            "no feasible rows to compute targets from".into(),
        ));
    }
    let q = percentile / 100.0;
    let mut targets = Vec::with_capacity(data.objective_count());
    for (k, o) in data.performance_columns().iter().enumerate() {
        let values: Vec<f64> = feasible.iter().map(|&i| data.performances()[(i, k)]).collect();
        let level = match o.direction {
            Direction::Maximize => q,
            Direction::Minimize => 1.0 - q,
        };
        targets.push(stats::quantile(&values, level).expect("non-empty finite column"));
    }
    TargetSpec::new(targets, alpha.to_vec(), beta.to_vec(), data.directions())
}

/// Achievement ratios, oriented so that `r >= 1` means the target is met.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioMatrix {
    values: Matrix,
}

impl RatioMatrix {
    /// Wraps precomputed ratios, checking they are finite and positive.
    pub fn from_matrix(values: Matrix) -> Result<Self> {
        for i in 0..values.rows() {
            for (k, &r) in values.row(i).iter().enumerate() {
                if !(r > 0.0) || !r.is_finite() {
                    return Err(Error::Domain(format!(
                        "ratio at row {i}, objective {k} must be finite and > 0, got {r}"
                    )));
                }
            }
        }
        Ok(RatioMatrix { values })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }
}

#[inline]
pub fn ratio(p: f64, t: f64, direction: Direction) -> f64 {
    match direction {
        Direction::Maximize => p / t,
        Direction::Minimize => t / p,
    }
}

pub fn target_ratios(perf: &Matrix, targets: &TargetSpec) -> Result<RatioMatrix> {
    targets.validate()?;
    if perf.cols() != targets.objective_count() {
        return Err(Error::Dimension(format!(
            "performance batch has {} objectives, targets have {}",
            perf.cols(),
            targets.objective_count()
        )));
    }
    let mut values = Matrix::zeros(perf.rows(), perf.cols());
    for i in 0..perf.rows() {
        for k in 0..perf.cols() {
            let p = perf[(i, k)];
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::Domain(format!(
                    "performance at row {i}, objective {k} must be finite and > 0, got {p}"
                )));
            }
            values[(i, k)] = ratio(p, targets.targets[k], targets.directions[k]);
        }
    }
    RatioMatrix::from_matrix(values)
}
