//! Column-typed tables with explicit per-cell missingness.
//!
//! Every column stores its cells as `f64` (categorical cells hold the index
//! of their category in the column vocabulary) together with a missing mask.
//! A masked cell always holds `NaN`. Tables are immutable once built; every
//! transform returns a new table.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the category added by [`MissingEncoding::SeparateCategory`].
pub const MISSING_CATEGORY: &str = "__missing__";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Binary,
}

/// How missing cells of a column are represented after [`encode_missing`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingEncoding {
    SentinelBelowMin,
    SentinelFixed(f64),
    SeparateCategory,
}

/// Where the formerly missing cells of an encoded column live.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingMarker {
    Sentinel(f64),
    Category(u32),
    /// The column had no missing cells, so no sentinel was needed.
    Unused,
}

/// Cells compare by bit pattern, so a column with missing (`NaN`) cells
/// equals its copy.
#[derive(Clone, Debug)]
pub struct Column {
    name: String,
    kind: ColumnKind,
    values: Vec<f64>,
    missing: Vec<bool>,
    categories: Vec<String>,
    marker: Option<MissingMarker>,
}

impl PartialEq for Column {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.kind == other.kind
            && self.missing == other.missing
            && self.categories == other.categories
            && self.marker == other.marker
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Column {
    /// Builds a numeric column; `NaN` cells are treated as missing.
    pub fn numeric(name: impl Into<String>, kind: ColumnKind, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if kind == ColumnKind::Categorical {
            return Err(Error::column(&name, "use Column::categorical for categorical data"));
        }
        let missing: Vec<bool> = values.iter().map(|v| v.is_nan()).collect();
        for (v, &m) in values.iter().zip(&missing) {
            if !m && !v.is_finite() {
                return Err(Error::column(&name, "observed cells must be finite"));
            }
            if !m && kind == ColumnKind::Binary && *v != 0.0 && *v != 1.0 {
                return Err(Error::column(&name, format!("binary column holds {v}")));
            }
        }
        Ok(Column {
            name,
            kind,
            values,
            missing,
            categories: Vec::new(),
            marker: None,
        })
    }

    pub fn continuous(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Self::numeric(name, ColumnKind::Continuous, values)
    }

    /// Builds a categorical column. The vocabulary is ordered by first appearance.
    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, cells: &[Option<S>]) -> Self {
        let mut categories: Vec<String> = Vec::new();
        let mut index: HashMap<String, u32> = HashMap::new();
        let mut values = Vec::with_capacity(cells.len());
        let mut missing = Vec::with_capacity(cells.len());
        for cell in cells {
            match cell {
                Some(s) => {
                    let s = s.as_ref();
                    let code = *index.entry(s.to_string()).or_insert_with(|| {
                        categories.push(s.to_string());
                        (categories.len() - 1) as u32
                    });
                    values.push(code as f64);
                    missing.push(false);
                }
                None => {
                    values.push(f64::NAN);
                    missing.push(true);
                }
            }
        }
        Column {
            name: name.into(),
            kind: ColumnKind::Categorical,
            values,
            missing,
            categories,
            marker: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Raw cell values (`NaN` where masked, category codes for categorical).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn marker(&self) -> Option<MissingMarker> {
        self.marker
    }

    pub fn value(&self, row: usize) -> Option<f64> {
        if self.missing[row] {
            None
        } else {
            Some(self.values[row])
        }
    }

    /// True when the cell is masked or holds the recorded missing marker.
    pub fn is_missing_coded(&self, row: usize) -> bool {
        if self.missing[row] {
            return true;
        }
        match self.marker {
            Some(MissingMarker::Sentinel(s)) => self.values[row] == s,
            Some(MissingMarker::Category(c)) => self.values[row] == c as f64,
            _ => false,
        }
    }

    pub fn n_missing(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_missing_coded(i)).count()
    }

    /// Values of cells that are neither masked nor marker-coded.
    pub fn observed_values(&self) -> Vec<f64> {
        (0..self.len())
            .filter(|&i| !self.is_missing_coded(i))
            .map(|i| self.values[i])
            .collect()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Replaces the value of the listed cells and clears their mask.
    pub fn with_filled(&self, fills: &[(usize, f64)]) -> Result<Column> {
        let mut out = self.clone();
        for &(row, v) in fills {
            if row >= out.len() {
                return Err(Error::column(&self.name, format!("row {row} out of range")));
            }
            if !v.is_finite() {
                return Err(Error::column(&self.name, "fill values must be finite"));
            }
            out.values[row] = v;
            out.missing[row] = false;
        }
        Ok(out)
    }

    pub(crate) fn take_rows(&self, rows: &[usize]) -> Column {
        Column {
            name: self.name.clone(),
            kind: self.kind,
            values: rows.iter().map(|&r| self.values[r]).collect(),
            missing: rows.iter().map(|&r| self.missing[r]).collect(),
            categories: self.categories.clone(),
            marker: self.marker,
        }
    }

    fn cell_text(&self, row: usize) -> String {
        if self.missing[row] {
            return String::new();
        }
        match self.kind {
            ColumnKind::Categorical => self.categories[self.values[row] as usize].clone(),
            _ => format!("{}", self.values[row]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    columns: Vec<Column>,
    n_rows: usize,
    target: Option<usize>,
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, |c| c.len());
        let mut seen = HashSet::new();
        for c in &columns {
            if c.len() != n_rows {
                return Err(Error::Schema(format!(
                    "column `{}` has {} cells, expected {n_rows}",
                    c.name,
                    c.len()
                )));
            }
            if !seen.insert(c.name.clone()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
        }
        Ok(Table {
            columns,
            n_rows,
            target: None,
        })
    }

    pub fn with_target(mut self, name: &str) -> Result<Self> {
        self.target = Some(self.column_index(name)?);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn target(&self) -> Option<&Column> {
        self.target.map(|i| &self.columns[i])
    }

    pub fn target_index(&self) -> Option<usize> {
        self.target
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        Ok(&self.columns[self.column_index(name)?])
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Names of all columns except the target column.
    pub fn feature_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != self.target)
            .map(|(_, c)| c.name.clone())
            .collect()
    }

    /// Returns a new table with the column of the same name replaced.
    pub fn replace_column(&self, column: Column) -> Result<Table> {
        let idx = self.column_index(&column.name)?;
        if column.len() != self.n_rows {
            return Err(Error::Schema(format!(
                "replacement for `{}` has {} cells, expected {}",
                column.name,
                column.len(),
                self.n_rows
            )));
        }
        let mut out = self.clone();
        out.columns[idx] = column;
        Ok(out)
    }

    pub fn push_column(&self, column: Column) -> Result<Table> {
        let mut columns = self.columns.clone();
        columns.push(column);
        let mut out = Table::new(columns)?;
        out.target = self.target;
        Ok(out)
    }

    pub fn drop_column(&self, name: &str) -> Result<Table> {
        let idx = self.column_index(name)?;
        let mut out = self.clone();
        out.columns.remove(idx);
        out.target = match self.target {
            Some(t) if t == idx => None,
            Some(t) if t > idx => Some(t - 1),
            t => t,
        };
        Ok(out)
    }

    pub fn select(&self, names: &[String]) -> Result<Table> {
        let columns = names
            .iter()
            .map(|n| self.column(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        let mut out = Table::new(columns)?;
        if let Some(t) = self.target() {
            out.target = out.columns.iter().position(|c| c.name == t.name);
        }
        Ok(out)
    }

    pub fn take_rows(&self, rows: &[usize]) -> Table {
        Table {
            columns: self.columns.iter().map(|c| c.take_rows(rows)).collect(),
            n_rows: rows.len(),
            target: self.target,
        }
    }
}

/// Options for [`load_csv`] and [`read_csv`].
#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub schema: BTreeMap<String, ColumnKind>,
    pub missing_tokens: Vec<String>,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            schema: BTreeMap::new(),
            missing_tokens: vec![String::new(), "NA".into(), "NaN".into()],
            delimiter: b',',
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Table> {
    let file = std::fs::File::open(path)?;
    read_csv(file, options)
}

pub fn read_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.clone()) {
            return Err(Error::Schema(format!("duplicate header `{h}`")));
        }
    }
    for name in options.schema.keys() {
        if !headers.contains(name) {
            return Err(Error::Schema(format!("schema override for unknown column `{name}`")));
        }
    }
    let tokens: HashSet<&str> = options.missing_tokens.iter().map(|t| t.trim()).collect();

    let mut cells: Vec<Vec<Option<String>>> = vec![Vec::new(); headers.len()];
    for (i, record) in rdr.records().enumerate() {
        // header is line 1, so the first data row is line 2
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            row: line,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row: line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let t = field.trim();
            cells[j].push(if tokens.contains(t) { None } else { Some(t.to_string()) });
        }
    }

    let columns = headers
        .iter()
        .zip(cells)
        .map(|(name, cells)| build_column(name, &cells, options.schema.get(name).copied()))
        .collect::<Result<Vec<_>>>()?;
    Table::new(columns)
}

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn build_column(name: &str, cells: &[Option<String>], kind: Option<ColumnKind>) -> Result<Column> {
    let numeric: Option<Vec<f64>> = cells
        .iter()
        .map(|c| match c {
            None => Some(f64::NAN),
            Some(s) => parse_finite(s),
        })
        .collect();
    match (kind, numeric) {
        (Some(ColumnKind::Categorical), _) | (None, None) => Ok(Column::categorical(name, cells)),
        (Some(k), Some(values)) => Column::numeric(name, k, values),
        (None, Some(values)) => Column::numeric(name, ColumnKind::Continuous, values),
        (Some(k), None) => Err(Error::Schema(format!(
            "column `{name}` declared {k:?} but holds non-numeric cells"
        ))),
    }
}

pub fn write_csv<W: Write>(table: &Table, writer: W, delimiter: u8) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
    let to_err = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    wtr.write_record(table.columns.iter().map(|c| c.name.as_str()))
        .map_err(to_err)?;
    for row in 0..table.n_rows {
        wtr.write_record(table.columns.iter().map(|c| c.cell_text(row)))
            .map_err(to_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv(table: &Table, path: impl AsRef<Path>, delimiter: u8) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(table, std::io::BufWriter::new(file), delimiter)
}

/// Gap between the observed minimum and the automatic sentinel, as a fraction
/// of the observed range.
const SENTINEL_GAP: f64 = 0.05;

/// Replaces the missing cells of `column` with a sentinel value or a new
/// category and records the marker on the column.
pub fn encode_missing(table: &Table, column: &str, encoding: MissingEncoding) -> Result<Table> {
    let col = table.column(column)?;
    let missing_rows: Vec<usize> = (0..col.len()).filter(|&i| col.missing[i]).collect();
    let mut out = col.clone();
    if missing_rows.is_empty() {
        out.marker = Some(MissingMarker::Unused);
        return table.replace_column(out);
    }
    match (encoding, col.kind) {
        (MissingEncoding::SeparateCategory, ColumnKind::Categorical) => {
            let code = match out.categories.iter().position(|c| c == MISSING_CATEGORY) {
                Some(p) => p as u32,
                None => {
                    out.categories.push(MISSING_CATEGORY.to_string());
                    (out.categories.len() - 1) as u32
                }
            };
            for &r in &missing_rows {
                out.values[r] = code as f64;
                out.missing[r] = false;
            }
            out.marker = Some(MissingMarker::Category(code));
        }
        (MissingEncoding::SeparateCategory, _) => {
            return Err(Error::column(column, "separate-category encoding needs a categorical column"));
        }
        (_, ColumnKind::Categorical) => {
            return Err(Error::column(column, "sentinel encoding needs a numeric column"));
        }
        (enc, _) => {
            let observed = col.observed_values();
            let (min, max) = min_max(&observed);
            let sentinel = match enc {
                MissingEncoding::SentinelFixed(v) => {
                    if !v.is_finite() {
                        return Err(Error::column(column, "sentinel must be finite"));
                    }
                    if !observed.is_empty() && v >= min && v <= max {
                        return Err(Error::column(
                            column,
                            format!("sentinel {v} lies inside the observed range [{min}, {max}]"),
                        ));
                    }
                    v
                }
                _ => sentinel_below_min(min, max),
            };
            for &r in &missing_rows {
                out.values[r] = sentinel;
                out.missing[r] = false;
            }
            out.marker = Some(MissingMarker::Sentinel(sentinel));
        }
    }
    table.replace_column(out)
}

/// `min - 0.05 * (max - min)`; a constant column falls back to a gap of
/// `0.05 * max(|min|, 1)` so the sentinel never aliases the observed value.
pub fn sentinel_below_min(min: f64, max: f64) -> f64 {
    if !min.is_finite() {
        return -1.0;
    }
    let gap = SENTINEL_GAP * (max - min);
    if gap > 0.0 {
        min - gap
    } else {
        min - SENTINEL_GAP * min.abs().max(1.0)
    }
}

/// Restores the missing mask of an encoded column from its recorded marker.
pub fn decode_missing(table: &Table, column: &str) -> Result<Table> {
    let col = table.column(column)?;
    let mut out = col.clone();
    for i in 0..out.len() {
        if col.is_missing_coded(i) {
            out.values[i] = f64::NAN;
            out.missing[i] = true;
        }
    }
    out.marker = None;
    table.replace_column(out)
}

/// 0/1 indicator of the column's missing cells, named `<column>_missing`.
pub fn missingness_indicator(table: &Table, column: &str) -> Result<Column> {
    let col = table.column(column)?;
    let values = (0..col.len())
        .map(|i| if col.is_missing_coded(i) { 1.0 } else { 0.0 })
        .collect();
    Column::numeric(format!("{column}_missing"), ColumnKind::Binary, values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub missing_rate: f64,
    pub observed: usize,
}

/// Statistics over observed cells only.
pub fn column_stats(table: &Table, column: &str) -> Result<ColumnStats> {
    let col = table.column(column)?;
    if col.kind == ColumnKind::Categorical {
        return Err(Error::column(column, "statistics need a numeric column"));
    }
    let observed = col.observed_values();
    let n = col.len();
    let missing_rate = if n == 0 {
        0.0
    } else {
        (n - observed.len()) as f64 / n as f64
    };
    if observed.is_empty() {
        return Ok(ColumnStats {
            mean: None,
            median: None,
            min: None,
            max: None,
            missing_rate: if n == 0 { 0.0 } else { 1.0 },
            observed: 0,
        });
    }
    let (min, max) = min_max(&observed);
    Ok(ColumnStats {
        mean: Some(mean(&observed)),
        median: Some(median(&observed)),
        min: Some(min),
        max: Some(max),
        missing_rate,
        observed: observed.len(),
    })
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
