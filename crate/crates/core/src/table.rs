//! Numeric data tables: parsing, min-max normalization, series splitting
//! and train/validation/test partitioning.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest row count a table may have to enter the pipeline.
pub const MIN_ROWS: usize = 5;

/// At most this many y series are split out of a multi-series table.
pub const MAX_SERIES: usize = 5;

/// Candidate chart kinds, in canonical (tie-breaking) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlotType {
    Scatter,
    Line,
    Density,
}

impl PlotType {
    pub const ALL: [PlotType; 3] = [PlotType::Scatter, PlotType::Line, PlotType::Density];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PlotType::Scatter => "scatter",
            PlotType::Line => "line",
            PlotType::Density => "density",
        }
    }
}

impl fmt::Display for PlotType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PlotType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "scatter" => Ok(PlotType::Scatter),
            "line" => Ok(PlotType::Line),
            "density" => Ok(PlotType::Density),
            other => Err(format!("unknown plot type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column {
            name: name.into(),
            values,
        }
    }
}

/// Named numeric columns of equal length. The first column plays the x role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTable {
    pub id: String,
    columns: Vec<Column>,
}

impl DataTable {
    /// Builds a table, checking that there is at least one column, that all
    /// columns share a length and that every value is finite.
    pub fn new(id: impl Into<String>, columns: Vec<Column>) -> Result<Self> {
        let Some(first) = columns.first() else {
            return Err(Error::TooFewColumns { found: 0 });
        };
        let n = first.values.len();
        for c in &columns {
            if c.values.len() != n {
                return Err(Error::MalformedInput(format!(
                    "column {:?} has {} values, expected {n}",
                    c.name,
                    c.values.len()
                )));
            }
            if let Some(v) = c.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::MalformedInput(format!(
                    "column {:?} holds non-finite value {v}",
                    c.name
                )));
            }
        }
        Ok(DataTable {
            id: id.into(),
            columns,
        })
    }

    /// Convenience constructor for two-column `(x, y)` tables.
    pub fn xy(id: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        DataTable::new(id, vec![Column::new("x", x), Column::new("y", y)])
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> Option<&Column> {
        self.columns.get(i)
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn num_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.values.len())
    }

    /// Serializes as comma-separated text with a header row. Values use the
    /// shortest representation that parses back to the identical `f64`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))
            .expect("in-memory write");
        for r in 0..self.num_rows() {
            w.write_record(self.columns.iter().map(|c| c.values[r].to_string()))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    /// Serializes as a JSON object mapping column name to values.
    pub fn to_json(&self) -> String {
        let mut obj = serde_json::Map::new();
        for c in &self.columns {
            obj.insert(c.name.clone(), serde_json::json!(c.values));
        }
        serde_json::Value::Object(obj).to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Json,
}

impl TableFormat {
    /// Guesses the format from a file extension.
    pub fn from_extension(path: &std::path::Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(TableFormat::Csv),
            "json" => Some(TableFormat::Json),
            _ => None,
        }
    }
}

/// Result of parsing: the admitted table plus the names of the columns that
/// were dropped for holding non-numeric values.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub table: DataTable,
    pub dropped: Vec<String>,
}

/// Parses raw file content, dropping non-numeric columns.
pub fn parse_table(id: &str, bytes: &[u8], format: TableFormat) -> Result<DataTable> {
    parse_table_report(id, bytes, format).map(|p| p.table)
}

/// Like [`parse_table`], also reporting which columns were dropped.
pub fn parse_table_report(id: &str, bytes: &[u8], format: TableFormat) -> Result<Parsed> {
    let raw = match format {
        TableFormat::Csv => raw_csv(bytes)?,
        TableFormat::Json => raw_json(bytes)?,
    };
    let mut numeric = Vec::new();
    let mut dropped = Vec::new();
    for (name, cells) in raw {
        match cells {
            Some(values) if values.iter().all(|v| v.is_finite()) => {
                numeric.push(Column::new(name, values))
            }
            _ => dropped.push(name),
        }
    }
    if numeric.len() < 2 {
        return Err(Error::TooFewColumns {
            found: numeric.len(),
        });
    }
    let n = numeric[0].values.len();
    if n < MIN_ROWS {
        return Err(Error::TooFewRows {
            found: n,
            min: MIN_ROWS,
        });
    }
    Ok(Parsed {
        table: DataTable::new(id, numeric)?,
        dropped,
    })
}

/// Column name plus its values if every cell parsed as a number.
type RawColumn = (String, Option<Vec<f64>>);

fn raw_csv(bytes: &[u8]) -> Result<Vec<RawColumn>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = rdr
        .headers()
        .map_err(|e| Error::MalformedInput(e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(Error::MalformedInput("missing header row".into()));
    }
    let mut cols: Vec<RawColumn> = headers
        .iter()
        .map(|h| (h.to_string(), Some(Vec::new())))
        .collect();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::MalformedInput(e.to_string()))?;
        for ((_, vals), cell) in cols.iter_mut().zip(rec.iter()) {
            if let Some(v) = vals {
                match cell.parse::<f64>() {
                    Ok(x) => v.push(x),
                    Err(_) => *vals = None,
                }
            }
        }
    }
    Ok(cols)
}

fn raw_json(bytes: &[u8]) -> Result<Vec<RawColumn>> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| Error::MalformedInput(e.to_string()))?;
    let serde_json::Value::Object(obj) = value else {
        return Err(Error::MalformedInput(
            "expected an object mapping column name to an array".into(),
        ));
    };
    let mut cols = Vec::with_capacity(obj.len());
    let mut len = None;
    for (name, v) in obj {
        let serde_json::Value::Array(items) = v else {
            return Err(Error::MalformedInput(format!(
                "column {name:?} is not an array"
            )));
        };
        match *len.get_or_insert(items.len()) {
            n if n != items.len() => {
                return Err(Error::MalformedInput(format!(
                    "column {name:?} has {} values, expected {n}",
                    items.len()
                )))
            }
            _ => {}
        }
        let values: Option<Vec<f64>> = items.iter().map(|i| i.as_f64()).collect();
        cols.push((name, values));
    }
    Ok(cols)
}

/// Min-max normalizes every column into `[0, 1]`. Constant columns map to
/// 0.5.
pub fn normalize(t: &DataTable) -> DataTable {
    let columns = t
        .columns
        .iter()
        .map(|c| Column::new(c.name.clone(), normalize_values(&c.values)))
        .collect();
    DataTable {
        id: t.id.clone(),
        columns,
    }
}

fn normalize_values(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if !(range > 0.0) {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - min) / range).collect()
}

/// True when every value of every column lies in `[0, 1]`.
pub fn is_normalized(t: &DataTable) -> bool {
    t.columns
        .iter()
        .all(|c| c.values.iter().all(|v| (0.0..=1.0).contains(v)))
}

/// Splits `(x, y1, .., ym)` into up to [`MAX_SERIES`] two-column tables
/// `(x, yi)`. Ids get a `_s{i}` suffix.
pub fn split_series(t: &DataTable) -> Vec<DataTable> {
    let Some(x) = t.columns.first() else {
        return Vec::new();
    };
    t.columns
        .iter()
        .skip(1)
        .take(MAX_SERIES)
        .enumerate()
        .map(|(i, y)| DataTable {
            id: format!("{}_s{i}", t.id),
            columns: vec![x.clone(), y.clone()],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Seeded 80:10:10 partition. Sizes are `floor(0.8 n)`, `floor(0.1 n)` and
/// the remainder.
pub fn split_dataset(ids: &[String], seed: u64) -> Result<DatasetSplit> {
    if ids.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = shuffled.len();
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let test = shuffled.split_off(n_train + n_val);
    let validation = shuffled.split_off(n_train);
    Ok(DatasetSplit {
        train: shuffled,
        validation,
        test,
    })
}
