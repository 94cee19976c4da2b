//! Immutable column-oriented tables.
//!
//! A [`Dataset`] is the unit of exchange between environments, transforms,
//! learners and metrics. Every operation that changes data returns a new
//! `Dataset`; nothing is mutated in place.

mod csv;
mod json;

pub use self::csv::{load_csv, write_csv, CsvOptions};
pub use self::json::{dataset_from_json_value, dataset_to_json_columns, load_json};

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DataError {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("file is empty")]
    EmptyFile,
    #[error("parse error at row {row}, column `{column}`: {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },
    #[error("ragged rows: row {row} has {found} fields, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("inconsistent keys in record {record}")]
    InconsistentKeys { record: usize },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("column `{name}` has {found} rows, expected {expected}")]
    LengthMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("column `{0}` contains NaN")]
    NanValue(String),
    #[error("column `{0}` contains a non-finite value")]
    NonFiniteValue(String),
    #[error("column `{name}` has kind {found}, expected {expected}")]
    WrongKind {
        name: String,
        expected: ValueKind,
        found: ValueKind,
    },
    #[error("schema mismatch: expected columns {expected:?}, found {found:?}")]
    SchemaMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("split fraction {0} is not in (0, 1)")]
    InvalidFraction(f64),
    #[error("cannot split {0} rows; at least 2 are required")]
    TooFewRows(usize),
}

/// Tag describing what a [`Column`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Float64,
    Int64,
    Boolean,
    Float64List,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueKind::Float64 => "float64",
            ValueKind::Int64 => "int64",
            ValueKind::Boolean => "boolean",
            ValueKind::Float64List => "list<float64>",
        };
        f.write_str(s)
    }
}

/// A single typed column of values.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Float64(Vec<f64>),
    Int64(Vec<i64>),
    Boolean(Vec<bool>),
    /// Nested traces, one list per row.
    Float64List(Vec<Vec<f64>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Float64(v) => v.len(),
            Column::Int64(v) => v.len(),
            Column::Boolean(v) => v.len(),
            Column::Float64List(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            Column::Float64(_) => ValueKind::Float64,
            Column::Int64(_) => ValueKind::Int64,
            Column::Boolean(_) => ValueKind::Boolean,
            Column::Float64List(_) => ValueKind::Float64List,
        }
    }

    /// Rows `start..end` as a new column.
    pub fn slice(&self, start: usize, end: usize) -> Column {
        match self {
            Column::Float64(v) => Column::Float64(v[start..end].to_vec()),
            Column::Int64(v) => Column::Int64(v[start..end].to_vec()),
            Column::Boolean(v) => Column::Boolean(v[start..end].to_vec()),
            Column::Float64List(v) => Column::Float64List(v[start..end].to_vec()),
        }
    }

    /// Picks rows by index, in the given order (indices may repeat).
    pub fn take(&self, indices: &[usize]) -> Column {
        match self {
            Column::Float64(v) => Column::Float64(indices.iter().map(|&i| v[i]).collect()),
            Column::Int64(v) => Column::Int64(indices.iter().map(|&i| v[i]).collect()),
            Column::Boolean(v) => Column::Boolean(indices.iter().map(|&i| v[i]).collect()),
            Column::Float64List(v) => {
                Column::Float64List(indices.iter().map(|&i| v[i].clone()).collect())
            }
        }
    }

    /// Appends `other` below `self`. Int64 + Float64 promotes to Float64.
    fn concat(&self, other: &Column) -> Option<Column> {
        Some(match (self, other) {
            (Column::Float64(a), Column::Float64(b)) => Column::Float64([&a[..], &b[..]].concat()),
            (Column::Int64(a), Column::Int64(b)) => Column::Int64([&a[..], &b[..]].concat()),
            (Column::Boolean(a), Column::Boolean(b)) => Column::Boolean([&a[..], &b[..]].concat()),
            (Column::Float64List(a), Column::Float64List(b)) => {
                Column::Float64List([&a[..], &b[..]].concat())
            }
            (Column::Int64(a), Column::Float64(b)) => {
                Column::Float64(a.iter().map(|&v| v as f64).chain(b.iter().copied()).collect())
            }
            (Column::Float64(a), Column::Int64(b)) => {
                Column::Float64(a.iter().copied().chain(b.iter().map(|&v| v as f64)).collect())
            }
            _ => return None,
        })
    }

    /// Numeric view; Int64 is promoted, other kinds yield `None`.
    pub fn to_f64(&self) -> Option<Vec<f64>> {
        match self {
            Column::Float64(v) => Some(v.clone()),
            Column::Int64(v) => Some(v.iter().map(|&x| x as f64).collect()),
            _ => None,
        }
    }

    fn has_nan(&self) -> bool {
        match self {
            Column::Float64(v) => v.iter().any(|x| x.is_nan()),
            Column::Float64List(v) => v.iter().flatten().any(|x| x.is_nan()),
            _ => false,
        }
    }
}

impl From<Vec<f64>> for Column {
    fn from(v: Vec<f64>) -> Self {
        Column::Float64(v)
    }
}

impl From<Vec<i64>> for Column {
    fn from(v: Vec<i64>) -> Self {
        Column::Int64(v)
    }
}

impl From<Vec<bool>> for Column {
    fn from(v: Vec<bool>) -> Self {
        Column::Boolean(v)
    }
}

impl From<Vec<Vec<f64>>> for Column {
    fn from(v: Vec<Vec<f64>>) -> Self {
        Column::Float64List(v)
    }
}

/// Name and kind of one column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub kind: ValueKind,
}

/// Ordered column names and kinds of a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema(pub Vec<Field>);

impl Schema {
    pub fn names(&self) -> Vec<&str> {
        self.0.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// An immutable table of named, typed, equal-length columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Column>,
    rows: usize,
}

impl Dataset {
    /// Builds a dataset, rejecting NaN in float columns.
    pub fn new<S: Into<String>>(columns: Vec<(S, Column)>) -> Result<Self, DataError> {
        Self::build(columns, false)
    }

    /// Like [`Dataset::new`] but NaN values are permitted.
    pub fn new_allow_nan<S: Into<String>>(columns: Vec<(S, Column)>) -> Result<Self, DataError> {
        Self::build(columns, true)
    }

    fn build<S: Into<String>>(columns: Vec<(S, Column)>, allow_nan: bool) -> Result<Self, DataError> {
        let columns: Vec<(String, Column)> = columns.into_iter().map(|(n, c)| (n.into(), c)).collect();
        let rows = columns.first().map_or(0, |(_, c)| c.len());
        let mut seen = HashSet::new();
        for (name, col) in &columns {
            if !seen.insert(name.as_str()) {
                return Err(DataError::DuplicateColumn(name.clone()));
            }
            if col.len() != rows {
                return Err(DataError::LengthMismatch {
                    name: name.clone(),
                    expected: rows,
                    found: col.len(),
                });
            }
            if !allow_nan && col.has_nan() {
                return Err(DataError::NanValue(name.clone()));
            }
        }
        let (names, columns) = columns.into_iter().unzip();
        Ok(Dataset {
            names,
            columns,
            rows,
        })
    }

    /// A dataset with no columns but a fixed row count.
    pub fn empty(rows: usize) -> Self {
        Dataset {
            names: Vec::new(),
            columns: Vec::new(),
            rows,
        }
    }

    pub fn row_count(&self) -> usize {
        self.rows
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &Column)> {
        self.names.iter().map(String::as_str).zip(self.columns.iter())
    }

    pub fn schema(&self) -> Schema {
        Schema(
            self.columns()
                .map(|(name, col)| Field {
                    name: name.to_owned(),
                    kind: col.kind(),
                })
                .collect(),
        )
    }

    pub fn column(&self, name: &str) -> Result<&Column, DataError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| DataError::UnknownColumn(name.to_owned()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    /// Numeric values of a column; Int64 columns are promoted.
    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>, DataError> {
        let col = self.column(name)?;
        col.to_f64().ok_or_else(|| DataError::WrongKind {
            name: name.to_owned(),
            expected: ValueKind::Float64,
            found: col.kind(),
        })
    }

    /// All columns as numeric vectors, in column order.
    pub fn f64_columns(&self) -> Result<Vec<Vec<f64>>, DataError> {
        self.names.iter().map(|n| self.f64_column(n)).collect()
    }

    /// The named columns, in the requested order.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<Dataset, DataError> {
        let mut columns = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref();
            columns.push((name.to_owned(), self.column(name)?.clone()));
        }
        if columns.is_empty() {
            return Ok(Dataset::empty(self.rows));
        }
        Self::build(columns, true)
    }

    /// Rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Dataset {
        assert!(start <= end && end <= self.rows, "row range out of bounds");
        Dataset {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.slice(start, end)).collect(),
            rows: end - start,
        }
    }

    pub fn take_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.take(indices)).collect(),
            rows: indices.len(),
        }
    }

    /// Chronological split: the first `floor(fraction * rows)` rows and the rest.
    ///
    /// The leading part is clamped to at least one row so neither side is
    /// empty.
    pub fn vertical_split(&self, fraction: f64) -> Result<(Dataset, Dataset), DataError> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(DataError::InvalidFraction(fraction));
        }
        if self.rows < 2 {
            return Err(DataError::TooFewRows(self.rows));
        }
        let head = ((fraction * self.rows as f64).floor() as usize).clamp(1, self.rows - 1);
        Ok((self.slice_rows(0, head), self.slice_rows(head, self.rows)))
    }

    /// Stacks `other` below `self`. Schemas must agree by name and order.
    pub fn vstack(&self, other: &Dataset) -> Result<Dataset, DataError> {
        if self.names != other.names {
            return Err(DataError::SchemaMismatch {
                expected: self.names.clone(),
                found: other.names.clone(),
            });
        }
        let mut columns = Vec::with_capacity(self.columns.len());
        for ((name, a), b) in self.columns().zip(other.columns.iter()) {
            let merged = a.concat(b).ok_or_else(|| DataError::WrongKind {
                name: name.to_owned(),
                expected: a.kind(),
                found: b.kind(),
            })?;
            columns.push(merged);
        }
        Ok(Dataset {
            names: self.names.clone(),
            columns,
            rows: self.rows + other.rows,
        })
    }

    /// Places the columns of `other` to the right of `self`.
    pub fn hstack(&self, other: &Dataset) -> Result<Dataset, DataError> {
        if self.column_count() > 0 && other.column_count() > 0 && self.rows != other.rows {
            return Err(DataError::LengthMismatch {
                name: other.names[0].clone(),
                expected: self.rows,
                found: other.rows,
            });
        }
        let columns: Vec<(String, Column)> = self
            .columns()
            .chain(other.columns())
            .map(|(n, c)| (n.to_owned(), c.clone()))
            .collect();
        if columns.is_empty() {
            return Ok(Dataset::empty(self.rows.max(other.rows)));
        }
        Self::build(columns, true)
    }

    /// Row-major numeric matrix of all columns.
    pub fn to_row_major(&self) -> Result<Vec<Vec<f64>>, DataError> {
        let cols = self.f64_columns()?;
        Ok((0..self.rows)
            .map(|r| cols.iter().map(|c| c[r]).collect())
            .collect())
    }

    /// Builds a dataset from numeric columns, bypassing the NaN check.
    pub(crate) fn from_f64_columns(names: Vec<String>, values: Vec<Vec<f64>>) -> Result<Dataset, DataError> {
        let columns = names
            .into_iter()
            .zip(values)
            .map(|(n, v)| (n, Column::Float64(v)))
            .collect::<Vec<_>>();
        Self::build(columns, true)
    }
}
