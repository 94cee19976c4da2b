use std::fs;
use std::io;
use std::path::Path;

use serde_json::{Map, Number, Value};

use super::{Column, DataError, Dataset};

/// Loads a JSON file holding either an array of flat records with identical
/// keys, or an object mapping column names to equal-length arrays.
///
/// Integer-only columns become Int64; integers mixed with floats are promoted
/// to Float64. Arrays of numbers become list columns.
pub fn load_json(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => DataError::FileNotFound(path.to_path_buf()),
        _ => DataError::Io(e.to_string()),
    })?;
    if text.trim().is_empty() {
        return Err(DataError::EmptyFile);
    }
    let value: Value = serde_json::from_str(&text).map_err(|e| DataError::ParseError {
        row: e.line().saturating_sub(1),
        column: String::new(),
        message: e.to_string(),
    })?;
    dataset_from_json_value(&value)
}

pub fn dataset_from_json_value(value: &Value) -> Result<Dataset, DataError> {
    match value {
        Value::Array(records) => from_records(records),
        Value::Object(columns) => from_columns(columns),
        _ => Err(DataError::ParseError {
            row: 0,
            column: String::new(),
            message: "expected an array of records or an object of columns".into(),
        }),
    }
}

fn from_records(records: &[Value]) -> Result<Dataset, DataError> {
    let Some(first) = records.first() else {
        return Ok(Dataset::empty(0));
    };
    let keys: Vec<String> = as_record(first, 0)?.keys().cloned().collect();
    let mut cells: Vec<Vec<&Value>> = vec![Vec::with_capacity(records.len()); keys.len()];
    for (i, record) in records.iter().enumerate() {
        let record = as_record(record, i)?;
        if record.len() != keys.len() {
            return Err(DataError::InconsistentKeys { record: i });
        }
        for (k, key) in keys.iter().enumerate() {
            let v = record.get(key).ok_or(DataError::InconsistentKeys { record: i })?;
            cells[k].push(v);
        }
    }
    let columns = keys
        .into_iter()
        .zip(cells)
        .map(|(name, vals)| {
            let col = infer_column(&name, &vals)?;
            Ok((name, col))
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    Dataset::new(columns)
}

fn as_record(value: &Value, index: usize) -> Result<&Map<String, Value>, DataError> {
    value.as_object().ok_or_else(|| DataError::ParseError {
        row: index,
        column: String::new(),
        message: "record is not an object".into(),
    })
}

fn from_columns(columns: &Map<String, Value>) -> Result<Dataset, DataError> {
    let columns = columns
        .iter()
        .map(|(name, v)| {
            let arr = v.as_array().ok_or_else(|| DataError::ParseError {
                row: 0,
                column: name.clone(),
                message: "column is not an array".into(),
            })?;
            let refs: Vec<&Value> = arr.iter().collect();
            Ok((name.clone(), infer_column(name, &refs)?))
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    Dataset::new(columns)
}

fn infer_column(name: &str, values: &[&Value]) -> Result<Column, DataError> {
    let bad = |row: usize, message: &str| DataError::ParseError {
        row,
        column: name.to_owned(),
        message: message.to_owned(),
    };
    match values.first() {
        None => Ok(Column::Float64(Vec::new())),
        Some(Value::Bool(_)) => values
            .iter()
            .enumerate()
            .map(|(i, v)| v.as_bool().ok_or_else(|| bad(i, "expected a boolean")))
            .collect::<Result<Vec<_>, _>>()
            .map(Column::Boolean),
        Some(Value::Number(_)) => {
            let numbers = values
                .iter()
                .enumerate()
                .map(|(i, v)| match v {
                    Value::Number(n) => Ok(n),
                    _ => Err(bad(i, "expected a number")),
                })
                .collect::<Result<Vec<&Number>, _>>()?;
            if numbers.iter().all(|n| n.is_i64()) {
                Ok(Column::Int64(numbers.iter().filter_map(|n| n.as_i64()).collect()))
            } else {
                numbers
                    .iter()
                    .enumerate()
                    .map(|(i, n)| n.as_f64().ok_or_else(|| bad(i, "number out of range")))
                    .collect::<Result<Vec<_>, _>>()
                    .map(Column::Float64)
            }
        }
        Some(Value::Array(_)) => values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_array()
                    .ok_or_else(|| bad(i, "expected a list"))?
                    .iter()
                    .map(|x| x.as_f64().ok_or_else(|| bad(i, "expected a list of numbers")))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Column::Float64List),
        Some(_) => Err(bad(0, "unsupported value type")),
    }
}

/// Encodes a dataset as an object of column arrays.
///
/// Non-finite floats have no JSON representation and are rejected.
pub fn dataset_to_json_columns(dataset: &Dataset) -> Result<Value, DataError> {
    let mut map = Map::new();
    for (name, col) in dataset.columns() {
        let finite = |x: &f64| -> Result<Value, DataError> {
            Number::from_f64(*x)
                .map(Value::Number)
                .ok_or_else(|| DataError::NonFiniteValue(name.to_owned()))
        };
        let value = match col {
            Column::Float64(v) => Value::Array(v.iter().map(finite).collect::<Result<_, _>>()?),
            Column::Int64(v) => Value::Array(v.iter().map(|&x| Value::from(x)).collect()),
            Column::Boolean(v) => Value::Array(v.iter().map(|&x| Value::Bool(x)).collect()),
            Column::Float64List(v) => Value::Array(
                v.iter()
                    .map(|l| l.iter().map(finite).collect::<Result<Vec<_>, _>>().map(Value::Array))
                    .collect::<Result<_, _>>()?,
            ),
        };
        map.insert(name.to_owned(), value);
    }
    Ok(Value::Object(map))
}
