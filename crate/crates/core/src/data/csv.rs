use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use super::{Column, DataError, Dataset, ValueKind};

/// Options for [`load_csv`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvOptions {
    pub has_header: bool,
    pub delimiter: u8,
    /// Accept `NaN` cells instead of rejecting them.
    pub allow_nan: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            has_header: true,
            delimiter: b',',
            allow_nan: false,
        }
    }
}

/// Loads a CSV file where every column is numeric.
///
/// Without a header, columns are named `column_0`, `column_1`, ...
/// Row numbers in errors count data rows from zero.
pub fn load_csv(path: impl AsRef<Path>, options: CsvOptions) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => DataError::FileNotFound(path.to_path_buf()),
        _ => DataError::Io(e.to_string()),
    })?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| DataError::Io(e.to_string()))?;
    parse_csv(&bytes, options)
}

pub(crate) fn parse_csv(bytes: &[u8], options: CsvOptions) -> Result<Dataset, DataError> {
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(DataError::EmptyFile);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .delimiter(options.delimiter)
        .flexible(true)
        .from_reader(bytes);

    let mut names: Vec<String> = if options.has_header {
        reader
            .headers()
            .map_err(|e| DataError::Io(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_owned())
            .collect()
    } else {
        Vec::new()
    };

    let mut values: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Io(e.to_string()))?;
        if !options.has_header && row == 0 {
            names = (0..record.len()).map(|i| format!("column_{i}")).collect();
            values = vec![Vec::new(); names.len()];
        }
        if record.len() != names.len() {
            return Err(DataError::RaggedRows {
                row,
                expected: names.len(),
                found: record.len(),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let value: f64 = cell.parse().map_err(|_| DataError::ParseError {
                row,
                column: names[col].clone(),
                message: format!("`{cell}` is not a number"),
            })?;
            if value.is_nan() && !options.allow_nan {
                return Err(DataError::ParseError {
                    row,
                    column: names[col].clone(),
                    message: "NaN is not allowed".into(),
                });
            }
            values[col].push(value);
        }
    }

    let columns = names
        .into_iter()
        .zip(values)
        .map(|(n, v)| (n, Column::Float64(v)))
        .collect();
    if options.allow_nan {
        Dataset::new_allow_nan(columns)
    } else {
        Dataset::new(columns)
    }
}

/// Writes a dataset as CSV with a header row.
///
/// Floats use the shortest representation that parses back to the same
/// value, so [`load_csv`] reproduces Float64 datasets exactly. Only Float64
/// and Int64 columns can be written.
pub fn write_csv(dataset: &Dataset, mut out: impl Write, delimiter: u8) -> Result<(), DataError> {
    let cells: Vec<Vec<String>> = dataset
        .columns()
        .map(|(name, col)| match col {
            Column::Float64(v) => Ok(v.iter().map(|x| format_f64(*x)).collect()),
            Column::Int64(v) => Ok(v.iter().map(|x| x.to_string()).collect()),
            other => Err(DataError::WrongKind {
                name: name.to_owned(),
                expected: ValueKind::Float64,
                found: other.kind(),
            }),
        })
        .collect::<Result<_, _>>()?;

    let mut writer = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(&mut out);
    let io_err = |e: csv::Error| DataError::Io(e.to_string());
    writer.write_record(dataset.names()).map_err(io_err)?;
    for row in 0..dataset.row_count() {
        writer
            .write_record(cells.iter().map(|c| c[row].as_str()))
            .map_err(io_err)?;
    }
    writer.flush().map_err(|e| DataError::Io(e.to_string()))?;
    Ok(())
}

// Rust's `Display` for f64 is the shortest round-tripping decimal.
fn format_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_owned()
    } else {
        x.to_string()
    }
}
