//! The region × pollutant feature table: null-row cleaning, z-score
//! standardization, and CSV persistence.

use std::str::FromStr;

use thiserror::Error;

use crate::matrix::Matrix;
use crate::raster::Pollutant;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("csv header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch { expected: String, found: String },
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("non-numeric field {value:?} at row {row}")]
    NonNumericField { row: usize, value: String },
    #[error("every row contains a null cell")]
    EmptyResult,
    #[error("table still contains null cells")]
    NullCellsPresent,
    #[error("standardization needs at least 2 rows, found {0}")]
    TooFewRows(usize),
    #[error("table shape mismatch: {0}")]
    Shape(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Per-column mean and population standard deviation recorded when a table is
/// standardized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    pub std_dev: f64,
}

/// Rows are regions, columns are pollutants, cells hold mean concentrations
/// (`None` where a region had no covered data).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    row_names: Vec<String>,
    columns: Vec<Pollutant>,
    cells: Vec<Option<f64>>,
    standardized: bool,
    column_stats: Option<Vec<ColumnStats>>,
}

impl FeatureTable {
    pub fn new(
        row_names: Vec<String>,
        columns: Vec<Pollutant>,
        cells: Vec<Option<f64>>,
    ) -> Result<Self, TableError> {
        if cells.len() != row_names.len() * columns.len() {
            return Err(TableError::Shape(format!(
                "{} cells for {} rows x {} columns",
                cells.len(),
                row_names.len(),
                columns.len()
            )));
        }
        if cells.iter().flatten().any(|v| !v.is_finite()) {
            return Err(TableError::Shape("non-finite cell".into()));
        }
        Ok(Self { row_names, columns, cells, standardized: false, column_stats: None })
    }

    pub fn row_names(&self) -> &[String] {
        &self.row_names
    }

    pub fn columns(&self) -> &[Pollutant] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.row_names.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.columns.len() + col]
    }

    pub fn row(&self, row: usize) -> &[Option<f64>] {
        &self.cells[row * self.columns.len()..(row + 1) * self.columns.len()]
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn column_stats(&self) -> Option<&[ColumnStats]> {
        self.column_stats.as_deref()
    }

    /// Dense matrix view of the table; fails if any cell is null.
    pub fn to_matrix(&self) -> Result<Matrix, TableError> {
        let data: Option<Vec<f64>> = self.cells.iter().copied().collect();
        let data = data.ok_or(TableError::NullCellsPresent)?;
        Ok(Matrix::new(self.n_rows(), self.n_cols(), data))
    }
}

/// Removes every row containing a null cell, preserving order; returns the
/// surviving table and the dropped region names.
pub fn drop_null_rows(table: &FeatureTable) -> Result<(FeatureTable, Vec<String>), TableError> {
    let mut row_names = Vec::new();
    let mut cells = Vec::new();
    let mut dropped = Vec::new();
    for (name, row) in table.row_names.iter().zip(table.cells.chunks_exact(table.n_cols().max(1)))
    {
        if row.iter().all(Option::is_some) {
            row_names.push(name.clone());
            cells.extend_from_slice(row);
        } else {
            dropped.push(name.clone());
        }
    }
    if row_names.is_empty() {
        return Err(TableError::EmptyResult);
    }
    let kept = FeatureTable::new(row_names, table.columns.clone(), cells)?;
    Ok((kept, dropped))
}

/// Standardizes each column to z-scores, z = (x - mean) / population std.
///
/// Constant columns (std 0) map to all zeros and are returned as warnings.
/// The recorded [`ColumnStats`] are those of the input columns.
pub fn standardize(table: &FeatureTable) -> Result<(FeatureTable, Vec<Pollutant>), TableError> {
    let n = table.n_rows();
    if n < 2 {
        return Err(TableError::TooFewRows(n));
    }
    if table.cells.iter().any(Option::is_none) {
        return Err(TableError::NullCellsPresent);
    }

    let d = table.n_cols();
    let mut cells = table.cells.clone();
    let mut stats = Vec::with_capacity(d);
    let mut constant = Vec::new();
    for col in 0..d {
        let column: Vec<f64> = (0..n).map(|r| cells[r * d + col].unwrap()).collect();
        let (mean, std_dev) = mean_and_population_std(&column);
        stats.push(ColumnStats { mean, std_dev });
        if std_dev == 0.0 {
            constant.push(table.columns[col]);
            for r in 0..n {
                cells[r * d + col] = Some(0.0);
            }
            continue;
        }
        let mut z: Vec<f64> = column.iter().map(|x| (x - mean) / std_dev).collect();
        // One refinement pass keeps |mean| and |std - 1| within 1e-12 even when
        // the raw column mean dwarfs its spread.
        let (zm, zs) = mean_and_population_std(&z);
        if zs > 0.0 {
            for v in &mut z {
                *v = (*v - zm) / zs;
            }
        }
        for (r, v) in z.into_iter().enumerate() {
            cells[r * d + col] = Some(v);
        }
    }

    Ok((
        FeatureTable {
            row_names: table.row_names.clone(),
            columns: table.columns.clone(),
            cells,
            standardized: true,
            column_stats: Some(stats),
        },
        constant,
    ))
}

fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Reads a feature table from CSV with the fixed six-pollutant header
/// `region,NO2,SO2,CO,AER_AI,O3,HCHO`; empty fields become nulls.
pub fn read_table(text: &str) -> Result<FeatureTable, TableError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());

    let expected_header = expected_header();
    let header: Vec<String> =
        reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header != expected_header {
        return Err(TableError::HeaderMismatch {
            expected: expected_header.join(","),
            found: header.join(","),
        });
    }

    let mut row_names = Vec::new();
    let mut cells = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != expected_header.len() {
            return Err(TableError::RaggedRow {
                row: idx,
                expected: expected_header.len(),
                found: record.len(),
            });
        }
        row_names.push(record[0].to_string());
        for field in record.iter().skip(1) {
            let field = field.trim();
            if field.is_empty() {
                cells.push(None);
            } else {
                let value = f64::from_str(field).map_err(|_| TableError::NonNumericField {
                    row: idx,
                    value: field.to_string(),
                })?;
                if !value.is_finite() {
                    return Err(TableError::NonNumericField { row: idx, value: field.to_string() });
                }
                cells.push(Some(value));
            }
        }
    }
    FeatureTable::new(row_names, Pollutant::ALL.to_vec(), cells)
}

fn expected_header() -> Vec<String> {
    std::iter::once("region".to_string())
        .chain(Pollutant::ALL.iter().map(|p| p.name().to_string()))
        .collect()
}

/// Writes a table as CSV (UTF-8, LF, `.` decimal separator). Values use the
/// shortest decimal form that parses back to the identical double, so a
/// read-back table matches cell for cell. Null cells are empty fields.
pub fn write_table(table: &FeatureTable) -> String {
    let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
    let header: Vec<String> = std::iter::once("region".to_string())
        .chain(table.columns.iter().map(|p| p.name().to_string()))
        .collect();
    writer.write_record(&header).expect("in-memory write");
    for (row, name) in table.row_names.iter().enumerate() {
        let mut record = vec![name.clone()];
        for col in 0..table.n_cols() {
            record.push(match table.cell(row, col) {
                Some(v) => format!("{v}"),
                None => String::new(),
            });
        }
        writer.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
