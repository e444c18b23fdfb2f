//! Raster scenes: ESRI ASCII grid parsing, per-pollutant QA filtering, and
//! mean compositing of many scenes into one gap-filled grid.
//!
//! A [`Grid`] stores one band in row-major order with row 0 at the *lower-left*
//! corner; cell values are `Option<f64>` where `None` marks missing retrievals.

use std::fmt::Write as _;
use std::str::FromStr;

pub use chrono::NaiveDate;
use rayon::prelude::*;
use thiserror::Error;

/// The six pollutant bands carried through the pipeline, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pollutant {
    No2,
    So2,
    Co,
    AerAi,
    O3,
    Hcho,
}

impl Pollutant {
    /// All pollutants in canonical column order.
    pub const ALL: [Pollutant; 6] = [
        Pollutant::No2,
        Pollutant::So2,
        Pollutant::Co,
        Pollutant::AerAi,
        Pollutant::O3,
        Pollutant::Hcho,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Pollutant::No2 => "NO2",
            Pollutant::So2 => "SO2",
            Pollutant::Co => "CO",
            Pollutant::AerAi => "AER_AI",
            Pollutant::O3 => "O3",
            Pollutant::Hcho => "HCHO",
        }
    }
}

impl std::fmt::Display for Pollutant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pollutant {
    type Err = RasterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pollutant::ALL
            .iter()
            .copied()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| RasterError::UnknownPollutant(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("value count {found} does not match ncols*nrows = {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-numeric cell value: {0:?}")]
    NonNumericCell(String),
    #[error("grids do not share georeferencing")]
    GeoreferenceMismatch,
    #[error("no scenes to composite")]
    EmptyInput,
    #[error("qa band required for {0} but absent")]
    MissingQaBand(Pollutant),
    #[error("qa band georeferencing differs from the data band")]
    QaMismatch,
    #[error("qa value {0} outside [0, 1]")]
    QaOutOfRange(f64),
    #[error("unknown pollutant {0:?}")]
    UnknownPollutant(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// One raster band: a rectangular cell array with lat/lon georeferencing.
///
/// Values are row-major with index `(0, 0)` at the lower-left cell; a cell is
/// either a finite value or missing.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    ncols: usize,
    nrows: usize,
    x_origin: f64,
    y_origin: f64,
    cell_size: f64,
    values: Vec<Option<f64>>,
}

impl Grid {
    pub fn new(
        ncols: usize,
        nrows: usize,
        x_origin: f64,
        y_origin: f64,
        cell_size: f64,
        values: Vec<Option<f64>>,
    ) -> Result<Self, RasterError> {
        if ncols == 0 || nrows == 0 {
            return Err(RasterError::InvalidGrid("ncols and nrows must be >= 1".into()));
        }
        if cell_size <= 0.0 || !cell_size.is_finite() {
            return Err(RasterError::InvalidGrid("cell_size must be > 0".into()));
        }
        if !x_origin.is_finite() || !y_origin.is_finite() {
            return Err(RasterError::InvalidGrid("origin must be finite".into()));
        }
        if values.len() != ncols * nrows {
            return Err(RasterError::DimensionMismatch {
                expected: ncols * nrows,
                found: values.len(),
            });
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(RasterError::InvalidGrid("non-finite cell value".into()));
        }
        Ok(Self { ncols, nrows, x_origin, y_origin, cell_size, values })
    }

    /// Constant-valued grid, handy for tests and fixtures.
    pub fn constant(
        ncols: usize,
        nrows: usize,
        x_origin: f64,
        y_origin: f64,
        cell_size: f64,
        value: f64,
    ) -> Result<Self, RasterError> {
        Grid::new(ncols, nrows, x_origin, y_origin, cell_size, vec![Some(value); ncols * nrows])
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn x_origin(&self) -> f64 {
        self.x_origin
    }

    pub fn y_origin(&self) -> f64 {
        self.y_origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    /// Cell value at `(row, col)`, row 0 at the bottom.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.ncols + col]
    }

    /// Longitude/latitude of the center of cell `(row, col)`.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.x_origin + (col as f64 + 0.5) * self.cell_size,
            self.y_origin + (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// True when two grids share dimensions, origin, and cell size exactly.
    pub fn same_georeference(&self, other: &Grid) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && self.x_origin == other.x_origin
            && self.y_origin == other.y_origin
            && self.cell_size == other.cell_size
    }

    /// Copy of this grid translated by whole degrees; values untouched.
    pub fn translated(&self, dx: f64, dy: f64) -> Grid {
        Grid {
            x_origin: self.x_origin + dx,
            y_origin: self.y_origin + dy,
            ..self.clone()
        }
    }
}

/// A dated set of co-registered bands for one pollutant.
#[derive(Debug, Clone)]
pub struct Scene {
    pub pollutant: Pollutant,
    pub timestamp: NaiveDate,
    pub data: Grid,
    pub qa: Option<Grid>,
}

impl Scene {
    pub fn new(
        pollutant: Pollutant,
        timestamp: NaiveDate,
        data: Grid,
        qa: Option<Grid>,
    ) -> Result<Self, RasterError> {
        if let Some(qa) = &qa {
            if !qa.same_georeference(&data) {
                return Err(RasterError::QaMismatch);
            }
            if let Some(bad) = qa.values().iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(RasterError::QaOutOfRange(*bad));
            }
        }
        Ok(Self { pollutant, timestamp, data, qa })
    }
}

/// Per-pollutant qa_value thresholds; `None` disables filtering for that band.
#[derive(Debug, Clone)]
pub struct QaPolicy {
    thresholds: Vec<(Pollutant, Option<f64>)>,
}

impl Default for QaPolicy {
    fn default() -> Self {
        Self {
            thresholds: vec![
                (Pollutant::AerAi, Some(0.8)),
                (Pollutant::No2, Some(0.75)),
                (Pollutant::O3, None),
                (Pollutant::So2, Some(0.5)),
                (Pollutant::Co, Some(0.5)),
                (Pollutant::Hcho, Some(0.5)),
            ],
        }
    }
}

impl QaPolicy {
    pub fn threshold(&self, pollutant: Pollutant) -> Option<f64> {
        self.thresholds
            .iter()
            .find(|(p, _)| *p == pollutant)
            .and_then(|(_, t)| *t)
    }

    /// Replaces the threshold for one pollutant (`None` disables filtering).
    pub fn set(&mut self, pollutant: Pollutant, threshold: Option<f64>) {
        if let Some(entry) = self.thresholds.iter_mut().find(|(p, _)| *p == pollutant) {
            entry.1 = threshold;
        } else {
            self.thresholds.push((pollutant, threshold));
        }
    }
}

/// Decomposed scene filename of the form `<pollutant>_<YYYY-MM-DD>[_qa].asc`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneFileName {
    pub pollutant: Pollutant,
    pub date: NaiveDate,
    pub is_qa: bool,
}

impl SceneFileName {
    /// Parses a bare filename; returns `None` when it does not follow the convention.
    pub fn parse(name: &str) -> Option<SceneFileName> {
        let stem = name.strip_suffix(".asc")?;
        let (stem, is_qa) = match stem.strip_suffix("_qa") {
            Some(rest) => (rest, true),
            None => (stem, false),
        };
        // Date is the final 10 chars: <pollutant>_<YYYY-MM-DD>
        let (pollutant_part, date_part) = stem.rsplit_once('_')?;
        let pollutant = Pollutant::from_str(pollutant_part).ok()?;
        let date = NaiveDate::parse_from_str(date_part, "%Y-%m-%d").ok()?;
        Some(SceneFileName { pollutant, date, is_qa })
    }

    pub fn to_file_name(&self) -> String {
        format!(
            "{}_{}{}.asc",
            self.pollutant,
            self.date.format("%Y-%m-%d"),
            if self.is_qa { "_qa" } else { "" }
        )
    }
}

const HEADER_KEYS: [&str; 6] =
    ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];

const DEFAULT_NODATA: f64 = -9999.0;

/// Parses an ESRI ASCII grid. Header keys are case-insensitive; `NODATA_value`
/// is optional and defaults to -9999. The input stores the top row first; the
/// returned [`Grid`] is flipped so row 0 is the bottom row.
pub fn parse_grid(text: &str) -> Result<Grid, RasterError> {
    let mut header: [Option<f64>; 6] = [None; 6];
    let mut lines = text.lines().peekable();

    while let Some(line) = lines.peek() {
        let mut parts = line.split_whitespace();
        let Some(key) = parts.next() else {
            lines.next();
            continue;
        };
        let Some(slot) = HEADER_KEYS.iter().position(|k| key.eq_ignore_ascii_case(k)) else {
            break;
        };
        if header[slot].is_some() {
            return Err(RasterError::MalformedHeader(format!("duplicate key {key}")));
        }
        let value = parts
            .next()
            .ok_or_else(|| RasterError::MalformedHeader(format!("{key} has no value")))?;
        if parts.next().is_some() {
            return Err(RasterError::MalformedHeader(format!("trailing tokens after {key}")));
        }
        let value: f64 = value
            .parse()
            .map_err(|_| RasterError::MalformedHeader(format!("{key} value not numeric")))?;
        header[slot] = Some(value);
        lines.next();
    }

    for (slot, key) in HEADER_KEYS.iter().enumerate().take(5) {
        if header[slot].is_none() {
            return Err(RasterError::MalformedHeader(format!("missing key {key}")));
        }
    }
    let ncols = parse_dimension(header[0].unwrap(), "ncols")?;
    let nrows = parse_dimension(header[1].unwrap(), "nrows")?;
    let x_origin = header[2].unwrap();
    let y_origin = header[3].unwrap();
    let cell_size = header[4].unwrap();
    if cell_size <= 0.0 || cell_size.is_nan() {
        return Err(RasterError::MalformedHeader("cellsize must be > 0".into()));
    }
    let nodata = header[5].unwrap_or(DEFAULT_NODATA);

    let mut top_first = Vec::with_capacity(ncols * nrows);
    for line in lines {
        for token in line.split_whitespace() {
            let value: f64 = token
                .parse()
                .map_err(|_| RasterError::NonNumericCell(token.to_string()))?;
            if !value.is_finite() {
                return Err(RasterError::NonNumericCell(token.to_string()));
            }
            top_first.push(if value == nodata { None } else { Some(value) });
        }
    }
    if top_first.len() != ncols * nrows {
        return Err(RasterError::DimensionMismatch {
            expected: ncols * nrows,
            found: top_first.len(),
        });
    }

    // Flip so row 0 is the lower-left corner.
    let mut values = vec![None; ncols * nrows];
    for row in 0..nrows {
        let src = &top_first[row * ncols..(row + 1) * ncols];
        values[(nrows - 1 - row) * ncols..(nrows - row) * ncols].copy_from_slice(src);
    }
    Grid::new(ncols, nrows, x_origin, y_origin, cell_size, values)
}

fn parse_dimension(value: f64, key: &str) -> Result<usize, RasterError> {
    if value.fract() != 0.0 || value < 1.0 || value > usize::MAX as f64 {
        return Err(RasterError::MalformedHeader(format!("{key} must be a positive integer")));
    }
    Ok(value as usize)
}

/// Writes a grid back to ESRI ASCII text, data values at 9 significant digits,
/// missing cells as the -9999 NODATA marker, top row first.
pub fn serialize_grid(grid: &Grid) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "ncols {}", grid.ncols);
    let _ = writeln!(out, "nrows {}", grid.nrows);
    let _ = writeln!(out, "xllcorner {}", grid.x_origin);
    let _ = writeln!(out, "yllcorner {}", grid.y_origin);
    let _ = writeln!(out, "cellsize {}", grid.cell_size);
    let _ = writeln!(out, "NODATA_value {}", DEFAULT_NODATA);
    for row in (0..grid.nrows).rev() {
        for col in 0..grid.ncols {
            if col > 0 {
                out.push(' ');
            }
            match grid.get(row, col) {
                Some(v) => {
                    let _ = write!(out, "{:.8e}", v);
                }
                None => {
                    let _ = write!(out, "{}", DEFAULT_NODATA);
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Applies the QA policy to one scene: a cell survives iff its qa value is
/// present and `>= threshold`. A `None` threshold passes the data band through
/// untouched (the O3 case).
pub fn qa_filter(scene: &Scene, policy: &QaPolicy) -> Result<Grid, RasterError> {
    let Some(threshold) = policy.threshold(scene.pollutant) else {
        return Ok(scene.data.clone());
    };
    let qa = scene
        .qa
        .as_ref()
        .ok_or(RasterError::MissingQaBand(scene.pollutant))?;
    let values = scene
        .data
        .values()
        .iter()
        .zip(qa.values())
        .map(|(value, qa)| match qa {
            Some(q) if *q >= threshold => *value,
            _ => None,
        })
        .collect();
    Grid::new(
        scene.data.ncols,
        scene.data.nrows,
        scene.data.x_origin,
        scene.data.y_origin,
        scene.data.cell_size,
        values,
    )
}

/// Composites scenes into one grid: each cell is the arithmetic mean of the
/// values present at that cell, missing only where every scene is missing.
pub fn composite_mean(grids: &[Grid]) -> Result<Grid, RasterError> {
    let first = grids.first().ok_or(RasterError::EmptyInput)?;
    if grids.iter().any(|g| !g.same_georeference(first)) {
        return Err(RasterError::GeoreferenceMismatch);
    }
    let len = first.values.len();
    let values: Vec<Option<f64>> = (0..len)
        .into_par_iter()
        .map(|idx| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for grid in grids {
                if let Some(v) = grid.values[idx] {
                    sum += v;
                    count += 1;
                }
            }
            (count > 0).then(|| sum / count as f64)
        })
        .collect();
    Grid::new(first.ncols, first.nrows, first.x_origin, first.y_origin, first.cell_size, values)
}
