//! Administrative boundary polygons and zonal aggregation of grids over them.
//!
//! Regions come from GeoJSON FeatureCollections (RFC 7946, longitude first).
//! Membership of a grid cell in a region is decided by its cell *center*
//! using even-odd ray casting with a half-open edge rule, so a point on the
//! shared border of two adjacent regions lands in exactly one of them.
//! Coordinates are treated as planar, which is adequate at district scale.

use serde_json::Value;
use thiserror::Error;

use crate::raster::{Grid, Pollutant};
use crate::table::{FeatureTable, TableError};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("boundaries are not a GeoJSON FeatureCollection")]
    NotAFeatureCollection,
    #[error("unsupported geometry type {0:?} (only Polygon and MultiPolygon)")]
    UnsupportedGeometryType(String),
    #[error("feature {index} lacks a string property {property:?}")]
    MissingNameProperty { index: usize, property: String },
    #[error("duplicate region name {0:?}")]
    DuplicateRegionName(String),
    #[error("ring with fewer than 4 vertices in region {0:?}")]
    DegenerateRing(String),
    #[error("invalid coordinates: {0}")]
    BadCoordinates(String),
    #[error("composites do not share georeferencing")]
    GeoreferenceMismatch,
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// A closed ring of (lon, lat) vertices; first vertex equals the last.
pub type Ring = Vec<(f64, f64)>;

/// One polygon part: an outer ring plus zero or more hole rings.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonPart {
    pub outer: Ring,
    pub holes: Vec<Ring>,
}

/// A named administrative polygon, possibly multi-part, with holes.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub name: String,
    pub polygons: Vec<PolygonPart>,
}

impl Region {
    /// Axis-aligned bounding box over all outer rings: (min_lon, min_lat, max_lon, max_lat).
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let mut bbox = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for part in &self.polygons {
            for &(x, y) in &part.outer {
                bbox.0 = bbox.0.min(x);
                bbox.1 = bbox.1.min(y);
                bbox.2 = bbox.2.max(x);
                bbox.3 = bbox.3.max(y);
            }
        }
        bbox
    }

    /// Copy of this region translated by whole degrees.
    pub fn translated(&self, dx: f64, dy: f64) -> Region {
        let polygons = self
            .polygons
            .iter()
            .map(|part| PolygonPart {
                outer: part.outer.iter().map(|&(x, y)| (x + dx, y + dy)).collect(),
                holes: part
                    .holes
                    .iter()
                    .map(|ring| ring.iter().map(|&(x, y)| (x + dx, y + dy)).collect())
                    .collect(),
            })
            .collect();
        Region { name: self.name.clone(), polygons }
    }
}

/// Regions parsed from a FeatureCollection plus any auto-close warnings.
#[derive(Debug, Clone)]
pub struct RegionSet {
    pub regions: Vec<Region>,
    pub warnings: Vec<String>,
}

/// Parses a GeoJSON FeatureCollection of Polygon/MultiPolygon features into
/// regions. Region names come from `name_property`; unclosed rings are closed
/// with a warning.
pub fn parse_regions(text: &str, name_property: &str) -> Result<RegionSet, GeometryError> {
    let doc: Value = serde_json::from_str(text)?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(GeometryError::NotAFeatureCollection);
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or(GeometryError::NotAFeatureCollection)?;

    let mut regions: Vec<Region> = Vec::with_capacity(features.len());
    let mut warnings = Vec::new();
    for (index, feature) in features.iter().enumerate() {
        let name = feature
            .get("properties")
            .and_then(|p| p.get(name_property))
            .and_then(Value::as_str)
            .ok_or_else(|| GeometryError::MissingNameProperty {
                index,
                property: name_property.to_string(),
            })?
            .to_string();
        if regions.iter().any(|r| r.name == name) {
            return Err(GeometryError::DuplicateRegionName(name));
        }

        let geometry = feature
            .get("geometry")
            .ok_or_else(|| GeometryError::UnsupportedGeometryType("null".into()))?;
        let geom_type = geometry.get("type").and_then(Value::as_str).unwrap_or("null");
        let coords = geometry
            .get("coordinates")
            .ok_or_else(|| GeometryError::BadCoordinates(format!("feature {index}")))?;
        let polygons = match geom_type {
            "Polygon" => vec![parse_polygon(coords, &name, &mut warnings)?],
            "MultiPolygon" => {
                let parts = coords
                    .as_array()
                    .ok_or_else(|| GeometryError::BadCoordinates(name.clone()))?;
                parts
                    .iter()
                    .map(|part| parse_polygon(part, &name, &mut warnings))
                    .collect::<Result<Vec<_>, _>>()?
            }
            other => return Err(GeometryError::UnsupportedGeometryType(other.to_string())),
        };
        regions.push(Region { name, polygons });
    }
    Ok(RegionSet { regions, warnings })
}

fn parse_polygon(
    coords: &Value,
    name: &str,
    warnings: &mut Vec<String>,
) -> Result<PolygonPart, GeometryError> {
    let rings = coords
        .as_array()
        .ok_or_else(|| GeometryError::BadCoordinates(name.to_string()))?;
    if rings.is_empty() {
        return Err(GeometryError::DegenerateRing(name.to_string()));
    }
    let mut parsed = rings
        .iter()
        .map(|ring| parse_ring(ring, name, warnings))
        .collect::<Result<Vec<_>, _>>()?;
    let outer = parsed.remove(0);
    Ok(PolygonPart { outer, holes: parsed })
}

fn parse_ring(
    coords: &Value,
    name: &str,
    warnings: &mut Vec<String>,
) -> Result<Ring, GeometryError> {
    let points = coords
        .as_array()
        .ok_or_else(|| GeometryError::BadCoordinates(name.to_string()))?;
    let mut ring: Ring = points
        .iter()
        .map(|point| {
            let pair = point
                .as_array()
                .filter(|a| a.len() >= 2)
                .ok_or_else(|| GeometryError::BadCoordinates(name.to_string()))?;
            let lon = pair[0]
                .as_f64()
                .ok_or_else(|| GeometryError::BadCoordinates(name.to_string()))?;
            let lat = pair[1]
                .as_f64()
                .ok_or_else(|| GeometryError::BadCoordinates(name.to_string()))?;
            if !lon.is_finite() || !lat.is_finite() {
                return Err(GeometryError::BadCoordinates(name.to_string()));
            }
            Ok((lon, lat))
        })
        .collect::<Result<_, _>>()?;
    if let (Some(first), Some(last)) = (ring.first().copied(), ring.last().copied()) {
        if first != last {
            warnings.push(format!("auto-closed an open ring in region {name:?}"));
            ring.push(first);
        }
    }
    if ring.len() < 4 {
        return Err(GeometryError::DegenerateRing(name.to_string()));
    }
    Ok(ring)
}

/// Even-odd crossing count for one closed ring, half-open in both axes.
fn ray_crosses(ring: &[(f64, f64)], lon: f64, lat: f64) -> bool {
    let mut inside = false;
    for window in ring.windows(2) {
        let (x1, y1) = window[0];
        let (x2, y2) = window[1];
        if (y1 > lat) != (y2 > lat) {
            let x_cross = x1 + (lat - y1) * (x2 - x1) / (y2 - y1);
            if lon < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// True iff the point lies inside the region: within some part's outer ring
/// and not inside one of that part's holes (even-odd rule).
pub fn point_in_region(point: (f64, f64), region: &Region) -> bool {
    let (lon, lat) = point;
    region.polygons.iter().any(|part| {
        let mut parity = ray_crosses(&part.outer, lon, lat);
        for hole in &part.holes {
            if ray_crosses(hole, lon, lat) {
                parity = !parity;
            }
        }
        parity
    })
}

/// Mean of the non-missing cells whose centers fall inside the region; `None`
/// when no such cell exists.
pub fn zonal_mean(grid: &Grid, region: &Region) -> Option<f64> {
    let (sum, count) = zonal_sum(grid, region);
    (count > 0).then(|| sum / count as f64)
}

fn zonal_sum(grid: &Grid, region: &Region) -> (f64, usize) {
    let (min_lon, min_lat, max_lon, max_lat) = region.bounding_box();
    if !min_lon.is_finite() {
        return (0.0, 0);
    }
    // Cell index window covering the bounding box.
    let col_lo = ((min_lon - grid.x_origin()) / grid.cell_size() - 0.5).floor().max(0.0) as usize;
    let row_lo = ((min_lat - grid.y_origin()) / grid.cell_size() - 0.5).floor().max(0.0) as usize;
    let col_hi = (((max_lon - grid.x_origin()) / grid.cell_size() + 0.5).ceil().max(0.0) as usize)
        .min(grid.ncols());
    let row_hi = (((max_lat - grid.y_origin()) / grid.cell_size() + 0.5).ceil().max(0.0) as usize)
        .min(grid.nrows());

    let mut sum = 0.0;
    let mut count = 0usize;
    for row in row_lo..row_hi {
        for col in col_lo..col_hi {
            let Some(value) = grid.get(row, col) else { continue };
            if point_in_region(grid.cell_center(row, col), region) {
                sum += value;
                count += 1;
            }
        }
    }
    (sum, count)
}

/// Builds the region × pollutant table of zonal means. Rows follow the input
/// region order; columns are the supplied pollutants in canonical order.
pub fn build_feature_table(
    composites: &[(Pollutant, Grid)],
    regions: &[Region],
) -> Result<FeatureTable, GeometryError> {
    if let Some((_, first)) = composites.first() {
        if composites.iter().any(|(_, g)| !g.same_georeference(first)) {
            return Err(GeometryError::GeoreferenceMismatch);
        }
    }
    let mut columns: Vec<(Pollutant, &Grid)> =
        composites.iter().map(|(p, g)| (*p, g)).collect();
    columns.sort_by_key(|(p, _)| Pollutant::ALL.iter().position(|q| q == p));

    use rayon::prelude::*;
    let cells: Vec<Option<f64>> = regions
        .par_iter()
        .flat_map_iter(|region| {
            columns
                .iter()
                .map(|(_, grid)| zonal_mean(grid, region))
                .collect::<Vec<_>>()
        })
        .collect();

    let table = FeatureTable::new(
        regions.iter().map(|r| r.name.clone()).collect(),
        columns.iter().map(|(p, _)| *p).collect(),
        cells,
    )?;
    Ok(table)
}
