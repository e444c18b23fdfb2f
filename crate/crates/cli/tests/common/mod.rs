//! Synthetic scene/boundary fixtures: a rectangular mosaic of regions whose
//! pollutant levels follow a small set of archetype signatures, written to
//! disk as ASCII grids (with qa bands and missing pixels) plus GeoJSON.

// Each test target compiles this module separately and uses a subset of it.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use airshed_core::raster::Pollutant;

pub struct FixtureParams {
    pub pollutants: Vec<Pollutant>,
    pub archetypes: usize,
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub cells_per_block: usize,
    pub scenes: usize,
    pub seed: u64,
    pub missing_rate: f64,
    pub low_qa_rate: f64,
}

impl FixtureParams {
    /// The acceptance-scale fixture: 30 regions from 5 archetypes over all
    /// six pollutants, three scenes each with gaps and qa bands.
    pub fn acceptance(seed: u64) -> Self {
        FixtureParams {
            pollutants: Pollutant::ALL.to_vec(),
            archetypes: 5,
            blocks_x: 6,
            blocks_y: 5,
            cells_per_block: 6,
            scenes: 3,
            seed,
            missing_rate: 0.07,
            low_qa_rate: 0.08,
        }
    }

    /// Minimal fixture: 6 regions in 2 obvious groups over 3 pollutants.
    pub fn two_groups(seed: u64) -> Self {
        FixtureParams {
            pollutants: vec![Pollutant::No2, Pollutant::So2, Pollutant::Co],
            archetypes: 2,
            blocks_x: 3,
            blocks_y: 2,
            cells_per_block: 4,
            scenes: 2,
            seed,
            missing_rate: 0.05,
            low_qa_rate: 0.05,
        }
    }
}

pub struct Fixture {
    pub scenes_dir: PathBuf,
    pub boundaries: PathBuf,
    pub config_path: PathBuf,
    /// Region name -> generating archetype id.
    pub archetype_of: BTreeMap<String, usize>,
}

const X_ORIGIN: f64 = 70.0;
const Y_ORIGIN: f64 = 8.0;

/// Per-pollutant base level and per-archetype step, indexed canonically.
const BASE: [f64; 6] = [1.0, -2.0, 0.5, 10.0, -5.0, 2.0];
const STEP: [f64; 6] = [3.0, 5.0, 2.0, 4.0, 6.0, 3.0];

fn pollutant_index(p: Pollutant) -> usize {
    Pollutant::ALL.iter().position(|q| *q == p).unwrap()
}

pub fn region_name(index: usize) -> String {
    format!("R{index:02}")
}

/// Writes scene files, qa bands, boundaries, and a config under `root`.
pub fn build_fixture(root: &Path, params: &FixtureParams) -> Fixture {
    let scenes_dir = root.join("scenes");
    let out_dir = root.join("out");
    std::fs::create_dir_all(&scenes_dir).unwrap();

    let n_regions = params.blocks_x * params.blocks_y;
    let ncols = params.blocks_x * params.cells_per_block;
    let nrows = params.blocks_y * params.cells_per_block;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    // Region-level true values: archetype signal plus a small jitter so rows
    // stay distinct.
    let mut archetype_of = BTreeMap::new();
    let mut region_value = vec![vec![0.0f64; 6]; n_regions];
    for (region, values) in region_value.iter_mut().enumerate() {
        let archetype = region % params.archetypes;
        archetype_of.insert(region_name(region), archetype);
        for p in 0..6 {
            let jitter = rng.random_range(-0.02..0.02) * STEP[p];
            values[p] = BASE[p] + archetype as f64 * STEP[p] + jitter;
        }
    }

    let region_of_cell = |row: usize, col: usize| -> usize {
        (row / params.cells_per_block) * params.blocks_x + col / params.cells_per_block
    };

    for &pollutant in &params.pollutants {
        let p = pollutant_index(pollutant);
        let needs_qa = !matches!(pollutant, Pollutant::O3);
        for scene in 0..params.scenes {
            // Mean-zero scene offsets keep the composite at the true value.
            let offset = (scene as f64 - (params.scenes - 1) as f64 / 2.0) * 0.01 * STEP[p];
            let mut data = String::new();
            let mut qa = String::new();
            for text in [&mut data, &mut qa] {
                let _ = writeln!(text, "ncols {ncols}");
                let _ = writeln!(text, "nrows {nrows}");
                let _ = writeln!(text, "xllcorner {X_ORIGIN}");
                let _ = writeln!(text, "yllcorner {Y_ORIGIN}");
                let _ = writeln!(text, "cellsize 1");
                let _ = writeln!(text, "NODATA_value -9999");
            }
            // ASCII grids store the top row first.
            for row in (0..nrows).rev() {
                for col in 0..ncols {
                    if col > 0 {
                        data.push(' ');
                        qa.push(' ');
                    }
                    let missing = rng.random::<f64>() < params.missing_rate;
                    let low_qa = rng.random::<f64>() < params.low_qa_rate;
                    if missing {
                        data.push_str("-9999");
                    } else {
                        let value = region_value[region_of_cell(row, col)][p] + offset;
                        let _ = write!(data, "{value:.6}");
                    }
                    qa.push_str(if low_qa { "0.3" } else { "0.9" });
                }
                data.push('\n');
                qa.push('\n');
            }
            let date = format!("2019-{:02}-01", scene + 1);
            std::fs::write(scenes_dir.join(format!("{pollutant}_{date}.asc")), data).unwrap();
            if needs_qa {
                std::fs::write(scenes_dir.join(format!("{pollutant}_{date}_qa.asc")), qa).unwrap();
            }
        }
    }

    // Region polygons: block rectangles inset by 0.25 degrees, so every cell
    // center belongs unambiguously to its block.
    let features: Vec<serde_json::Value> = (0..n_regions)
        .map(|region| {
            let bx = (region % params.blocks_x) as f64;
            let by = (region / params.blocks_x) as f64;
            let size = params.cells_per_block as f64;
            let x0 = X_ORIGIN + bx * size + 0.25;
            let y0 = Y_ORIGIN + by * size + 0.25;
            let x1 = X_ORIGIN + (bx + 1.0) * size - 0.25;
            let y1 = Y_ORIGIN + (by + 1.0) * size - 0.25;
            serde_json::json!({
                "type": "Feature",
                "properties": {"name": region_name(region)},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]]
                }
            })
        })
        .collect();
    let collection = serde_json::json!({"type": "FeatureCollection", "features": features});
    let boundaries = root.join("regions.geojson");
    std::fs::write(&boundaries, serde_json::to_string_pretty(&collection).unwrap()).unwrap();

    let config = serde_json::json!({
        "scenes_dir": scenes_dir,
        "boundaries": boundaries,
        "output_dir": out_dir,
    });
    let config_path = root.join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    Fixture { scenes_dir, boundaries, config_path, archetype_of }
}
