//! End-to-end orchestration: scenes -> composites -> zonal table -> cleaning
//! and standardization -> K selection -> clustering -> signatures -> files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use airshed_core::cluster::{dbscan, kmeans, ward, Algorithm, ClusterResult};
use airshed_core::geometry::{build_feature_table, parse_regions, RegionSet};
use airshed_core::model_selection::{select_k, silhouette, KSelection, SilhouetteReport};
use airshed_core::raster::{
    composite_mean, parse_grid, qa_filter, serialize_grid, Grid, Pollutant, QaPolicy, Scene,
    SceneFileName,
};
use airshed_core::signatures::{compute_signatures, SignatureReport};
use airshed_core::table::{drop_null_rows, standardize, write_table, FeatureTable};

use crate::config::{AlgorithmChoice, PipelineConfig};
use crate::error::PipelineError;
use crate::render;

/// Everything the run produced, echoed into `report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub algorithm: String,
    pub seed: u64,
    pub selected_k: usize,
    pub k_source: String,
    pub elbow_k: Option<usize>,
    pub silhouette_best_k: Option<usize>,
    pub distortion_curve: Option<CurveData>,
    pub silhouette_curve: Option<CurveData>,
    pub mean_silhouette: Option<f64>,
    pub pollutants: Vec<String>,
    pub regions_total: usize,
    pub clustered_regions: usize,
    pub cluster_sizes: Vec<usize>,
    pub dropped_rows: Vec<String>,
    pub noise: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveData {
    pub ks: Vec<usize>,
    pub scores: Vec<f64>,
    pub selected: Option<usize>,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub report: Report,
    pub output_dir: PathBuf,
}

/// Scans `scenes_dir` for `<POLLUTANT>_<YYYY-MM-DD>[_qa].asc` files, applies
/// the QA policy, and composites each pollutant's scenes into one grid.
pub fn load_composites(
    scenes_dir: &Path,
    policy: &QaPolicy,
) -> Result<Vec<(Pollutant, Grid)>, PipelineError> {
    let mut names: Vec<String> = Vec::new();
    let entries = fs::read_dir(scenes_dir).map_err(|e| {
        PipelineError::data("scenes", format!("cannot read {}: {e}", scenes_dir.display()))
    })?;
    for entry in entries {
        let entry =
            entry.map_err(|e| PipelineError::data("scenes", format!("directory walk: {e}")))?;
        if entry.path().is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();

    type SceneKey = (Pollutant, airshed_core::raster::NaiveDate);
    let mut pairs: BTreeMap<SceneKey, (Option<String>, Option<String>)> = BTreeMap::new();
    for name in &names {
        if !name.ends_with(".asc") {
            continue;
        }
        let parsed = SceneFileName::parse(name).ok_or_else(|| {
            PipelineError::data(
                "scenes",
                format!("{name:?} does not match <POLLUTANT>_<YYYY-MM-DD>[_qa].asc"),
            )
        })?;
        let slot = pairs.entry((parsed.pollutant, parsed.date)).or_default();
        if parsed.is_qa {
            slot.1 = Some(name.clone());
        } else {
            slot.0 = Some(name.clone());
        }
    }
    if pairs.is_empty() {
        return Err(PipelineError::data(
            "scenes",
            format!("no scene files in {}", scenes_dir.display()),
        ));
    }

    let read_grid = |name: &str| -> Result<Grid, PipelineError> {
        let path = scenes_dir.join(name);
        let text = fs::read_to_string(&path)
            .map_err(|e| PipelineError::data("scenes", format!("{name}: {e}")))?;
        parse_grid(&text).map_err(|e| PipelineError::data("raster", format!("{name}: {e}")))
    };

    let mut filtered: BTreeMap<Pollutant, Vec<Grid>> = BTreeMap::new();
    for ((pollutant, date), (data_name, qa_name)) in &pairs {
        let Some(data_name) = data_name else {
            return Err(PipelineError::data(
                "scenes",
                format!("qa band {:?} has no matching data scene", qa_name.clone().unwrap()),
            ));
        };
        let data = read_grid(data_name)?;
        let qa = qa_name.as_deref().map(read_grid).transpose()?;
        let scene = Scene::new(*pollutant, *date, data, qa)
            .map_err(|e| PipelineError::data("raster", format!("{data_name}: {e}")))?;
        let grid = qa_filter(&scene, policy)
            .map_err(|e| PipelineError::data("raster", format!("{data_name}: {e}")))?;
        filtered.entry(*pollutant).or_default().push(grid);
    }

    filtered
        .into_iter()
        .map(|(pollutant, grids)| {
            composite_mean(&grids)
                .map(|grid| (pollutant, grid))
                .map_err(|e| PipelineError::data("raster", format!("{pollutant}: {e}")))
        })
        .collect()
}

pub fn load_regions(path: &Path, name_property: &str) -> Result<RegionSet, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::data("geometry", format!("{}: {e}", path.display())))?;
    parse_regions(&text, name_property)
        .map_err(|e| PipelineError::data("geometry", e.to_string()))
}

/// Runs one clustering algorithm over a standardized table.
pub fn cluster_table(
    table: &FeatureTable,
    choice: AlgorithmChoice,
    k: usize,
    seed: u64,
    eps: f64,
    min_pts: usize,
) -> Result<ClusterResult, PipelineError> {
    let matrix = table
        .to_matrix()
        .map_err(|e| PipelineError::data("table", e.to_string()))?;
    let result = match choice.algorithm() {
        Algorithm::KMeans => kmeans(&matrix, k, seed, 300, 1e-6),
        Algorithm::Ward => ward(&matrix, k),
        Algorithm::Dbscan => dbscan(&matrix, eps, min_pts),
    };
    result.map_err(|e| PipelineError::algorithm("clustering", e.to_string()))
}

fn curve_data(curve: &airshed_core::model_selection::ElbowCurve) -> CurveData {
    CurveData { ks: curve.ks.clone(), scores: curve.scores.clone(), selected: curve.elbow_k }
}

/// K sweep over the clamped 2..=n-1 window; `None` when fewer than one
/// feasible k exists.
fn sweep_selection(
    table: &FeatureTable,
    config: &PipelineConfig,
) -> Result<Option<KSelection>, PipelineError> {
    let n = table.n_rows();
    let lo = config.k_range.0.max(2);
    let hi = config.k_range.1.min(n.saturating_sub(1));
    if lo > hi {
        return Ok(None);
    }
    let ks: Vec<usize> = (lo..=hi).collect();
    let matrix = table
        .to_matrix()
        .map_err(|e| PipelineError::data("table", e.to_string()))?;
    select_k(&matrix, &ks, config.seed)
        .map(Some)
        .map_err(|e| PipelineError::algorithm("selection", e.to_string()))
}

/// Full pipeline; writes every artifact under `config.output_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    config.validate()?;
    let mut warnings: Vec<String> = Vec::new();

    let composites = load_composites(&config.scenes_dir, &config.qa_policy())?;
    let region_set = load_regions(&config.boundaries, &config.name_property)?;
    warnings.extend(region_set.warnings.iter().cloned());

    let table_raw = build_feature_table(&composites, &region_set.regions)
        .map_err(|e| PipelineError::data("table", e.to_string()))?;
    let (table_kept, dropped) = drop_null_rows(&table_raw)
        .map_err(|e| PipelineError::data("table", e.to_string()))?;
    let (table_std, constant_cols) = standardize(&table_kept)
        .map_err(|e| PipelineError::data("table", e.to_string()))?;
    for pollutant in &constant_cols {
        warnings.push(format!("column {pollutant} is constant; standardized to zeros"));
    }

    let selection = sweep_selection(&table_std, config)?;
    let (selected_k, k_source) = match (config.k, config.algorithm, &selection) {
        (Some(k), _, _) => (k, "config".to_string()),
        (None, AlgorithmChoice::Dbscan, _) => (0, "dbscan".to_string()),
        (None, _, Some(sel)) => (sel.chosen_k, sel.source.to_string()),
        (None, _, None) => {
            return Err(PipelineError::data(
                "selection",
                format!(
                    "{} rows leave no feasible K in range; set k explicitly",
                    table_std.n_rows()
                ),
            ))
        }
    };

    let result = cluster_table(
        &table_std,
        config.algorithm,
        selected_k,
        config.seed,
        config.dbscan_eps,
        config.dbscan_min_pts,
    )?;
    let signature_report = compute_signatures(&table_std, &result)
        .map_err(|e| PipelineError::algorithm("signatures", e.to_string()))?;

    let matrix = table_std
        .to_matrix()
        .map_err(|e| PipelineError::data("table", e.to_string()))?;
    let silhouette_report: Option<SilhouetteReport> = match silhouette(&matrix, &result) {
        Ok(report) => Some(report),
        Err(e) => {
            warnings.push(format!("silhouette unavailable: {e}"));
            None
        }
    };

    let semantic_sizes: Vec<usize> =
        signature_report.membership.iter().map(Vec::len).collect();
    let report = Report {
        algorithm: config.algorithm.to_string(),
        seed: config.seed,
        selected_k: if config.algorithm == AlgorithmChoice::Dbscan { result.k } else { selected_k },
        k_source,
        elbow_k: selection.as_ref().and_then(|s| s.distortion.elbow_k),
        silhouette_best_k: selection.as_ref().and_then(|s| s.silhouette.elbow_k),
        distortion_curve: selection.as_ref().map(|s| curve_data(&s.distortion)),
        silhouette_curve: selection.as_ref().map(|s| curve_data(&s.silhouette)),
        mean_silhouette: silhouette_report.as_ref().map(|r| r.mean),
        pollutants: table_std.columns().iter().map(|p| p.name().to_string()).collect(),
        regions_total: region_set.regions.len(),
        clustered_regions: table_std.n_rows(),
        cluster_sizes: semantic_sizes,
        dropped_rows: dropped,
        noise: signature_report.noise_members.clone(),
        warnings,
    };

    write_artifacts(
        config,
        &region_set,
        &table_raw,
        &table_std,
        &result,
        &signature_report,
        silhouette_report.as_ref(),
        &selection,
        &report,
    )?;

    Ok(PipelineOutcome { report, output_dir: config.output_dir.clone() })
}

/// Semantic label per region name: cluster id, -1 for noise.
pub fn semantic_labels(
    table: &FeatureTable,
    result: &ClusterResult,
    signatures: &SignatureReport,
) -> BTreeMap<String, i64> {
    table
        .row_names()
        .iter()
        .zip(&result.labels)
        .map(|(name, label)| {
            let semantic = match label {
                Some(raw) => signatures.cluster_order[*raw] as i64,
                None => -1,
            };
            (name.clone(), semantic)
        })
        .collect()
}

fn write(path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents)
        .map_err(|e| PipelineError::data("output", format!("{}: {e}", path.display())))
}

#[allow(clippy::too_many_arguments)]
fn write_artifacts(
    config: &PipelineConfig,
    region_set: &RegionSet,
    table_raw: &FeatureTable,
    table_std: &FeatureTable,
    result: &ClusterResult,
    signatures: &SignatureReport,
    silhouette_report: Option<&SilhouetteReport>,
    selection: &Option<KSelection>,
    report: &Report,
) -> Result<(), PipelineError> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir)
        .map_err(|e| PipelineError::data("output", format!("{}: {e}", dir.display())))?;

    write(&dir.join("table_raw.csv"), &write_table(table_raw))?;
    write(&dir.join("table_std.csv"), &write_table(table_std))?;

    let labels = semantic_labels(table_std, result, signatures);
    let mut clusters_csv = String::from("region,label\n");
    for name in table_std.row_names() {
        let label = labels[name];
        let quoted = if name.contains(',') || name.contains('"') {
            format!("\"{}\"", name.replace('"', "\"\""))
        } else {
            name.clone()
        };
        clusters_csv.push_str(&format!("{quoted},{label}\n"));
    }
    write(&dir.join("clusters.csv"), &clusters_csv)?;

    let geojson = labelled_geojson(&config.boundaries, &config.name_property, &labels)?;
    write(&dir.join("clusters.geojson"), &geojson)?;

    let elbow_svg = match selection {
        Some(sel) => render::render_elbow_curve(&sel.distortion, "Distortion score elbow"),
        None => render::render_placeholder("elbow sweep not run (too few rows or fixed K range)"),
    };
    write(&dir.join("elbow.svg"), &elbow_svg)?;

    let silhouette_svg = match silhouette_report {
        Some(rep) => {
            // Reorder per-cluster distributions into semantic order.
            let mut per_cluster = vec![Vec::new(); result.k];
            for (raw, values) in rep.per_cluster.iter().enumerate() {
                per_cluster[signatures.cluster_order[raw]] = values.clone();
            }
            render::render_silhouette_plot(
                &per_cluster,
                rep.mean,
                &format!("Silhouette by cluster ({})", report.algorithm),
            )
        }
        None => render::render_placeholder("silhouette unavailable for this clustering"),
    };
    write(&dir.join("silhouette.svg"), &silhouette_svg)?;

    let signatures_svg =
        render::render_signature_bars(signatures, "Per-cluster pollution signatures");
    write(&dir.join("signatures.svg"), &signatures_svg)?;

    let map_svg = render::render_choropleth(&region_set.regions, &labels)?;
    write(&dir.join("map.svg"), &map_svg)?;

    let report_json = serde_json::to_string_pretty(report)
        .map_err(|e| PipelineError::data("output", e.to_string()))?;
    write(&dir.join("report.json"), &format!("{report_json}\n"))?;
    Ok(())
}

/// Re-emits the input FeatureCollection with a `cluster` property per feature:
/// the semantic label, -1 for noise, null for dropped regions. Coordinate
/// tokens pass through unchanged.
fn labelled_geojson(
    boundaries: &Path,
    name_property: &str,
    labels: &BTreeMap<String, i64>,
) -> Result<String, PipelineError> {
    let text = fs::read_to_string(boundaries)
        .map_err(|e| PipelineError::data("output", format!("{}: {e}", boundaries.display())))?;
    let mut doc: Value = serde_json::from_str(&text)
        .map_err(|e| PipelineError::data("output", format!("boundaries: {e}")))?;

    let features = doc
        .get_mut("features")
        .and_then(Value::as_array_mut)
        .ok_or_else(|| PipelineError::data("output", "boundaries lost features array".into()))?;
    for feature in features {
        let name = feature
            .get("properties")
            .and_then(|p| p.get(name_property))
            .and_then(Value::as_str)
            .map(str::to_owned);
        let label_value = match name.as_deref().and_then(|n| labels.get(n)) {
            Some(label) => Value::from(*label),
            None => Value::Null,
        };
        let properties = feature
            .get_mut("properties")
            .and_then(Value::as_object_mut)
            .ok_or_else(|| PipelineError::data("output", "feature without properties".into()))?;
        properties.insert("cluster".to_string(), label_value);
    }
    serde_json::to_string(&doc)
        .map_err(|e| PipelineError::data("output", e.to_string()))
}

/// Composite a single pollutant's scenes (the `composite` subcommand).
pub fn composite_single(
    scenes_dir: &Path,
    pollutant: Pollutant,
    policy: &QaPolicy,
) -> Result<String, PipelineError> {
    let composites = load_composites(scenes_dir, policy)?;
    let grid = composites
        .into_iter()
        .find(|(p, _)| *p == pollutant)
        .map(|(_, g)| g)
        .ok_or_else(|| {
            PipelineError::data("scenes", format!("no scenes for {pollutant}"))
        })?;
    Ok(serialize_grid(&grid))
}
