//! Core pipeline for clustering regions by satellite-derived pollution
//! signatures: raster scene ingestion with QA filtering, mean compositing,
//! zonal statistics over administrative polygons, feature standardization,
//! three clustering algorithms, K selection, and cluster signatures.

pub mod cluster;
pub mod geometry;
pub mod matrix;
pub mod model_selection;
pub mod raster;
pub mod signatures;
pub mod table;

pub use cluster::{dbscan, kmeans, ward, ward_merge_cost, Algorithm, ClusterResult, ClusterSummary};
pub use geometry::{build_feature_table, parse_regions, point_in_region, zonal_mean, Region};
pub use matrix::Matrix;
pub use model_selection::{
    distortion_score, find_elbow, select_k, silhouette, sweep, ElbowCurve, Metric,
    SilhouetteReport,
};
pub use raster::{
    composite_mean, parse_grid, qa_filter, serialize_grid, Grid, Pollutant, QaPolicy, Scene,
};
pub use signatures::{compare_partitions, compute_signatures, SignatureReport};
pub use table::{drop_null_rows, read_table, standardize, write_table, FeatureTable};
