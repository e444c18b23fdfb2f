//! Command-line entry point. Exit codes: 0 success, 2 config error, 3 data
//! error, 4 algorithm error. Failures print one JSON object to stderr.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use airshed::config::{AlgorithmChoice, PipelineConfig};
use airshed::error::PipelineError;
use airshed::pipeline;
use airshed::render;
use airshed_core::model_selection::select_k;
use airshed_core::raster::{Pollutant, QaPolicy};
use airshed_core::table::{drop_null_rows, read_table, standardize};

#[derive(Parser)]
#[command(name = "airshed", version, about = "Cluster regions by satellite pollution signatures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a JSON config file
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Fixed cluster count (skips elbow selection)
        #[arg(long)]
        k: Option<usize>,
        /// kmeans | ward | dbscan
        #[arg(long)]
        algorithm: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory override
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// QA-filter and composite one pollutant's scenes into a single grid
    Composite {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        pollutant: String,
        /// Threshold override: a number in [0,1] or "none"
        #[arg(long)]
        qa_threshold: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the raw region x pollutant zonal-mean table as CSV
    Table {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        boundaries: PathBuf,
        #[arg(long, default_value = "name")]
        name_property: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster an existing feature table CSV
    Cluster {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value = "kmeans")]
        algorithm: String,
        /// Cluster count; chosen by elbow + silhouette sweep when omitted
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.7)]
        eps: f64,
        #[arg(long, default_value_t = 3)]
        min_pts: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep K and report the elbow for an existing feature table CSV
    Elbow {
        #[arg(long)]
        table: PathBuf,
        /// Sweep window, e.g. 2..15
        #[arg(long, default_value = "2..15")]
        k_range: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output SVG path
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a cluster choropleth from boundaries and a clusters.csv
    Render {
        #[arg(long)]
        boundaries: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long, default_value = "name")]
        name_property: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = init_thread_pool() {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code);
    }
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(e.exit_code);
        }
    }
}

/// AIRSHED_THREADS caps rayon's worker count.
fn init_thread_pool() -> Result<(), PipelineError> {
    let Ok(value) = std::env::var("AIRSHED_THREADS") else { return Ok(()) };
    let threads: usize = value.parse().ok().filter(|&t| t >= 1).ok_or_else(|| {
        PipelineError::config(format!("AIRSHED_THREADS={value:?} is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| PipelineError::config(format!("thread pool: {e}")))
}

fn parse_algorithm(s: &str) -> Result<AlgorithmChoice, PipelineError> {
    AlgorithmChoice::from_str(s).map_err(PipelineError::config)
}

fn parse_pollutant(s: &str) -> Result<Pollutant, PipelineError> {
    Pollutant::from_str(s)
        .map_err(|_| PipelineError::config(format!("unknown pollutant {s:?}")))
}

fn parse_k_range(s: &str) -> Result<(usize, usize), PipelineError> {
    let err = || PipelineError::config(format!("k range {s:?} must look like 2..15"));
    let (lo, hi) = s.split_once("..").ok_or_else(err)?;
    let lo: usize = lo.trim().parse().map_err(|_| err())?;
    let hi: usize = hi.trim().parse().map_err(|_| err())?;
    if lo < 2 || lo > hi {
        return Err(err());
    }
    Ok((lo, hi))
}

fn write_out(path: &PathBuf, contents: &str) -> Result<(), PipelineError> {
    std::fs::write(path, contents)
        .map_err(|e| PipelineError::data("output", format!("{}: {e}", path.display())))
}

fn dispatch(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Run { config, k, algorithm, seed, out } => {
            let mut cfg = PipelineConfig::from_file(&config)?;
            if let Some(k) = k {
                cfg.k = Some(k);
            }
            if let Some(algorithm) = algorithm {
                cfg.algorithm = parse_algorithm(&algorithm)?;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let outcome = pipeline::run_pipeline(&cfg)?;
            println!(
                "{}",
                serde_json::json!({
                    "selected_k": outcome.report.selected_k,
                    "k_source": outcome.report.k_source,
                    "output_dir": outcome.output_dir,
                })
            );
            Ok(())
        }
        Command::Composite { scenes, pollutant, qa_threshold, out } => {
            let pollutant = parse_pollutant(&pollutant)?;
            let mut policy = QaPolicy::default();
            if let Some(raw) = qa_threshold {
                let threshold = if raw.eq_ignore_ascii_case("none") {
                    None
                } else {
                    let t: f64 = raw.parse().map_err(|_| {
                        PipelineError::config(format!("qa threshold {raw:?} is not a number"))
                    })?;
                    if !(0.0..=1.0).contains(&t) {
                        return Err(PipelineError::config(format!(
                            "qa threshold {t} outside [0, 1]"
                        )));
                    }
                    Some(t)
                };
                policy.set(pollutant, threshold);
            }
            let text = pipeline::composite_single(&scenes, pollutant, &policy)?;
            write_out(&out, &text)
        }
        Command::Table { scenes, boundaries, name_property, out } => {
            let composites = pipeline::load_composites(&scenes, &QaPolicy::default())?;
            let regions = pipeline::load_regions(&boundaries, &name_property)?;
            let table = airshed_core::geometry::build_feature_table(&composites, &regions.regions)
                .map_err(|e| PipelineError::data("table", e.to_string()))?;
            write_out(&out, &airshed_core::table::write_table(&table))
        }
        Command::Cluster { table, algorithm, k, seed, eps, min_pts, out } => {
            let algorithm = parse_algorithm(&algorithm)?;
            let text = std::fs::read_to_string(&table)
                .map_err(|e| PipelineError::data("table", format!("{}: {e}", table.display())))?;
            let parsed = read_table(&text)
                .map_err(|e| PipelineError::data("table", e.to_string()))?;
            let (kept, dropped) = drop_null_rows(&parsed)
                .map_err(|e| PipelineError::data("table", e.to_string()))?;
            let (std_table, _) = standardize(&kept)
                .map_err(|e| PipelineError::data("table", e.to_string()))?;

            let k_final = match (k, algorithm) {
                (Some(k), _) => k,
                (None, AlgorithmChoice::Dbscan) => 0,
                (None, _) => {
                    let n = std_table.n_rows();
                    let hi = 15.min(n.saturating_sub(1));
                    if hi < 2 {
                        return Err(PipelineError::data(
                            "selection",
                            "too few rows to select K; pass --k".into(),
                        ));
                    }
                    let ks: Vec<usize> = (2..=hi).collect();
                    let matrix = std_table
                        .to_matrix()
                        .map_err(|e| PipelineError::data("table", e.to_string()))?;
                    select_k(&matrix, &ks, seed)
                        .map_err(|e| PipelineError::algorithm("selection", e.to_string()))?
                        .chosen_k
                }
            };
            let result =
                pipeline::cluster_table(&std_table, algorithm, k_final, seed, eps, min_pts)?;
            let signatures = airshed_core::signatures::compute_signatures(&std_table, &result)
                .map_err(|e| PipelineError::algorithm("signatures", e.to_string()))?;
            let labels = pipeline::semantic_labels(&std_table, &result, &signatures);

            let mut csv_text = String::from("region,label\n");
            for name in std_table.row_names() {
                let quoted = if name.contains(',') || name.contains('"') {
                    format!("\"{}\"", name.replace('"', "\"\""))
                } else {
                    name.clone()
                };
                csv_text.push_str(&format!("{quoted},{}\n", labels[name]));
            }
            write_out(&out, &csv_text)?;
            if !dropped.is_empty() {
                eprintln!("dropped {} null rows: {}", dropped.len(), dropped.join(", "));
            }
            Ok(())
        }
        Command::Elbow { table, k_range, seed, out } => {
            let (lo, hi) = parse_k_range(&k_range)?;
            let text = std::fs::read_to_string(&table)
                .map_err(|e| PipelineError::data("table", format!("{}: {e}", table.display())))?;
            let parsed = read_table(&text)
                .map_err(|e| PipelineError::data("table", e.to_string()))?;
            let (kept, _) = drop_null_rows(&parsed)
                .map_err(|e| PipelineError::data("table", e.to_string()))?;
            let (std_table, _) = standardize(&kept)
                .map_err(|e| PipelineError::data("table", e.to_string()))?;
            let n = std_table.n_rows();
            let hi = hi.min(n.saturating_sub(1));
            if lo > hi {
                return Err(PipelineError::data(
                    "selection",
                    format!("no feasible K in {lo}..{hi} for {n} rows"),
                ));
            }
            let ks: Vec<usize> = (lo..=hi).collect();
            let matrix = std_table
                .to_matrix()
                .map_err(|e| PipelineError::data("table", e.to_string()))?;
            let selection = select_k(&matrix, &ks, seed)
                .map_err(|e| PipelineError::algorithm("selection", e.to_string()))?;
            write_out(&out, &render::render_elbow_curve(&selection.distortion, "Distortion score elbow"))?;
            println!(
                "{}",
                serde_json::json!({
                    "selected_k": selection.chosen_k,
                    "k_source": selection.source.to_string(),
                    "elbow_k": selection.distortion.elbow_k,
                    "silhouette_best_k": selection.silhouette.elbow_k,
                })
            );
            Ok(())
        }
        Command::Render { boundaries, clusters, name_property, out } => {
            let regions = pipeline::load_regions(&boundaries, &name_property)?;
            let labels = read_cluster_labels(&clusters)?;
            let svg = render::render_choropleth(&regions.regions, &labels)?;
            write_out(&out, &svg)
        }
    }
}

/// Reads a `region,label` CSV as written by the pipeline.
fn read_cluster_labels(path: &PathBuf) -> Result<BTreeMap<String, i64>, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::data("render", format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| PipelineError::data("render", e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != ["region", "label"] {
        return Err(PipelineError::data(
            "render",
            format!("clusters csv header must be region,label, found {header:?}"),
        ));
    }
    let mut labels = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| PipelineError::data("render", e.to_string()))?;
        let label: i64 = record
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| PipelineError::data("render", format!("bad label in {record:?}")))?;
        labels.insert(record.get(0).unwrap_or("").to_string(), label);
    }
    Ok(labels)
}
