//! Pipeline configuration: a JSON file with CLI flag overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use airshed_core::cluster::Algorithm;
use airshed_core::raster::Pollutant;
use airshed_core::QaPolicy;

use crate::error::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmChoice {
    Kmeans,
    Ward,
    Dbscan,
}

impl AlgorithmChoice {
    pub fn algorithm(self) -> Algorithm {
        match self {
            AlgorithmChoice::Kmeans => Algorithm::KMeans,
            AlgorithmChoice::Ward => Algorithm::Ward,
            AlgorithmChoice::Dbscan => Algorithm::Dbscan,
        }
    }
}

impl FromStr for AlgorithmChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "kmeans" => Ok(AlgorithmChoice::Kmeans),
            "ward" => Ok(AlgorithmChoice::Ward),
            "dbscan" => Ok(AlgorithmChoice::Dbscan),
            other => Err(format!("unknown algorithm {other:?} (kmeans|ward|dbscan)")),
        }
    }
}

impl std::fmt::Display for AlgorithmChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlgorithmChoice::Kmeans => "kmeans",
            AlgorithmChoice::Ward => "ward",
            AlgorithmChoice::Dbscan => "dbscan",
        })
    }
}

/// Everything `airshed run` needs; deserialized from JSON, then overridden by
/// command-line flags.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub scenes_dir: PathBuf,
    pub boundaries: PathBuf,
    #[serde(default = "default_name_property")]
    pub name_property: String,
    /// Per-pollutant qa threshold overrides; `null` disables filtering.
    #[serde(default)]
    pub qa_overrides: BTreeMap<String, Option<f64>>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_k_range")]
    pub k_range: (usize, usize),
    #[serde(default = "default_algorithm")]
    pub algorithm: AlgorithmChoice,
    #[serde(default = "default_eps")]
    pub dbscan_eps: f64,
    #[serde(default = "default_min_pts")]
    pub dbscan_min_pts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_name_property() -> String {
    "name".to_string()
}

fn default_k_range() -> (usize, usize) {
    (2, 15)
}

fn default_algorithm() -> AlgorithmChoice {
    AlgorithmChoice::Kmeans
}

fn default_eps() -> f64 {
    1.7
}

fn default_min_pts() -> usize {
    3
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            PipelineError::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k_range.0 < 2 || self.k_range.0 > self.k_range.1 {
            return Err(PipelineError::config(format!(
                "k_range [{}, {}] must satisfy 2 <= lo <= hi",
                self.k_range.0, self.k_range.1
            )));
        }
        if let Some(k) = self.k {
            if k == 0 {
                return Err(PipelineError::config("k must be >= 1".into()));
            }
        }
        if self.dbscan_eps <= 0.0 || self.dbscan_eps.is_nan() {
            return Err(PipelineError::config("dbscan_eps must be > 0".into()));
        }
        if self.dbscan_min_pts == 0 {
            return Err(PipelineError::config("dbscan_min_pts must be >= 1".into()));
        }
        for (name, threshold) in &self.qa_overrides {
            Pollutant::from_str(name).map_err(|_| {
                PipelineError::config(format!("qa_overrides: unknown pollutant {name:?}"))
            })?;
            if let Some(t) = threshold {
                if !(0.0..=1.0).contains(t) {
                    return Err(PipelineError::config(format!(
                        "qa_overrides: threshold {t} for {name} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Default QA policy with the config's overrides applied.
    pub fn qa_policy(&self) -> QaPolicy {
        let mut policy = QaPolicy::default();
        for (name, threshold) in &self.qa_overrides {
            if let Ok(pollutant) = Pollutant::from_str(name) {
                policy.set(pollutant, *threshold);
            }
        }
        policy
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_paper_defaults() {
        let config: PipelineConfig = serde_json::from_str(
            r#"{"scenes_dir": "scenes", "boundaries": "b.geojson"}"#,
        )
        .unwrap();
        config.validate().unwrap();
        assert_eq!(config.k_range, (2, 15));
        assert_eq!(config.dbscan_eps, 1.7);
        assert_eq!(config.dbscan_min_pts, 3);
        assert_eq!(config.seed, 0);
        assert_eq!(config.algorithm, AlgorithmChoice::Kmeans);
        assert_eq!(config.name_property, "name");
    }

    #[test]
    fn qa_overrides_merge_onto_defaults() {
        let config: PipelineConfig = serde_json::from_str(
            r#"{"scenes_dir": "s", "boundaries": "b",
                "qa_overrides": {"NO2": 0.9, "AER_AI": null}}"#,
        )
        .unwrap();
        config.validate().unwrap();
        let policy = config.qa_policy();
        assert_eq!(policy.threshold(Pollutant::No2), Some(0.9));
        assert_eq!(policy.threshold(Pollutant::AerAi), None);
        assert_eq!(policy.threshold(Pollutant::Co), Some(0.5));
    }

    #[test]
    fn bad_values_are_rejected() {
        let bad_range: PipelineConfig = serde_json::from_str(
            r#"{"scenes_dir": "s", "boundaries": "b", "k_range": [1, 15]}"#,
        )
        .unwrap();
        assert!(bad_range.validate().is_err());

        let bad_pollutant: PipelineConfig = serde_json::from_str(
            r#"{"scenes_dir": "s", "boundaries": "b", "qa_overrides": {"CH4": 0.5}}"#,
        )
        .unwrap();
        assert!(bad_pollutant.validate().is_err());

        assert!(serde_json::from_str::<PipelineConfig>(
            r#"{"scenes_dir": "s", "boundaries": "b", "typo_field": 1}"#
        )
        .is_err());
    }
}
