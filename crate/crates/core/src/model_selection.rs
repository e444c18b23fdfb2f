//! Choosing K: distortion and silhouette scores, the 2..15 sweep, and elbow
//! location by the normalized chord-distance (knee) rule.

use thiserror::Error;

use crate::cluster::{kmeans, ClusterError, ClusterResult};
use crate::matrix::{dist, sq_dist, Matrix};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("every point is noise")]
    AllNoise,
    #[error("silhouette needs at least 2 clusters")]
    SingleCluster,
    #[error("elbow detection needs at least 3 points, found {0}")]
    TooFewPoints(usize),
    #[error("labels cover {labels} rows but data has {rows}")]
    LengthMismatch { labels: usize, rows: usize },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Distortion,
    Silhouette,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Distortion => "distortion",
            Metric::Silhouette => "silhouette",
        })
    }
}

/// A metric evaluated over a K sweep, with the chosen K when one stands out:
/// the knee for distortion, the argmax for silhouette.
#[derive(Debug, Clone, PartialEq)]
pub struct ElbowCurve {
    pub ks: Vec<usize>,
    pub scores: Vec<f64>,
    pub metric: Metric,
    pub elbow_k: Option<usize>,
}

impl ElbowCurve {
    pub fn score_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.scores[i])
    }
}

/// Per-point silhouette values with per-cluster distributions. Noise rows
/// carry no value.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteReport {
    pub per_point: Vec<Option<f64>>,
    /// Sorted ascending silhouette values for each cluster id.
    pub per_cluster: Vec<Vec<f64>>,
    pub mean: f64,
}

/// Mean squared distance from each non-noise point to its cluster center.
pub fn distortion_score(data: &Matrix, result: &ClusterResult) -> Result<f64, SelectionError> {
    if result.labels.len() != data.nrows() {
        return Err(SelectionError::LengthMismatch {
            labels: result.labels.len(),
            rows: data.nrows(),
        });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, label) in result.labels.iter().enumerate() {
        if let Some(c) = label {
            total += sq_dist(data.row(i), &result.centers[*c]);
            count += 1;
        }
    }
    if count == 0 {
        return Err(SelectionError::AllNoise);
    }
    Ok(total / count as f64)
}

/// Per-point silhouette s = (b − a) / max(a, b), where a is the mean distance
/// to the rest of the point's own cluster and b the smallest mean distance to
/// another cluster. Singleton clusters score 0 by convention; noise points are
/// excluded.
#[allow(clippy::needless_range_loop)] // rows, labels, and outputs share the index
pub fn silhouette(data: &Matrix, result: &ClusterResult) -> Result<SilhouetteReport, SelectionError> {
    if result.labels.len() != data.nrows() {
        return Err(SelectionError::LengthMismatch {
            labels: result.labels.len(),
            rows: data.nrows(),
        });
    }
    let sizes = result.cluster_sizes();
    let k = result.k;
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(SelectionError::SingleCluster);
    }

    let n = data.nrows();
    let mut per_point: Vec<Option<f64>> = vec![None; n];
    let mut per_cluster: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        let Some(own) = result.labels[i] else { continue };
        // Mean distance from row i to every cluster, own cluster excluding i.
        let mut totals = vec![0.0f64; k];
        for j in 0..n {
            if let Some(c) = result.labels[j] {
                if j != i {
                    totals[c] += dist(data.row(i), data.row(j));
                }
            }
        }
        let s = if sizes[own] <= 1 {
            0.0
        } else {
            let a = totals[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| totals[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        };
        per_point[i] = Some(s);
        per_cluster[own].push(s);
        sum += s;
        count += 1;
    }
    for values in &mut per_cluster {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    Ok(SilhouetteReport { per_point, per_cluster, mean: sum / count as f64 })
}

/// Runs K-Means for each k with per-k seeds (`seed ^ k`) and records the
/// metric. For silhouette the selected k is the argmax; for distortion it is
/// the knee found by [`find_elbow`] (requires at least 3 ks).
pub fn sweep(
    data: &Matrix,
    ks: &[usize],
    metric: Metric,
    seed: u64,
) -> Result<ElbowCurve, SelectionError> {
    let n = data.nrows();
    if let Some(&max_k) = ks.iter().max() {
        if max_k > n {
            return Err(SelectionError::Cluster(ClusterError::KTooLarge { k: max_k, n }));
        }
    }
    let mut scores = Vec::with_capacity(ks.len());
    for &k in ks {
        let result = kmeans(data, k, seed ^ k as u64, 300, 1e-6)?;
        let score = match metric {
            Metric::Distortion => distortion_score(data, &result)?,
            Metric::Silhouette => silhouette(data, &result)?.mean,
        };
        scores.push(score);
    }
    let mut curve = ElbowCurve { ks: ks.to_vec(), scores, metric, elbow_k: None };
    curve.elbow_k = match metric {
        Metric::Distortion => {
            if curve.ks.len() >= 3 {
                find_elbow(&curve)?
            } else {
                None
            }
        }
        Metric::Silhouette => argmax_k(&curve),
    };
    Ok(curve)
}

fn argmax_k(curve: &ElbowCurve) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (&k, &score) in curve.ks.iter().zip(&curve.scores) {
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((k, score));
        }
    }
    best.map(|(k, _)| k)
}

/// Knee threshold below which the curve is declared elbow-free.
const ELBOW_MIN_GAP: f64 = 0.01;

/// Chord-distance gaps within this of the maximum count as tied. Exact float
/// ties are unattainable, so without a band the smaller-k tie rule would
/// never fire.
const ELBOW_TIE_EPS: f64 = 1e-9;

/// Finds the knee of a decreasing cost curve: normalize both axes to [0, 1],
/// measure each point's drop below the straight chord between the endpoints,
/// and take the k with the largest drop (ties to the smaller k). Returns
/// `None` when no point drops more than 0.01 below the chord.
pub fn find_elbow(curve: &ElbowCurve) -> Result<Option<usize>, SelectionError> {
    let n = curve.ks.len();
    if n < 3 {
        return Err(SelectionError::TooFewPoints(n));
    }
    let k_lo = curve.ks[0] as f64;
    let k_hi = curve.ks[n - 1] as f64;
    let s_lo = curve.scores.iter().copied().fold(f64::INFINITY, f64::min);
    let s_hi = curve.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if s_hi == s_lo {
        return Ok(None); // flat curve, no elbow
    }

    let xs: Vec<f64> = curve.ks.iter().map(|&k| (k as f64 - k_lo) / (k_hi - k_lo)).collect();
    let ys: Vec<f64> = curve.scores.iter().map(|&s| (s - s_lo) / (s_hi - s_lo)).collect();
    let chord = |x: f64| ys[0] + (ys[n - 1] - ys[0]) * x;

    let gaps: Vec<f64> = (0..n).map(|i| chord(xs[i]) - ys[i]).collect();
    let best_gap = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if best_gap < ELBOW_MIN_GAP {
        return Ok(None);
    }
    let winner = (0..n).find(|&i| gaps[i] >= best_gap - ELBOW_TIE_EPS).unwrap();
    Ok(Some(curve.ks[winner]))
}

/// How the final K was picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KSource {
    DistortionElbow,
    SilhouetteArgmax,
}

impl std::fmt::Display for KSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KSource::DistortionElbow => "distortion_elbow",
            KSource::SilhouetteArgmax => "silhouette_argmax",
        })
    }
}

/// Both sweep curves plus the chosen K.
#[derive(Debug, Clone)]
pub struct KSelection {
    pub distortion: ElbowCurve,
    pub silhouette: ElbowCurve,
    pub chosen_k: usize,
    pub source: KSource,
}

/// Tolerated silhouette shortfall when keeping the distortion elbow.
const SILHOUETTE_SLACK: f64 = 0.02;

/// Sweeps both metrics and picks K: the distortion elbow when its silhouette
/// is within 0.02 of the sweep maximum, otherwise the silhouette argmax.
pub fn select_k(data: &Matrix, ks: &[usize], seed: u64) -> Result<KSelection, SelectionError> {
    if ks.is_empty() {
        return Err(SelectionError::TooFewPoints(0));
    }
    let distortion = sweep(data, ks, Metric::Distortion, seed)?;
    let silhouette = sweep(data, ks, Metric::Silhouette, seed)?;
    let best_sil_k = silhouette.elbow_k.expect("non-empty silhouette sweep");
    let best_sil = silhouette.score_at(best_sil_k).unwrap();

    let (chosen_k, source) = match distortion.elbow_k {
        Some(elbow) if silhouette.score_at(elbow).unwrap() >= best_sil - SILHOUETTE_SLACK => {
            (elbow, KSource::DistortionElbow)
        }
        _ => (best_sil_k, KSource::SilhouetteArgmax),
    };
    Ok(KSelection { distortion, silhouette, chosen_k, source })
}
