//! The three clustering algorithms run over standardized feature vectors:
//! Lloyd's K-Means with k-means++ seeding, Ward agglomerative merging, and
//! DBSCAN. All use squared Euclidean (L2) distance and are deterministic:
//! ties break toward the lowest row/cluster index and cluster ids are
//! renumbered by ascending first-member row index.

use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::matrix::{dist, sq_dist, Matrix};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("k = {k} outside 1..={n}")]
    KTooLarge { k: usize, n: usize },
    #[error("fewer than {k} distinct points")]
    DegenerateData { k: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    KMeans,
    Ward,
    Dbscan,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::KMeans => "kmeans",
            Algorithm::Ward => "ward",
            Algorithm::Dbscan => "dbscan",
        })
    }
}

/// One agglomerative merge: the canonical ids of the merged clusters and the
/// within-cluster sum-of-squares increase the merge cost.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeStep {
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub cost: f64,
}

/// Labels, centers, and fit diagnostics of one clustering run.
///
/// `labels[i]` is `Some(c)` with `c < k`, or `None` for DBSCAN noise points.
/// Centers are member means (for DBSCAN computed post hoc, noise excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub algorithm: Algorithm,
    pub k: usize,
    pub labels: Vec<Option<usize>>,
    pub centers: Vec<Vec<f64>>,
    /// Lloyd iterations executed (K-Means only).
    pub iterations: Option<usize>,
    /// Mean squared distance to centers after each Lloyd iteration (K-Means only).
    pub distortion_history: Option<Vec<f64>>,
    /// Ordered merges (Ward only), exactly n - k entries.
    pub merge_history: Option<Vec<MergeStep>>,
}

impl ClusterResult {
    /// Number of rows assigned to each cluster, index = cluster id.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for label in self.labels.iter().flatten() {
            sizes[*label] += 1;
        }
        sizes
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

/// Size, mean, and within-cluster SSE of a set of points, enough to evaluate
/// and chain Ward merge costs without revisiting members.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSummary {
    pub size: usize,
    pub mean: Vec<f64>,
    pub within_sse: f64,
}

impl ClusterSummary {
    pub fn from_points<'a, I>(points: I) -> ClusterSummary
    where
        I: IntoIterator<Item = &'a [f64]> + Clone,
    {
        let mut size = 0usize;
        let mut mean: Vec<f64> = Vec::new();
        for p in points.clone() {
            if mean.is_empty() {
                mean = vec![0.0; p.len()];
            }
            size += 1;
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        assert!(size > 0, "summary of an empty point set");
        for m in &mut mean {
            *m /= size as f64;
        }
        let within_sse = points.into_iter().map(|p| sq_dist(p, &mean)).sum();
        ClusterSummary { size, mean, within_sse }
    }

    /// Summary of the union of two disjoint clusters.
    pub fn merge(&self, other: &ClusterSummary) -> ClusterSummary {
        let size = self.size + other.size;
        let mean = self
            .mean
            .iter()
            .zip(&other.mean)
            .map(|(a, b)| (self.size as f64 * a + other.size as f64 * b) / size as f64)
            .collect();
        let within_sse = self.within_sse + other.within_sse + ward_merge_cost(self, other);
        ClusterSummary { size, mean, within_sse }
    }
}

/// Ward merge cost Δ(A, B) = |A||B| / (|A| + |B|) · ‖m_A − m_B‖², the increase
/// in total within-cluster sum of squares caused by merging A and B.
pub fn ward_merge_cost(a: &ClusterSummary, b: &ClusterSummary) -> f64 {
    let na = a.size as f64;
    let nb = b.size as f64;
    na * nb / (na + nb) * sq_dist(&a.mean, &b.mean)
}

/// Lloyd's K-Means from a k-means++ initialization seeded by `seed`.
///
/// Stops when an iteration changes no label, when the largest center movement
/// falls below `tol`, or after `max_iter` iterations. Clusters that empty out
/// are reseeded to the point farthest from its assigned center.
pub fn kmeans(
    data: &Matrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterResult, ClusterError> {
    let n = data.nrows();
    if k == 0 || k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    if max_iter == 0 || tol < 0.0 || tol.is_nan() {
        return Err(ClusterError::InvalidParams("max_iter >= 1 and tol >= 0 required".into()));
    }
    if distinct_rows(data) < k {
        return Err(ClusterError::DegenerateData { k });
    }

    let mut centers = kmeans_pp_init(data, k, seed);
    let mut labels: Vec<usize> = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0usize;

    for _ in 0..max_iter {
        iterations += 1;
        let new_labels: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|i| nearest_center(data.row(i), &centers))
            .collect();
        let changed = new_labels != labels;
        labels = new_labels;

        let mut new_centers = member_means(data, &labels, k, &centers);
        reseed_empty_clusters(data, &mut labels, &mut new_centers, k);

        let movement = centers
            .iter()
            .zip(&new_centers)
            .map(|(old, new)| dist(old, new))
            .fold(0.0f64, f64::max);
        centers = new_centers;
        history.push(mean_sq_to_centers(data, &labels, &centers));

        if !changed || movement < tol {
            break;
        }
    }

    let (labels, centers) = renumber_by_first_member(labels, centers, k);
    Ok(ClusterResult {
        algorithm: Algorithm::KMeans,
        k,
        labels: labels.into_iter().map(Some).collect(),
        centers,
        iterations: Some(iterations),
        distortion_history: Some(history),
        merge_history: None,
    })
}

fn distinct_rows(data: &Matrix) -> usize {
    let n = data.nrows();
    let mut count = 0usize;
    for i in 0..n {
        if (0..i).all(|j| data.row(j) != data.row(i)) {
            count += 1;
        }
    }
    count
}

fn kmeans_pp_init(data: &Matrix, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = data.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(data.row(rng.random_range(0..n)).to_vec());

    // Running min squared distance to the chosen centers.
    let mut min_sq: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = min_sq.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in min_sq.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All remaining mass at distance zero cannot happen with >= k
            // distinct rows, but fall back to the first uncovered row.
            (0..n).find(|&i| min_sq[i] > 0.0).unwrap_or(0)
        };
        let center = data.row(next).to_vec();
        for (i, slot) in min_sq.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(data.row(i), &center));
        }
        centers.push(center);
    }
    centers
}

fn nearest_center(row: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(row, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn member_means(
    data: &Matrix,
    labels: &[usize],
    k: usize,
    fallback: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let d = data.ncols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (i, &label) in labels.iter().enumerate() {
        counts[label] += 1;
        for (s, v) in sums[label].iter_mut().zip(data.row(i)) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(c, (sum, count))| {
            if count == 0 {
                fallback[c].clone()
            } else {
                sum.into_iter().map(|s| s / count as f64).collect()
            }
        })
        .collect()
}

fn reseed_empty_clusters(
    data: &Matrix,
    labels: &mut [usize],
    centers: &mut Vec<Vec<f64>>,
    k: usize,
) {
    loop {
        let mut counts = vec![0usize; k];
        for &label in labels.iter() {
            counts[label] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
        // Move the point farthest from its assigned center into the empty slot.
        let mut farthest = 0usize;
        let mut farthest_d = -1.0f64;
        for (i, &label) in labels.iter().enumerate() {
            let d = sq_dist(data.row(i), &centers[label]);
            if d > farthest_d {
                farthest_d = d;
                farthest = i;
            }
        }
        labels[farthest] = empty;
        *centers = member_means(data, labels, k, centers);
    }
}

fn mean_sq_to_centers(data: &Matrix, labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    let total: f64 =
        labels.iter().enumerate().map(|(i, &c)| sq_dist(data.row(i), &centers[c])).sum();
    total / labels.len() as f64
}

/// Renumber cluster ids so they ascend with the first member row index.
fn renumber_by_first_member(
    labels: Vec<usize>,
    centers: Vec<Vec<f64>>,
    k: usize,
) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut remap = vec![usize::MAX; k];
    let mut next = 0usize;
    for &label in &labels {
        if remap[label] == usize::MAX {
            remap[label] = next;
            next += 1;
        }
    }
    let mut new_centers = vec![Vec::new(); k];
    for (old, center) in centers.into_iter().enumerate() {
        new_centers[remap[old]] = center;
    }
    (labels.into_iter().map(|l| remap[l]).collect(), new_centers)
}

struct WardCluster {
    /// Smallest member row index; doubles as the cluster's id in merge records.
    canon: usize,
    size: usize,
    mean: Vec<f64>,
    members: Vec<usize>,
}

/// Ward agglomerative clustering: start from singletons and repeatedly merge
/// the pair with the smallest cost (ties to the lowest canonical id pair),
/// maintaining pairwise costs with Lance-Williams updates, until `k` clusters
/// remain.
#[allow(clippy::needless_range_loop)] // index pairs address the cost matrix
pub fn ward(data: &Matrix, k: usize) -> Result<ClusterResult, ClusterError> {
    let n = data.nrows();
    if k == 0 || k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }

    let mut clusters: Vec<WardCluster> = (0..n)
        .map(|i| WardCluster {
            canon: i,
            size: 1,
            mean: data.row(i).to_vec(),
            members: vec![i],
        })
        .collect();
    // Symmetric merge-cost matrix over active clusters, kept in canon order.
    let mut delta: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { 0.5 * sq_dist(data.row(i), data.row(j)) })
                .collect()
        })
        .collect();

    let mut history = Vec::with_capacity(n - k);
    while clusters.len() > k {
        let m = clusters.len();
        let (mut best_i, mut best_j, mut best) = (0usize, 1usize, f64::INFINITY);
        for i in 0..m {
            for j in (i + 1)..m {
                if delta[i][j] < best {
                    best = delta[i][j];
                    best_i = i;
                    best_j = j;
                }
            }
        }

        history.push(MergeStep {
            cluster_a: clusters[best_i].canon,
            cluster_b: clusters[best_j].canon,
            cost: best,
        });

        // Lance-Williams update of costs from the merged cluster to the rest.
        let na = clusters[best_i].size as f64;
        let nb = clusters[best_j].size as f64;
        for c in 0..m {
            if c == best_i || c == best_j {
                continue;
            }
            let nc = clusters[c].size as f64;
            let updated = ((na + nc) * delta[best_i][c] + (nb + nc) * delta[best_j][c]
                - nc * best)
                / (na + nb + nc);
            delta[best_i][c] = updated;
            delta[c][best_i] = updated;
        }

        let removed = clusters.remove(best_j);
        let merged = &mut clusters[best_i];
        merged.mean = merged
            .mean
            .iter()
            .zip(&removed.mean)
            .map(|(a, b)| (na * a + nb * b) / (na + nb))
            .collect();
        merged.size += removed.size;
        merged.members.extend(removed.members);

        delta.remove(best_j);
        for row in &mut delta {
            row.remove(best_j);
        }
    }

    // Clusters are already ordered by canonical id == first member row index.
    let mut labels = vec![0usize; n];
    for (id, cluster) in clusters.iter().enumerate() {
        for &member in &cluster.members {
            labels[member] = id;
        }
    }
    // Exact member means, not the incrementally updated ones.
    let centers = clusters
        .iter()
        .map(|c| ClusterSummary::from_points(c.members.iter().map(|&i| data.row(i))).mean)
        .collect();

    Ok(ClusterResult {
        algorithm: Algorithm::Ward,
        k,
        labels: labels.into_iter().map(Some).collect(),
        centers,
        iterations: None,
        distortion_history: None,
        merge_history: Some(history),
    })
}

/// DBSCAN density clustering. A point is core iff at least `min_pts` points
/// (itself included) lie within `eps`; clusters are grown from core points in
/// row order and unreachable points are labelled noise (`None`).
pub fn dbscan(data: &Matrix, eps: f64, min_pts: usize) -> Result<ClusterResult, ClusterError> {
    if eps <= 0.0 || !eps.is_finite() || min_pts == 0 {
        return Err(ClusterError::InvalidParams("eps > 0 and min_pts >= 1 required".into()));
    }
    let n = data.nrows();
    let eps_sq = eps * eps;
    let neighbors: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).filter(|&j| sq_dist(data.row(i), data.row(j)) <= eps_sq).collect())
        .collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut k = 0usize;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        if neighbors[i].len() < min_pts {
            continue; // noise unless a later cluster claims it as border
        }
        let cluster = k;
        k += 1;
        labels[i] = Some(cluster);
        let mut queue: VecDeque<usize> =
            neighbors[i].iter().copied().filter(|&j| j != i).collect();
        while let Some(j) = queue.pop_front() {
            if visited[j] {
                if labels[j].is_none() {
                    labels[j] = Some(cluster); // border point, previously noise
                }
                continue;
            }
            visited[j] = true;
            labels[j] = Some(cluster);
            if neighbors[j].len() >= min_pts {
                queue.extend(neighbors[j].iter().copied().filter(|&q| q != j));
            }
        }
    }

    let d = data.ncols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (i, label) in labels.iter().enumerate() {
        if let Some(c) = label {
            counts[*c] += 1;
            for (s, v) in sums[*c].iter_mut().zip(data.row(i)) {
                *s += v;
            }
        }
    }
    let centers = sums
        .into_iter()
        .zip(&counts)
        .map(|(sum, &count)| sum.into_iter().map(|s| s / count as f64).collect())
        .collect();

    Ok(ClusterResult {
        algorithm: Algorithm::Dbscan,
        k,
        labels,
        centers,
        iterations: None,
        distortion_history: None,
        merge_history: None,
    })
}
