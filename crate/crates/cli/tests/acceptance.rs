//! Acceptance suite: one test per release criterion, each printing a PASS
//! line. Every check pits the implementation against an independent oracle
//! or a pinned invariant at a fixed tolerance.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use airshed::config::PipelineConfig;
use airshed::pipeline::run_pipeline;
use airshed_core::cluster::{dbscan, kmeans, ward, ward_merge_cost, ClusterSummary};
use airshed_core::geometry::{point_in_region, zonal_mean, PolygonPart, Region};
use airshed_core::matrix::{dist, Matrix};
use airshed_core::model_selection::{find_elbow, silhouette, ElbowCurve, Metric};
use airshed_core::raster::{composite_mean, parse_grid, serialize_grid, Grid, Pollutant};
use airshed_core::signatures::compare_partitions;
use airshed_core::table::{standardize, write_table, FeatureTable};
use airshed_core::cluster::ClusterResult;

use common::{build_fixture, region_name, FixtureParams};

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, span: f64) -> Matrix {
    Matrix::new(n, d, (0..n * d).map(|_| rng.random_range(-span..span)).collect())
}

// ---------------------------------------------------------------------------
// 1. DBSCAN equals a from-definition reference
// ---------------------------------------------------------------------------

/// Naive reference: core points by neighbor count, clusters as connected
/// components of the core-core graph ordered by first core row, borders
/// attached to the lowest-numbered cluster owning a core within eps.
fn dbscan_oracle(data: &Matrix, eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = data.nrows();
    let within =
        |i: usize, j: usize| dist(data.row(i), data.row(j)) <= eps;
    let is_core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| within(i, j)).count() >= min_pts)
        .collect();

    // Components over core points only.
    let mut component = vec![usize::MAX; n];
    let mut next = 0usize;
    for start in 0..n {
        if !is_core[start] || component[start] != usize::MAX {
            continue;
        }
        let id = next;
        next += 1;
        let mut stack = vec![start];
        component[start] = id;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if is_core[j] && component[j] == usize::MAX && within(i, j) {
                    component[j] = id;
                    stack.push(j);
                }
            }
        }
    }

    (0..n)
        .map(|i| {
            if is_core[i] {
                return Some(component[i]);
            }
            (0..n)
                .filter(|&j| is_core[j] && within(i, j))
                .map(|j| component[j])
                .min()
        })
        .collect()
}

#[test]
fn acceptance_01_dbscan_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for round in 0..50 {
        let n = rng.random_range(5..=300);
        let d = rng.random_range(1..=6);
        let data = random_matrix(&mut rng, n, d, 4.0);
        let eps = rng.random_range(0.3..3.0);
        let min_pts = rng.random_range(1..=6);

        let result = dbscan(&data, eps, min_pts).unwrap();
        let oracle = dbscan_oracle(&data, eps, min_pts);
        assert_eq!(
            result.labels, oracle,
            "round {round}: dbscan(n={n}, d={d}, eps={eps}, min_pts={min_pts}) disagrees"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 30, "dbscan suite took {elapsed:?}");
    println!("ACCEPTANCE PASS: dbscan matches the naive reference on 50 datasets ({elapsed:?})");
}

// ---------------------------------------------------------------------------
// 2. Ward merge cost and greedy merges
// ---------------------------------------------------------------------------

fn sse(points: &[Vec<f64>]) -> f64 {
    let d = points[0].len();
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= points.len() as f64;
    }
    points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
        .sum()
}

fn three_sum_delta(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let union: Vec<Vec<f64>> = a.iter().chain(b).cloned().collect();
    sse(&union) - sse(a) - sse(b)
}

#[test]
fn acceptance_02_ward_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);

    // Closed form vs the three-sum form on 1000 random cluster pairs.
    for _ in 0..1000 {
        let d = rng.random_range(1..=6);
        let size_a = rng.random_range(1..=30);
        let size_b = rng.random_range(1..=30);
        let points = |rng: &mut ChaCha8Rng, size: usize| -> Vec<Vec<f64>> {
            (0..size).map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).collect()
        };
        let a = points(&mut rng, size_a);
        let b = points(&mut rng, size_b);
        let closed = ward_merge_cost(
            &ClusterSummary::from_points(a.iter().map(Vec::as_slice)),
            &ClusterSummary::from_points(b.iter().map(Vec::as_slice)),
        );
        let oracle = three_sum_delta(&a, &b);
        assert!(
            (closed - oracle).abs() <= 1e-9 * oracle.abs().max(1.0),
            "closed {closed} vs three-sum {oracle}"
        );
    }

    // Greedy merge equals exhaustive minimal-cost search at every step for
    // every dataset size up to 8; costs never decrease along the history.
    for n in 2..=8usize {
        for round in 0..25 {
            let d = 1 + (round % 3);
            let data = random_matrix(&mut rng, n, d, 3.0);
            let result = ward(&data, 1).unwrap();
            let history = result.merge_history.as_ref().unwrap();
            assert_eq!(history.len(), n - 1);
            for pair in history.windows(2) {
                assert!(
                    pair[1].cost >= pair[0].cost - 1e-9 * pair[0].cost.abs().max(1.0),
                    "merge costs decreased: {} then {}",
                    pair[0].cost,
                    pair[1].cost
                );
            }

            let mut clusters: Vec<(usize, Vec<Vec<f64>>)> =
                (0..n).map(|i| (i, vec![data.row(i).to_vec()])).collect();
            for step in history {
                // Exhaustive minimum over all active pairs.
                let mut exhaustive = f64::INFINITY;
                for x in 0..clusters.len() {
                    for y in (x + 1)..clusters.len() {
                        exhaustive =
                            exhaustive.min(three_sum_delta(&clusters[x].1, &clusters[y].1));
                    }
                }
                let pos_a = clusters.iter().position(|(c, _)| *c == step.cluster_a).unwrap();
                let pos_b = clusters.iter().position(|(c, _)| *c == step.cluster_b).unwrap();
                let chosen = three_sum_delta(&clusters[pos_a].1, &clusters[pos_b].1);
                assert!(
                    chosen <= exhaustive + 1e-9 * exhaustive.abs().max(1.0),
                    "greedy chose cost {chosen}, exhaustive minimum {exhaustive}"
                );
                let members_b = clusters.remove(pos_b).1;
                let pos_a = clusters.iter().position(|(c, _)| *c == step.cluster_a).unwrap();
                clusters[pos_a].1.extend(members_b);
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 10, "ward suite took {elapsed:?}");
    println!("ACCEPTANCE PASS: ward merge costs and greedy merges verified ({elapsed:?})");
}

// ---------------------------------------------------------------------------
// 3. K-Means: monotone distortion, optimal separable fixtures, thread determinism
// ---------------------------------------------------------------------------

/// Best 2-partition by exhaustive assignment enumeration.
fn brute_force_sse_partition(data: &Matrix, k: usize) -> Vec<usize> {
    let n = data.nrows();
    let mut best = (f64::INFINITY, vec![0usize; n]);
    let mut assignment = vec![0usize; n];
    loop {
        if (0..k).all(|c| assignment.contains(&c)) {
            let mut groups: Vec<Vec<Vec<f64>>> = vec![Vec::new(); k];
            for (i, &c) in assignment.iter().enumerate() {
                groups[c].push(data.row(i).to_vec());
            }
            let total: f64 = groups.iter().map(|g| sse(g)).sum();
            if total < best.0 {
                best = (total, assignment.clone());
            }
        }
        // Odometer increment over k^n assignments.
        let mut idx = 0;
        loop {
            if idx == n {
                return best.1;
            }
            assignment[idx] += 1;
            if assignment[idx] < k {
                break;
            }
            assignment[idx] = 0;
            idx += 1;
        }
    }
}

fn same_partition(a: &[Option<usize>], b: &[usize]) -> bool {
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            if (a[i] == a[j]) != (b[i] == b[j]) {
                return false;
            }
        }
    }
    true
}

#[test]
fn acceptance_03_kmeans_monotone_optimal_and_thread_deterministic() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);

    // 200 randomized runs: distortion never increases across iterations.
    for round in 0..200u64 {
        let n = rng.random_range(4..=80);
        let d = rng.random_range(1..=6);
        let data = random_matrix(&mut rng, n, d, 5.0);
        let k = rng.random_range(1..=n.min(10));
        let result = kmeans(&data, k, round, 300, 0.0).unwrap();
        let history = result.distortion_history.unwrap();
        for pair in history.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-10,
                "distortion rose from {} to {} on round {round}",
                pair[0],
                pair[1]
            );
        }
    }

    // Separable fixtures recover the brute-force SSE optimum at the blob count.
    let fixtures: [(Vec<f64>, usize); 3] = [
        (vec![0.0, 1.0, 10.0, 11.0], 2),
        (vec![-6.0, -5.5, -5.0, 7.0, 7.5, 8.0], 2),
        (vec![0.0, 0.2, 0.4, 100.0, 100.2, 50.0, 50.4], 3),
    ];
    for (values, k) in &fixtures {
        let data = Matrix::new(values.len(), 1, values.clone());
        let optimum = brute_force_sse_partition(&data, *k);
        for seed in 0..5 {
            let result = kmeans(&data, *k, seed, 300, 1e-6).unwrap();
            assert!(
                same_partition(&result.labels, &optimum),
                "kmeans missed the SSE optimum on {values:?} k={k} seed={seed}"
            );
        }
    }

    // Fixed seed, 1 thread vs 4 threads: bit-identical output.
    let data = random_matrix(&mut rng, 120, 5, 4.0);
    let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    for seed in [0u64, 7, 40_404] {
        let a = pool1.install(|| kmeans(&data, 6, seed, 300, 1e-6)).unwrap();
        let b = pool4.install(|| kmeans(&data, 6, seed, 300, 1e-6)).unwrap();
        assert_eq!(a.labels, b.labels, "labels differ across thread counts");
        assert_eq!(a.iterations, b.iterations);
        let bits = |centers: &Vec<Vec<f64>>| -> Vec<u64> {
            centers.iter().flatten().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a.centers), bits(&b.centers), "centers differ bitwise");
        let history_bits = |h: &Option<Vec<f64>>| -> Vec<u64> {
            h.as_ref().unwrap().iter().map(|v| v.to_bits()).collect()
        };
        assert_eq!(
            history_bits(&a.distortion_history),
            history_bits(&b.distortion_history),
            "distortion history differs bitwise"
        );
    }

    let elapsed = start.elapsed();
    println!("ACCEPTANCE PASS: kmeans monotone, SSE-optimal on separable data, thread-deterministic ({elapsed:?})");
}

// ---------------------------------------------------------------------------
// 4. Silhouette equals the direct definition
// ---------------------------------------------------------------------------

fn silhouette_oracle(data: &Matrix, labels: &[Option<usize>], k: usize) -> Vec<Option<f64>> {
    let n = data.nrows();
    (0..n)
        .map(|i| {
            let own = labels[i]?;
            let members = |c: usize| -> Vec<usize> {
                (0..n).filter(|&j| labels[j] == Some(c)).collect()
            };
            let own_members = members(own);
            if own_members.len() == 1 {
                return Some(0.0);
            }
            let a = own_members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| dist(data.row(i), data.row(j)))
                .sum::<f64>()
                / (own_members.len() - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .filter_map(|c| {
                    let m = members(c);
                    if m.is_empty() {
                        None
                    } else {
                        Some(m.iter().map(|&j| dist(data.row(i), data.row(j))).sum::<f64>()
                            / m.len() as f64)
                    }
                })
                .fold(f64::INFINITY, f64::min);
            if a.max(b) == 0.0 {
                Some(0.0)
            } else {
                Some((b - a) / a.max(b))
            }
        })
        .collect()
}

#[test]
fn acceptance_04_silhouette_oracle_bounds_and_invariance() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for round in 0..60 {
        let n = rng.random_range(4..=120);
        let d = rng.random_range(1..=6);
        let data = random_matrix(&mut rng, n, d, 5.0);
        let k = rng.random_range(2..=n.min(6));
        // Random labelling with every cluster inhabited and some noise.
        let labels: Vec<Option<usize>> = (0..n)
            .map(|i| {
                if i < k {
                    Some(i)
                } else if rng.random::<f64>() < 0.1 {
                    None
                } else {
                    Some(rng.random_range(0..k))
                }
            })
            .collect();
        let result = ClusterResult {
            algorithm: airshed_core::cluster::Algorithm::KMeans,
            k,
            labels: labels.clone(),
            centers: vec![vec![0.0; d]; k],
            iterations: None,
            distortion_history: None,
            merge_history: None,
        };
        let report = silhouette(&data, &result).unwrap();
        let oracle = silhouette_oracle(&data, &labels, k);
        for (i, (ours, reference)) in report.per_point.iter().zip(&oracle).enumerate() {
            match (ours, reference) {
                (Some(x), Some(y)) => {
                    assert!((-1.0..=1.0).contains(x), "s out of [-1,1]: {x}");
                    assert!(
                        (x - y).abs() <= 1e-9,
                        "round {round} row {i}: {x} vs oracle {y}"
                    );
                }
                (None, None) => {}
                other => panic!("noise handling diverged: {other:?}"),
            }
        }

        // Translation and positive scaling leave the report unchanged.
        let offset: Vec<f64> = (0..d).map(|_| rng.random_range(-40.0..40.0)).collect();
        let translated = silhouette(&data.translated(&offset), &result).unwrap();
        let scale = rng.random_range(0.1..12.0);
        let scaled_rows: Vec<Vec<f64>> =
            (0..n).map(|i| data.row(i).iter().map(|v| v * scale).collect()).collect();
        let scaled = silhouette(&Matrix::from_rows(&scaled_rows), &result).unwrap();
        for ((base, t), s) in report
            .per_point
            .iter()
            .zip(&translated.per_point)
            .zip(&scaled.per_point)
        {
            if let (Some(x), Some(y), Some(z)) = (base, t, s) {
                assert!((x - y).abs() <= 1e-9, "translation moved silhouette {x} -> {y}");
                assert!((x - z).abs() <= 1e-9, "scaling moved silhouette {x} -> {z}");
            }
        }
    }
    let elapsed = start.elapsed();
    println!("ACCEPTANCE PASS: silhouette matches the direct definition and is translation/scale invariant ({elapsed:?})");
}

// ---------------------------------------------------------------------------
// 5. Standardization postconditions
// ---------------------------------------------------------------------------

#[test]
fn acceptance_05_standardization_postconditions() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for _ in 0..100 {
        let n = rng.random_range(2..=60);
        let scale = 10f64.powi(rng.random_range(-4..5));
        let offset = rng.random_range(-1e3..1e3);
        let cells: Vec<Option<f64>> = (0..n * 6)
            .map(|_| Some(offset + scale * rng.random_range(-1.0..1.0)))
            .collect();
        let table = FeatureTable::new(
            (0..n).map(|i| format!("r{i}")).collect(),
            Pollutant::ALL.to_vec(),
            cells,
        )
        .unwrap();
        let (standardized, constant) = standardize(&table).unwrap();
        for col in 0..6 {
            if constant.contains(&Pollutant::ALL[col]) {
                continue;
            }
            let column: Vec<f64> =
                (0..n).map(|r| standardized.cell(r, col).unwrap()).collect();
            let mean = column.iter().sum::<f64>() / n as f64;
            let std =
                (column.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64).sqrt();
            assert!(mean.abs() <= 1e-12, "column mean {mean}");
            assert!((std - 1.0).abs() <= 1e-12, "column std {std}");
        }
        let (twice, _) = standardize(&standardized).unwrap();
        for r in 0..n {
            for c in 0..6 {
                assert!(
                    (standardized.cell(r, c).unwrap() - twice.cell(r, c).unwrap()).abs() <= 1e-12,
                    "standardize is not idempotent"
                );
            }
        }
    }
    println!("ACCEPTANCE PASS: standardization gives mean 0, std 1 within 1e-12 and is idempotent");
}

// ---------------------------------------------------------------------------
// 6. Elbow detection vs the chord-distance oracle
// ---------------------------------------------------------------------------

/// Independent normalized chord-distance knee: same declared contract
/// (0.01 no-elbow threshold, 1e-9 tie band toward smaller k).
fn elbow_oracle(ks: &[usize], scores: &[f64]) -> Option<usize> {
    let n = ks.len();
    let (s_min, s_max) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if s_max == s_min {
        return None;
    }
    let norm_x = |k: usize| (k - ks[0]) as f64 / (ks[n - 1] - ks[0]) as f64;
    let norm_y = |s: f64| (s - s_min) / (s_max - s_min);
    let y_first = norm_y(scores[0]);
    let y_last = norm_y(scores[n - 1]);
    let mut gaps = Vec::with_capacity(n);
    for i in 0..n {
        let chord = y_first + (y_last - y_first) * norm_x(ks[i]);
        gaps.push(chord - norm_y(scores[i]));
    }
    let max_gap = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max_gap < 0.01 {
        return None;
    }
    gaps.iter().position(|&g| g >= max_gap - 1e-9).map(|i| ks[i])
}

#[test]
fn acceptance_06_elbow_matches_chord_oracle() {
    let ks: Vec<usize> = (2..=15).collect();

    let reciprocal: Vec<f64> = ks.iter().map(|&k| 1.0 / k as f64).collect();
    let expected = elbow_oracle(&ks, &reciprocal);
    let curve = ElbowCurve {
        ks: ks.clone(),
        scores: reciprocal,
        metric: Metric::Distortion,
        elbow_k: None,
    };
    assert_eq!(find_elbow(&curve).unwrap(), expected);
    assert_eq!(expected, Some(5), "chord oracle on 1/k picks k=5 (tie 5/6 to smaller)");

    let linear: Vec<f64> = ks.iter().map(|&k| 100.0 - 3.0 * k as f64).collect();
    let curve = ElbowCurve {
        ks: ks.clone(),
        scores: linear,
        metric: Metric::Distortion,
        elbow_k: None,
    };
    assert_eq!(find_elbow(&curve).unwrap(), None, "linear curve must have no elbow");

    // Affine rescaling of the scores never moves the elbow.
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for _ in 0..100 {
        let mut scores: Vec<f64> = (0..ks.len()).map(|_| rng.random_range(0.0..50.0)).collect();
        scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let scale = rng.random_range(0.05..30.0);
        let offset = rng.random_range(-100.0..100.0);
        let rescaled: Vec<f64> = scores.iter().map(|s| scale * s + offset).collect();
        let base = ElbowCurve {
            ks: ks.clone(),
            scores: scores.clone(),
            metric: Metric::Distortion,
            elbow_k: None,
        };
        let affine = ElbowCurve {
            ks: ks.clone(),
            scores: rescaled.clone(),
            metric: Metric::Distortion,
            elbow_k: None,
        };
        assert_eq!(find_elbow(&base).unwrap(), find_elbow(&affine).unwrap());
        assert_eq!(find_elbow(&base).unwrap(), elbow_oracle(&ks, &scores));
    }
    println!("ACCEPTANCE PASS: elbow matches the chord-distance oracle and is affine-invariant");
}

// ---------------------------------------------------------------------------
// 7. Geometry: ray casting vs crossing-count oracle, zonal additivity
// ---------------------------------------------------------------------------

/// Classic PNPOLY-style crossing count over one closed ring.
fn pnpoly(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let m = ring.len() - 1; // last vertex repeats the first
    let mut inside = false;
    let mut j = m - 1;
    for i in 0..m {
        let (xi, yi) = ring[i];
        let (xj, yj) = ring[j];
        if ((yi > y) != (yj > y)) && (x < (xj - xi) * (y - yi) / (yj - yi) + xi) {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Star-shaped polygon around a center: strictly simple by construction.
fn star_ring(rng: &mut ChaCha8Rng, cx: f64, cy: f64, r_lo: f64, r_hi: f64) -> Vec<(f64, f64)> {
    let sides = rng.random_range(5..14);
    let mut ring: Vec<(f64, f64)> = (0..sides)
        .map(|i| {
            let angle = (i as f64 + rng.random_range(0.05..0.3)) / sides as f64
                * std::f64::consts::TAU;
            let r = rng.random_range(r_lo..r_hi);
            (cx + r * angle.cos(), cy + r * angle.sin())
        })
        .collect();
    ring.push(ring[0]);
    ring
}

#[test]
fn acceptance_07_geometry_oracle_and_zonal_additivity() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);

    // 20 random polygons-with-holes vs the crossing-count oracle.
    type RingPair = (Vec<(f64, f64)>, Vec<(f64, f64)>);
    let polygons: Vec<RingPair> = (0..20)
        .map(|_| {
            let cx = rng.random_range(-3.0..3.0);
            let cy = rng.random_range(-3.0..3.0);
            let outer = star_ring(&mut rng, cx, cy, 2.0, 5.0);
            let hole = star_ring(&mut rng, cx, cy, 0.3, 1.2);
            (outer, hole)
        })
        .collect();
    let regions: Vec<Region> = polygons
        .iter()
        .enumerate()
        .map(|(i, (outer, hole))| Region {
            name: format!("poly{i}"),
            polygons: vec![PolygonPart { outer: outer.clone(), holes: vec![hole.clone()] }],
        })
        .collect();

    let mut checked = 0usize;
    for _ in 0..10_000 {
        let x = rng.random_range(-9.0..9.0);
        let y = rng.random_range(-9.0..9.0);
        for (region, (outer, hole)) in regions.iter().zip(&polygons) {
            let expected = pnpoly(outer, x, y) && !pnpoly(hole, x, y);
            assert_eq!(
                point_in_region((x, y), region),
                expected,
                "disagreement at ({x}, {y}) in {}",
                region.name
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 200_000);

    // Zonal additivity over disjoint rectangles to 1e-12.
    for _ in 0..30 {
        let values: Vec<Option<f64>> = (0..144)
            .map(|_| (rng.random::<f64>() < 0.85).then(|| rng.random_range(-2.0..2.0)))
            .collect();
        let grid = Grid::new(12, 12, 0.0, 0.0, 1.0, values).unwrap();
        let rect = |name: &str, x0: f64, y0: f64, x1: f64, y1: f64| Region {
            name: name.into(),
            polygons: vec![PolygonPart {
                outer: vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)],
                holes: vec![],
            }],
        };
        let split = rng.random_range(3..9) as f64;
        let left = rect("left", 0.0, 0.0, split, 12.0);
        let right = rect("right", split, 0.0, 12.0, 12.0);
        let whole = Region {
            name: "whole".into(),
            polygons: left.polygons.iter().chain(&right.polygons).cloned().collect(),
        };
        let count = |region: &Region| -> usize {
            (0..12)
                .flat_map(|r| (0..12).map(move |c| (r, c)))
                .filter(|&(r, c)| {
                    grid.get(r, c).is_some() && point_in_region(grid.cell_center(r, c), region)
                })
                .count()
        };
        let (nl, nr) = (count(&left), count(&right));
        if nl == 0 || nr == 0 {
            continue;
        }
        let weighted = (nl as f64 * zonal_mean(&grid, &left).unwrap()
            + nr as f64 * zonal_mean(&grid, &right).unwrap())
            / (nl + nr) as f64;
        let direct = zonal_mean(&grid, &whole).unwrap();
        assert!(
            (weighted - direct).abs() <= 1e-12,
            "zonal additivity broke: {weighted} vs {direct}"
        );
    }
    println!("ACCEPTANCE PASS: point-in-region matches the crossing-count oracle on 200k checks; zonal means are additive");
}

// ---------------------------------------------------------------------------
// 8. End-to-end synthetic replication
// ---------------------------------------------------------------------------

#[test]
fn acceptance_08_end_to_end_synthetic_replication() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let fixture = build_fixture(tmp.path(), &FixtureParams::acceptance(4242));
    let config = PipelineConfig::from_file(&fixture.config_path).unwrap();
    assert!(config.k.is_none(), "fixture must leave k unset");

    let outcome = run_pipeline(&config).unwrap();
    assert_eq!(
        outcome.report.selected_k, 5,
        "expected the elbow at the 5 generating archetypes, got {} ({})",
        outcome.report.selected_k, outcome.report.k_source
    );

    // ARI of the produced clusters against the generating archetypes.
    let text = std::fs::read_to_string(outcome.output_dir.join("clusters.csv")).unwrap();
    let mut produced: BTreeMap<String, usize> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let (name, label) = line.rsplit_once(',').unwrap();
        produced.insert(name.to_string(), label.parse::<i64>().unwrap() as usize);
    }
    let names: Vec<String> = (0..30).map(region_name).collect();
    let wrap = |assignment: &dyn Fn(&str) -> usize, k: usize| ClusterResult {
        algorithm: airshed_core::cluster::Algorithm::KMeans,
        k,
        labels: names.iter().map(|n| Some(assignment(n))).collect(),
        centers: vec![],
        iterations: None,
        distortion_history: None,
        merge_history: None,
    };
    let ours = wrap(&|n| produced[n], 5);
    let truth = wrap(&|n| fixture.archetype_of[n], 5);
    let comparison = compare_partitions(&ours, &truth, &names).unwrap();
    assert!(
        comparison.ari >= 0.9,
        "ARI against generating archetypes is {}",
        comparison.ari
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "end-to-end run took {elapsed:?}");
    println!(
        "ACCEPTANCE PASS: full pipeline selects K=5 with ARI {:.3} vs archetypes ({elapsed:?})",
        comparison.ari
    );
}

// ---------------------------------------------------------------------------
// 9. Determinism: byte-identical output directories
// ---------------------------------------------------------------------------

#[test]
fn acceptance_09_pipeline_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = build_fixture(tmp.path(), &FixtureParams::acceptance(777));
    let mut config = PipelineConfig::from_file(&fixture.config_path).unwrap();

    let out_a = tmp.path().join("out_a");
    let out_b = tmp.path().join("out_b");
    config.output_dir = out_a.clone();
    run_pipeline(&config).unwrap();
    config.output_dir = out_b.clone();
    run_pipeline(&config).unwrap();

    let list = |dir: &std::path::Path| -> Vec<String> {
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        names
    };
    let names = list(&out_a);
    assert_eq!(names, list(&out_b), "output file sets differ");
    assert!(!names.is_empty());
    for name in &names {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
    println!("ACCEPTANCE PASS: two pipeline runs produced byte-identical outputs ({} files)", names.len());
}

// ---------------------------------------------------------------------------
// 10. Pinned reference rows survive ingestion -> zonal table exactly
// ---------------------------------------------------------------------------

#[test]
fn acceptance_10_pinned_island_rows_exact() {
    let andaman = [4.28e-5, -4.73e-8, 0.037036, -1.27958, 0.117128, 9.89e-5];
    let nicobar = [3.89e-5, -9.24e-6, 0.033289, -1.23807, 0.117677, 8.95e-5];

    // One 4x1 grid per pollutant: two cells per island, constant per island.
    let rect = |name: &str, x0: f64, x1: f64| Region {
        name: name.into(),
        polygons: vec![PolygonPart {
            outer: vec![(x0, 0.0), (x1, 0.0), (x1, 1.0), (x0, 1.0), (x0, 0.0)],
            holes: vec![],
        }],
    };
    let regions = vec![rect("Andaman Islands", 0.0, 2.0), rect("Nicobar Islands", 2.0, 4.0)];

    let composites: Vec<(Pollutant, Grid)> = Pollutant::ALL
        .iter()
        .enumerate()
        .map(|(p, pollutant)| {
            let grid = Grid::new(
                4,
                1,
                0.0,
                0.0,
                1.0,
                vec![Some(andaman[p]), Some(andaman[p]), Some(nicobar[p]), Some(nicobar[p])],
            )
            .unwrap();
            // Ingestion path: serialize to ASCII text, parse back, composite.
            let parsed = parse_grid(&serialize_grid(&grid)).unwrap();
            let composited = composite_mean(std::slice::from_ref(&parsed)).unwrap();
            (*pollutant, composited)
        })
        .collect();

    let table = airshed_core::geometry::build_feature_table(&composites, &regions).unwrap();
    assert_eq!(table.row_names(), &["Andaman Islands".to_string(), "Nicobar Islands".to_string()]);
    for (col, (a, n)) in andaman.iter().zip(&nicobar).enumerate() {
        assert_eq!(table.cell(0, col), Some(*a), "Andaman {col} not exact");
        assert_eq!(table.cell(1, col), Some(*n), "Nicobar {col} not exact");
    }

    // The CSV round trip keeps the rows exact too.
    let csv = write_table(&table);
    let reread = airshed_core::table::read_table(&csv).unwrap();
    assert_eq!(reread, table);
    println!("ACCEPTANCE PASS: pinned island rows survive ingestion, zonal means, and CSV exactly");
}
