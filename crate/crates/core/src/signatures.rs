//! Interpretive outputs of a clustering: clusters reordered by mean pollution
//! level, per-cluster signature vectors, per-pollutant trends, and partition
//! comparison via the Adjusted Rand Index.

use thiserror::Error;

use crate::cluster::ClusterResult;
use crate::raster::Pollutant;
use crate::table::FeatureTable;

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error("table has {table} rows but clustering labelled {labels}")]
    RowMismatch { table: usize, labels: usize },
    #[error("partitions label {a} and {b} rows")]
    LengthMismatch { a: usize, b: usize },
}

/// Signatures and memberships keyed by *semantic* cluster id: cluster 0 has
/// the lowest mean standardized pollution, cluster k-1 the highest.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureReport {
    /// Maps raw cluster id -> semantic id; a bijection on [0, k).
    pub cluster_order: Vec<usize>,
    pub columns: Vec<Pollutant>,
    /// Per semantic cluster, the column-wise mean of its member rows.
    pub signatures: Vec<Vec<f64>>,
    /// Per column, that pollutant's signature value across semantic clusters.
    pub trends: Vec<Vec<f64>>,
    /// Per semantic cluster, sorted member region names.
    pub membership: Vec<Vec<String>>,
    /// Sorted names of rows labelled noise.
    pub noise_members: Vec<String>,
}

/// Computes per-cluster mean pollution signatures over a standardized table
/// and renumbers clusters so the signature-vector mean ascends with the
/// semantic id (ties broken by raw id). Noise rows are listed separately.
pub fn compute_signatures(
    table: &FeatureTable,
    result: &ClusterResult,
) -> Result<SignatureReport, SignatureError> {
    let n = table.n_rows();
    if result.labels.len() != n {
        return Err(SignatureError::RowMismatch { table: n, labels: result.labels.len() });
    }
    let d = table.n_cols();
    let k = result.k;

    let mut sums = vec![vec![0.0f64; d]; k];
    let mut counts = vec![0usize; k];
    let mut members: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut noise_members = Vec::new();
    for (row, label) in result.labels.iter().enumerate() {
        match label {
            Some(c) => {
                counts[*c] += 1;
                members[*c].push(table.row_names()[row].clone());
                for (col, sum) in sums[*c].iter_mut().enumerate() {
                    *sum += table.cell(row, col).unwrap_or(0.0);
                }
            }
            None => noise_members.push(table.row_names()[row].clone()),
        }
    }
    let raw_signatures: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(sum, &count)| sum.into_iter().map(|s| s / count.max(1) as f64).collect())
        .collect();

    // Raw ids sorted by ascending signature mean give the semantic order.
    let mut order: Vec<usize> = (0..k).collect();
    let key = |raw: usize| -> f64 {
        let sig = &raw_signatures[raw];
        sig.iter().sum::<f64>() / d.max(1) as f64
    };
    order.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).unwrap().then(a.cmp(&b)));

    let mut cluster_order = vec![0usize; k];
    for (semantic, &raw) in order.iter().enumerate() {
        cluster_order[raw] = semantic;
    }
    let signatures: Vec<Vec<f64>> = order.iter().map(|&raw| raw_signatures[raw].clone()).collect();
    let membership: Vec<Vec<String>> = order
        .iter()
        .map(|&raw| {
            let mut names = members[raw].clone();
            names.sort();
            names
        })
        .collect();
    let trends = (0..d)
        .map(|col| signatures.iter().map(|sig| sig[col]).collect())
        .collect();
    noise_members.sort();

    Ok(SignatureReport {
        cluster_order,
        columns: table.columns().to_vec(),
        signatures,
        trends,
        membership,
        noise_members,
    })
}

/// Agreement between two partitions: the Adjusted Rand Index and the names
/// whose cluster differs once clusters are optimally aligned by overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionComparison {
    pub ari: f64,
    pub disagreements: Vec<String>,
}

/// Compares two clusterings of the same rows. Noise is treated as its own
/// category for the ARI; a row that is noise in one partition but clustered
/// in the other always counts as a disagreement.
pub fn compare_partitions(
    a: &ClusterResult,
    b: &ClusterResult,
    names: &[String],
) -> Result<PartitionComparison, SignatureError> {
    if a.labels.len() != b.labels.len() || names.len() != a.labels.len() {
        return Err(SignatureError::LengthMismatch { a: a.labels.len(), b: b.labels.len() });
    }
    let ari = adjusted_rand_index(&a.labels, &b.labels);

    // Align the smaller partition onto the larger by maximum total overlap,
    // then flag rows whose aligned labels disagree.
    let mapping = align_by_overlap(&a.labels, &b.labels, a.k, b.k);
    let mut disagreements = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let agree = match (a.labels[i], b.labels[i]) {
            (None, None) => true,
            (Some(la), Some(lb)) => match &mapping {
                Mapping::BToA(m) => m[lb] == Some(la),
                Mapping::AToB(m) => m[la] == Some(lb),
            },
            _ => false,
        };
        if !agree {
            disagreements.push(name.clone());
        }
    }
    Ok(PartitionComparison { ari, disagreements })
}

/// ARI over two labelings, noise treated as one extra category each.
fn adjusted_rand_index(a: &[Option<usize>], b: &[Option<usize>]) -> f64 {
    let ka = a.iter().flatten().max().map_or(0, |m| m + 1);
    let kb = b.iter().flatten().max().map_or(0, |m| m + 1);
    // Index ka/kb holds the noise category.
    let mut contingency = vec![vec![0u64; kb + 1]; ka + 1];
    for (la, lb) in a.iter().zip(b) {
        contingency[la.unwrap_or(ka)][lb.unwrap_or(kb)] += 1;
    }
    let choose2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;

    let n: u64 = a.len() as u64;
    let sum_ij: f64 = contingency.iter().flatten().map(|&c| choose2(c)).sum();
    let sum_a: f64 = contingency.iter().map(|row| choose2(row.iter().sum())).sum();
    let sum_b: f64 = (0..=kb)
        .map(|j| choose2(contingency.iter().map(|row| row[j]).sum()))
        .sum();
    let expected = sum_a * sum_b / choose2(n);
    let max_index = 0.5 * (sum_a + sum_b);
    if max_index == expected {
        return 1.0; // both partitions all-singletons (or empty): identical
    }
    (sum_ij - expected) / (max_index - expected)
}

enum Mapping {
    /// `m[label_b] = Some(label_a)` for matched clusters of b.
    BToA(Vec<Option<usize>>),
    /// `m[label_a] = Some(label_b)` for matched clusters of a.
    AToB(Vec<Option<usize>>),
}

fn align_by_overlap(a: &[Option<usize>], b: &[Option<usize>], ka: usize, kb: usize) -> Mapping {
    let mut overlap = vec![vec![0u64; kb]; ka];
    for (la, lb) in a.iter().zip(b) {
        if let (Some(la), Some(lb)) = (la, lb) {
            overlap[*la][*lb] += 1;
        }
    }
    if kb <= ka {
        Mapping::BToA(assign_max_overlap(&transpose(&overlap), ka))
    } else {
        Mapping::AToB(assign_max_overlap(&overlap, kb))
    }
}

fn transpose(m: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    (0..cols).map(|j| (0..rows).map(|i| m[i][j]).collect()).collect()
}

/// Maximum-total-overlap injective assignment of each row of `overlap` to a
/// distinct column. Exact bitmask DP for small cluster counts, greedy beyond.
fn assign_max_overlap(overlap: &[Vec<u64>], n_cols: usize) -> Vec<Option<usize>> {
    let n_rows = overlap.len();
    if n_rows == 0 {
        return Vec::new();
    }
    if n_rows <= 20 && n_cols <= 20 {
        // dp over rows with a bitmask of used columns
        let full = 1usize << n_cols;
        let mut dp = vec![vec![f64::NEG_INFINITY; full]; n_rows + 1];
        let mut choice = vec![vec![usize::MAX; full]; n_rows + 1];
        dp[0][0] = 0.0;
        for row in 0..n_rows {
            for mask in 0..full {
                let current = dp[row][mask];
                if current == f64::NEG_INFINITY {
                    continue;
                }
                for col in 0..n_cols {
                    if mask & (1 << col) != 0 {
                        continue;
                    }
                    let next = current + overlap[row][col] as f64;
                    if next > dp[row + 1][mask | (1 << col)] {
                        dp[row + 1][mask | (1 << col)] = next;
                        choice[row + 1][mask | (1 << col)] = col;
                    }
                }
            }
        }
        let (mut mask, _) = dp[n_rows]
            .iter()
            .enumerate()
            .max_by(|(_, x), (_, y)| x.partial_cmp(y).unwrap())
            .map(|(m, v)| (m, *v))
            .unwrap();
        let mut assignment = vec![None; n_rows];
        for row in (1..=n_rows).rev() {
            let col = choice[row][mask];
            assignment[row - 1] = Some(col);
            mask &= !(1 << col);
        }
        assignment
    } else {
        // Greedy fallback for unusually large cluster counts.
        let mut used = vec![false; n_cols];
        let mut assignment = vec![None; n_rows];
        let mut pairs: Vec<(u64, usize, usize)> = Vec::new();
        for (r, row) in overlap.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                pairs.push((v, r, c));
            }
        }
        pairs.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        for (_, r, c) in pairs {
            if assignment[r].is_none() && !used[c] {
                assignment[r] = Some(c);
                used[c] = true;
            }
        }
        assignment
    }
}
