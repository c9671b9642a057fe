//! Posterior partition summaries and comparison metrics.
//!
//! Point estimation selects the traced partition minimizing the Binder loss
//! against the pairwise co-clustering probabilities. Agreement between
//! partitions is measured by the adjusted Rand index (chance-corrected pair
//! agreement), the raw Rand index, and the normalized information distance
//! `NID = 1 - 2 I(U,V) / (H(U) + H(V))` with natural-log entropies.

use nalgebra::DMatrix;

use crate::error::PosteriorError;

/// Posterior pairwise co-clustering probabilities.
#[derive(Debug, Clone)]
pub struct CoclusterMatrix {
    pub p: DMatrix<f64>,
    pub n_samples_used: usize,
}

/// `p[i][j]` = fraction of sampled partitions in which regions `i` and `j`
/// share a cluster.
pub fn cocluster_matrix(trace: &[Vec<u32>]) -> Result<CoclusterMatrix, PosteriorError> {
    if trace.is_empty() {
        return Err(PosteriorError::EmptyTrace);
    }
    let n = trace[0].len();
    for m in trace {
        if m.len() != n {
            return Err(PosteriorError::LengthMismatch(n, m.len()));
        }
    }
    let mut p = DMatrix::zeros(n, n);
    for membership in trace {
        for i in 0..n {
            for j in (i + 1)..n {
                if membership[i] == membership[j] {
                    p[(i, j)] += 1.0;
                }
            }
        }
    }
    let s = trace.len() as f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = p[(i, j)] / s;
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
        p[(i, i)] = 1.0;
    }
    Ok(CoclusterMatrix {
        p,
        n_samples_used: trace.len(),
    })
}

/// Binder loss of a membership vector against co-clustering probabilities:
/// pairs clustered together pay `1 - p_ij`, pairs apart pay `p_ij`.
pub fn binder_loss(membership: &[u32], cocluster: &CoclusterMatrix) -> f64 {
    let n = membership.len();
    let mut loss = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let p = cocluster.p[(i, j)];
            if membership[i] == membership[j] {
                loss += 1.0 - p;
            } else {
                loss += p;
            }
        }
    }
    loss
}

/// The selected point estimate: index into the trace and its loss.
#[derive(Debug, Clone)]
pub struct DahlEstimate {
    pub index: usize,
    pub loss: f64,
}

/// Selects the traced partition minimizing the Binder loss; ties break
/// toward the earliest sample. The search space is the traced partitions
/// themselves.
pub fn dahl_point_estimate(
    trace: &[Vec<u32>],
    cocluster: &CoclusterMatrix,
) -> Result<DahlEstimate, PosteriorError> {
    if trace.is_empty() {
        return Err(PosteriorError::EmptyTrace);
    }
    let mut best = DahlEstimate {
        index: 0,
        loss: f64::INFINITY,
    };
    for (idx, membership) in trace.iter().enumerate() {
        let loss = binder_loss(membership, cocluster);
        if loss < best.loss {
            best = DahlEstimate { index: idx, loss };
        }
    }
    Ok(best)
}

/// Adjusted and raw Rand indices.
#[derive(Debug, Clone, Copy)]
pub struct AriResult {
    pub ari: f64,
    pub ri: f64,
}

fn choose2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Contingency-table adjusted Rand index. Identical partitions (including
/// the degenerate cases where the correction denominator vanishes) score 1.
pub fn adjusted_rand_index(a: &[u32], b: &[u32]) -> Result<AriResult, PosteriorError> {
    if a.len() != b.len() {
        return Err(PosteriorError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    let ka = a.iter().max().map_or(0, |&m| m as usize + 1);
    let kb = b.iter().max().map_or(0, |&m| m as usize + 1);
    let mut table = vec![vec![0.0_f64; kb]; ka];
    let mut row = vec![0.0_f64; ka];
    let mut col = vec![0.0_f64; kb];
    for i in 0..n {
        table[a[i] as usize][b[i] as usize] += 1.0;
        row[a[i] as usize] += 1.0;
        col[b[i] as usize] += 1.0;
    }
    let sum_cells: f64 = table
        .iter()
        .flat_map(|r| r.iter())
        .map(|&v| choose2(v))
        .sum();
    let sum_rows: f64 = row.iter().map(|&v| choose2(v)).sum();
    let sum_cols: f64 = col.iter().map(|&v| choose2(v)).sum();
    let total_pairs = choose2(n as f64);
    // RI = (agreements) / total: together in both plus apart in both.
    let b_term = total_pairs + sum_cells - sum_rows - sum_cols;
    let ri = (sum_cells + b_term) / total_pairs;
    let expected = sum_rows * sum_cols / total_pairs;
    let max_index = 0.5 * (sum_rows + sum_cols);
    let denom = max_index - expected;
    let ari = if denom.abs() < 1e-12 {
        1.0
    } else {
        (sum_cells - expected) / denom
    };
    Ok(AriResult { ari, ri })
}

/// Normalized information distance with natural-log entropies; 0 for
/// identical partitions, 1 for independent ones. When both partitions are
/// a single cluster both entropies vanish and the distance is 0 by
/// continuity.
pub fn normalized_information_distance(a: &[u32], b: &[u32]) -> Result<f64, PosteriorError> {
    if a.len() != b.len() {
        return Err(PosteriorError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len() as f64;
    let ka = a.iter().max().map_or(0, |&m| m as usize + 1);
    let kb = b.iter().max().map_or(0, |&m| m as usize + 1);
    let mut joint = vec![vec![0.0_f64; kb]; ka];
    for i in 0..a.len() {
        joint[a[i] as usize][b[i] as usize] += 1.0;
    }
    let pa: Vec<f64> = (0..ka)
        .map(|u| joint[u].iter().sum::<f64>() / n)
        .collect();
    let pb: Vec<f64> = (0..kb)
        .map(|v| (0..ka).map(|u| joint[u][v]).sum::<f64>() / n)
        .collect();
    let entropy = |p: &[f64]| -> f64 {
        -p.iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| v * v.ln())
            .sum::<f64>()
    };
    let ha = entropy(&pa);
    let hb = entropy(&pb);
    if ha + hb == 0.0 {
        // Both single-cluster: identical by definition.
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for u in 0..ka {
        for v in 0..kb {
            let puv = joint[u][v] / n;
            if puv > 0.0 {
                mi += puv * (puv / (pa[u] * pb[v])).ln();
            }
        }
    }
    Ok(1.0 - 2.0 * mi / (ha + hb))
}

/// Fraction of regions whose estimated label matches the truth under a
/// greedy maximum-overlap label matching.
pub fn label_accuracy(estimate: &[u32], truth: &[u32]) -> Result<f64, PosteriorError> {
    if estimate.len() != truth.len() {
        return Err(PosteriorError::LengthMismatch(estimate.len(), truth.len()));
    }
    let n = estimate.len();
    let ka = estimate.iter().max().map_or(0, |&m| m as usize + 1);
    let kb = truth.iter().max().map_or(0, |&m| m as usize + 1);
    let mut overlap = vec![vec![0usize; kb]; ka];
    for i in 0..n {
        overlap[estimate[i] as usize][truth[i] as usize] += 1;
    }
    let mut used_a = vec![false; ka];
    let mut used_b = vec![false; kb];
    let mut matched = 0usize;
    loop {
        let mut best: Option<(usize, usize, usize)> = None;
        for u in 0..ka {
            if used_a[u] {
                continue;
            }
            for v in 0..kb {
                if used_b[v] || overlap[u][v] == 0 {
                    continue;
                }
                if best.map_or(true, |(_, _, c)| overlap[u][v] > c) {
                    best = Some((u, v, overlap[u][v]));
                }
            }
        }
        match best {
            Some((u, v, c)) => {
                used_a[u] = true;
                used_b[v] = true;
                matched += c;
            }
            None => break,
        }
    }
    Ok(matched as f64 / n as f64)
}

/// Relabels clusters in descending size order; ties break toward the
/// cluster with the smallest member index.
pub fn relabel_by_size(membership: &[u32]) -> Vec<u32> {
    let k = membership.iter().max().map_or(0, |&m| m as usize + 1);
    let mut size = vec![0usize; k];
    let mut first = vec![usize::MAX; k];
    for (i, &l) in membership.iter().enumerate() {
        size[l as usize] += 1;
        first[l as usize] = first[l as usize].min(i);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| size[b].cmp(&size[a]).then(first[a].cmp(&first[b])));
    let mut new_label = vec![0u32; k];
    for (rank, &old) in order.iter().enumerate() {
        new_label[old] = rank as u32;
    }
    membership.iter().map(|&l| new_label[l as usize]).collect()
}
