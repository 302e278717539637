//! Group-recovery metrics for validating a connection matrix against known
//! related-sensor groups.
//!
//! For a target sensor, take the k strongest entries of its matrix row
//! (self included, ties broken by ascending index). Then
//! - `m1`: fraction of the top-k that belongs to the known group,
//! - `m2`: weight of the top-k ∩ group over the whole row weight,
//! - `m3`: weight of the whole group over the whole row weight.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRecoveryMetrics {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

/// Metrics for one target sensor. A zero row yields (0, 0, 0).
pub fn group_recovery_metrics(
    matrix: &Array2<f64>,
    target: usize,
    group: &[usize],
    k: usize,
) -> GroupRecoveryMetrics {
    debug_assert!(group.contains(&target));
    debug_assert_eq!(group.len(), k);
    let row = matrix.row(target);
    let row_sum: f64 = row.sum();
    if row_sum <= 0.0 {
        return GroupRecoveryMetrics {
            m1: 0.0,
            m2: 0.0,
            m3: 0.0,
        };
    }

    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    let top_k = &order[..k.min(order.len())];

    let in_group = |idx: usize| group.contains(&idx);
    let hits = top_k.iter().filter(|&&i| in_group(i)).count();
    let top_group_weight: f64 = top_k
        .iter()
        .filter(|&&i| in_group(i))
        .map(|&i| row[i])
        .sum();
    let group_weight: f64 = group.iter().map(|&i| row[i]).sum();

    GroupRecoveryMetrics {
        m1: hits as f64 / k as f64,
        m2: top_group_weight / row_sum,
        m3: group_weight / row_sum,
    }
}

/// Average the metrics over every member of every group, with `k` equal to
/// each group's size.
pub fn average_group_recovery(matrix: &Array2<f64>, groups: &[Vec<usize>]) -> GroupRecoveryMetrics {
    let mut sum = GroupRecoveryMetrics {
        m1: 0.0,
        m2: 0.0,
        m3: 0.0,
    };
    let mut count = 0usize;
    for group in groups {
        for &target in group {
            let m = group_recovery_metrics(matrix, target, group, group.len());
            sum.m1 += m.m1;
            sum.m2 += m.m2;
            sum.m3 += m.m3;
            count += 1;
        }
    }
    if count > 0 {
        sum.m1 /= count as f64;
        sum.m2 /= count as f64;
        sum.m3 /= count as f64;
    }
    sum
}
