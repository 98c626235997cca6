use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::num::Scalar;

use super::{AssignmentSource, ClusterAssignment};

/// Agglomerative clustering with complete (maximum pairwise Euclidean) linkage, cut at `k` clusters.
///
/// Each step merges the closest pair of active clusters; among equally close
/// pairs the one with the lowest `(i, j)` slot indices wins, where a cluster's
/// slot is the smallest point index it contains. Labels are numbered by each
/// cluster's smallest member.
pub fn agglomerative_complete<S: Scalar>(points: &Matrix<S>, k: usize) -> Result<ClusterAssignment> {
    let n = points.rows();
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k must be >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::TooFewPoints { needed: k, got: n });
    }
    if !points.is_finite() {
        return Err(Error::Diverged("non-finite points".into()));
    }
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = crate::matrix::sq_dist(points.row(i), points.row(j)).as_f64().sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    // slot_of[p]: slot of the cluster currently holding point p.
    let mut slot_of: Vec<usize> = (0..n).collect();
    let mut active: Vec<usize> = (0..n).collect();
    while active.len() > k {
        let mut best: Option<(f64, usize, usize)> = None;
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let d = dist[i * n + j];
                if best.is_none_or(|b| d < b.0) {
                    best = Some((d, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("at least two active clusters");
        for &o in &active {
            if o != i && o != j {
                let d = dist[i * n + o].max(dist[j * n + o]);
                dist[i * n + o] = d;
                dist[o * n + i] = d;
            }
        }
        for s in slot_of.iter_mut() {
            if *s == j {
                *s = i;
            }
        }
        active.retain(|&s| s != j);
    }
    // `active` is sorted, and each slot is its cluster's smallest member.
    let labels = slot_of
        .iter()
        .map(|s| active.binary_search(s).expect("active slot"))
        .collect();
    ClusterAssignment::new(labels, k, AssignmentSource::Hierarchical)
}
