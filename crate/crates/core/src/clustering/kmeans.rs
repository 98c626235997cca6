use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::num::Scalar;

use super::{cluster_means, AssignmentSource, ClusterAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Convergence threshold on total squared centroid movement, relative to
    /// the mean per-feature variance of the data.
    pub tol: f64,
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            max_iter: 300,
            tol: 1e-4,
            restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<S> {
    pub assignment: ClusterAssignment,
    pub centroids: Matrix<S>,
    pub wcss: S,
    /// Within-cluster sum of squares after every Lloyd iteration of the winning restart.
    pub history: Vec<S>,
}

/// Lloyd's algorithm with k-means++ seeding; keeps the restart with the lowest WCSS.
pub fn kmeans<S: Scalar>(points: &Matrix<S>, k: usize, seed: u64, cfg: &KMeansConfig) -> Result<KMeansResult<S>> {
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
    let means = points.column_means();
    let mut var = S::zero();
    for row in points.iter_rows() {
        var += sq_dist(row, &means);
    }
    let tol = S::of(cfg.tol) * var / S::of_usize(n * points.cols().max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult<S>> = None;
    for _ in 0..cfg.restarts.max(1) {
        let init = plus_plus(points, k, &mut rng);
        let run = lloyd(points, init, cfg.max_iter, tol);
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn nearest<S: Scalar>(x: &[S], centroids: &Matrix<S>) -> (usize, S) {
    let mut best = (0, sq_dist(x, centroids.row(0)));
    for j in 1..centroids.rows() {
        let d = sq_dist(x, centroids.row(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus<S: Scalar>(points: &Matrix<S>, k: usize, rng: &mut ChaCha8Rng) -> Matrix<S> {
    let n = points.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])).as_f64())
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        } else {
            // Every point coincides with a chosen centre; fall back to an unused index.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)).as_f64());
        }
    }
    points.select_rows(&chosen)
}

fn lloyd<S: Scalar>(points: &Matrix<S>, mut centroids: Matrix<S>, max_iter: usize, tol: S) -> KMeansResult<S> {
    let n = points.rows();
    let k = centroids.rows();
    let mut labels = vec![0usize; n];
    let mut history = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut dists = vec![S::zero(); n];
        for i in 0..n {
            (labels[i], dists[i]) = nearest(points.row(i), &centroids);
        }
        repair_empty(&mut labels, &mut dists, k);
        let next = cluster_means(points, &labels, k);
        let shift = (0..k).fold(S::zero(), |a, j| a + sq_dist(next.row(j), centroids.row(j)));
        centroids = next;
        history.push(wcss(points, &labels, &centroids));
        if shift <= tol {
            break;
        }
    }
    let wcss = *history.last().expect("at least one iteration");
    KMeansResult {
        assignment: ClusterAssignment {
            labels,
            k,
            source: AssignmentSource::Kmeans,
        },
        centroids,
        wcss,
        history,
    }
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty<S: Scalar>(labels: &mut [usize], dists: &mut [S], k: usize) {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let far = (0..labels.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .fold(None, |acc: Option<usize>, i| match acc {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            });
        if let Some(i) = far {
            sizes[labels[i]] -= 1;
            labels[i] = j;
            dists[i] = S::zero();
            sizes[j] = 1;
        }
    }
}

pub(crate) fn wcss<S: Scalar>(points: &Matrix<S>, labels: &[usize], centroids: &Matrix<S>) -> S {
    points
        .iter_rows()
        .zip(labels)
        .fold(S::zero(), |a, (row, &l)| a + sq_dist(row, centroids.row(l)))
}
