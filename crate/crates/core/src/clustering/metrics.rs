use crate::error::{shape_err, Error, Result};
use crate::losses::{cid_layout, CID_EPS};
use crate::matrix::{sq_dist, Matrix};
use crate::num::Scalar;

use super::{cluster_means, ClusterAssignment};

/// Point-to-point distance used by the silhouette coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SilhouetteMetric {
    Euclidean,
    /// Complexity-invariant distance over time-major `steps × channels` rows.
    Cid { steps: usize, channels: usize },
}

impl SilhouetteMetric {
    fn dist<S: Scalar>(self, a: &[S], b: &[S]) -> f64 {
        match self {
            SilhouetteMetric::Euclidean => sq_dist(a, b).as_f64().sqrt(),
            SilhouetteMetric::Cid { steps, channels } => {
                cid_layout(a, b, steps, channels, S::of(CID_EPS)).as_f64()
            }
        }
    }
}

fn check<S: Scalar>(points: &Matrix<S>, a: &ClusterAssignment) -> Result<Vec<usize>> {
    if points.rows() != a.len() {
        return Err(shape_err(points.rows(), a.len()));
    }
    let sizes = a.sizes();
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::SingleCluster);
    }
    Ok(sizes)
}

/// Mean silhouette `(b − a) / max(a, b)` over all points.
///
/// Points in singleton clusters contribute 0, as do points with `a = b = 0`.
/// Empty clusters are ignored when taking the nearest other cluster.
pub fn silhouette<S: Scalar>(points: &Matrix<S>, a: &ClusterAssignment, metric: SilhouetteMetric) -> Result<f64> {
    let sizes = check(points, a)?;
    let n = points.rows();
    let k = a.k;
    let mut total = 0.0;
    let mut sums = vec![0.0f64; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[a.labels[j]] += metric.dist(points.row(i), points.row(j));
            }
        }
        let own = a.labels[i];
        if sizes[own] < 2 {
            continue;
        }
        let ai = sums[own] / (sizes[own] - 1) as f64;
        let bi = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = ai.max(bi);
        if m > 0.0 {
            total += (bi - ai) / m;
        }
    }
    Ok(total / n as f64)
}

/// Davies–Bouldin index over the non-empty clusters; lower is better.
pub fn davies_bouldin<S: Scalar>(points: &Matrix<S>, a: &ClusterAssignment) -> Result<f64> {
    let sizes = check(points, a)?;
    let centroids = cluster_means(points, &a.labels, a.k);
    let present: Vec<usize> = (0..a.k).filter(|&c| sizes[c] > 0).collect();
    let mut scatter = vec![0.0f64; a.k];
    for (row, &l) in points.iter_rows().zip(&a.labels) {
        scatter[l] += sq_dist(row, centroids.row(l)).as_f64().sqrt();
    }
    for &c in &present {
        scatter[c] /= sizes[c] as f64;
    }
    let mut total = 0.0;
    for &i in &present {
        let mut worst = 0.0f64;
        for &j in &present {
            if i == j {
                continue;
            }
            let m = sq_dist(centroids.row(i), centroids.row(j)).as_f64().sqrt();
            if m == 0.0 {
                return Err(Error::CoincidentCentroids(i.min(j), i.max(j)));
            }
            worst = worst.max((scatter[i] + scatter[j]) / m);
        }
        total += worst;
    }
    Ok(total / present.len() as f64)
}
