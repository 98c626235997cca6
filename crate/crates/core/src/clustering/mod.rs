//! Flat and hierarchical clustering of latent points, hard assignment from
//! soft assignments, internal validity metrics and run verdicts.

mod agglomerative;
mod kmeans;
mod metrics;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::losses::AssignmentMatrix;
use crate::matrix::Matrix;
use crate::networks::LatentBatch;
use crate::num::Scalar;

pub use agglomerative::agglomerative_complete;
pub use kmeans::{kmeans, KMeansConfig, KMeansResult};
pub use metrics::{davies_bouldin, silhouette, SilhouetteMetric};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentSource {
    Kmeans,
    Layer,
    Hierarchical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    pub source: AssignmentSource,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>, k: usize, source: AssignmentSource) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidConfig(format!("label {bad} out of range for k = {k}")));
        }
        Ok(ClusterAssignment { labels, k, source })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    /// Writes `id,label` rows.
    pub fn write_csv<W: Write>(&self, ids: &[String], w: W) -> Result<()> {
        if ids.len() != self.labels.len() {
            return Err(shape_err(self.labels.len(), ids.len()));
        }
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wtr.write_record(["id", "label"]).map_err(io)?;
        for (id, l) in ids.iter().zip(&self.labels) {
            wtr.write_record([id.as_str(), &l.to_string()]).map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityVerdict {
    Valid,
    DegenerateCluster,
    Diverged,
}

impl ValidityVerdict {
    pub fn tag(self) -> &'static str {
        match self {
            ValidityVerdict::Valid => "valid",
            ValidityVerdict::DegenerateCluster => "degenerate_cluster",
            ValidityVerdict::Diverged => "diverged",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Valid, Self::DegenerateCluster, Self::Diverged]
            .into_iter()
            .find(|v| v.tag() == s)
    }

    pub fn is_valid(self) -> bool {
        self == ValidityVerdict::Valid
    }
}

/// Maps a clustering outcome to exactly one verdict.
///
/// Errors reporting collapsed clusters map to `DegenerateCluster`; every other
/// failure (non-finite values first among them) maps to `Diverged`. A
/// successful assignment is degenerate when one cluster holds every point.
pub fn validate(outcome: std::result::Result<&ClusterAssignment, &Error>) -> ValidityVerdict {
    match outcome {
        Err(Error::DegenerateColumn(_) | Error::SingleCluster | Error::CoincidentCentroids(..)) => {
            ValidityVerdict::DegenerateCluster
        }
        Err(_) => ValidityVerdict::Diverged,
        Ok(a) if a.sizes().iter().any(|&s| s == a.len()) => ValidityVerdict::DegenerateCluster,
        Ok(_) => ValidityVerdict::Valid,
    }
}

/// Row-wise argmax of `q`, ties to the lowest cluster index.
pub fn hard_assign<S: Scalar>(q: &AssignmentMatrix<S>) -> ClusterAssignment {
    let labels = q
        .q
        .iter_rows()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    ClusterAssignment {
        labels,
        k: q.k(),
        source: AssignmentSource::Layer,
    }
}

/// Per-cluster means of `points` under `labels`; empty clusters yield zeros.
pub fn cluster_means<S: Scalar>(points: &Matrix<S>, labels: &[usize], k: usize) -> Matrix<S> {
    let mut sums = Matrix::zeros(k, points.cols());
    let mut counts = vec![0usize; k];
    for (row, &l) in points.iter_rows().zip(labels) {
        counts[l] += 1;
        for (s, &v) in sums.row_mut(l).iter_mut().zip(row) {
            *s += v;
        }
    }
    for (j, &c) in counts.iter().enumerate() {
        if c > 0 {
            let inv = S::one() / S::of_usize(c);
            sums.row_mut(j).iter_mut().for_each(|v| *v *= inv);
        }
    }
    sums
}

/// Complete-linkage clustering of the flattened latents, then per-cluster means.
pub fn init_centroids<S: Scalar>(z: &LatentBatch<S>, k: usize) -> Result<Matrix<S>> {
    let a = agglomerative_complete(&z.values, k)?;
    Ok(cluster_means(&z.values, &a.labels, k))
}

#[cfg(test)]
mod tests;
