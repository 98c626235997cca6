use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::losses::{soft_assign, ClusteringLayer, Metric};
use crate::networks::LatentSpec;

fn pts(rows: &[&[f64]]) -> Matrix<f64> {
    Matrix::from_rows(rows).unwrap()
}

fn assignment(labels: &[usize], k: usize) -> ClusterAssignment {
    ClusterAssignment::new(labels.to_vec(), k, AssignmentSource::Kmeans).unwrap()
}

/// Complete linkage recomputed from scratch at every merge: cluster distance is
/// the maximum over all member pairs, with the merge chosen among all pairs of
/// current clusters ordered by their smallest members.
fn brute_complete_linkage(points: &Matrix<f64>, k: usize) -> Vec<usize> {
    let n = points.rows();
    let d = |a: usize, b: usize| sq_dist_f(points.row(a), points.row(b)).sqrt();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while clusters.len() > k {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut m = 0.0f64;
                for &p in &clusters[a] {
                    for &q in &clusters[b] {
                        m = m.max(d(p, q));
                    }
                }
                if m < best.0 {
                    best = (m, a, b);
                }
            }
        }
        let moved = clusters.remove(best.2);
        clusters[best.1].extend(moved);
        clusters.sort_by_key(|c| *c.iter().min().unwrap());
    }
    let mut labels = vec![0; n];
    for (c, members) in clusters.iter().enumerate() {
        for &p in members {
            labels[p] = c;
        }
    }
    labels
}

fn sq_dist_f(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Adjusted Rand index from the contingency table.
fn ari(a: &[usize], b: &[usize]) -> f64 {
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |n: usize| (n * n.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&v| c2(v)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let expected = rows * cols / c2(a.len());
    let max = (rows + cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

fn blobs(seed: u64, per: usize, sigma: f64, gap: f64) -> (Matrix<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, centre) in [0.0, gap].into_iter().enumerate() {
        for _ in 0..per {
            rows.push(vec![centre + noise.sample(&mut rng), centre + noise.sample(&mut rng)]);
            labels.push(c);
        }
    }
    (Matrix::from_rows(&rows).unwrap(), labels)
}

#[test]
fn kmeans_recovers_blobs() {
    for seed in 0..5 {
        let (x, truth) = blobs(seed, 20, 0.1, 10.0);
        let r = kmeans(&x, 2, seed, &KMeansConfig::default()).unwrap();
        assert_eq!(ari(&r.assignment.labels, &truth), 1.0);
    }
}

#[test]
fn kmeans_k_equals_n() {
    let x = pts(&[&[0.0], &[1.0], &[5.0], &[9.0]]);
    let r = kmeans(&x, 4, 1, &KMeansConfig::default()).unwrap();
    assert_eq!(r.wcss, 0.0);
    let mut l = r.assignment.labels.clone();
    l.sort();
    assert_eq!(l, vec![0, 1, 2, 3]);
}

#[test]
fn kmeans_is_deterministic_and_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let a = kmeans(&x, 4, 9, &KMeansConfig::default()).unwrap();
    let b = kmeans(&x, 4, 9, &KMeansConfig::default()).unwrap();
    assert_eq!(a, b);
    for w in a.history.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
    assert!(matches!(kmeans(&x.select_rows(&[0]), 2, 0, &KMeansConfig::default()), Err(Error::TooFewPoints { .. })));
}

#[test]
fn complete_linkage_examples() {
    let x = pts(&[&[0.0], &[1.0], &[10.0], &[11.0]]);
    assert_eq!(agglomerative_complete(&x, 2).unwrap().labels, vec![0, 0, 1, 1]);
    assert_eq!(agglomerative_complete(&x, 4).unwrap().labels, vec![0, 1, 2, 3]);
    assert!(agglomerative_complete(&x, 5).is_err());
}

#[test]
fn complete_linkage_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let n = rng.random_range(2..=8);
        let k = rng.random_range(2..=n);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        assert_eq!(agglomerative_complete(&x, k).unwrap().labels, brute_complete_linkage(&x, k));
    }
}

#[test]
fn init_centroids_examples() {
    let z = LatentBatch {
        values: pts(&[&[0.0, 0.0], &[2.0, 0.0], &[50.0, 50.0]]),
        kind: LatentSpec::Vector(2),
    };
    let c = init_centroids(&z, 2).unwrap();
    assert_eq!(c.row(0), &[1.0, 0.0]);
    assert_eq!(c.row(1), &[50.0, 50.0]);
}

#[test]
fn init_centroids_ignore_row_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let z = LatentBatch { values: x.clone(), kind: LatentSpec::Vector(3) };
    let mut perm: Vec<usize> = (0..30).collect();
    perm.reverse();
    perm.swap(3, 17);
    let zp = LatentBatch { values: x.select_rows(&perm), kind: LatentSpec::Vector(3) };
    let mut a: Vec<Vec<f64>> = init_centroids(&z, 4).unwrap().iter_rows().map(|r| r.to_vec()).collect();
    let mut b: Vec<Vec<f64>> = init_centroids(&zp, 4).unwrap().iter_rows().map(|r| r.to_vec()).collect();
    a.sort_by(|p, q| p.partial_cmp(q).unwrap());
    b.sort_by(|p, q| p.partial_cmp(q).unwrap());
    for (p, q) in a.iter().zip(&b) {
        for (u, v) in p.iter().zip(q) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn hard_assign_ties_and_permutation() {
    let q = AssignmentMatrix {
        q: pts(&[&[0.8, 0.2], &[0.5, 0.5], &[0.1, 0.9]]),
        p: None,
    };
    assert_eq!(hard_assign(&q).labels, vec![0, 0, 1]);
    let swapped = AssignmentMatrix {
        q: pts(&[&[0.2, 0.8], &[0.3, 0.7], &[0.9, 0.1]]),
        p: None,
    };
    assert_eq!(hard_assign(&swapped).labels, vec![1, 1, 0]);
}

#[test]
fn validate_mapping() {
    let all_zero = assignment(&[0, 0, 0, 0], 3);
    assert_eq!(validate(Ok(&all_zero)), ValidityVerdict::DegenerateCluster);
    assert_eq!(validate(Err(&Error::NonFiniteGradient)), ValidityVerdict::Diverged);
    assert_eq!(validate(Err(&Error::NonFiniteLoss { iteration: 3 })), ValidityVerdict::Diverged);
    assert_eq!(validate(Err(&Error::DegenerateColumn(1))), ValidityVerdict::DegenerateCluster);
    assert_eq!(validate(Ok(&assignment(&[0, 1, 2, 0, 1, 2], 3))), ValidityVerdict::Valid);
    for v in [ValidityVerdict::Valid, ValidityVerdict::DegenerateCluster, ValidityVerdict::Diverged] {
        assert_eq!(ValidityVerdict::parse(v.tag()), Some(v));
    }
}

#[test]
fn silhouette_examples() {
    let x = pts(&[&[0.0], &[0.01], &[100.0], &[100.01]]);
    let a = assignment(&[0, 0, 1, 1], 2);
    assert!((silhouette(&x, &a, SilhouetteMetric::Euclidean).unwrap() - 1.0).abs() < 0.05);
    let same = pts(&[&[1.0], &[1.0], &[1.0], &[1.0]]);
    assert_eq!(silhouette(&same, &a, SilhouetteMetric::Euclidean).unwrap(), 0.0);
    let one = assignment(&[0, 0, 0, 0], 2);
    assert_eq!(silhouette(&x, &one, SilhouetteMetric::Euclidean), Err(Error::SingleCluster));
    // Singletons score 0; point 2 has a = 0.01, b = 99.99 and point 3 a = 0.01, b = 100.
    let singles = assignment(&[0, 1, 2, 2], 3);
    let sc = silhouette(&x, &singles, SilhouetteMetric::Euclidean).unwrap();
    let expect = ((99.99 - 0.01) / 99.99 + (100.0 - 0.01) / 100.0) / 4.0;
    assert!((sc - expect).abs() < 1e-9);
}

#[test]
fn davies_bouldin_examples() {
    let two = pts(&[&[0.0], &[1.0]]);
    assert_eq!(davies_bouldin(&two, &assignment(&[0, 1], 2)).unwrap(), 0.0);
    let x = pts(&[&[-0.5], &[0.5], &[9.5], &[10.5]]);
    let dbi = davies_bouldin(&x, &assignment(&[0, 0, 1, 1], 2)).unwrap();
    assert!((dbi - 0.1).abs() < 1e-12);
    let coincident = pts(&[&[-1.0], &[1.0], &[0.0], &[0.0]]);
    assert_eq!(
        davies_bouldin(&coincident, &assignment(&[0, 0, 1, 1], 2)),
        Err(Error::CoincidentCentroids(0, 1))
    );
}

fn labelled_points() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (4usize..20).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), n),
            prop::collection::vec(0usize..3, n),
        )
    })
}

proptest! {
    #[test]
    fn metric_ranges((rows, labels) in labelled_points()) {
        let x = Matrix::from_rows(&rows).unwrap();
        let a = assignment(&labels, 3);
        if let Ok(sc) = silhouette(&x, &a, SilhouetteMetric::Euclidean) {
            prop_assert!((-1.0..=1.0).contains(&sc));
        }
        if let Ok(dbi) = davies_bouldin(&x, &a) {
            prop_assert!(dbi >= 0.0);
        }
    }

    #[test]
    fn argmax_survives_monotone_rescaling(
        z in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..10),
        scale in 0.1f64..10.0,
    ) {
        // Scaling every latent and centroid scales every distance by the same factor.
        let cents = pts(&[&[1.0, 0.0], &[-1.0, 0.5], &[0.0, -2.0]]);
        let layer = ClusteringLayer::new(cents.clone(), Metric::Euclidean, 1.0, LatentSpec::Vector(2)).unwrap();
        let scaled = ClusteringLayer::new(cents.map(|v| v * scale), Metric::Euclidean, 1.0, LatentSpec::Vector(2)).unwrap();
        let zb = LatentBatch { values: Matrix::from_rows(&z).unwrap(), kind: LatentSpec::Vector(2) };
        let zs = LatentBatch { values: zb.values.map(|v| v * scale), kind: LatentSpec::Vector(2) };
        let a = hard_assign(&soft_assign(&layer, &zb).unwrap());
        let b = hard_assign(&soft_assign(&scaled, &zs).unwrap());
        prop_assert_eq!(a.labels, b.labels);
    }
}
