use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UmapConfig {
    pub out_dim: usize,
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub epochs: usize,
    pub negatives: usize,
    pub seed: u64,
}

impl Default for UmapConfig {
    fn default() -> Self {
        UmapConfig {
            out_dim: 2,
            n_neighbors: 15,
            min_dist: 0.1,
            epochs: 200,
            negatives: 5,
            seed: 0,
        }
    }
}

/// Fitted layout: the training inputs and their embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct UmapState<S> {
    pub train: Matrix<S>,
    pub embedding: Matrix<S>,
    pub n_neighbors: usize,
}

/// Sparse symmetric fuzzy membership graph as `(i, j, w)` with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl Membership {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.edges
            .iter()
            .find(|e| e.0 == a && e.1 == b)
            .map_or(0.0, |e| e.2)
    }
}

/// The `k` nearest other points of every point as `(index, distance)`, closest first.
pub fn knn<S: Scalar>(points: &Matrix<S>, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = points.rows();
    (0..n)
        .map(|i| {
            let mut d: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, sq_dist(points.row(i), points.row(j)).as_f64().sqrt()))
                .collect();
            d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            d.truncate(k);
            d
        })
        .collect()
}

/// Bandwidth `σ` with `Σ_j exp(−max(0, d_j − ρ)/σ) = log₂ k` found by bisection,
/// where `ρ` is the smallest distance and `k = dists.len()`.
pub fn smooth_knn_sigma(dists: &[f64]) -> (f64, f64) {
    let rho = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let target = (dists.len() as f64).log2();
    let total = |sigma: f64| -> f64 { dists.iter().map(|&d| (-(d - rho).max(0.0) / sigma).exp()).sum() };
    let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
    for _ in 0..200 {
        let s = total(mid);
        if (s - target).abs() < 1e-12 {
            break;
        }
        if s > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
        }
    }
    (mid, rho)
}

/// Directed memberships from the kNN graph, symmetrised by fuzzy union `a + b − ab`.
pub fn fuzzy_membership<S: Scalar>(points: &Matrix<S>, n_neighbors: usize) -> Membership {
    let n = points.rows();
    let nn = knn(points, n_neighbors);
    let mut directed = std::collections::BTreeMap::<(usize, usize), f64>::new();
    for (i, row) in nn.iter().enumerate() {
        let dists: Vec<f64> = row.iter().map(|e| e.1).collect();
        let (sigma, rho) = smooth_knn_sigma(&dists);
        for &(j, d) in row {
            directed.insert((i, j), (-(d - rho).max(0.0) / sigma).exp());
        }
    }
    let mut edges = Vec::new();
    for (&(i, j), &w) in &directed {
        if i < j {
            let back = directed.get(&(j, i)).copied().unwrap_or(0.0);
            edges.push((i, j, w + back - w * back));
        } else if !directed.contains_key(&(j, i)) {
            edges.push((j, i, w));
        }
    }
    edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    Membership { n, edges }
}

/// Least-squares fit of `1 / (1 + a x^{2b})` to the offset-exponential target
/// curve determined by `min_dist` (spread 1).
pub fn fit_ab(min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist)).exp() })
        .collect();
    let residuals = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };
    let (mut a, mut b, mut lambda) = (1.0f64, 1.0f64, 1e-3);
    let mut cost = residuals(a, b);
    for _ in 0..500 {
        // Gauss-Newton normal equations with Levenberg damping.
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x == 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let g = 1.0 / (1.0 + a * p);
            let r = g - y;
            let da = -p * g * g;
            let db = -a * p * 2.0 * x.ln() * g * g;
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let (m00, m11) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
        let det = m00 * m11 - jab * jab;
        if det.abs() < 1e-300 {
            break;
        }
        let step_a = -(m11 * ga - jab * gb) / det;
        let step_b = -(m00 * gb - jab * ga) / det;
        let (na, nb) = (a + step_a, b + step_b);
        let next = if na > 0.0 && nb > 0.0 { residuals(na, nb) } else { f64::INFINITY };
        if next < cost {
            let done = (cost - next) < 1e-15 * cost.max(1e-300);
            a = na;
            b = nb;
            cost = next;
            lambda *= 0.3;
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (a, b)
}

fn clip(v: f64) -> f64 {
    v.clamp(-4.0, 4.0)
}

pub(crate) fn fit<S: Scalar>(points: &Matrix<S>, cfg: &UmapConfig) -> Result<UmapState<S>> {
    let n = points.rows();
    if n <= cfg.n_neighbors {
        return Err(Error::TooFewPoints {
            needed: cfg.n_neighbors + 1,
            got: n,
        });
    }
    if cfg.n_neighbors < 2 || cfg.out_dim == 0 {
        return Err(Error::InvalidConfig("UMAP needs n_neighbors >= 2 and out_dim >= 1".into()));
    }
    if !points.is_finite() {
        return Err(Error::Diverged("non-finite points".into()));
    }
    let graph = fuzzy_membership(points, cfg.n_neighbors);
    let (a, b) = fit_ab(cfg.min_dist);
    let dim = cfg.out_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut y: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-10.0..=10.0)).collect();

    let epochs = cfg.epochs.max(1);
    let max_w = graph.edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let edges: Vec<(usize, usize, f64)> = graph
        .edges
        .iter()
        .copied()
        .filter(|e| e.2 >= max_w / epochs as f64)
        .collect();
    // Each edge is sampled once every `max_w / w` epochs.
    let period: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
    let mut next_at = period.clone();

    let mut delta = vec![0.0f64; dim];
    for epoch in 0..epochs {
        let alpha = 1.0 - epoch as f64 / epochs as f64;
        let now = (epoch + 1) as f64;
        for (e, &(i, j, _)) in edges.iter().enumerate() {
            if next_at[e] > now {
                continue;
            }
            let d2 = dist2(&y, i, j, dim);
            let coef = if d2 > 0.0 {
                -2.0 * a * b * d2.powf(b - 1.0) / (1.0 + a * d2.powf(b))
            } else {
                0.0
            };
            for c in 0..dim {
                delta[c] = clip(coef * (y[i * dim + c] - y[j * dim + c])) * alpha;
            }
            for c in 0..dim {
                y[i * dim + c] += delta[c];
                y[j * dim + c] -= delta[c];
            }
            next_at[e] += period[e];

            for _ in 0..cfg.negatives {
                let k = rng.random_range(0..n);
                if k == i {
                    continue;
                }
                let d2 = dist2(&y, i, k, dim);
                let coef = if d2 > 0.0 {
                    2.0 * b / ((0.001 + d2) * (1.0 + a * d2.powf(b)))
                } else {
                    0.0
                };
                for c in 0..dim {
                    let g = if coef > 0.0 {
                        clip(coef * (y[i * dim + c] - y[k * dim + c]))
                    } else {
                        4.0
                    };
                    y[i * dim + c] += g * alpha;
                }
            }
        }
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::Diverged("non-finite UMAP layout".into()));
    }
    Ok(UmapState {
        train: points.clone(),
        embedding: Matrix::from_vec(n, dim, y.into_iter().map(S::of).collect())?,
        n_neighbors: cfg.n_neighbors,
    })
}

fn dist2(y: &[f64], i: usize, j: usize, dim: usize) -> f64 {
    (0..dim).map(|c| (y[i * dim + c] - y[j * dim + c]).powi(2)).sum()
}

/// Places new points at the membership-weighted mean of their nearest
/// training points' embeddings.
pub(crate) fn transform<S: Scalar>(st: &UmapState<S>, points: &Matrix<S>) -> Result<Matrix<S>> {
    if points.cols() != st.train.cols() {
        return Err(shape_err(st.train.cols(), points.cols()));
    }
    let dim = st.embedding.cols();
    let k = st.n_neighbors.min(st.train.rows());
    let mut out = Matrix::zeros(points.rows(), dim);
    for (i, x) in points.iter_rows().enumerate() {
        let mut d: Vec<(usize, f64)> = st
            .train
            .iter_rows()
            .enumerate()
            .map(|(j, t)| (j, sq_dist(x, t).as_f64().sqrt()))
            .collect();
        d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        d.truncate(k);
        let dists: Vec<f64> = d.iter().map(|e| e.1).collect();
        let (sigma, rho) = smooth_knn_sigma(&dists);
        let w: Vec<f64> = dists.iter().map(|&v| (-(v - rho).max(0.0) / sigma).exp()).collect();
        let total: f64 = w.iter().sum();
        for c in 0..dim {
            let v: f64 = d
                .iter()
                .zip(&w)
                .map(|(&(j, _), &wj)| wj * st.embedding.get(j, c).as_f64())
                .sum::<f64>()
                / total;
            out.set(i, c, S::of(v));
        }
    }
    Ok(out)
}
