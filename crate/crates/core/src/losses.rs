//! Pretext and clustering objectives, Student's t soft assignments, the
//! sharpened target distribution and the two latent-space metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tensor, Var};
use crate::error::{shape_err, Error, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::networks::{Autoencoder, Graph, LatentBatch, LatentHead, LatentSpec, LayerwiseOutputs};
use crate::num::Scalar;

/// Guard used by the complexity-invariant distance.
pub const CID_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    Euclidean,
    Cid,
}

impl Metric {
    pub fn tag(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Cid => "cid",
        }
    }
}

/// Soft assignments `q` and, once computed, the target distribution `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix<S> {
    pub q: Matrix<S>,
    pub p: Option<Matrix<S>>,
}

impl<S: Scalar> AssignmentMatrix<S> {
    pub fn k(&self) -> usize {
        self.q.cols()
    }
}

/// Learnable centroids in latent space with the metric and kernel degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringLayer<S> {
    pub centroids: Matrix<S>,
    pub metric: Metric,
    pub alpha: S,
    pub latent: LatentSpec,
}

impl<S: Scalar> ClusteringLayer<S> {
    /// Validates `k ≥ 2`, finiteness and pairwise-distinct centroids.
    pub fn new(centroids: Matrix<S>, metric: Metric, alpha: S, latent: LatentSpec) -> Result<Self> {
        let k = centroids.rows();
        if k < 2 {
            return Err(Error::InvalidConfig(format!("clustering layer needs k >= 2, got {k}")));
        }
        if centroids.cols() != latent.flat_len() {
            return Err(shape_err(latent.flat_len(), centroids.cols()));
        }
        if !centroids.is_finite() {
            return Err(Error::Diverged("non-finite centroid".into()));
        }
        if !(alpha > S::zero()) {
            return Err(Error::InvalidConfig("alpha must be positive".into()));
        }
        for i in 0..k {
            for j in i + 1..k {
                if centroids.row(i) == centroids.row(j) {
                    return Err(Error::CoincidentCentroids(i, j));
                }
            }
        }
        Ok(ClusteringLayer {
            centroids,
            metric,
            alpha,
            latent,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    /// Distance between two flattened latent points under this layer's metric.
    pub fn distance(&self, a: &[S], b: &[S]) -> S {
        match self.metric {
            Metric::Euclidean => sq_dist(a, b).sqrt(),
            Metric::Cid => {
                let (steps, channels) = self.latent.series_layout();
                cid_layout(a, b, steps, channels, S::of(CID_EPS))
            }
        }
    }
}

/// `(1/N) Σ_i ‖x_i − x′_i‖²`.
pub fn recon_loss<S: Scalar>(x: &Matrix<S>, recon: &Matrix<S>) -> Result<S> {
    if x.rows() != recon.rows() || x.cols() != recon.cols() {
        return Err(shape_err(
            format!("{}x{}", x.rows(), x.cols()),
            format!("{}x{}", recon.rows(), recon.cols()),
        ));
    }
    if x.rows() == 0 {
        return Ok(S::zero());
    }
    Ok(sq_dist(x.as_slice(), recon.as_slice()) / S::of_usize(x.rows()))
}

/// `(1/N) Σ_i Σ_l (1/|z_i^l|) ‖z_i^l − ẑ_i^l‖²` over paired layer outputs.
pub fn layerwise_recon_loss<S: Scalar>(lo: &LayerwiseOutputs<S>) -> Result<S> {
    if lo.encoder_outputs.len() != lo.decoder_outputs.len() {
        return Err(shape_err(lo.encoder_outputs.len(), lo.decoder_outputs.len()));
    }
    let mut total = S::zero();
    for (z, zh) in lo.encoder_outputs.iter().zip(&lo.decoder_outputs) {
        if z.shape != zh.shape {
            return Err(shape_err(format!("{:?}", z.shape), format!("{:?}", zh.shape)));
        }
        let n = z.shape[0];
        let per_sample = z.len() / n;
        total += sq_dist(&z.data, &zh.data) / S::of_usize(n * per_sample);
    }
    Ok(total)
}

/// Negated single-sample ELBO estimate, summed over the batch.
pub fn elbo_loss<S: Scalar>(ae: &Autoencoder<S>, x: &Matrix<S>, seed: u64) -> Result<S> {
    ae.objective_value(x, &Objective::Elbo { seed })
}

/// `½ Σ (μ² + σ² − 1 − ln σ²)`.
pub fn gaussian_kl<S: Scalar>(mu: &[S], logvar: &[S]) -> S {
    let half = S::of(0.5);
    mu.iter()
        .zip(logvar)
        .fold(S::zero(), |acc, (&m, &lv)| acc + half * (m * m + lv.exp() - S::one() - lv))
}

/// Row-normalised Student's t kernel, `q_ij ∝ (1 + d_ij/α)^(−(α+1)/2)`,
/// evaluated in log space.
pub(crate) fn student_t_rows<S: Scalar>(dist: &[S], k: usize, alpha: S) -> Vec<S> {
    let e = (alpha + S::one()) / S::of(2.0);
    let mut out = Vec::with_capacity(dist.len());
    for row in dist.chunks(k) {
        let logs: Vec<S> = row.iter().map(|&d| -e * (S::one() + d / alpha).ln()).collect();
        let m = logs.iter().fold(S::neg_infinity(), |a, &b| a.max(b));
        let u: Vec<S> = logs.iter().map(|&l| (l - m).exp()).collect();
        let total = u.iter().fold(S::zero(), |a, &b| a + b);
        out.extend(u.iter().map(|&v| v / total));
    }
    out
}

pub(crate) fn kl_flat<S: Scalar>(q: &[S], p: &[S]) -> S {
    p.iter().zip(q).fold(S::zero(), |acc, (&pv, &qv)| {
        if pv > S::zero() {
            acc + pv * (pv / qv).ln()
        } else {
            acc
        }
    })
}

fn distance_matrix<S: Scalar>(layer: &ClusteringLayer<S>, z: &Matrix<S>) -> Vec<S> {
    let mut d = Vec::with_capacity(z.rows() * layer.k());
    for zi in z.iter_rows() {
        for w in layer.centroids.iter_rows() {
            d.push(layer.distance(zi, w));
        }
    }
    d
}

/// Student's t soft assignment of every latent point to every centroid.
pub fn soft_assign<S: Scalar>(layer: &ClusteringLayer<S>, z: &LatentBatch<S>) -> Result<AssignmentMatrix<S>> {
    if z.values.cols() != layer.centroids.cols() {
        return Err(shape_err(layer.centroids.cols(), z.values.cols()));
    }
    let d = distance_matrix(layer, &z.values);
    let q = student_t_rows(&d, layer.k(), layer.alpha);
    if !crate::num::all_finite(&q) {
        return Err(Error::NonFiniteAssignment);
    }
    Ok(AssignmentMatrix {
        q: Matrix::from_vec(z.len(), layer.k(), q)?,
        p: None,
    })
}

/// `p_ij = (q_ij² / f_j) / Σ_j′ (q_ij′² / f_j′)` with `f_j = Σ_i q_ij`.
pub fn target_distribution<S: Scalar>(a: &AssignmentMatrix<S>) -> Result<AssignmentMatrix<S>> {
    let q = &a.q;
    let k = q.cols();
    let mut f = vec![S::zero(); k];
    for row in q.iter_rows() {
        for (fj, &v) in f.iter_mut().zip(row) {
            *fj += v;
        }
    }
    if let Some(j) = f.iter().position(|&v| !(v > S::zero())) {
        return Err(Error::DegenerateColumn(j));
    }
    let mut p = Matrix::zeros(q.rows(), k);
    for i in 0..q.rows() {
        let w: Vec<S> = q.row(i).iter().zip(&f).map(|(&v, &fj)| v * v / fj).collect();
        let total = w.iter().fold(S::zero(), |acc, &v| acc + v);
        for (dst, v) in p.row_mut(i).iter_mut().zip(w) {
            *dst = v / total;
        }
    }
    Ok(AssignmentMatrix {
        q: q.clone(),
        p: Some(p),
    })
}

/// `Σ_i Σ_j p_ij ln(p_ij / q_ij)`, with `0 · ln 0 = 0`.
pub fn kl_divergence<S: Scalar>(q: &Matrix<S>, p: &Matrix<S>) -> S {
    kl_flat(q.as_slice(), p.as_slice())
}

/// Reconstruction loss plus `KL(P ‖ Q)`.
pub fn clustering_loss<S: Scalar>(x: &Matrix<S>, recon: &Matrix<S>, q: &Matrix<S>, p: &Matrix<S>) -> Result<S> {
    if q.rows() != p.rows() || q.cols() != p.cols() {
        return Err(shape_err(
            format!("{}x{}", q.rows(), q.cols()),
            format!("{}x{}", p.rows(), p.cols()),
        ));
    }
    Ok(recon_loss(x, recon)? + kl_divergence(q, p))
}

pub fn euclid<S: Scalar>(a: &[S], b: &[S]) -> Result<S> {
    if a.len() != b.len() {
        return Err(shape_err(a.len(), b.len()));
    }
    Ok(sq_dist(a, b).sqrt())
}

/// Complexity estimate `√Σ_t ‖x_{t+1} − x_t‖²` of a time-major sequence.
pub fn complexity<S: Scalar>(x: &[S], steps: usize, channels: usize) -> S {
    let mut acc = S::zero();
    for t in 0..steps.saturating_sub(1) {
        for c in 0..channels {
            let d = x[(t + 1) * channels + c] - x[t * channels + c];
            acc += d * d;
        }
    }
    acc.sqrt()
}

fn complexity_factor<S: Scalar>(ca: S, cb: S, eps: S) -> S {
    if ca < eps && cb < eps {
        S::one()
    } else {
        ca.max(cb) / ca.min(cb).max(eps)
    }
}

/// Complexity-invariant distance between two scalar sequences.
pub fn cid<S: Scalar>(a: &[S], b: &[S]) -> Result<S> {
    if a.len() != b.len() {
        return Err(shape_err(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(shape_err("length >= 2", a.len()));
    }
    Ok(cid_layout(a, b, a.len(), 1, S::of(CID_EPS)))
}

/// Complexity-invariant distance between two time-major multichannel sequences.
pub fn cid_series<S: Scalar>(a: &[S], b: &[S], steps: usize, channels: usize) -> Result<S> {
    if a.len() != b.len() || a.len() != steps * channels {
        return Err(shape_err(steps * channels, a.len().max(b.len())));
    }
    Ok(cid_layout(a, b, steps, channels, S::of(CID_EPS)))
}

pub(crate) fn cid_layout<S: Scalar>(a: &[S], b: &[S], steps: usize, channels: usize, eps: S) -> S {
    let ed = sq_dist(a, b).sqrt();
    let ca = complexity(a, steps, channels);
    let cb = complexity(b, steps, channels);
    ed * complexity_factor(ca, cb, eps)
}

/// Accumulates `∂CE/∂x · scale` into `out`.
fn complexity_grad_acc<S: Scalar>(x: &[S], steps: usize, channels: usize, ce: S, scale: S, out: &mut [S]) {
    if ce <= S::zero() {
        return;
    }
    let f = scale / ce;
    for t in 0..steps.saturating_sub(1) {
        for c in 0..channels {
            let d = (x[(t + 1) * channels + c] - x[t * channels + c]) * f;
            out[(t + 1) * channels + c] += d;
            out[t * channels + c] -= d;
        }
    }
}

/// Adds `g · ∂cid(a, b)/∂a` into `ga` and `g · ∂cid(a, b)/∂b` into `gb`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn cid_grad_acc<S: Scalar>(
    a: &[S],
    b: &[S],
    steps: usize,
    channels: usize,
    eps: S,
    g: S,
    ga: &mut [S],
    gb: &mut [S],
) {
    let ed = sq_dist(a, b).sqrt();
    let ca = complexity(a, steps, channels);
    let cb = complexity(b, steps, channels);
    let factor = complexity_factor(ca, cb, eps);
    if ed > S::zero() {
        let f = g * factor / ed;
        for i in 0..a.len() {
            let d = (a[i] - b[i]) * f;
            ga[i] += d;
            gb[i] -= d;
        }
    }
    if ca < eps && cb < eps {
        return;
    }
    // factor = hi / max(lo, eps): derivative flows to `hi` always, to `lo` only above eps.
    let (hi_is_a, hi, lo) = if ca >= cb { (true, ca, cb) } else { (false, cb, ca) };
    let den = lo.max(eps);
    let (hi_x, lo_x, hi_g, lo_g): (&[S], &[S], &mut [S], &mut [S]) = if hi_is_a {
        (a, b, ga, gb)
    } else {
        (b, a, gb, ga)
    };
    complexity_grad_acc(hi_x, steps, channels, hi, g * ed / den, hi_g);
    if lo > eps {
        complexity_grad_acc(lo_x, steps, channels, lo, -g * ed * hi / (den * den), lo_g);
    }
}

/// A differentiable training objective over an autoencoder's outputs.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a, S> {
    /// Mean squared reconstruction error.
    Reconstruction,
    /// Size-normalised reconstruction error summed over mirrored layer pairs.
    Layerwise,
    /// Negated ELBO with one reparameterised sample drawn from `seed`.
    Elbo { seed: u64 },
    /// Reconstruction plus `KL(P ‖ Q)` against a fixed target distribution.
    Clustering {
        layer: &'a ClusteringLayer<S>,
        target: &'a Matrix<S>,
    },
}

pub(crate) fn objective_on_graph<S: Scalar>(
    g: &mut Graph<'_, S>,
    x: Var,
    batch: &Matrix<S>,
    objective: &Objective<'_, S>,
) -> Result<(Var, Option<Var>)> {
    let n = batch.rows();
    let inv_n = S::one() / S::of_usize(n);
    match objective {
        Objective::Reconstruction => {
            let enc = g.encode(x);
            let dec = g.decode(enc.latent);
            Ok((g.tape.squared_distance(dec.recon, x, inv_n), None))
        }
        Objective::Layerwise => {
            let (enc, dec) = g.layerwise(x)?;
            let mut root: Option<Var> = None;
            for (&z, &zh) in enc.iter().zip(&dec) {
                let per_sample = g.tape.value(z).len() / n;
                let term = g
                    .tape
                    .squared_distance(z, zh, S::one() / S::of_usize(n * per_sample));
                root = Some(match root {
                    Some(r) => g.tape.add(r, term),
                    None => term,
                });
            }
            Ok((root.expect("at least one layer pair"), None))
        }
        Objective::Elbo { seed } => {
            let ae = g.ae;
            if !ae.arch().supports_gaussian() {
                return Err(Error::UnsupportedArchitecture {
                    arch: ae.arch().to_string(),
                    what: "the ELBO objective".into(),
                });
            }
            if ae.head() != LatentHead::Gaussian {
                return Err(Error::InvalidConfig("ELBO needs a Gaussian latent head".into()));
            }
            let enc = g.encode(x);
            let logvar = enc.logvar.expect("gaussian head emits a log-variance");
            let d = ae.latent_dim();
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let eps: Vec<S> = (0..n * d)
                .map(|_| S::of(StandardNormal.sample(&mut rng)))
                .collect();
            let eps = g.tape.constant(Tensor::new(vec![n, d], eps));
            let half = g.tape.scale(logvar, S::of(0.5));
            let std = g.tape.exp(half);
            let noise = g.tape.mul(std, eps);
            let z = g.tape.add(enc.latent, noise);
            let dec = g.decode(z);
            let rec = g.tape.squared_distance(dec.recon, x, S::one());
            let kl = g.tape.gaussian_kl(enc.latent, logvar);
            Ok((g.tape.add(rec, kl), None))
        }
        Objective::Clustering { layer, target } => {
            if target.rows() != n || target.cols() != layer.k() {
                return Err(shape_err(
                    format!("{n}x{}", layer.k()),
                    format!("{}x{}", target.rows(), target.cols()),
                ));
            }
            let enc = g.encode(x);
            let width = g.tape.shape(enc.latent)[1];
            if width != layer.centroids.cols() {
                return Err(shape_err(layer.centroids.cols(), width));
            }
            let dec = g.decode(enc.latent);
            let rec = g.tape.squared_distance(dec.recon, x, inv_n);
            let cents = Tensor::new(
                vec![layer.k(), layer.centroids.cols()],
                layer.centroids.as_slice().to_vec(),
            );
            let w = if g.trainable {
                g.tape.param(cents)
            } else {
                g.tape.constant(cents)
            };
            let dist = match layer.metric {
                Metric::Euclidean => g.tape.pairwise_euclid(enc.latent, w),
                Metric::Cid => {
                    let (steps, channels) = layer.latent.series_layout();
                    g.tape
                        .pairwise_cid(enc.latent, w, steps, channels, S::of(CID_EPS))
                }
            };
            let q = g.tape.student_t(dist, layer.alpha);
            let kl = g.tape.kl_to_target(q, target.as_slice().to_vec());
            Ok((g.tape.add(rec, kl), Some(w)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    fn layer(cents: &[&[f64]], metric: Metric) -> ClusteringLayer<f64> {
        let c = m(cents);
        let d = c.cols();
        ClusteringLayer::new(c, metric, 1.0, LatentSpec::Vector(d)).unwrap()
    }

    fn batch(rows: &[&[f64]]) -> LatentBatch<f64> {
        let v = m(rows);
        let d = v.cols();
        LatentBatch {
            values: v,
            kind: LatentSpec::Vector(d),
        }
    }

    #[test]
    fn recon_loss_examples() {
        let x = m(&[&[1.0, 2.0]]);
        assert_eq!(recon_loss(&x, &x).unwrap(), 0.0);
        assert_eq!(recon_loss(&x, &m(&[&[1.0, 0.0]])).unwrap(), 4.0);
        let x2 = m(&[&[1.0, 2.0], &[1.0, 2.0]]);
        let r2 = m(&[&[1.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(recon_loss(&x2, &r2).unwrap(), 4.0);
        assert!(matches!(
            recon_loss(&x, &m(&[&[1.0, 2.0, 3.0]])),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn layerwise_examples() {
        let t = |rows: usize, data: Vec<f64>| Tensor::new(vec![rows, data.len() / rows], data);
        let same = LayerwiseOutputs {
            encoder_outputs: vec![t(1, vec![1.0, 2.0])],
            decoder_outputs: vec![t(1, vec![1.0, 2.0])],
        };
        assert_eq!(layerwise_recon_loss(&same).unwrap(), 0.0);
        let one = LayerwiseOutputs {
            encoder_outputs: vec![t(1, vec![1.0, 1.0])],
            decoder_outputs: vec![t(1, vec![0.0, 0.0])],
        };
        assert_eq!(layerwise_recon_loss(&one).unwrap(), 1.0);
        // Same per-element error on a 4x wider layer contributes the same amount.
        let wide = LayerwiseOutputs {
            encoder_outputs: vec![t(1, vec![1.0; 8])],
            decoder_outputs: vec![t(1, vec![0.0; 8])],
        };
        assert_eq!(layerwise_recon_loss(&wide).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_kl_examples() {
        assert_eq!(gaussian_kl(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((gaussian_kl::<f64>(&[1.0, 0.0], &[0.0, 0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn soft_assign_examples() {
        // Equidistant point gives a uniform row.
        let l = layer(&[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0]], Metric::Euclidean);
        let q = soft_assign(&l, &batch(&[&[0.0, 0.0]])).unwrap();
        for &v in q.q.row(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        // d = (0, 3) with α = 1 gives (1, 1/4) normalised.
        let l = layer(&[&[0.0], &[3.0]], Metric::Euclidean);
        let q = soft_assign(&l, &batch(&[&[0.0]])).unwrap();
        assert!((q.q.get(0, 0) - 0.8).abs() < 1e-12);
        assert!((q.q.get(0, 1) - 0.2).abs() < 1e-12);
        // Permuting centroids permutes columns.
        let l2 = layer(&[&[3.0], &[0.0]], Metric::Euclidean);
        let q2 = soft_assign(&l2, &batch(&[&[0.0]])).unwrap();
        assert_eq!(q2.q.get(0, 0), q.q.get(0, 1));
        assert_eq!(q2.q.get(0, 1), q.q.get(0, 0));
    }

    #[test]
    fn target_distribution_examples() {
        let one_hot = AssignmentMatrix {
            q: m(&[&[1.0, 0.0], &[0.0, 1.0]]),
            p: None,
        };
        assert_eq!(target_distribution(&one_hot).unwrap().p.unwrap(), one_hot.q);

        let single = AssignmentMatrix {
            q: m(&[&[0.8, 0.2]]),
            p: None,
        };
        let p = target_distribution(&single).unwrap().p.unwrap();
        // (0.64/0.8, 0.04/0.2) = (0.8, 0.2) → normalised (0.8, 0.2)/1.0
        assert!((p.get(0, 0) - 0.8).abs() < 1e-12);

        let two = AssignmentMatrix {
            q: m(&[&[0.8, 0.2], &[0.2, 0.8]]),
            p: None,
        };
        let p = target_distribution(&two).unwrap().p.unwrap();
        // f = (1, 1): row 0 → (0.64, 0.04)/0.68
        assert!((p.get(0, 0) - 0.941_176_470_588).abs() < 1e-3);
        assert!((p.get(0, 1) - 0.058_823_529_411).abs() < 1e-3);

        let uniform = AssignmentMatrix {
            q: m(&[&[0.5, 0.5], &[0.5, 0.5]]),
            p: None,
        };
        assert_eq!(target_distribution(&uniform).unwrap().p.unwrap(), uniform.q);

        let dead = AssignmentMatrix {
            q: m(&[&[1.0, 0.0], &[1.0, 0.0]]),
            p: None,
        };
        assert_eq!(target_distribution(&dead), Err(Error::DegenerateColumn(1)));
    }

    #[test]
    fn kl_examples() {
        let q = m(&[&[0.5, 0.5]]);
        assert_eq!(kl_divergence(&q, &q), 0.0);
        let p = m(&[&[1.0, 0.0]]);
        assert!((kl_divergence(&q, &p) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn clustering_loss_is_sum_of_terms() {
        let x = m(&[&[1.0, 2.0]]);
        let r = m(&[&[0.0, 2.0]]);
        let q = m(&[&[0.6, 0.4]]);
        let p = m(&[&[0.9, 0.1]]);
        let total = clustering_loss(&x, &r, &q, &p).unwrap();
        let parts = recon_loss(&x, &r).unwrap() + kl_divergence(&q, &p);
        assert!((total - parts).abs() < 1e-12);
        assert_eq!(clustering_loss(&x, &r, &q, &q).unwrap(), recon_loss(&x, &r).unwrap());
        assert_eq!(clustering_loss(&x, &x, &q, &q).unwrap(), 0.0);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(euclid(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(euclid(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(
            euclid(&[1.0, 2.0], &[4.0, -2.0]).unwrap(),
            euclid(&[4.0, -2.0], &[1.0, 2.0]).unwrap()
        );
        assert!(euclid(&[1.0], &[1.0, 2.0]).is_err());

        // Equal complexity: factor 1.
        let a = [0.0, 1.0, 0.0];
        let b = [1.0, 2.0, 1.0];
        assert_eq!(cid(&a, &b).unwrap(), euclid(&a, &b).unwrap());
        // (0,1,0) vs (0,2,0): ED 1, CE √2 and 2√2.
        assert!((cid::<f64>(&[0.0, 1.0, 0.0], &[0.0, 2.0, 0.0]).unwrap() - 2.0).abs() < 1e-12);
        // One flat series: the ε guard yields a very large penalty.
        let flat = cid(&[0.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!((flat - 2f64.sqrt() / CID_EPS).abs() / flat < 1e-12);
        // Both flat: factor 1.
        assert_eq!(cid(&[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0]).unwrap(), 3f64.sqrt());
        assert!(cid(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn clustering_layer_validation() {
        let shape = LatentSpec::Vector(1);
        assert!(ClusteringLayer::new(m(&[&[0.0]]), Metric::Euclidean, 1.0, shape).is_err());
        assert_eq!(
            ClusteringLayer::new(m(&[&[0.0], &[0.0]]), Metric::Euclidean, 1.0, shape),
            Err(Error::CoincidentCentroids(0, 1))
        );
    }
}
