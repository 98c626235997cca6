//! Two-phase training: pretext pretraining, then joint optimisation of the
//! reconstruction and clustering losses with learnable centroids.

use std::io::Write;

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    davies_bouldin, hard_assign, init_centroids, kmeans, silhouette, validate, ClusterAssignment, KMeansConfig,
    SilhouetteMetric, ValidityVerdict,
};
use crate::dimred::{DimRedKind, Projection, UmapConfig};
use crate::error::{Error, Result};
use crate::harness::{ComponentCombination, Pretext};
use crate::losses::{soft_assign, target_distribution, ClusteringLayer, Metric, Objective};
use crate::matrix::Matrix;
use crate::networks::{Autoencoder, LatentHead};
use crate::num::Scalar;
use crate::optim::Adam;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta_pre: f64,
    pub eta_cls: f64,
    pub pre_iters: usize,
    pub cls_iters: usize,
    pub batch_size: usize,
    pub k: usize,
    pub target_refresh: usize,
    pub seed: u64,
    /// Embedding width for the vector-latent architectures.
    pub latent_dim: usize,
    pub alpha: f64,
    pub umap: UmapConfig,
    pub kmeans: KMeansConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta_pre: 1e-2,
            eta_cls: 1e-3,
            pre_iters: 1000,
            cls_iters: 1000,
            batch_size: 64,
            k: 3,
            target_refresh: 100,
            seed: 0,
            latent_dim: 10,
            alpha: 1.0,
            umap: UmapConfig::default(),
            kmeans: KMeansConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        pos(self.eta_pre, "eta_pre")?;
        pos(self.eta_cls, "eta_cls")?;
        pos(self.alpha, "alpha")?;
        for (v, name) in [
            (self.batch_size, "batch_size"),
            (self.target_refresh, "target_refresh"),
            (self.latent_dim, "latent_dim"),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.k < 2 {
            return Err(Error::InvalidConfig(format!("k must be >= 2, got {}", self.k)));
        }
        if self.eta_cls > self.eta_pre {
            warn!(
                "eta_cls = {} exceeds eta_pre = {}; clustering runs are more likely to collapse",
                self.eta_cls, self.eta_pre
            );
        }
        Ok(())
    }
}

/// Learning rate for the clustering phase: one order of magnitude below pretraining.
pub fn lr_heuristic(eta_pre: f64) -> f64 {
    eta_pre / 10.0
}

/// Builds the autoencoder a combination trains, with a Gaussian head for the ELBO pretext.
pub fn build_for<S: Scalar>(combo: &ComponentCombination, input_len: usize, cfg: &TrainConfig) -> Result<Autoencoder<S>> {
    let head = if combo.pretext == Pretext::Lv {
        LatentHead::Gaussian
    } else {
        LatentHead::Deterministic
    };
    Autoencoder::new(combo.arch, input_len, cfg.latent_dim, head, cfg.seed)
}

/// Endless stream of shuffled mini-batch indices, reshuffled every epoch.
struct Batches {
    order: Vec<usize>,
    pos: usize,
    size: usize,
    rng: ChaCha8Rng,
}

impl Batches {
    fn new(n: usize, size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Batches {
            order,
            pos: 0,
            size: size.min(n),
            rng,
        }
    }

    fn next(&mut self) -> Vec<usize> {
        if self.pos + self.size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let out = self.order[self.pos..self.pos + self.size].to_vec();
        self.pos += self.size;
        out
    }
}

fn mix(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Trains `ae` on `train` with the pretext loss at constant `eta_pre`.
///
/// Returns the per-iteration loss curve; `Pretext::None` leaves the model untouched.
pub fn pretrain<S: Scalar>(
    ae: &mut Autoencoder<S>,
    train: &Matrix<S>,
    pretext: Pretext,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    if pretext == Pretext::None {
        return Ok(Vec::new());
    }
    if !pretext.supported_by(ae.arch()) {
        return Err(Error::UnsupportedArchitecture {
            arch: ae.arch().to_string(),
            what: format!("the {pretext} pretext loss"),
        });
    }
    if pretext == Pretext::Lv && ae.head() != LatentHead::Gaussian {
        return Err(Error::InvalidConfig("the ELBO pretext needs a Gaussian latent head".into()));
    }
    if train.rows() == 0 {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let mut opt = Adam::new(ae.param_count(), cfg.eta_pre);
    let mut batches = Batches::new(train.rows(), cfg.batch_size, mix(cfg.seed, 1));
    let mut curve = Vec::with_capacity(cfg.pre_iters);
    for it in 0..cfg.pre_iters {
        let batch = train.select_rows(&batches.next());
        let objective = match pretext {
            Pretext::Lr => Objective::Reconstruction,
            Pretext::Llr => Objective::Layerwise,
            Pretext::Lv => Objective::Elbo {
                seed: mix(cfg.seed, 1_000_000 + it as u64),
            },
            Pretext::None => unreachable!(),
        };
        let g = ae
            .gradients(&batch, &objective)
            .map_err(|e| nonfinite_at(e, it))?;
        let loss = g.loss.as_f64();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it });
        }
        curve.push(loss);
        opt.step(ae.params_mut(), &g.params);
        if !ae.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it });
        }
        if it % 100 == 0 {
            debug!("pretrain {} {} iter {it} loss {loss:.6}", ae.arch(), pretext);
        }
    }
    Ok(curve)
}

fn nonfinite_at(e: Error, iteration: usize) -> Error {
    match e {
        Error::NonFiniteGradient | Error::Diverged(_) => Error::NonFiniteLoss { iteration },
        other => other,
    }
}

/// Result of the clustering phase.
#[derive(Debug, Clone)]
pub struct ClusterPhase<S> {
    pub autoencoder: Autoencoder<S>,
    pub layer: ClusteringLayer<S>,
    /// Centroids as initialised from the pretrained latents.
    pub initial_centroids: Matrix<S>,
    pub curve: Vec<f64>,
    /// Hard assignment of the training set at exit.
    pub assignment: ClusterAssignment,
    pub verdict: ValidityVerdict,
}

/// Initial clustering layer: complete-linkage clusters of the training latents, then their means.
pub fn init_layer<S: Scalar>(
    ae: &Autoencoder<S>,
    train: &Matrix<S>,
    cfg: &TrainConfig,
    metric: Metric,
) -> Result<ClusteringLayer<S>> {
    let z = ae.encode(train)?;
    let centroids = init_centroids(&z, cfg.k)?;
    ClusteringLayer::new(centroids, metric, S::of(cfg.alpha), z.kind)
}

/// Jointly optimises reconstruction plus `KL(P ‖ Q)` from a copy of `ae`.
///
/// The target distribution is recomputed from the whole training set every
/// `target_refresh` iterations and held fixed in between; encoder, decoder and
/// centroids all move at `eta_cls`.
pub fn cluster_optimize<S: Scalar>(
    ae: &Autoencoder<S>,
    train: &Matrix<S>,
    cfg: &TrainConfig,
    metric: Metric,
) -> Result<ClusterPhase<S>> {
    let layer = init_layer(ae, train, cfg, metric)?;
    cluster_optimize_from(ae, layer, train, cfg)
}

/// [`cluster_optimize`] starting from an already initialised layer.
pub fn cluster_optimize_from<S: Scalar>(
    ae: &Autoencoder<S>,
    mut layer: ClusteringLayer<S>,
    train: &Matrix<S>,
    cfg: &TrainConfig,
) -> Result<ClusterPhase<S>> {
    cfg.validate()?;
    if layer.k() != cfg.k {
        return Err(Error::InvalidConfig(format!("layer has {} centroids, config k = {}", layer.k(), cfg.k)));
    }
    let mut ae = ae.clone();
    let initial_centroids = layer.centroids.clone();
    let mut opt = Adam::new(ae.param_count(), cfg.eta_cls);
    let mut copt = Adam::new(layer.centroids.as_slice().len(), cfg.eta_cls);
    let mut batches = Batches::new(train.rows(), cfg.batch_size, mix(cfg.seed, 2));
    let mut target = Matrix::zeros(0, 0);
    let mut curve = Vec::with_capacity(cfg.cls_iters);
    for it in 0..cfg.cls_iters {
        if it % cfg.target_refresh == 0 {
            target = refresh_target(&ae, &layer, train).map_err(|e| nonfinite_at(e, it))?;
        }
        let idx = batches.next();
        let batch = train.select_rows(&idx);
        let p = target.select_rows(&idx);
        let g = ae
            .gradients(&batch, &Objective::Clustering { layer: &layer, target: &p })
            .map_err(|e| nonfinite_at(e, it))?;
        let loss = g.loss.as_f64();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it });
        }
        curve.push(loss);
        opt.step(ae.params_mut(), &g.params);
        let cg = g.centroids.expect("clustering objective differentiates the centroids");
        copt.step(layer.centroids.as_mut_slice(), &cg);
        if !ae.is_finite() || !layer.centroids.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it });
        }
        if it % 100 == 0 {
            debug!("cluster {} iter {it} loss {loss:.6}", ae.arch());
        }
    }
    let z = ae.encode(train)?;
    let assignment = hard_assign(&soft_assign(&layer, &z)?);
    let verdict = validate(Ok(&assignment));
    Ok(ClusterPhase {
        autoencoder: ae,
        layer,
        initial_centroids,
        curve,
        assignment,
        verdict,
    })
}

fn refresh_target<S: Scalar>(ae: &Autoencoder<S>, layer: &ClusteringLayer<S>, train: &Matrix<S>) -> Result<Matrix<S>> {
    let z = ae.encode(train)?;
    let q = soft_assign(layer, &z)?;
    let p = target_distribution(&q)?;
    Ok(p.p.expect("target distribution filled"))
}

/// A trained combination with everything needed to cluster new series.
#[derive(Debug, Clone)]
pub struct FittedPipeline<S> {
    pub combo: ComponentCombination,
    pub autoencoder: Autoencoder<S>,
    pub layer: Option<ClusteringLayer<S>>,
    pub projection: Option<Projection<S>>,
    pub pretrain_curve: Vec<f64>,
    pub cluster_curve: Vec<f64>,
    pub verdict: ValidityVerdict,
    /// First error encountered, if any.
    pub failure: Option<String>,
}

impl<S: Scalar> FittedPipeline<S> {
    /// Clusters `x` with the fitted model.
    ///
    /// With a clustering layer this is the argmax of the soft assignment; otherwise
    /// the latents are projected and clustered with k-means.
    pub fn cluster(&self, x: &Matrix<S>, k: usize, seed: u64, km: &KMeansConfig) -> Result<(ClusterAssignment, Matrix<S>, SilhouetteMetric)> {
        let z = self.autoencoder.encode(x)?;
        match &self.layer {
            Some(layer) => {
                let q = soft_assign(layer, &z)?;
                let metric = match layer.metric {
                    Metric::Euclidean => SilhouetteMetric::Euclidean,
                    Metric::Cid => {
                        let (steps, channels) = layer.latent.series_layout();
                        SilhouetteMetric::Cid { steps, channels }
                    }
                };
                Ok((hard_assign(&q), z.values, metric))
            }
            None => {
                let y = match &self.projection {
                    Some(p) => p.transform(&z.values)?,
                    None => z.values,
                };
                let res = kmeans(&y, k, seed, km)?;
                Ok((res.assignment, y, SilhouetteMetric::Euclidean))
            }
        }
    }
}

/// Test-set outcome of one combination.
#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub pipeline: FittedPipeline<S>,
    pub assignment: Option<ClusterAssignment>,
    pub sc: Option<f64>,
    pub dbi: Option<f64>,
}

impl<S> TrainOutcome<S> {
    pub fn verdict(&self) -> ValidityVerdict {
        self.pipeline.verdict
    }
}

/// Trains `combo` on `train` and evaluates its clustering of `test`.
///
/// Only configuration errors are returned; numerical failures surface as a
/// non-valid verdict with missing scores.
pub fn train_combination<S: Scalar>(
    combo: &ComponentCombination,
    train: &Matrix<S>,
    test: &Matrix<S>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<S>> {
    combo.check()?;
    cfg.validate()?;
    if train.cols() != test.cols() {
        return Err(crate::error::shape_err(train.cols(), test.cols()));
    }
    let mut ae = build_for::<S>(combo, train.cols(), cfg)?;
    let mut pipeline = FittedPipeline {
        combo: *combo,
        autoencoder: ae.clone(),
        layer: None,
        projection: None,
        pretrain_curve: Vec::new(),
        cluster_curve: Vec::new(),
        verdict: ValidityVerdict::Valid,
        failure: None,
    };
    let fail = |mut p: FittedPipeline<S>, e: Error| {
        debug!("{} failed: {e}", p.combo);
        p.verdict = validate(Err(&e));
        p.failure = Some(e.to_string());
        Ok(TrainOutcome {
            pipeline: p,
            assignment: None,
            sc: None,
            dbi: None,
        })
    };

    match pretrain(&mut ae, train, combo.pretext, cfg) {
        Ok(curve) => pipeline.pretrain_curve = curve,
        Err(e) => {
            pipeline.autoencoder = ae;
            return fail(pipeline, e);
        }
    }
    if let Err(e) = ae.freeze_normalization(train) {
        pipeline.autoencoder = ae;
        return fail(pipeline, e);
    }
    pipeline.autoencoder = ae;

    if let Some(metric) = combo.cluster_loss.metric() {
        match cluster_optimize(&pipeline.autoencoder, train, cfg, metric) {
            Ok(phase) => {
                pipeline.autoencoder = phase.autoencoder;
                pipeline.layer = Some(phase.layer);
                pipeline.cluster_curve = phase.curve;
                pipeline.verdict = phase.verdict;
            }
            Err(e) => return fail(pipeline, e),
        }
    } else if combo.dimred != DimRedKind::None {
        let fitted = pipeline.autoencoder.encode(train).and_then(|z| {
            let mut ucfg = cfg.umap;
            ucfg.seed = mix(cfg.seed, 3);
            ucfg.n_neighbors = ucfg.n_neighbors.min(z.len().saturating_sub(1));
            Projection::fit(combo.dimred, &z.values, &ucfg)
        });
        match fitted {
            Ok((p, _)) => pipeline.projection = Some(p),
            Err(e) => return fail(pipeline, e),
        }
    }

    let clustered = pipeline.cluster(test, cfg.k, mix(cfg.seed, 4), &cfg.kmeans);
    let (assignment, space, metric) = match clustered {
        Ok(v) => v,
        Err(e) => return fail(pipeline, e),
    };
    let verdict = validate(Ok(&assignment));
    if !pipeline.verdict.is_valid() || !verdict.is_valid() {
        if pipeline.verdict.is_valid() {
            pipeline.verdict = verdict;
        }
        return Ok(TrainOutcome {
            pipeline,
            assignment: Some(assignment),
            sc: None,
            dbi: None,
        });
    }
    let scores = silhouette(&space, &assignment, metric).and_then(|sc| Ok((sc, davies_bouldin(&space, &assignment)?)));
    match scores {
        Ok((sc, dbi)) if sc.is_finite() && dbi.is_finite() => Ok(TrainOutcome {
            pipeline,
            assignment: Some(assignment),
            sc: Some(sc),
            dbi: Some(dbi),
        }),
        Ok(_) => {
            pipeline.verdict = ValidityVerdict::Diverged;
            Ok(TrainOutcome {
                pipeline,
                assignment: Some(assignment),
                sc: None,
                dbi: None,
            })
        }
        Err(e) => {
            pipeline.verdict = validate(Err(&e));
            pipeline.failure = Some(e.to_string());
            Ok(TrainOutcome {
                pipeline,
                assignment: Some(assignment),
                sc: None,
                dbi: None,
            })
        }
    }
}

/// Writes a loss curve as CSV `iter,loss`.
pub fn write_loss_curve<W: Write>(curve: &[f64], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["iter", "loss"]).map_err(io_err)?;
    for (i, l) in curve.iter().enumerate() {
        wr.write_record([i.to_string(), format!("{l:e}")]).map_err(io_err)?;
    }
    wr.flush().map_err(|e| Error::Io(e.to_string()))
}

fn io_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}
