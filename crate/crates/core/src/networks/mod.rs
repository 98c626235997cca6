//! The four autoencoder architectures: fully connected, residual convolutional,
//! bidirectional LSTM, and the convolution + pooling + BiLSTM network whose
//! latent representation is itself a shorter multichannel series.
//!
//! Every model keeps all trainable weights in one flat vector described by a
//! [`ParamLayout`]; forward evaluation records onto an autodiff tape so the
//! same wiring serves inference, layerwise outputs and gradients.

mod arch;
pub mod checkpoint;
mod layout;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NormStats, Tape, Tensor, Var};
use crate::error::{shape_err, Error, Result};
use crate::losses::Objective;
use crate::matrix::Matrix;
use crate::num::{all_finite, Scalar};

use arch::{Fwd, Net};
pub use layout::{ParamBlock, ParamLayout, Part};

pub(crate) use arch::{DTC_HIDDEN, DTC_POOL, FCNN_WIDTHS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Architecture {
    Fcnn,
    Cnn,
    Lstm,
    Dtc,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Fcnn,
        Architecture::Cnn,
        Architecture::Lstm,
        Architecture::Dtc,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Architecture::Fcnn => "fcnn",
            Architecture::Cnn => "cnn",
            Architecture::Lstm => "lstm",
            Architecture::Dtc => "dtc",
        }
    }

    /// Whether encoder and decoder layers mirror each other closely enough to
    /// pair their outputs for the layerwise reconstruction loss.
    pub fn supports_layerwise(self) -> bool {
        matches!(self, Architecture::Fcnn | Architecture::Cnn)
    }

    /// Whether the encoder can emit a vector-valued Gaussian posterior.
    pub fn supports_gaussian(self) -> bool {
        self != Architecture::Dtc
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag().to_uppercase())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown architecture `{s}`")))
    }
}

/// Whether the embedding layer emits a point or the parameters of a diagonal Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LatentHead {
    Deterministic,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatentSpec {
    Vector(usize),
    /// `steps × channels`, stored time-major.
    Series { steps: usize, channels: usize },
    Gaussian(usize),
}

impl LatentSpec {
    pub fn flat_len(self) -> usize {
        match self {
            LatentSpec::Vector(d) | LatentSpec::Gaussian(d) => d,
            LatentSpec::Series { steps, channels } => steps * channels,
        }
    }

    /// `(steps, channels)` view used by complexity-invariant distances; vectors
    /// are read as single-channel sequences.
    pub fn series_layout(self) -> (usize, usize) {
        match self {
            LatentSpec::Vector(d) | LatentSpec::Gaussian(d) => (d, 1),
            LatentSpec::Series { steps, channels } => (steps, channels),
        }
    }
}

/// A batch of latent representations, one flattened row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch<S> {
    pub values: Matrix<S>,
    pub kind: LatentSpec,
}

impl<S: Scalar> LatentBatch<S> {
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        LatentBatch {
            values: self.values.select_rows(idx),
            kind: self.kind,
        }
    }
}

/// Encoder and decoder activations paired depth by depth.
///
/// `encoder_outputs[0]` is the input series and `decoder_outputs[0]` the
/// reconstruction; deeper entries pair encoder layer `l` with the decoder layer
/// that mirrors it.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerwiseOutputs<S> {
    pub encoder_outputs: Vec<Tensor<S>>,
    pub decoder_outputs: Vec<Tensor<S>>,
}

impl<S> LayerwiseOutputs<S> {
    pub fn depth(&self) -> usize {
        self.encoder_outputs.len()
    }
}

/// Loss value with gradients for the model parameters and, for clustering
/// objectives, the centroids.
#[derive(Debug, Clone)]
pub struct LossGrad<S> {
    pub loss: S,
    pub params: Vec<S>,
    pub centroids: Option<Vec<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder<S> {
    arch: Architecture,
    input_len: usize,
    latent_dim: usize,
    head: LatentHead,
    seed: u64,
    layout: ParamLayout,
    net: Net,
    norm_layers: usize,
    params: Vec<S>,
    frozen: Option<Vec<NormStats<S>>>,
}

/// Builds a freshly initialised autoencoder with a deterministic latent head.
pub fn build_autoencoder<S: Scalar>(
    arch: Architecture,
    input_len: usize,
    latent_dim: usize,
    seed: u64,
) -> Result<Autoencoder<S>> {
    Autoencoder::new(arch, input_len, latent_dim, LatentHead::Deterministic, seed)
}

impl<S: Scalar> Autoencoder<S> {
    /// `latent_dim` is ignored for [`Architecture::Dtc`], whose latent is the
    /// full BiLSTM state sequence (`input_len / 10` steps × 100 channels).
    pub fn new(
        arch: Architecture,
        input_len: usize,
        latent_dim: usize,
        head: LatentHead,
        seed: u64,
    ) -> Result<Self> {
        let (layout, net, norm_layers) = Self::structure(arch, input_len, latent_dim, head)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = layout.initialize(&mut rng);
        Ok(Autoencoder {
            arch,
            input_len,
            latent_dim: Self::effective_latent_dim(arch, latent_dim),
            head,
            seed,
            layout,
            net,
            norm_layers,
            params,
            frozen: None,
        })
    }

    fn effective_latent_dim(arch: Architecture, latent_dim: usize) -> usize {
        if arch == Architecture::Dtc {
            2 * DTC_HIDDEN
        } else {
            latent_dim
        }
    }

    fn structure(
        arch: Architecture,
        input_len: usize,
        latent_dim: usize,
        head: LatentHead,
    ) -> Result<(ParamLayout, Net, usize)> {
        if input_len < 20 {
            return Err(Error::IncompatibleLength {
                len: input_len,
                reason: "series must have at least 20 steps".into(),
            });
        }
        if arch == Architecture::Dtc && input_len % DTC_POOL != 0 {
            return Err(Error::IncompatibleLength {
                len: input_len,
                reason: format!("DTC pooling needs a multiple of {DTC_POOL}"),
            });
        }
        if head == LatentHead::Gaussian && !arch.supports_gaussian() {
            return Err(Error::UnsupportedArchitecture {
                arch: arch.to_string(),
                what: "a Gaussian latent head".into(),
            });
        }
        if latent_dim == 0 && arch != Architecture::Dtc {
            return Err(Error::InvalidConfig("latent dimension must be positive".into()));
        }
        Ok(arch::build(arch, input_len, latent_dim, head))
    }

    pub(crate) fn from_parts(
        arch: Architecture,
        input_len: usize,
        latent_dim: usize,
        head: LatentHead,
        seed: u64,
        params: Vec<S>,
        frozen: Option<Vec<NormStats<S>>>,
    ) -> Result<Self> {
        let (layout, net, norm_layers) = Self::structure(arch, input_len, latent_dim, head)?;
        if params.len() != layout.total() {
            return Err(shape_err(format!("{} parameters", layout.total()), params.len()));
        }
        Ok(Autoencoder {
            arch,
            input_len,
            latent_dim: Self::effective_latent_dim(arch, latent_dim),
            head,
            seed,
            layout,
            net,
            norm_layers,
            params,
            frozen,
        })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn head(&self) -> LatentHead {
        self.head
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn latent_spec(&self) -> LatentSpec {
        match (self.arch, self.head) {
            (Architecture::Dtc, _) => LatentSpec::Series {
                steps: self.input_len / DTC_POOL,
                channels: 2 * DTC_HIDDEN,
            },
            (_, LatentHead::Gaussian) => LatentSpec::Gaussian(self.latent_dim),
            _ => LatentSpec::Vector(self.latent_dim),
        }
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn encoder_params(&self) -> &[S] {
        &self.params[..self.layout.encoder_len()]
    }

    pub fn decoder_params(&self) -> &[S] {
        &self.params[self.layout.encoder_len()..]
    }

    /// Output widths of the encoder's hidden and embedding layers.
    pub fn encoder_widths(&self) -> Vec<usize> {
        match self.arch {
            Architecture::Fcnn => {
                let mut w = FCNN_WIDTHS.to_vec();
                w.push(self.latent_dim);
                w
            }
            Architecture::Cnn => {
                let mut w = arch::CNN_CHANNELS.to_vec();
                w.push(self.latent_dim);
                w
            }
            Architecture::Lstm => vec![2 * arch::LSTM_HIDDEN, 2 * arch::LSTM_HIDDEN, self.latent_dim],
            Architecture::Dtc => vec![arch::DTC_CONV_CHANNELS, 2 * DTC_HIDDEN, 2 * DTC_HIDDEN],
        }
    }

    pub fn norm_layers(&self) -> usize {
        self.norm_layers
    }

    pub fn frozen_norm(&self) -> Option<&[NormStats<S>]> {
        self.frozen.as_deref()
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.params)
    }

    fn check_input(&self, x: &Matrix<S>) -> Result<()> {
        if x.cols() != self.input_len {
            return Err(shape_err(format!("{} columns", self.input_len), x.cols()));
        }
        if x.rows() == 0 {
            return Err(shape_err("at least one row", 0));
        }
        Ok(())
    }

    /// Freezes normalisation statistics to their values over `data`.
    ///
    /// After freezing, every forward pass normalises with these constants, so
    /// encodings no longer depend on batch composition. No-op for
    /// architectures without normalisation layers.
    pub fn freeze_normalization(&mut self, data: &Matrix<S>) -> Result<()> {
        if self.norm_layers == 0 {
            return Ok(());
        }
        self.check_input(data)?;
        self.frozen = None;
        let mut g = Graph::new(self, false);
        let x = g.input(data);
        let enc = g.encode(x);
        g.decode(enc.latent);
        let stats = g
            .captured
            .into_iter()
            .map(|s| s.expect("every normalisation layer visited"))
            .collect();
        self.frozen = Some(stats);
        Ok(())
    }

    pub fn unfreeze_normalization(&mut self) {
        self.frozen = None;
    }

    /// Deterministic latent representation (the posterior mean for Gaussian heads).
    pub fn encode(&self, x: &Matrix<S>) -> Result<LatentBatch<S>> {
        self.check_input(x)?;
        let chunk = if self.frozen.is_some() || self.norm_layers == 0 {
            256
        } else {
            x.rows()
        };
        let kind = self.latent_spec();
        let mut out = Vec::with_capacity(x.rows() * kind.flat_len());
        let idx: Vec<usize> = (0..x.rows()).collect();
        for rows in idx.chunks(chunk) {
            let sub = x.select_rows(rows);
            let mut g = Graph::new(self, false);
            let xv = g.input(&sub);
            let enc = g.encode(xv);
            out.extend_from_slice(&g.tape.value(enc.latent).data);
        }
        if !all_finite(&out) {
            return Err(Error::Diverged("non-finite latent representation".into()));
        }
        Ok(LatentBatch {
            values: Matrix::from_vec(x.rows(), kind.flat_len(), out)?,
            kind,
        })
    }

    pub fn decode(&self, z: &LatentBatch<S>) -> Result<Matrix<S>> {
        let want = self.latent_spec();
        let same_kind = match (want, z.kind) {
            (LatentSpec::Gaussian(a), LatentSpec::Vector(b) | LatentSpec::Gaussian(b)) => a == b,
            (a, b) => a == b,
        };
        if !same_kind || z.values.cols() != want.flat_len() {
            return Err(shape_err(format!("{want:?}"), format!("{:?}", z.kind)));
        }
        let mut g = Graph::new(self, false);
        let zv = g.input(&z.values);
        let dec = g.decode(zv);
        let recon = g.tape.value(dec.recon).data.clone();
        Matrix::from_vec(z.values.rows(), self.input_len, recon)
    }

    /// Encoder outputs paired with their mirrored decoder outputs.
    pub fn forward_layerwise(&self, x: &Matrix<S>) -> Result<LayerwiseOutputs<S>> {
        self.check_input(x)?;
        let mut g = Graph::new(self, false);
        let xv = g.input(x);
        let (enc, dec) = g.layerwise(xv)?;
        Ok(LayerwiseOutputs {
            encoder_outputs: enc.iter().map(|&v| g.tape.value(v).clone()).collect(),
            decoder_outputs: dec.iter().map(|&v| g.tape.value(v).clone()).collect(),
        })
    }

    /// Loss and gradient of `objective` on `batch`.
    pub fn gradients(&self, batch: &Matrix<S>, objective: &Objective<'_, S>) -> Result<LossGrad<S>> {
        self.check_input(batch)?;
        let mut g = Graph::new(self, true);
        let x = g.input(batch);
        let (root, centroids) = crate::losses::objective_on_graph(&mut g, x, batch, objective)?;
        let loss = g.tape.value(root).data[0];
        if !loss.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        let grads = g.tape.backward(root);
        let mut flat = Vec::with_capacity(self.params.len());
        for (block, &v) in self.layout.blocks().iter().zip(&g.params) {
            flat.extend(grads.get_or_zeros(v, &block.shape).data);
        }
        let centroids = centroids.map(|c| {
            let shape = g.tape.shape(c).to_vec();
            grads.get_or_zeros(c, &shape).data
        });
        if !all_finite(&flat) || centroids.as_deref().is_some_and(|c| !all_finite(c)) {
            return Err(Error::NonFiniteGradient);
        }
        Ok(LossGrad {
            loss,
            params: flat,
            centroids,
        })
    }

    /// Evaluates `objective` without differentiating.
    pub fn objective_value(&self, batch: &Matrix<S>, objective: &Objective<'_, S>) -> Result<S> {
        self.check_input(batch)?;
        let mut g = Graph::new(self, false);
        let x = g.input(batch);
        let (root, _) = crate::losses::objective_on_graph(&mut g, x, batch, objective)?;
        Ok(g.tape.value(root).data[0])
    }
}

/// One forward evaluation of an autoencoder on a fresh tape.
pub(crate) struct Graph<'a, S> {
    pub tape: Tape<S>,
    pub params: Vec<Var>,
    pub ae: &'a Autoencoder<S>,
    pub trainable: bool,
    captured: Vec<Option<NormStats<S>>>,
}

impl<'a, S: Scalar> Graph<'a, S> {
    pub fn new(ae: &'a Autoencoder<S>, trainable: bool) -> Self {
        let mut tape = Tape::new();
        let params = ae
            .layout
            .blocks()
            .iter()
            .map(|b| {
                let t = Tensor::new(b.shape.clone(), ae.params[b.range()].to_vec());
                if trainable {
                    tape.param(t)
                } else {
                    tape.constant(t)
                }
            })
            .collect();
        Graph {
            tape,
            params,
            ae,
            trainable,
            captured: vec![None; ae.norm_layers],
        }
    }

    pub fn input(&mut self, x: &Matrix<S>) -> Var {
        self.tape
            .constant(Tensor::new(vec![x.rows(), x.cols()], x.as_slice().to_vec()))
    }

    fn fwd(&mut self) -> Fwd<'_, S> {
        Fwd {
            tape: &mut self.tape,
            params: &self.params,
            frozen: self.ae.frozen.as_deref(),
            captured: std::mem::take(&mut self.captured),
        }
    }

    pub fn encode(&mut self, x: Var) -> arch::Encoded {
        let ae = self.ae;
        let mut f = self.fwd();
        let out = f.encode(&ae.net, x, ae.head, ae.latent_dim);
        self.captured = f.captured;
        out
    }

    pub fn decode(&mut self, z: Var) -> arch::Decoded {
        let ae = self.ae;
        let mut f = self.fwd();
        let out = f.decode(&ae.net, z, ae.input_len);
        self.captured = f.captured;
        out
    }

    /// Paired encoder/decoder activations; pair `l` couples encoder depth `l`
    /// with decoder depth `L - 1 - l`.
    pub fn layerwise(&mut self, x: Var) -> Result<(Vec<Var>, Vec<Var>)> {
        if !self.ae.arch.supports_layerwise() {
            return Err(Error::UnsupportedArchitecture {
                arch: self.ae.arch.to_string(),
                what: "layerwise reconstruction".into(),
            });
        }
        let enc = self.encode(x);
        let dec = self.decode(enc.latent);
        let depth = enc.taps.len();
        debug_assert_eq!(depth, dec.taps.len());
        let decoder = (0..depth).map(|l| dec.taps[depth - 1 - l]).collect();
        Ok((enc.taps, decoder))
    }
}
