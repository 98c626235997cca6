//! Deep time-series clustering: autoencoders, clustering losses, latent-space
//! reduction and clustering, two-phase training, and an evaluation harness
//! over every compatible component combination.
//!
//! Numeric code is generic over [`num::Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

pub mod autodiff;
pub mod clustering;
pub mod data;
pub mod dimred;
pub mod error;
pub mod harness;
pub mod losses;
pub mod matrix;
pub mod networks;
pub mod num;
pub mod optim;
pub mod plot;
pub mod trainer;

pub use clustering::{ClusterAssignment, ValidityVerdict};
pub use error::{Error, Result};
pub use harness::{ClusterLoss, ComponentCombination, EvaluationReport, Pretext};
pub use matrix::Matrix;
pub use networks::Architecture;
pub use num::Scalar;
pub use trainer::TrainConfig;

pub type Matrix32 = matrix::Matrix<f32>;
pub type Matrix64 = matrix::Matrix<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Dataset64 = data::Dataset<f64>;
pub type Autoencoder32 = networks::Autoencoder<f32>;
pub type Autoencoder64 = networks::Autoencoder<f64>;
pub type ClusteringLayer32 = losses::ClusteringLayer<f32>;
pub type ClusteringLayer64 = losses::ClusteringLayer<f64>;
pub type FittedPipeline32 = trainer::FittedPipeline<f32>;
pub type FittedPipeline64 = trainer::FittedPipeline<f64>;
