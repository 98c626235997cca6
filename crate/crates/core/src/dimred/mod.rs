//! Latent-space dimensionality reduction.

mod pca;
mod umap;


use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::num::Scalar;

pub use pca::PcaState;
pub use umap::{fit_ab, fuzzy_membership, knn, smooth_knn_sigma, Membership, UmapConfig, UmapState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DimRedKind {
    Pca,
    Umap,
    None,
}

impl DimRedKind {
    pub const ALL: [DimRedKind; 3] = [DimRedKind::Pca, DimRedKind::Umap, DimRedKind::None];

    pub fn tag(self) -> &'static str {
        match self {
            DimRedKind::Pca => "pca",
            DimRedKind::Umap => "umap",
            DimRedKind::None => "none",
        }
    }
}

impl fmt::Display for DimRedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for DimRedKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pca" => Ok(DimRedKind::Pca),
            "umap" => Ok(DimRedKind::Umap),
            "none" => Ok(DimRedKind::None),
            other => Err(Error::InvalidConfig(format!("unknown dimensionality reduction '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionState<S> {
    Pca(PcaState<S>),
    Umap(UmapState<S>),
    None { dim: usize },
}

/// A fitted reduction from `d` to `out_dim` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<S> {
    pub kind: DimRedKind,
    pub out_dim: usize,
    pub state: ProjectionState<S>,
}

impl<S: Scalar> Projection<S> {
    /// Fits `kind` on `points` and returns the projection with the training points' embedding.
    pub fn fit(kind: DimRedKind, points: &Matrix<S>, umap: &UmapConfig) -> Result<(Self, Matrix<S>)> {
        match kind {
            DimRedKind::Pca => {
                let out = umap.out_dim.min(points.rows()).min(points.cols());
                let p = pca_fit(points, out)?;
                let y = pca_transform(&p, points)?;
                Ok((p, y))
            }
            DimRedKind::Umap => {
                let st = umap::fit(points, umap)?;
                let y = st.embedding.clone();
                let p = Projection {
                    kind,
                    out_dim: umap.out_dim,
                    state: ProjectionState::Umap(st),
                };
                Ok((p, y))
            }
            DimRedKind::None => Ok((
                Projection {
                    kind,
                    out_dim: points.cols(),
                    state: ProjectionState::None { dim: points.cols() },
                },
                points.clone(),
            )),
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.state {
            ProjectionState::Pca(st) => st.mean.len(),
            ProjectionState::Umap(st) => st.train.cols(),
            ProjectionState::None { dim } => *dim,
        }
    }

    pub fn transform(&self, points: &Matrix<S>) -> Result<Matrix<S>> {
        match &self.state {
            ProjectionState::Pca(st) => pca::transform(st, points),
            ProjectionState::Umap(st) => umap::transform(st, points),
            ProjectionState::None { dim } => {
                if points.cols() != *dim {
                    return Err(crate::error::shape_err(*dim, points.cols()));
                }
                Ok(identity(points))
            }
        }
    }

    /// Maps reduced coordinates back to the input space. Only PCA is invertible.
    pub fn inverse(&self, y: &Matrix<S>) -> Result<Matrix<S>> {
        match &self.state {
            ProjectionState::Pca(st) => pca::inverse(st, y),
            ProjectionState::None { .. } => Ok(y.clone()),
            ProjectionState::Umap(_) => Err(Error::InvalidConfig("UMAP has no inverse transform".into())),
        }
    }

    pub fn pca(&self) -> Option<&PcaState<S>> {
        match &self.state {
            ProjectionState::Pca(st) => Some(st),
            _ => None,
        }
    }
}

pub fn pca_fit<S: Scalar>(points: &Matrix<S>, out_dim: usize) -> Result<Projection<S>> {
    let st = pca::fit(points, out_dim)?;
    Ok(Projection {
        kind: DimRedKind::Pca,
        out_dim,
        state: ProjectionState::Pca(st),
    })
}

pub fn pca_transform<S: Scalar>(proj: &Projection<S>, points: &Matrix<S>) -> Result<Matrix<S>> {
    match &proj.state {
        ProjectionState::Pca(st) => pca::transform(st, points),
        _ => Err(Error::InvalidConfig(format!("expected a PCA projection, got {}", proj.kind))),
    }
}

pub fn umap_fit_transform<S: Scalar>(points: &Matrix<S>, cfg: &UmapConfig) -> Result<Matrix<S>> {
    Ok(umap::fit(points, cfg)?.embedding)
}

pub fn identity<S: Scalar>(points: &Matrix<S>) -> Matrix<S> {
    points.clone()
}
