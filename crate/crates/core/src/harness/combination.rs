use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dimred::DimRedKind;
use crate::error::{Error, Result};
use crate::losses::Metric;
use crate::networks::Architecture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pretext {
    /// Reconstruction.
    Lr,
    /// Layerwise reconstruction.
    Llr,
    /// Variational lower bound.
    Lv,
    None,
}

impl Pretext {
    pub const ALL: [Pretext; 4] = [Pretext::Lr, Pretext::Llr, Pretext::Lv, Pretext::None];

    pub fn tag(self) -> &'static str {
        match self {
            Pretext::Lr => "lr",
            Pretext::Llr => "llr",
            Pretext::Lv => "lv",
            Pretext::None => "none",
        }
    }

    pub fn supported_by(self, arch: Architecture) -> bool {
        match self {
            Pretext::Llr => arch.supports_layerwise(),
            Pretext::Lv => arch.supports_gaussian(),
            Pretext::Lr | Pretext::None => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClusterLoss {
    /// Clustering layer with Euclidean distance.
    De,
    /// Clustering layer with complexity-invariant distance.
    Dc,
    None,
}

impl ClusterLoss {
    pub const ALL: [ClusterLoss; 3] = [ClusterLoss::De, ClusterLoss::Dc, ClusterLoss::None];

    pub fn tag(self) -> &'static str {
        match self {
            ClusterLoss::De => "de",
            ClusterLoss::Dc => "dc",
            ClusterLoss::None => "none",
        }
    }

    pub fn metric(self) -> Option<Metric> {
        match self {
            ClusterLoss::De => Some(Metric::Euclidean),
            ClusterLoss::Dc => Some(Metric::Cid),
            ClusterLoss::None => None,
        }
    }
}

macro_rules! tag_traits {
    ($t:ty, $what:literal) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.tag())
            }
        }

        impl FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let s = s.to_ascii_lowercase();
                Self::ALL
                    .into_iter()
                    .find(|v| v.tag() == s)
                    .ok_or_else(|| Error::InvalidConfig(format!(concat!("unknown ", $what, " '{}'"), s)))
            }
        }
    };
}

tag_traits!(Pretext, "pretext loss");
tag_traits!(ClusterLoss, "clustering loss");

/// One choice from each component class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComponentCombination {
    pub arch: Architecture,
    pub dimred: DimRedKind,
    pub pretext: Pretext,
    pub cluster_loss: ClusterLoss,
}

impl ComponentCombination {
    pub fn new(arch: Architecture, dimred: DimRedKind, pretext: Pretext, cluster_loss: ClusterLoss) -> Self {
        ComponentCombination {
            arch,
            dimred,
            pretext,
            cluster_loss,
        }
    }

    /// Checks the compatibility rules, naming the first one violated.
    pub fn check(&self) -> Result<()> {
        if !self.pretext.supported_by(self.arch) {
            return Err(Error::IncompatibleCombination(format!(
                "{}: the {} architecture does not support the {} pretext loss",
                self, self.arch, self.pretext
            )));
        }
        if self.cluster_loss != ClusterLoss::None && self.dimred != DimRedKind::None {
            return Err(Error::IncompatibleCombination(format!(
                "{self}: a clustering layer assigns clusters directly, so dimensionality reduction must be none"
            )));
        }
        if self.pretext == Pretext::None && self.cluster_loss == ClusterLoss::None {
            return Err(Error::IncompatibleCombination(format!(
                "{self}: no pretext and no clustering loss leaves nothing to train"
            )));
        }
        Ok(())
    }

    pub fn is_compatible(&self) -> bool {
        self.check().is_ok()
    }
}

/// `arch/dimred/pretext/closs`, lowercase.
impl fmt::Display for ComponentCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.arch.tag(),
            self.dimred.tag(),
            self.pretext.tag(),
            self.cluster_loss.tag()
        )
    }
}

impl FromStr for ComponentCombination {
    type Err = Error;

    /// Parses `arch/dimred/pretext/closs` without checking compatibility.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('/').collect();
        if parts.len() != 4 {
            return Err(Error::InvalidConfig(format!(
                "combination '{s}' must have the form arch/dimred/pretext/closs"
            )));
        }
        Ok(ComponentCombination {
            arch: parts[0].parse()?,
            dimred: parts[1].parse()?,
            pretext: parts[2].parse()?,
            cluster_loss: parts[3].parse()?,
        })
    }
}

/// Every compatible combination, in architecture, dimred, pretext, clustering-loss order.
pub fn enumerate_combinations() -> Vec<ComponentCombination> {
    let mut out = Vec::new();
    for arch in Architecture::ALL {
        for dimred in DimRedKind::ALL {
            for pretext in Pretext::ALL {
                for cluster_loss in ClusterLoss::ALL {
                    let c = ComponentCombination::new(arch, dimred, pretext, cluster_loss);
                    if c.is_compatible() {
                        out.push(c);
                    }
                }
            }
        }
    }
    out
}

/// CNN autoencoder, reconstruction pretext, Euclidean clustering layer, no reduction.
pub fn fthc_preset() -> ComponentCombination {
    ComponentCombination::new(Architecture::Cnn, DimRedKind::None, Pretext::Lr, ClusterLoss::De)
}

/// The comparison combinations: k-means on LSTM, FCNN and VAE latents, and the
/// CID clustering layer on the DTC architecture.
pub fn baselines() -> Vec<ComponentCombination> {
    use Architecture::*;
    vec![
        ComponentCombination::new(Lstm, DimRedKind::None, Pretext::Lr, ClusterLoss::None),
        ComponentCombination::new(Fcnn, DimRedKind::None, Pretext::Lr, ClusterLoss::None),
        ComponentCombination::new(Fcnn, DimRedKind::None, Pretext::Lv, ClusterLoss::None),
        ComponentCombination::new(Dtc, DimRedKind::None, Pretext::Lr, ClusterLoss::Dc),
    ]
}
