use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Encoder,
    Decoder,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    Uniform(f64),
    Ones,
    Zeros,
}

/// One named parameter tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub part: Part,
    pub(crate) init: Init,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered layout of every parameter block; encoder blocks precede decoder blocks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamLayout {
    blocks: Vec<ParamBlock>,
    total: usize,
    part: Option<Part>,
}

impl ParamLayout {
    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Number of leading parameters that belong to the encoder.
    pub fn encoder_len(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.part == Part::Encoder)
            .map(ParamBlock::len)
            .sum()
    }

    pub(crate) fn begin(&mut self, part: Part) {
        if part == Part::Encoder {
            assert!(
                self.blocks.iter().all(|b| b.part == Part::Encoder),
                "encoder blocks must precede decoder blocks"
            );
        }
        self.part = Some(part);
    }

    pub(crate) fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, init: Init) -> usize {
        let block = ParamBlock {
            name: name.into(),
            offset: self.total,
            part: self.part.expect("layout part not set"),
            init,
            shape,
        };
        self.total += block.len();
        self.blocks.push(block);
        self.blocks.len() - 1
    }

    pub(crate) fn initialize<S: Scalar, R: Rng>(&self, rng: &mut R) -> Vec<S> {
        let mut params = Vec::with_capacity(self.total);
        for b in &self.blocks {
            match b.init {
                Init::Uniform(bound) => {
                    params.extend((0..b.len()).map(|_| S::of(rng.random_range(-bound..=bound))))
                }
                Init::Ones => params.extend(std::iter::repeat_n(S::one(), b.len())),
                Init::Zeros => params.extend(std::iter::repeat_n(S::zero(), b.len())),
            }
        }
        params
    }
}
