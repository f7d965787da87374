//! Hierarchical scene semantic enhancement over multi-view feature pyramids:
//! per-view reference fusion and pooled queries, a joint scene-level pass with
//! language tokens, and a broadcast back into every scale.

mod config;
mod embed;
mod model;

pub use config::{
    HsseConfig, DEFAULT_CHANNELS, DEFAULT_HEADS, DEFAULT_POOLED_SIZE, DEFAULT_REFERENCE_SCALE,
    DEFAULT_SCENE_LAYERS,
};
pub use embed::ToyEmbedder;
pub use model::{
    aggregate_view, broadcast_semantics, fuse_reference, gradcheck_fixture, harmonize,
    hsse_forward, pool_view_queries, refine_view, scene_interaction, sinusoidal_2d, HsseModel,
    HsseOutput, TapeOutput, GRADCHECK_PARAMS,
};

use crate::nncore::{NnError, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum HsseError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Per-scale `H_s × W_s × C_s` feature maps of one view, coarse or fine in
/// whatever order the producer chose; scale `s` is `scales[s - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    scales: Vec<Tensor>,
}

impl FeaturePyramid {
    pub fn new(scales: Vec<Tensor>) -> Result<Self, HsseError> {
        if scales.is_empty() {
            return Err(HsseError::Shape(
                "a pyramid needs at least one scale".into(),
            ));
        }
        for (i, t) in scales.iter().enumerate() {
            let (h, w, c) = t.dims3()?;
            if h == 0 || w == 0 || c == 0 {
                return Err(HsseError::Shape(format!(
                    "scale {} has an empty dimension: {:?}",
                    i + 1,
                    t.shape()
                )));
            }
        }
        Ok(Self { scales })
    }

    pub fn scales(&self) -> &[Tensor] {
        &self.scales
    }

    pub fn into_scales(self) -> Vec<Tensor> {
        self.scales
    }

    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    /// `(H, W, C)` per scale.
    pub fn shapes(&self) -> Vec<[usize; 3]> {
        self.scales
            .iter()
            .map(|t| [t.shape()[0], t.shape()[1], t.shape()[2]])
            .collect()
    }

    pub fn channels(&self) -> Vec<usize> {
        self.scales.iter().map(|t| t.shape()[2]).collect()
    }
}

/// `T × C` token features of one description.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageFeatures(Tensor);

impl LanguageFeatures {
    pub fn new(tokens: Tensor) -> Result<Self, HsseError> {
        let (t, c) = tokens.dims2()?;
        if t == 0 || c == 0 {
            return Err(HsseError::Shape(format!(
                "language features must be non-empty, got {:?}",
                tokens.shape()
            )));
        }
        Ok(Self(tokens))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn channels(&self) -> usize {
        self.0.shape()[1]
    }
}
