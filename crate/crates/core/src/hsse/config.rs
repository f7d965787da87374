use serde::{Deserialize, Deserializer, Serialize};

use super::HsseError;

/// Self-attention layers in the scene-level interaction.
pub const DEFAULT_SCENE_LAYERS: usize = 3;
/// Side of the pooled per-view query grid.
pub const DEFAULT_POOLED_SIZE: usize = 5;
/// 1-based index of the reference scale.
pub const DEFAULT_REFERENCE_SCALE: usize = 2;
pub const DEFAULT_HEADS: usize = 4;
pub const DEFAULT_CHANNELS: usize = 16;

fn default_reference_scale() -> usize {
    DEFAULT_REFERENCE_SCALE
}
fn default_pooled_size() -> [usize; 2] {
    [DEFAULT_POOLED_SIZE; 2]
}
fn default_scene_layers() -> usize {
    DEFAULT_SCENE_LAYERS
}
fn default_heads() -> usize {
    DEFAULT_HEADS
}
fn default_channels() -> usize {
    DEFAULT_CHANNELS
}

/// Accepts either `5` or `[5, 5]`.
fn pooled_size<'de, D: Deserializer<'de>>(d: D) -> Result<[usize; 2], D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Size {
        Square(usize),
        Pair([usize; 2]),
    }
    Ok(match Size::deserialize(d)? {
        Size::Square(s) => [s, s],
        Size::Pair(p) => p,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HsseConfig {
    /// 1-based scale whose resolution the fused reference map takes.
    #[serde(default = "default_reference_scale")]
    pub reference_scale: usize,
    /// Pooled query grid `(h, w)`.
    #[serde(default = "default_pooled_size", deserialize_with = "pooled_size")]
    pub pooled_size: [usize; 2],
    #[serde(default = "default_scene_layers")]
    pub scene_layers: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    /// Common channel width after per-scale input projections.
    #[serde(default = "default_channels")]
    pub channels: usize,
}

impl Default for HsseConfig {
    fn default() -> Self {
        Self {
            reference_scale: DEFAULT_REFERENCE_SCALE,
            pooled_size: [DEFAULT_POOLED_SIZE; 2],
            scene_layers: DEFAULT_SCENE_LAYERS,
            heads: DEFAULT_HEADS,
            channels: DEFAULT_CHANNELS,
        }
    }
}

impl HsseConfig {
    pub fn from_json(text: &str) -> Result<Self, HsseError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HsseError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that do not depend on the input pyramid.
    pub fn validate(&self) -> Result<(), HsseError> {
        if self.reference_scale == 0 {
            return Err(HsseError::Config("reference_scale is 1-based".into()));
        }
        if self.pooled_size.contains(&0) {
            return Err(HsseError::Config("pooled size must be positive".into()));
        }
        if self.scene_layers == 0 {
            return Err(HsseError::Config("scene_layers must be at least 1".into()));
        }
        if self.heads == 0 || self.channels == 0 || !self.channels.is_multiple_of(self.heads) {
            return Err(HsseError::Config(format!(
                "channels ({}) must be a positive multiple of heads ({})",
                self.channels, self.heads
            )));
        }
        Ok(())
    }

    /// Pooled tokens per view.
    pub fn tokens_per_view(&self) -> usize {
        self.pooled_size[0] * self.pooled_size[1]
    }
}
