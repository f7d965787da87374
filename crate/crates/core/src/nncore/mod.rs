//! Minimal dense tensors with reverse-mode gradients, sized for desk-scale
//! attention experiments and finite-difference verification. Everything is
//! `f64` and single-threaded.

mod checkpoint;
mod gradcheck;
pub mod layers;
pub mod ops;
mod params;
mod resample;
mod tape;
mod tensor;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointEntry, CheckpointManifest, MANIFEST_FILE,
};
pub use gradcheck::{
    grad_check, op_suite, relative_error, GradCheckConfig, GradCheckReport, Kink, SUITE_OPS,
};
pub use layers::{AttentionParams, AttentionVars, BlockSpec};
pub use params::{Bound, Param, ParamStore};
pub use resample::Resampler;
pub use tape::{Gradients, Tape, Var, LN_EPS};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("expected a rank-{expected} tensor, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
