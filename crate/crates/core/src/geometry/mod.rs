//! Pinhole cameras, rigid motions, oriented 9-DoF boxes and their IoU.

mod boxes;
mod camera;
mod iou;
pub mod linalg;
mod transform;

pub use boxes::{Box9DoF, BoxMembership};
pub use camera::{
    project_point, unproject_depth, unproject_depth_indexed, CameraIntrinsics, DepthImage,
    IndexedPoint, Projection,
};
pub use iou::{intersection_volume, iou_9dof, iou_9dof_mc, DEGENERATE_VOLUME};
pub use linalg::{Mat3, Vec3};
pub use transform::{euler_to_rotation, rotation_to_euler, RigidTransform, ORTHONORMAL_TOL};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error(
        "rotation is not proper orthonormal (‖RᵀR − I‖∞ = {deviation:e}, det = {determinant})"
    )]
    NotARotation { deviation: f64, determinant: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("negative box extent {0:?}")]
    NegativeExtent([f64; 3]),
    #[error("{what}: expected {expected} values, got {got}")]
    BadLength {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("depth image is {depth:?} but intrinsics describe {intrinsics:?}")]
    DimensionMismatch {
        depth: (u32, u32),
        intrinsics: (u32, u32),
    },
}
