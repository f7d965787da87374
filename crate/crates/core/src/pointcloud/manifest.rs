use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MultiViewScan, PointCloudError, ScanView};
use crate::formats::{read_depth, read_pyramid, FormatError};
use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::hsse::FeaturePyramid;

/// One view entry. Paths are relative to the manifest's directory unless
/// absolute; transforms are row-major 3×4 sensor→world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestView {
    pub rgb_features: String,
    pub depth: String,
    #[serde(rename = "K_I")]
    pub k_i: Vec<f64>,
    #[serde(rename = "K_D")]
    pub k_d: Vec<f64>,
    #[serde(rename = "T_I")]
    pub t_i: Vec<f64>,
    #[serde(rename = "T_D")]
    pub t_d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub scene_id: String,
    pub views: Vec<ManifestView>,
}

impl SceneManifest {
    pub fn read(path: &Path) -> Result<Self, PointCloudError> {
        let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| PointCloudError::Manifest(format!("{}: {e}", path.display())))
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads a manifest and every depth image it names.
pub fn load_scan(manifest_path: &Path) -> Result<MultiViewScan, PointCloudError> {
    let manifest = SceneManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut views = Vec::with_capacity(manifest.views.len());
    for (i, v) in manifest.views.iter().enumerate() {
        let ctx = |what: &str, e: &dyn std::fmt::Display| {
            PointCloudError::Manifest(format!("view {i} {what}: {e}"))
        };
        let depth_intrinsics = CameraIntrinsics::from_slice(&v.k_d).map_err(|e| ctx("K_D", &e))?;
        let image_intrinsics = CameraIntrinsics::from_slice(&v.k_i).map_err(|e| ctx("K_I", &e))?;
        let depth_to_world =
            RigidTransform::from_row_major_3x4(&v.t_d).map_err(|e| ctx("T_D", &e))?;
        let image_to_world =
            RigidTransform::from_row_major_3x4(&v.t_i).map_err(|e| ctx("T_I", &e))?;
        views.push(ScanView {
            depth: read_depth(&resolve(base, &v.depth))?,
            image_intrinsics,
            depth_intrinsics,
            image_to_world,
            depth_to_world,
            features_path: Some(resolve(base, &v.rgb_features)),
        });
    }
    MultiViewScan::new(manifest.scene_id, views)
}

/// Reads the feature pyramid of every view, in view order.
pub fn load_pyramids(scan: &MultiViewScan) -> Result<Vec<FeaturePyramid>, PointCloudError> {
    scan.views
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let path = v.features_path.as_deref().ok_or_else(|| {
                PointCloudError::Manifest(format!("view {i} has no feature pyramid"))
            })?;
            Ok(read_pyramid(path)?)
        })
        .collect()
}
