//! Scene assembly from multi-view depth, seeded subsampling and lifting of 2D
//! feature maps onto 3D points.

mod manifest;

pub use manifest::{load_pyramids, load_scan, ManifestView, SceneManifest};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::formats::FormatError;
use crate::geometry::{
    project_point, unproject_depth_indexed, CameraIntrinsics, DepthImage, GeometryError,
    RigidTransform, Vec3,
};
use crate::hsse::FeaturePyramid;
use crate::nncore::{NnError, Tensor};

/// Fraction of points kept by default.
pub const DEFAULT_SAMPLE_RATIO: f64 = 0.02;

#[derive(Debug, thiserror::Error)]
pub enum PointCloudError {
    #[error("no valid depth pixels in any view")]
    Empty,
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Which depth pixel a point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointSource {
    pub view: u32,
    pub u: u32,
    pub v: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    features: Option<Tensor>,
    sources: Option<Vec<PointSource>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self, PointCloudError> {
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("point coordinates").into());
        }
        Ok(Self {
            points,
            features: None,
            sources: None,
        })
    }

    /// Attaches an `N × C` feature array.
    pub fn with_features(mut self, features: Tensor) -> Result<Self, PointCloudError> {
        let (n, _) = features.dims2()?;
        if n != self.points.len() {
            return Err(PointCloudError::Shape(format!(
                "{} points but {n} feature rows",
                self.points.len()
            )));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn features(&self) -> Option<&Tensor> {
        self.features.as_ref()
    }

    pub fn sources(&self) -> Option<&[PointSource]> {
        self.sources.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Rows `indices` of points, features and sources, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let features = self.features.as_ref().map(|f| {
            let c = f.shape()[1];
            let data = indices
                .iter()
                .flat_map(|&i| f.row(i).iter().copied())
                .collect();
            Tensor::new([indices.len(), c], data).expect("row selection")
        });
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            features,
            sources: self
                .sources
                .as_ref()
                .map(|s| indices.iter().map(|&i| s[i]).collect()),
        }
    }
}

/// One RGB-D view: the depth raster with the depth sensor's calibration and
/// the image sensor's calibration used for feature lookup. Extrinsics map
/// sensor coordinates to world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanView {
    pub depth: DepthImage,
    pub image_intrinsics: CameraIntrinsics,
    pub depth_intrinsics: CameraIntrinsics,
    pub image_to_world: RigidTransform,
    pub depth_to_world: RigidTransform,
    /// Location of the view's feature pyramid, when loaded from a manifest.
    pub features_path: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewScan {
    pub scene_id: String,
    pub views: Vec<ScanView>,
}

impl MultiViewScan {
    pub fn new(scene_id: impl Into<String>, views: Vec<ScanView>) -> Result<Self, PointCloudError> {
        if views.is_empty() {
            return Err(PointCloudError::Argument(
                "a scan needs at least one view".into(),
            ));
        }
        for v in &views {
            v.image_intrinsics.validate()?;
            v.depth_intrinsics.validate()?;
        }
        Ok(Self {
            scene_id: scene_id.into(),
            views,
        })
    }
}

/// All views' valid depth pixels in world coordinates, ordered by view then
/// row-major pixel.
pub fn assemble_scene(scan: &MultiViewScan) -> Result<PointCloud, PointCloudError> {
    let mut points = Vec::new();
    let mut sources = Vec::new();
    for (i, view) in scan.views.iter().enumerate() {
        for (p, (u, v)) in
            unproject_depth_indexed(&view.depth, &view.depth_intrinsics, &view.depth_to_world)?
        {
            points.push(p);
            sources.push(PointSource {
                view: i as u32,
                u,
                v,
            });
        }
    }
    if points.is_empty() {
        return Err(PointCloudError::Empty);
    }
    let mut pc = PointCloud::new(points)?;
    pc.sources = Some(sources);
    Ok(pc)
}

/// Picks `count` distinct indices out of `0..n`.
pub trait SamplingStrategy {
    fn choose(&self, n: usize, count: usize, seed: u64) -> Vec<usize>;
}

/// Uniform sampling without replacement driven by ChaCha8.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformSampler;

impl SamplingStrategy for UniformSampler {
    fn choose(&self, n: usize, count: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, n, count).into_vec()
    }
}

/// `⌈ratio·n⌉`, ignoring representation error below 1e-9 (so that 0.07·100
/// gives 7, not 8), and at least one point.
pub fn sample_count(n: usize, ratio: f64) -> usize {
    let m = (ratio * n as f64 - 1e-9).ceil().max(1.0) as usize;
    m.min(n)
}

pub fn sparse_sample(
    pc: &PointCloud,
    ratio: f64,
    seed: u64,
) -> Result<PointCloud, PointCloudError> {
    sparse_sample_with(pc, ratio, seed, &UniformSampler)
}

/// Keeps `sample_count(N, ratio)` points; survivors keep their input order.
pub fn sparse_sample_with(
    pc: &PointCloud,
    ratio: f64,
    seed: u64,
    strategy: &dyn SamplingStrategy,
) -> Result<PointCloud, PointCloudError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(PointCloudError::Argument(format!(
            "sampling ratio {ratio} outside (0, 1]"
        )));
    }
    if pc.is_empty() {
        return Err(PointCloudError::Empty);
    }
    let n = pc.len();
    let count = sample_count(n, ratio);
    let mut idx = if count == n {
        (0..n).collect()
    } else {
        strategy.choose(n, count, seed)
    };
    idx.sort_unstable();
    idx.dedup();
    if idx.len() != count || idx.last().is_some_and(|&i| i >= n) {
        return Err(PointCloudError::Argument(format!(
            "sampling strategy returned invalid indices for {count} of {n}"
        )));
    }
    Ok(pc.select(&idx))
}

/// Bilinear lookup in an `H × W × C` map at continuous cell coordinates
/// (cell centers at integers), clamped to the border.
pub fn bilinear_sample(map: &Tensor, x: f64, y: f64) -> Vec<f64> {
    let (h, w, c) = map.dims3().expect("rank-3 map");
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let px = |yy: usize, xx: usize| &map.data()[(yy * w + xx) * c..][..c];
    let taps = [
        ((1.0 - fy) * (1.0 - fx), px(y0, x0)),
        ((1.0 - fy) * fx, px(y0, x1)),
        (fy * (1.0 - fx), px(y1, x0)),
        (fy * fx, px(y1, x1)),
    ];
    let mut out = vec![0.0; c];
    for (wt, vals) in taps {
        if wt != 0.0 {
            for (o, v) in out.iter_mut().zip(vals) {
                *o += wt * v;
            }
        }
    }
    out
}

/// Image pixel coordinate to feature-map cell coordinate. Both grids share
/// the same field of view, so edges map to edges.
pub fn image_to_feature_coord(p: f64, image_size: u32, map_size: usize) -> f64 {
    (p + 0.5) * map_size as f64 / f64::from(image_size) - 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedFeatures {
    /// `N × C` mean of the sampled features over visible views.
    pub features: Tensor,
    /// Number of views each point was visible in; 0 marks a zero row.
    pub view_counts: Vec<u32>,
}

impl LiftedFeatures {
    pub fn visible(&self, i: usize) -> bool {
        self.view_counts[i] > 0
    }
}

/// Projects every point into every view's image sensor and averages the
/// bilinearly sampled features of scale `scale` (1-based) over the views
/// that see it.
pub fn lift_features(
    pc: &PointCloud,
    scan: &MultiViewScan,
    pyramids: &[FeaturePyramid],
    scale: usize,
) -> Result<LiftedFeatures, PointCloudError> {
    if pyramids.len() != scan.views.len() {
        return Err(PointCloudError::Shape(format!(
            "{} pyramids for {} views",
            pyramids.len(),
            scan.views.len()
        )));
    }
    let mut maps = Vec::with_capacity(pyramids.len());
    for (v, p) in pyramids.iter().enumerate() {
        let map = scale
            .checked_sub(1)
            .and_then(|s| p.scales().get(s))
            .ok_or_else(|| PointCloudError::Argument(format!("view {v} has no scale {scale}")))?;
        maps.push(map);
    }
    let c = maps[0].shape()[2];
    if maps.iter().any(|m| m.shape()[2] != c) {
        return Err(PointCloudError::Shape(format!(
            "scale {scale} widths differ across views"
        )));
    }

    let rows: Vec<(Vec<f64>, u32)> = pc
        .points()
        .par_iter()
        .map(|&p| {
            let mut acc = vec![0.0; c];
            let mut count = 0u32;
            for (view, map) in scan.views.iter().zip(&maps) {
                let Some((u, v, _)) =
                    project_point(p, &view.image_intrinsics, &view.image_to_world).visible()
                else {
                    continue;
                };
                let k = &view.image_intrinsics;
                let x = image_to_feature_coord(u, k.width, map.shape()[1]);
                let y = image_to_feature_coord(v, k.height, map.shape()[0]);
                for (a, s) in acc.iter_mut().zip(bilinear_sample(map, x, y)) {
                    *a += s;
                }
                count += 1;
            }
            if count > 1 {
                acc.iter_mut().for_each(|a| *a /= f64::from(count));
            }
            (acc, count)
        })
        .collect();
    let view_counts = rows.iter().map(|r| r.1).collect();
    let data = rows.into_iter().flat_map(|r| r.0).collect();
    Ok(LiftedFeatures {
        features: Tensor::new([pc.len(), c], data)?,
        view_counts,
    })
}

/// Row-wise `[semantic | geometric]`.
pub fn concat_geo_features(
    semantic: &Tensor,
    geometric: &Tensor,
) -> Result<Tensor, PointCloudError> {
    let (n, cs) = semantic.dims2()?;
    let (ng, cg) = geometric.dims2()?;
    if n != ng {
        return Err(PointCloudError::Shape(format!(
            "{n} semantic rows vs {ng} geometric rows"
        )));
    }
    let mut data = Vec::with_capacity(n * (cs + cg));
    for i in 0..n {
        data.extend_from_slice(semantic.row(i));
        data.extend_from_slice(geometric.row(i));
    }
    Ok(Tensor::new([n, cs + cg], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_counts() {
        assert_eq!(sample_count(100, 0.02), 2);
        assert_eq!(sample_count(100, 0.07), 7);
        assert_eq!(sample_count(101, 0.02), 3);
        assert_eq!(sample_count(10, 0.01), 1);
        assert_eq!(sample_count(10, 1.0), 10);
    }

    #[test]
    fn bilinear_nodes_and_midpoints() {
        let m = Tensor::new([2, 2, 1], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(bilinear_sample(&m, 1.0, 0.0), vec![1.0]);
        assert_eq!(bilinear_sample(&m, 0.5, 0.5), vec![1.5]);
        assert_eq!(bilinear_sample(&m, -3.0, 7.0), vec![2.0]);
    }

    #[test]
    fn feature_coordinates() {
        assert_eq!(image_to_feature_coord(-0.5, 640, 20), -0.5);
        assert_eq!(image_to_feature_coord(639.5, 640, 20), 19.5);
        assert_eq!(image_to_feature_coord(15.5, 640, 20), 0.0);
        assert_eq!(image_to_feature_coord(7.0, 8, 8), 7.0);
    }

    #[test]
    fn concat_examples() {
        let s = Tensor::new([2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = Tensor::new([2, 3], vec![5.0, 6.0, 7.0, 8.0, 9.0, 10.0]).unwrap();
        let out = concat_geo_features(&s, &g).unwrap();
        assert_eq!(out.shape(), &[2, 5]);
        assert_eq!(out.row(1), &[3.0, 4.0, 8.0, 9.0, 10.0]);
        let z = concat_geo_features(&s, &Tensor::zeros([2, 3])).unwrap();
        assert_eq!(&z.row(0)[..2], s.row(0));
        let empty = concat_geo_features(&Tensor::zeros([0, 2]), &Tensor::zeros([0, 3])).unwrap();
        assert_eq!(empty.shape(), &[0, 5]);
        assert!(concat_geo_features(&s, &Tensor::zeros([3, 1])).is_err());
    }
}
