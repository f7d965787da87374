use serde::{Deserialize, Serialize};

use super::linalg::Vec3;
use super::{GeometryError, RigidTransform};

/// Pinhole intrinsics (no distortion). Pixel centers sit at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Parses the `[fx, fy, cx, cy, w, h]` manifest layout.
    pub fn from_slice(v: &[f64]) -> Result<Self, GeometryError> {
        if v.len() != 6 {
            return Err(GeometryError::BadLength {
                what: "intrinsics",
                expected: 6,
                got: v.len(),
            });
        }
        if v[4] < 1.0 || v[5] < 1.0 || v[4].fract() != 0.0 || v[5].fract() != 0.0 {
            return Err(GeometryError::InvalidIntrinsics(
                "image size must be a positive integer",
            ));
        }
        Self::new(v[0], v[1], v[2], v[3], v[4] as u32, v[5] as u32)
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width as f64,
            self.height as f64,
        ]
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx.is_finite() && self.fy.is_finite() && self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(
                "focal lengths must be positive",
            ));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(GeometryError::InvalidIntrinsics("cx outside [0, width)"));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidIntrinsics("cy outside [0, height)"));
        }
        Ok(())
    }

    /// Camera-frame point for pixel `(u, v)` at depth `d`.
    #[inline]
    pub fn backproject(&self, u: f64, v: f64, d: f64) -> Vec3 {
        [(u - self.cx) * d / self.fx, (v - self.cy) * d / self.fy, d]
    }

    /// Whether a continuous pixel position lies on the sensor, pixel `i`
    /// covering `[i − ½, i + ½)`.
    #[inline]
    pub fn in_frame(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && u < self.width as f64 - 0.5 && v >= -0.5 && v < self.height as f64 - 0.5
    }
}

/// Row-major depth raster in meters. Non-positive or non-finite values are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: u32,
    height: u32,
    values: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self, GeometryError> {
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(GeometryError::BadLength {
                what: "depth values",
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: u32, height: u32, depth: f32) -> Self {
        Self {
            width,
            height,
            values: vec![depth; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, u: u32, v: u32) -> f32 {
        self.values[v as usize * self.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, depth: f32) {
        self.values[v as usize * self.width as usize + u as usize] = depth;
    }

    /// Depth at `(u, v)` if the pixel is valid.
    #[inline]
    pub fn valid_depth(&self, u: u32, v: u32) -> Option<f64> {
        let d = self.get(u, v);
        (d.is_finite() && d > 0.0).then_some(f64::from(d))
    }

    pub fn valid_count(&self) -> usize {
        self.values
            .iter()
            .filter(|d| d.is_finite() && **d > 0.0)
            .count()
    }

    /// Valid pixels in row-major order as `(u, v, depth)`.
    pub fn valid_pixels(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (0..self.height).flat_map(move |v| {
            (0..self.width).filter_map(move |u| self.valid_depth(u, v).map(|d| (u, v, d)))
        })
    }
}

/// Result of projecting a world point into a camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Visible { u: f64, v: f64, depth: f64 },
    BehindCamera,
    OutOfFrame { u: f64, v: f64, depth: f64 },
}

impl Projection {
    pub fn visible(self) -> Option<(f64, f64, f64)> {
        match self {
            Projection::Visible { u, v, depth } => Some((u, v, depth)),
            _ => None,
        }
    }
}

fn check_dims(depth: &DepthImage, intr: &CameraIntrinsics) -> Result<(), GeometryError> {
    if depth.width != intr.width || depth.height != intr.height {
        return Err(GeometryError::DimensionMismatch {
            depth: (depth.width, depth.height),
            intrinsics: (intr.width, intr.height),
        });
    }
    Ok(())
}

/// Back-projects every valid depth pixel into the world frame.
///
/// `extr` maps camera coordinates to world coordinates. Points come out in
/// row-major pixel order.
pub fn unproject_depth(
    depth: &DepthImage,
    intr: &CameraIntrinsics,
    extr: &RigidTransform,
) -> Result<Vec<Vec3>, GeometryError> {
    intr.validate()?;
    check_dims(depth, intr)?;
    Ok(depth
        .valid_pixels()
        .map(|(u, v, d)| extr.apply(intr.backproject(f64::from(u), f64::from(v), d)))
        .collect())
}

/// Like [`unproject_depth`], also returning the source pixel of each point.
/// A world point with the `(u, v)` pixel it came from.
pub type IndexedPoint = (Vec3, (u32, u32));

pub fn unproject_depth_indexed(
    depth: &DepthImage,
    intr: &CameraIntrinsics,
    extr: &RigidTransform,
) -> Result<Vec<IndexedPoint>, GeometryError> {
    intr.validate()?;
    check_dims(depth, intr)?;
    Ok(depth
        .valid_pixels()
        .map(|(u, v, d)| {
            (
                extr.apply(intr.backproject(f64::from(u), f64::from(v), d)),
                (u, v),
            )
        })
        .collect())
}

/// Projects a world point through a camera whose extrinsic is camera→world.
pub fn project_point(p: Vec3, intr: &CameraIntrinsics, extr: &RigidTransform) -> Projection {
    let c = extr.apply_inverse(p);
    let depth = c[2];
    if depth.is_nan() || depth <= 0.0 {
        return Projection::BehindCamera;
    }
    let u = intr.fx * c[0] / depth + intr.cx;
    let v = intr.fy * c[1] / depth + intr.cy;
    if intr.in_frame(u, v) {
        Projection::Visible { u, v, depth }
    } else {
        Projection::OutOfFrame { u, v, depth }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 480.0, 32.0, 24.0, 64, 48).unwrap()
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 3.9, 4, 4).is_ok());
        assert!(CameraIntrinsics::from_slice(&[1.0, 1.0, 0.0, 0.0, 4.5, 4.0]).is_err());
    }

    #[test]
    fn principal_point_ray() {
        let k = intr();
        let mut d = DepthImage::filled(64, 48, 0.0);
        d.set(32, 24, 2.5);
        let pts = unproject_depth(&d, &k, &RigidTransform::identity()).unwrap();
        assert_eq!(pts, vec![[0.0, 0.0, 2.5]]);
    }

    #[test]
    fn one_focal_length_off_axis() {
        let k = CameraIntrinsics::new(10.0, 10.0, 5.0, 5.0, 20, 10).unwrap();
        let mut d = DepthImage::filled(20, 10, -1.0);
        d.set(15, 5, 1.0);
        let pts = unproject_depth(&d, &k, &RigidTransform::identity()).unwrap();
        assert_eq!(pts, vec![[1.0, 0.0, 1.0]]);
    }

    #[test]
    fn translation_is_additive() {
        let k = intr();
        let mut d = DepthImage::filled(64, 48, f32::NAN);
        d.set(3, 40, 1.75);
        d.set(60, 2, 0.5);
        let t = [0.5, -1.0, 3.0];
        let a = unproject_depth(&d, &k, &RigidTransform::identity()).unwrap();
        let b = unproject_depth(&d, &k, &RigidTransform::from_translation(t)).unwrap();
        assert_eq!(a.len(), 2);
        for (p, q) in a.iter().zip(&b) {
            for i in 0..3 {
                assert!((p[i] + t[i] - q[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_depths_are_skipped() {
        let k = CameraIntrinsics::new(1.0, 1.0, 1.0, 1.0, 2, 2).unwrap();
        let d = DepthImage::new(2, 2, vec![0.0, -3.0, f32::INFINITY, 1.0]).unwrap();
        assert_eq!(
            unproject_depth(&d, &k, &RigidTransform::identity())
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let d = DepthImage::filled(10, 10, 1.0);
        let err = unproject_depth(&d, &intr(), &RigidTransform::identity()).unwrap_err();
        assert!(matches!(err, GeometryError::DimensionMismatch { .. }));
    }

    #[test]
    fn project_principal_axis_and_behind() {
        let k = intr();
        let id = RigidTransform::identity();
        assert_eq!(
            project_point([0.0, 0.0, 2.0], &k, &id),
            Projection::Visible {
                u: 32.0,
                v: 24.0,
                depth: 2.0
            }
        );
        assert_eq!(
            project_point([0.0, 0.0, -1.0], &k, &id),
            Projection::BehindCamera
        );
        assert!(matches!(
            project_point([10.0, 0.0, 1.0], &k, &id),
            Projection::OutOfFrame { .. }
        ));
    }

    #[test]
    fn round_trip_through_pose() {
        let k = intr();
        let pose = RigidTransform::from_euler([0.3, -0.4, 1.2], [1.0, 2.0, -0.5]);
        for (u, v) in [(0u32, 0u32), (63, 47), (10, 30)] {
            let mut d = DepthImage::filled(64, 48, 0.0);
            d.set(u, v, 3.25);
            let p = unproject_depth(&d, &k, &pose).unwrap()[0];
            let (pu, pv, pd) = project_point(p, &k, &pose).visible().unwrap();
            assert!((pu - f64::from(u)).abs() < 1e-9);
            assert!((pv - f64::from(v)).abs() < 1e-9);
            assert!((pd - 3.25).abs() < 1e-9);
        }
    }
}
