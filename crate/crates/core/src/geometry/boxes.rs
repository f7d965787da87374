use serde::{Deserialize, Serialize};

use super::linalg::{self, Mat3, Vec3};
use super::transform::{euler_to_rotation, rotation_to_euler};
use super::{GeometryError, RigidTransform};

/// Oriented box: center, extents `(l, w, h)` along the local x/y/z axes, and
/// Z-Y-X Euler angles `(θ, φ, ψ)`.
///
/// Serialized everywhere as `[x, y, z, l, w, h, θ, φ, ψ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Box9DoF {
    pub center: Vec3,
    pub extents: Vec3,
    pub angles: Vec3,
}

impl TryFrom<[f64; 9]> for Box9DoF {
    type Error = GeometryError;

    fn try_from(v: [f64; 9]) -> Result<Self, Self::Error> {
        Self::from_array(v)
    }
}

impl From<Box9DoF> for [f64; 9] {
    fn from(b: Box9DoF) -> Self {
        b.to_array()
    }
}

impl Box9DoF {
    pub fn new(center: Vec3, extents: Vec3, angles: Vec3) -> Result<Self, GeometryError> {
        let b = Self {
            center,
            extents,
            angles,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn axis_aligned(center: Vec3, extents: Vec3) -> Result<Self, GeometryError> {
        Self::new(center, extents, [0.0; 3])
    }

    pub fn from_array(v: [f64; 9]) -> Result<Self, GeometryError> {
        Self::new([v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]])
    }

    pub fn from_slice(v: &[f64]) -> Result<Self, GeometryError> {
        let arr: [f64; 9] = v.try_into().map_err(|_| GeometryError::BadLength {
            what: "box",
            expected: 9,
            got: v.len(),
        })?;
        Self::from_array(arr)
    }

    pub fn to_array(&self) -> [f64; 9] {
        let (c, e, a) = (self.center, self.extents, self.angles);
        [c[0], c[1], c[2], e[0], e[1], e[2], a[0], a[1], a[2]]
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.to_array().iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("box"));
        }
        if self.extents.iter().any(|e| *e < 0.0) {
            return Err(GeometryError::NegativeExtent(self.extents));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Mat3 {
        euler_to_rotation(self.angles[0], self.angles[1], self.angles[2])
    }

    pub fn volume(&self) -> f64 {
        self.extents[0] * self.extents[1] * self.extents[2]
    }

    pub fn half_extents(&self) -> Vec3 {
        linalg::scale(self.extents, 0.5)
    }

    /// Corner `i` has local sign pattern `(±, ±, ±)` from bits 0, 1, 2 of `i`
    /// (bit set = positive).
    pub fn corners(&self) -> [Vec3; 8] {
        let r = self.rotation();
        let h = self.half_extents();
        std::array::from_fn(|i| {
            let local = [
                if i & 1 != 0 { h[0] } else { -h[0] },
                if i & 2 != 0 { h[1] } else { -h[1] },
                if i & 4 != 0 { h[2] } else { -h[2] },
            ];
            linalg::add(self.center, linalg::mat_vec(&r, local))
        })
    }

    /// Axis-aligned bound as `(min, max)`.
    pub fn aabb(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for c in self.corners() {
            for k in 0..3 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        (lo, hi)
    }

    /// Box moved by a rigid motion. The orientation is re-expressed as Euler angles.
    pub fn transformed(&self, t: &RigidTransform) -> Self {
        let r = linalg::mat_mul(t.rotation(), &self.rotation());
        Self {
            center: t.apply(self.center),
            extents: self.extents,
            angles: rotation_to_euler(&r),
        }
    }
}

/// Precomputed point-membership test for a box.
#[derive(Debug, Clone, Copy)]
pub struct BoxMembership {
    center: Vec3,
    rotation: Mat3,
    half: Vec3,
}

impl BoxMembership {
    pub fn new(b: &Box9DoF) -> Self {
        Self {
            center: b.center,
            rotation: b.rotation(),
            half: b.half_extents(),
        }
    }

    #[inline]
    pub fn contains(&self, p: Vec3) -> bool {
        let local = linalg::mat_t_vec(&self.rotation, linalg::sub(p, self.center));
        local[0].abs() <= self.half[0]
            && local[1].abs() <= self.half[1]
            && local[2].abs() <= self.half[2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn sorted(mut pts: Vec<Vec3>) -> Vec<Vec3> {
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts
    }

    #[test]
    fn unit_cube_corners() {
        let b = Box9DoF::axis_aligned([0.0; 3], [1.0; 3]).unwrap();
        for c in b.corners() {
            assert!(c.iter().all(|v| v.abs() == 0.5));
        }
    }

    #[test]
    fn corner_centroid_is_center() {
        let b = Box9DoF::new([1.5, -0.25, 3.0], [0.3, 2.0, 1.1], [0.9, -0.4, 2.2]).unwrap();
        let mut m = [0.0; 3];
        for c in b.corners() {
            m = linalg::add(m, c);
        }
        for (sum, c) in m.iter().zip(b.center) {
            assert!((sum / 8.0 - c).abs() < 1e-12);
        }
    }

    #[test]
    fn yaw_quarter_turn_swaps_extents() {
        let rotated = Box9DoF::new([0.0; 3], [2.0, 1.0, 1.0], [FRAC_PI_2, 0.0, 0.0]).unwrap();
        let aligned = Box9DoF::axis_aligned([0.0; 3], [1.0, 2.0, 1.0]).unwrap();
        let a = sorted(rotated.corners().to_vec());
        let b = sorted(aligned.corners().to_vec());
        for (p, q) in a.iter().zip(&b) {
            for k in 0..3 {
                assert!((p[k] - q[k]).abs() < 1e-12, "{p:?} vs {q:?}");
            }
        }
    }

    #[test]
    fn serde_is_nine_element_array() {
        let b = Box9DoF::new([1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [0.1, 0.2, 0.3]).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, "[1.0,2.0,3.0,4.0,5.0,6.0,0.1,0.2,0.3]");
        let back: Box9DoF = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
        assert!(serde_json::from_str::<Box9DoF>("[0,0,0,-1,1,1,0,0,0]").is_err());
        assert!(serde_json::from_str::<Box9DoF>("[0,0,0,1,1,1,0,0]").is_err());
    }

    #[test]
    fn membership() {
        let b = Box9DoF::new([1.0, 0.0, 0.0], [2.0, 1.0, 1.0], [FRAC_PI_2, 0.0, 0.0]).unwrap();
        let m = BoxMembership::new(&b);
        assert!(m.contains([1.0, 0.9, 0.0]));
        assert!(!m.contains([1.9, 0.0, 0.0]));
    }
}
