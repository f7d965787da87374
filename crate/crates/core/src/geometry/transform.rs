use serde::{Deserialize, Serialize};

use super::linalg::{self, Mat3, Vec3};
use super::GeometryError;

/// Largest tolerated `‖RᵀR − I‖∞` for a rotation matrix.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Rotation for intrinsic Z-Y-X Euler angles: `R = R_z(yaw) · R_y(pitch) · R_x(roll)`.
///
/// The three angles are the box orientation angles `(θ, φ, ψ)` in that order.
pub fn euler_to_rotation(yaw: f64, pitch: f64, roll: f64) -> Mat3 {
    let (sz, cz) = yaw.sin_cos();
    let (sy, cy) = pitch.sin_cos();
    let (sx, cx) = roll.sin_cos();
    [
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ]
}

/// Inverse of [`euler_to_rotation`]. Pitch is returned in `[-π/2, π/2]`; at gimbal
/// lock the roll is pinned to zero.
pub fn rotation_to_euler(r: &Mat3) -> [f64; 3] {
    let pitch = (-r[2][0]).clamp(-1.0, 1.0).asin();
    if pitch.cos().abs() > 1e-12 {
        let yaw = r[1][0].atan2(r[0][0]);
        let roll = r[2][1].atan2(r[2][2]);
        [yaw, pitch, roll]
    } else {
        let yaw = (-r[0][1]).atan2(r[1][1]);
        [yaw, pitch, 0.0]
    }
}

/// Rigid motion `x ↦ R x + t`. Camera extrinsics use the camera→world direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, GeometryError> {
        if rotation
            .iter()
            .flatten()
            .chain(translation.iter())
            .any(|v| !v.is_finite())
        {
            return Err(GeometryError::NonFinite("rigid transform"));
        }
        let err = linalg::orthonormality_error(&rotation);
        let det = linalg::determinant(&rotation);
        if err >= ORTHONORMAL_TOL || (det - 1.0).abs() >= ORTHONORMAL_TOL * 10.0 {
            return Err(GeometryError::NotARotation {
                deviation: err,
                determinant: det,
            });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub const fn identity() -> Self {
        Self {
            rotation: linalg::IDENTITY,
            translation: [0.0; 3],
        }
    }

    pub const fn from_translation(t: Vec3) -> Self {
        Self {
            rotation: linalg::IDENTITY,
            translation: t,
        }
    }

    pub fn from_euler(angles: [f64; 3], translation: Vec3) -> Self {
        Self {
            rotation: euler_to_rotation(angles[0], angles[1], angles[2]),
            translation,
        }
    }

    /// Parses a row-major 3×4 `[R | t]` matrix.
    pub fn from_row_major_3x4(m: &[f64]) -> Result<Self, GeometryError> {
        if m.len() != 12 {
            return Err(GeometryError::BadLength {
                what: "3x4 extrinsic",
                expected: 12,
                got: m.len(),
            });
        }
        let rotation = [[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]];
        Self::new(rotation, [m[3], m[7], m[11]])
    }

    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0], r[0][1], r[0][2], t[0], r[1][0], r[1][1], r[1][2], t[1], r[2][0], r[2][1],
            r[2][2], t[2],
        ]
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    #[inline]
    pub fn apply(&self, p: Vec3) -> Vec3 {
        linalg::add(linalg::mat_vec(&self.rotation, p), self.translation)
    }

    /// Applies the inverse motion without building it.
    #[inline]
    pub fn apply_inverse(&self, p: Vec3) -> Vec3 {
        linalg::mat_t_vec(&self.rotation, linalg::sub(p, self.translation))
    }

    pub fn inverse(&self) -> Self {
        let rt = linalg::transpose(&self.rotation);
        let t = linalg::scale(linalg::mat_vec(&rt, self.translation), -1.0);
        Self {
            rotation: rt,
            translation: t,
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: linalg::mat_mul(&self.rotation, &other.rotation),
            translation: self.apply(other.translation),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn zero_angles_give_identity() {
        assert_eq!(euler_to_rotation(0.0, 0.0, 0.0), linalg::IDENTITY);
    }

    #[test]
    fn yaw_quarter_turn_maps_x_to_y() {
        let r = euler_to_rotation(FRAC_PI_2, 0.0, 0.0);
        let x = linalg::mat_vec(&r, [1.0, 0.0, 0.0]);
        assert!((x[0]).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15 && x[2].abs() < 1e-15);
    }

    #[test]
    fn composition_order_is_z_then_y_then_x() {
        let (t, p, s) = (0.3, 0.5, 0.7);
        let rz = euler_to_rotation(t, 0.0, 0.0);
        let ry = euler_to_rotation(0.0, p, 0.0);
        let rx = euler_to_rotation(0.0, 0.0, s);
        let expected = linalg::mat_mul(&linalg::mat_mul(&rz, &ry), &rx);
        let got = euler_to_rotation(t, p, s);
        for i in 0..3 {
            for j in 0..3 {
                assert!((got[i][j] - expected[i][j]).abs() < 1e-15);
            }
        }
        assert!(linalg::orthonormality_error(&got) < 1e-12);
        assert!((linalg::determinant(&got) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_rotations_are_proper() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let a: [f64; 3] = [
                rng.gen_range(-PI..PI),
                rng.gen_range(-PI..PI),
                rng.gen_range(-PI..PI),
            ];
            let r = euler_to_rotation(a[0], a[1], a[2]);
            assert!(linalg::orthonormality_error(&r) < 1e-12);
            assert!((linalg::determinant(&r) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let a = [
                rng.gen_range(-PI..PI),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-PI..PI),
            ];
            let back = rotation_to_euler(&euler_to_rotation(a[0], a[1], a[2]));
            let r1 = euler_to_rotation(a[0], a[1], a[2]);
            let r2 = euler_to_rotation(back[0], back[1], back[2]);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((r1[i][j] - r2[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_non_rotation() {
        let bad = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(RigidTransform::new(bad, [0.0; 3]).is_err());
        let reflection = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(RigidTransform::new(reflection, [0.0; 3]).is_err());
    }

    #[test]
    fn inverse_and_compose() {
        let t = RigidTransform::from_euler([0.4, -0.2, 1.1], [1.0, -2.0, 0.5]);
        let p = [0.3, 0.7, -1.2];
        let q = t.inverse().apply(t.apply(p));
        for k in 0..3 {
            assert!((p[k] - q[k]).abs() < 1e-12);
        }
        let round = RigidTransform::from_row_major_3x4(&t.to_row_major_3x4()).unwrap();
        assert_eq!(round, t);
        let id = t.compose(&t.inverse());
        assert!(linalg::norm(id.apply(p)) - linalg::norm(p) < 1e-12);
    }
}
