//! Intersection-over-union of oriented boxes.
//!
//! [`iou_9dof`] is exact up to floating point: the first box (in a canonical
//! order) is represented as a closed triangulated polytope and clipped against
//! the six half-spaces of the second box. Every clip cuts the faces with
//! Sutherland–Hodgman and closes the hole with a cap polygon lying on the
//! clipping plane. The clipped volume is the sum of signed tetrahedra over the
//! boundary.
//!
//! [`iou_9dof_mc`] is an independent rejection-sampling estimate used as an oracle.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::boxes::{Box9DoF, BoxMembership};
use super::linalg::{self, Vec3};

/// Unions smaller than this (m³) yield IoU 0.
pub const DEGENERATE_VOLUME: f64 = 1e-12;

/// Plane `normal · x = offset`; the kept side is `normal · x ≤ offset`.
#[derive(Debug, Clone, Copy)]
struct HalfSpace {
    normal: Vec3,
    offset: f64,
}

impl HalfSpace {
    #[inline]
    fn signed_distance(&self, p: Vec3) -> f64 {
        linalg::dot(self.normal, p) - self.offset
    }
}

fn half_spaces(b: &Box9DoF) -> [HalfSpace; 6] {
    let r = b.rotation();
    let h = b.half_extents();
    std::array::from_fn(|i| {
        let axis = i / 2;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let normal = linalg::scale(linalg::column(&r, axis), sign);
        HalfSpace {
            normal,
            offset: linalg::dot(normal, b.center) + h[axis],
        }
    })
}

/// Closed convex polytope stored as outward-oriented planar polygons.
#[derive(Debug, Clone, Default)]
struct Polytope {
    faces: Vec<Vec<Vec3>>,
}

impl Polytope {
    /// 8 vertices, 12 outward triangles.
    fn from_box(b: &Box9DoF) -> Self {
        let corners = b.corners();
        let mut faces = Vec::with_capacity(12);
        for axis in 0..3 {
            let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
            for side in 0..2usize {
                let corner = |bi: usize, bj: usize| corners[(side << axis) | (bi << i) | (bj << j)];
                let quad = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                // Local cycle (i, j) is counter-clockwise about +axis.
                let quad = if side == 1 {
                    quad
                } else {
                    [quad[0], quad[3], quad[2], quad[1]]
                };
                faces.push(vec![quad[0], quad[1], quad[2]]);
                faces.push(vec![quad[0], quad[2], quad[3]]);
            }
        }
        Self { faces }
    }

    fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    fn scale_hint(&self) -> f64 {
        self.faces
            .iter()
            .flatten()
            .flat_map(|p| p.iter())
            .fold(1.0_f64, |m, v| m.max(v.abs()))
    }

    fn clip(&self, plane: &HalfSpace) -> Self {
        let tol = 1e-12 * (1.0 + self.scale_hint());
        let mut any_outside = false;
        let mut any_inside = false;
        for p in self.faces.iter().flatten() {
            let d = plane.signed_distance(*p);
            any_outside |= d > tol;
            any_inside |= d < -tol;
        }
        if !any_outside {
            return self.clone();
        }
        if !any_inside {
            return Self::default();
        }

        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        let mut cap: Vec<Vec3> = Vec::new();
        for face in &self.faces {
            let dist: Vec<f64> = face.iter().map(|p| plane.signed_distance(*p)).collect();
            let mut out = Vec::with_capacity(face.len() + 2);
            for k in 0..face.len() {
                let (p, q) = (face[k], face[(k + 1) % face.len()]);
                let (dp, dq) = (dist[k], dist[(k + 1) % face.len()]);
                if dp <= tol {
                    out.push(p);
                    if dp >= -tol {
                        cap.push(p);
                    }
                }
                if (dp < -tol && dq > tol) || (dp > tol && dq < -tol) {
                    let t = dp / (dp - dq);
                    let x = linalg::add(p, linalg::scale(linalg::sub(q, p), t));
                    out.push(x);
                    cap.push(x);
                }
            }
            if out.len() >= 3 {
                faces.push(out);
            }
        }
        if let Some(polygon) = cap_polygon(cap, plane.normal, tol * 1e2) {
            faces.push(polygon);
        }
        Self { faces }
    }

    /// Volume from signed tetrahedra against `reference`.
    fn volume(&self, reference: Vec3) -> f64 {
        let mut six_v = 0.0;
        for face in &self.faces {
            let a = linalg::sub(face[0], reference);
            for k in 1..face.len() - 1 {
                let b = linalg::sub(face[k], reference);
                let c = linalg::sub(face[k + 1], reference);
                six_v += linalg::dot(a, linalg::cross(b, c));
            }
        }
        six_v / 6.0
    }
}

/// Orders coplanar points counter-clockwise about `normal`, merging near-duplicates.
fn cap_polygon(points: Vec<Vec3>, normal: Vec3, merge_tol: f64) -> Option<Vec<Vec3>> {
    let mut unique: Vec<Vec3> = Vec::with_capacity(points.len());
    for p in points {
        if !unique
            .iter()
            .any(|q| linalg::norm(linalg::sub(p, *q)) <= merge_tol)
        {
            unique.push(p);
        }
    }
    if unique.len() < 3 {
        return None;
    }
    let n = unique.len() as f64;
    let centroid = unique.iter().fold([0.0; 3], |acc, p| {
        linalg::add(acc, linalg::scale(*p, 1.0 / n))
    });
    let far = unique
        .iter()
        .map(|p| linalg::sub(*p, centroid))
        .max_by(|a, b| linalg::norm(*a).total_cmp(&linalg::norm(*b)))?;
    let len = linalg::norm(far);
    if len <= merge_tol {
        return None;
    }
    let e1 = linalg::scale(far, 1.0 / len);
    let e2 = linalg::cross(normal, e1);
    let mut keyed: Vec<(f64, Vec3)> = unique
        .into_iter()
        .map(|p| {
            let d = linalg::sub(p, centroid);
            (linalg::dot(d, e2).atan2(linalg::dot(d, e1)), p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(keyed.into_iter().map(|(_, p)| p).collect())
}

fn canonical_order<'a>(a: &'a Box9DoF, b: &'a Box9DoF) -> (&'a Box9DoF, &'a Box9DoF) {
    let ord = a
        .to_array()
        .iter()
        .zip(b.to_array().iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal);
    if ord == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    }
}

/// Exact intersection volume of two oriented boxes.
pub fn intersection_volume(a: &Box9DoF, b: &Box9DoF) -> f64 {
    let (first, second) = canonical_order(a, b);
    if first.volume() <= 0.0 || second.volume() <= 0.0 {
        return 0.0;
    }
    let mut poly = Polytope::from_box(first);
    for plane in half_spaces(second) {
        poly = poly.clip(&plane);
        if poly.is_empty() {
            return 0.0;
        }
    }
    poly.volume(first.center)
        .clamp(0.0, first.volume().min(second.volume()))
}

/// Exact 3D IoU of two oriented boxes, in `[0, 1]`.
///
/// Symmetric bit-for-bit. Returns 0 when the union volume is below
/// [`DEGENERATE_VOLUME`].
pub fn iou_9dof(a: &Box9DoF, b: &Box9DoF) -> f64 {
    let (first, second) = canonical_order(a, b);
    let inter = intersection_volume(first, second);
    let union = first.volume() + second.volume() - inter;
    if union < DEGENERATE_VOLUME {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Monte-Carlo IoU: uniform samples in the axis-aligned bound of `a ∪ b`, ratio
/// of samples inside both to samples inside either. Deterministic per seed.
pub fn iou_9dof_mc(a: &Box9DoF, b: &Box9DoF, samples: u64, seed: u64) -> f64 {
    let (lo_a, hi_a) = a.aabb();
    let (lo_b, hi_b) = b.aabb();
    let lo: Vec3 = std::array::from_fn(|k| lo_a[k].min(lo_b[k]));
    let hi: Vec3 = std::array::from_fn(|k| hi_a[k].max(hi_b[k]));
    let span = linalg::sub(hi, lo);
    let (ma, mb) = (BoxMembership::new(a), BoxMembership::new(b));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut both = 0u64;
    let mut either = 0u64;
    for _ in 0..samples.max(1) {
        let p = [
            lo[0] + span[0] * rng.gen::<f64>(),
            lo[1] + span[1] * rng.gen::<f64>(),
            lo[2] + span[2] * rng.gen::<f64>(),
        ];
        let (ia, ib) = (ma.contains(p), mb.contains(p));
        both += u64::from(ia && ib);
        either += u64::from(ia || ib);
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}
