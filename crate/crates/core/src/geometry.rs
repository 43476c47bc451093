//! Planar points, rigid SE(2) frames, oriented boxes and convex overlap tests.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::{wrap_angle, Real};

/// A point or vector in the plane. Serialized as `[x, y]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Serialize> Serialize for Vec2<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeTuple;
        let mut t = s.serialize_tuple(2)?;
        t.serialize_element(&self.x)?;
        t.serialize_element(&self.y)?;
        t.end()
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Vec2<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        <[T; 2]>::deserialize(d).map(Vec2::from)
    }
}

impl<T> From<[T; 2]> for Vec2<T> {
    fn from([x, y]: [T; 2]) -> Self {
        Vec2 { x, y }
    }
}

impl<T> From<Vec2<T>> for [T; 2] {
    fn from(v: Vec2<T>) -> Self {
        [v.x, v.y]
    }
}

impl<T: Real> Vec2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Vec2 { x, y }
    }

    #[inline]
    pub fn zero() -> Self {
        Vec2::new(T::zero(), T::zero())
    }

    /// Unit vector pointing along `angle`.
    #[inline]
    pub fn from_angle(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Vec2::new(c, s)
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product; positive when `o` is to the left of `self`.
    #[inline]
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    #[inline]
    pub fn angle(self) -> T {
        self.y.atan2(self.x)
    }

    /// Left-hand normal (rotated +90 degrees).
    #[inline]
    pub fn perp(self) -> Self {
        Vec2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            self * (T::one() / n)
        } else {
            self
        }
    }

    #[inline]
    pub fn rotated(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    #[inline]
    pub fn lerp(self, o: Self, t: T) -> Self {
        self + (o - self) * t
    }
}

impl<T: Real> Add for Vec2<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> AddAssign for Vec2<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Real> Mul<T> for Vec2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, k: T) -> Self {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl<T: Real> Neg for Vec2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec2::new(-self.x, -self.y)
    }
}

/// Position and heading in the plane. Heading is counter-clockwise from +x and
/// is kept wrapped to `(-pi, pi]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2D<T> {
    pub x: T,
    pub y: T,
    pub yaw: T,
}

impl<T: Real> Pose2D<T> {
    pub fn new(x: T, y: T, yaw: T) -> Self {
        Pose2D {
            x,
            y,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn identity() -> Self {
        Pose2D::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn position(&self) -> Vec2<T> {
        Vec2::new(self.x, self.y)
    }

    #[inline]
    pub fn heading(&self) -> Vec2<T> {
        Vec2::from_angle(self.yaw)
    }

    /// `self ∘ other`: `other` is expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose2D<T>) -> Pose2D<T> {
        let p = local_to_global(self, other.position());
        Pose2D::new(p.x, p.y, self.yaw + other.yaw)
    }

    pub fn inverse(&self) -> Pose2D<T> {
        let p = Vec2::new(-self.x, -self.y).rotated(-self.yaw);
        Pose2D::new(p.x, p.y, -self.yaw)
    }

    /// Pose of `other` expressed in the frame of `self`.
    pub fn relative(&self, other: &Pose2D<T>) -> Pose2D<T> {
        self.inverse().compose(other)
    }
}

/// Expresses a global point in the local frame (x forward, y left).
#[inline]
pub fn global_to_local<T: Real>(frame: &Pose2D<T>, point: Vec2<T>) -> Vec2<T> {
    let (s, c) = frame.yaw.sin_cos();
    let dx = point.x - frame.x;
    let dy = point.y - frame.y;
    Vec2::new(c * dx + s * dy, -s * dx + c * dy)
}

/// Inverse of [`global_to_local`].
#[inline]
pub fn local_to_global<T: Real>(frame: &Pose2D<T>, point: Vec2<T>) -> Vec2<T> {
    let (s, c) = frame.yaw.sin_cos();
    Vec2::new(
        frame.x + c * point.x - s * point.y,
        frame.y + s * point.x + c * point.y,
    )
}

/// Oriented rectangle described by its center, heading and half extents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obb<T> {
    pub center: Vec2<T>,
    pub yaw: T,
    pub half_length: T,
    pub half_width: T,
}

impl<T: Real> Obb<T> {
    pub fn new(center: Vec2<T>, yaw: T, length: T, width: T) -> Self {
        Obb {
            center,
            yaw,
            half_length: length * T::lit(0.5),
            half_width: width * T::lit(0.5),
        }
    }

    pub fn from_pose(pose: &Pose2D<T>, length: T, width: T) -> Self {
        Obb::new(pose.position(), pose.yaw, length, width)
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Vec2<T>; 4] {
        let f = Vec2::from_angle(self.yaw) * self.half_length;
        let l = Vec2::from_angle(self.yaw).perp() * self.half_width;
        let c = self.center;
        [c + f - l, c + f + l, c - f + l, c - f - l]
    }

    pub fn contains(&self, p: Vec2<T>) -> bool {
        let local = global_to_local(&Pose2D::new(self.center.x, self.center.y, self.yaw), p);
        local.x.abs() <= self.half_length && local.y.abs() <= self.half_width
    }

    pub fn area(&self) -> T {
        T::lit(4.0) * self.half_length * self.half_width
    }

    /// Same box re-expressed through a rigid transform (the box is given in `frame`).
    pub fn to_global(&self, frame: &Pose2D<T>) -> Self {
        Obb {
            center: local_to_global(frame, self.center),
            yaw: wrap_angle(frame.yaw + self.yaw),
            ..*self
        }
    }

    /// Inverse of [`Obb::to_global`].
    pub fn to_local(&self, frame: &Pose2D<T>) -> Self {
        Obb {
            center: global_to_local(frame, self.center),
            yaw: wrap_angle(self.yaw - frame.yaw),
            ..*self
        }
    }
}

fn project<T: Real>(poly: &[Vec2<T>], axis: Vec2<T>) -> (T, T) {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for p in poly {
        let d = p.dot(axis);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

fn separated_along_edges<T: Real>(a: &[Vec2<T>], b: &[Vec2<T>]) -> bool {
    let n = a.len();
    for i in 0..n {
        let edge = a[(i + 1) % n] - a[i];
        let axis = edge.perp();
        if axis.x == T::zero() && axis.y == T::zero() {
            continue;
        }
        let (a0, a1) = project(a, axis);
        let (b0, b1) = project(b, axis);
        // Touching projections still count as contact.
        if a1 < b0 || b1 < a0 {
            return true;
        }
    }
    false
}

/// Separating-axis test for two convex polygons. Touching counts as overlap.
pub fn convex_overlap<T: Real>(a: &[Vec2<T>], b: &[Vec2<T>]) -> bool {
    if a.is_empty() || b.is_empty() {
        return false;
    }
    !(separated_along_edges(a, b) || separated_along_edges(b, a))
}

/// Oriented rectangle intersection, touching edges included.
pub fn obb_overlap<T: Real>(a: &Obb<T>, b: &Obb<T>) -> bool {
    // Cheap bounding-circle rejection before the axis tests.
    let ra = a.half_length.hypot(a.half_width);
    let rb = b.half_length.hypot(b.half_width);
    if a.center.distance(b.center) > ra + rb {
        return false;
    }
    convex_overlap(&a.corners(), &b.corners())
}

/// Point-in-convex-polygon test (boundary inclusive), any winding.
pub fn convex_contains<T: Real>(poly: &[Vec2<T>], p: Vec2<T>) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut sign = 0i8;
    for i in 0..n {
        let c = (poly[(i + 1) % n] - poly[i]).cross(p - poly[i]);
        let s = if c > T::zero() {
            1
        } else if c < T::zero() {
            -1
        } else {
            0
        };
        if s != 0 {
            if sign == 0 {
                sign = s;
            } else if s != sign {
                return false;
            }
        }
    }
    true
}

/// Closest point on segment `[a, b]` to `p`, returned with its parameter `t ∈ [0, 1]`.
pub fn project_on_segment<T: Real>(p: Vec2<T>, a: Vec2<T>, b: Vec2<T>) -> (Vec2<T>, T) {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 <= T::zero() {
        return (a, T::zero());
    }
    let t = ((p - a).dot(ab) / len2).max(T::zero()).min(T::one());
    (a + ab * t, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn identity_frame_is_noop() {
        let f = Pose2D::new(0.0, 0.0, 0.0);
        assert_eq!(global_to_local(&f, Vec2::new(3.0, 4.0)), Vec2::new(3.0, 4.0));
    }

    #[test]
    fn rotated_frame_hand_evaluated() {
        let f = Pose2D::new(1.0, 0.0, FRAC_PI_2);
        let p = global_to_local(&f, Vec2::new(1.0, 1.0));
        assert!((p.x - 1.0).abs() < 1e-12 && p.y.abs() < 1e-12);
    }

    #[test]
    fn compose_inverse_is_identity() {
        let a = Pose2D::<f64>::new(3.0, -2.0, 2.5);
        let id = a.compose(&a.inverse());
        assert!(id.x.abs() < 1e-12 && id.y.abs() < 1e-12 && id.yaw.abs() < 1e-12);
        let b = Pose2D::new(-1.0, 4.0, -0.7);
        let r = a.relative(&b);
        let back = a.compose(&r);
        assert!((back.x - b.x).abs() < 1e-12 && (back.y - b.y).abs() < 1e-12);
    }

    #[test]
    fn obb_basic_cases() {
        let a = Obb::new(Vec2::new(0.0, 0.0), 0.0, 1.0, 1.0);
        assert!(obb_overlap(&a, &a));
        let far = Obb::new(Vec2::new(10.0, 0.0), 0.0, 1.0, 1.0);
        assert!(!obb_overlap(&a, &far));
        let touching = Obb::new(Vec2::new(1.0, 0.0), 0.0, 1.0, 1.0);
        assert!(obb_overlap(&a, &touching));
        let gap = Obb::new(Vec2::new(1.0 + 1e-9, 0.0), 0.0, 1.0, 1.0);
        assert!(!obb_overlap(&a, &gap));
    }

    // Dense grid containment oracle for the 45 degree case.
    #[test]
    fn obb_rotated_matches_grid_oracle() {
        let a = Obb::new(Vec2::new(0.0, 0.0), 0.0, 1.0, 1.0);
        let b = Obb::new(Vec2::new(1.0, 0.0), FRAC_PI_4, 1.0, 1.0);
        let n = 800;
        let mut hit = false;
        for i in 0..=n {
            for j in 0..=n {
                let p = Vec2::new(-0.5 + i as f64 / n as f64, -0.5 + j as f64 / n as f64);
                if a.contains(p) && b.contains(p) {
                    hit = true;
                }
            }
        }
        // the diamond's left vertex sits at x = 1 - sqrt(2)/2 ≈ 0.293 < 0.5
        assert!(hit);
        assert_eq!(obb_overlap(&a, &b), hit);
    }

    #[test]
    fn convex_contains_boundary() {
        let sq = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(convex_contains(&sq, Vec2::new(0.5, 0.5)));
        assert!(convex_contains(&sq, Vec2::new(1.0, 0.5)));
        assert!(!convex_contains(&sq, Vec2::new(1.1, 0.5)));
    }

    #[test]
    fn generic_over_f32() {
        let f = Pose2D::<f32>::new(1.0, 2.0, 0.3);
        let p = Vec2::<f32>::new(-4.0, 7.5);
        let q = local_to_global(&f, global_to_local(&f, p));
        assert!((q.x - p.x).abs() < 1e-5 && (q.y - p.y).abs() < 1e-5);
        let a = Obb::<f32>::new(Vec2::new(0.0, 0.0), 0.0, 4.5, 2.0);
        let b = Obb::<f32>::new(Vec2::new(4.0, 0.5), 0.4, 4.5, 2.0);
        assert!(obb_overlap(&a, &b));
    }

    #[test]
    fn vec2_serializes_as_pair() {
        let v = Vec2::new(1.5, -2.0);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, "[1.5,-2.0]");
        let back: Vec2<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
