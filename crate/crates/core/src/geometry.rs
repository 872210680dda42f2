//! Rigid-body primitives: vectors, unit quaternions, SE(3) poses and
//! spherical interpolation.
//!
//! Rotations are stored as quaternions and converted to matrices only when a
//! caller needs one (projection, PCA). All angles are radians.

use core::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};
#[allow(unused_imports)]
use num_traits::Float;



/// Below this angle `slerp` falls back to normalized linear interpolation.
pub const SLERP_LERP_THRESHOLD: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn from_f32(a: [f32; 3]) -> Self {
        Self::new(a[0] as f64, a[1] as f64, a[2] as f64)
    }

    #[inline]
    pub fn to_f32(self) -> [f32; 3] {
        [self.x as f32, self.y as f32, self.z as f32]
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn distance_squared(self, o: Vec3) -> f64 {
        (self - o).norm_squared()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn try_normalize(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 1e-300 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn normalized(self) -> Vec3 {
        self.try_normalize().unwrap_or(Vec3::ZERO)
    }

    pub fn component_min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn component_max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn lerp(self, o: Vec3, t: f64) -> Vec3 {
        self + (o - self) * t
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// Row-major 3x3 matrix.
pub type Mat3 = [[f64; 3]; 3];

pub fn mat3_mul_vec(m: &Mat3, v: Vec3) -> Vec3 {
    Vec3::new(
        m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
        m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
        m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
    )
}

pub fn mat3_determinant(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Unit quaternion with the sign convention `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Normalizes and canonicalizes the sign. A zero quaternion yields identity.
    /// Input that is already canonical to rounding is kept bit for bit.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Quat {
        let n2 = w * w + x * x + y * y + z * z;
        if w >= 0.0 && (n2 - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Quat { w, x, y, z };
        }
        let n = n2.sqrt();
        if !(n > 1e-300) || !n.is_finite() {
            return Quat::IDENTITY;
        }
        let s = if w < 0.0 { -1.0 / n } else { 1.0 / n };
        Quat { w: w * s, x: x * s, y: y * s, z: z * s }
    }

    pub fn from_array(a: [f64; 4]) -> Quat {
        Quat::from_wxyz(a[0], a[1], a[2], a[3])
    }

    #[inline]
    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    #[inline]
    pub fn w(self) -> f64 {
        self.w
    }

    #[inline]
    pub fn vector_part(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let Some(a) = axis.try_normalize() else {
            return Quat::IDENTITY;
        };
        let (s, c) = (angle * 0.5).sin_cos();
        Quat::from_wxyz(c, a.x * s, a.y * s, a.z * s)
    }

    pub fn rot_x(angle: f64) -> Quat {
        Quat::from_axis_angle(Vec3::X, angle)
    }

    pub fn rot_y(angle: f64) -> Quat {
        Quat::from_axis_angle(Vec3::Y, angle)
    }

    pub fn rot_z(angle: f64) -> Quat {
        Quat::from_axis_angle(Vec3::Z, angle)
    }

    /// Exponential map: rotation vector (axis * angle) to quaternion.
    pub fn from_rotation_vector(v: Vec3) -> Quat {
        let angle = v.norm();
        if angle < 1e-12 {
            return Quat::from_wxyz(1.0, 0.5 * v.x, 0.5 * v.y, 0.5 * v.z);
        }
        Quat::from_axis_angle(v / angle, angle)
    }

    /// Logarithm map: the rotation vector with angle in `[0, pi]`.
    pub fn to_rotation_vector(self) -> Vec3 {
        let v = self.vector_part();
        let s = v.norm();
        if s < 1e-12 {
            // angle ~ 2 s / w, direction v / s
            return v * (2.0 / self.w.max(1e-300));
        }
        let angle = 2.0 * s.atan2(self.w);
        v * (angle / s)
    }

    pub fn conjugate(self) -> Quat {
        // w >= 0 is preserved
        Quat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn inverse(self) -> Quat {
        self.conjugate()
    }

    #[inline]
    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Hamilton product `self * o` (apply `o` first, then `self`).
    pub fn mul(self, o: Quat) -> Quat {
        Quat::from_wxyz(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    #[inline]
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = self.vector_part();
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    pub fn to_matrix(self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Quaternion of a proper rotation matrix (Shepperd's method).
    pub fn from_matrix(m: &Mat3) -> Quat {
        let trace = m[0][0] + m[1][1] + m[2][2];
        if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat::from_wxyz(
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Quat::from_wxyz(
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Quat::from_wxyz(
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Quat::from_wxyz(
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            )
        }
    }

    /// Rotation whose columns are the given orthonormal axes.
    pub fn from_axes(x_axis: Vec3, y_axis: Vec3, z_axis: Vec3) -> Quat {
        let m = [
            [x_axis.x, y_axis.x, z_axis.x],
            [x_axis.y, y_axis.y, z_axis.y],
            [x_axis.z, y_axis.z, z_axis.z],
        ];
        Quat::from_matrix(&m)
    }

    /// Geodesic angle between two rotations, in `[0, pi]`.
    pub fn angle_to(self, o: Quat) -> f64 {
        let d = self.conjugate().mul(o);
        2.0 * d.vector_part().norm().atan2(d.w.abs())
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Spherical linear interpolation along the shortest arc.
///
/// `t = 0` returns `q0` and `t = 1` returns `q1` exactly.
pub fn slerp(q0: Quat, q1: Quat, t: f64) -> Quat {
    if t <= 0.0 {
        return q0;
    }
    if t >= 1.0 {
        return q1;
    }
    let mut end = q1.to_array();
    if q0.dot(q1) < 0.0 {
        end = end.map(|c| -c);
    }
    let start = q0.to_array();
    // angle between the quaternions on S^3 (half the rotation angle), from
    // the chord length for accuracy near zero
    let chord = (0..4).map(|k| (end[k] - start[k]) * (end[k] - start[k])).sum::<f64>().sqrt();
    let theta = 2.0 * (0.5 * chord).min(1.0).asin();
    let (a, b) = if 2.0 * theta < SLERP_LERP_THRESHOLD {
        (1.0 - t, t)
    } else {
        let s = theta.sin();
        (((1.0 - t) * theta).sin() / s, (t * theta).sin() / s)
    };
    Quat::from_wxyz(
        a * start[0] + b * end[0],
        a * start[1] + b * end[1],
        a * start[2] + b * end[2],
        a * start[3] + b * end[3],
    )
}

/// Rigid transform `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: Quat,
    pub translation: Vec3,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { rotation: Quat::IDENTITY, translation: Vec3::ZERO };

    pub fn new(rotation: Quat, translation: Vec3) -> Pose {
        Pose { rotation, translation }
    }

    pub fn from_translation(t: Vec3) -> Pose {
        Pose { rotation: Quat::IDENTITY, translation: t }
    }

    pub fn from_rotation(r: Quat) -> Pose {
        Pose { rotation: r, translation: Vec3::ZERO }
    }

    /// `self` after `other`: `compose(a, b).apply_point(p) == a.apply_point(b.apply_point(p))`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.mul(other.rotation),
            translation: self.rotation.rotate(other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let r = self.rotation.inverse();
        Pose { rotation: r, translation: -r.rotate(self.translation) }
    }

    #[inline]
    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    #[inline]
    pub fn apply_vector(&self, v: Vec3) -> Vec3 {
        self.rotation.rotate(v)
    }

    /// Serialized layout `[w, x, y, z, tx, ty, tz]`.
    pub fn to_array(&self) -> [f64; 7] {
        let q = self.rotation.to_array();
        let t = self.translation;
        [q[0], q[1], q[2], q[3], t.x, t.y, t.z]
    }

    pub fn from_array(a: [f64; 7]) -> Pose {
        Pose {
            rotation: Quat::from_wxyz(a[0], a[1], a[2], a[3]),
            translation: Vec3::new(a[4], a[5], a[6]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.translation.is_finite() && self.rotation.to_array().iter().all(|c| c.is_finite())
    }

    /// Rotation angle and translation distance between two poses.
    pub fn distance_to(&self, o: &Pose) -> (f64, f64) {
        (self.rotation.angle_to(o.rotation), self.translation.distance(o.translation))
    }

    /// Camera-style pose at `eye` looking at `target`: local +z forward, +y
    /// down, +x right, with `up` fixing the roll.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Pose {
        let forward = (target - eye).normalized();
        let mut right = forward.cross(up);
        if right.norm() < 1e-9 {
            let alt = if forward.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
            right = forward.cross(alt);
        }
        let right = right.normalized();
        let down = forward.cross(right);
        Pose { rotation: Quat::from_axes(right, down, forward), translation: eye }
    }
}
