//! Poses, unit quaternions, axis-aligned boxes and the 16-value low-level
//! action layout shared with the protocol module.
//!
//! Quaternions use the `(x, y, z, w)` component order everywhere, including
//! on the wire.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Quaternions whose squared norm is this close to one are kept bit-for-bit.
const NORM_SQ_KEEP: f64 = 1e-12;
/// Below this norm a quaternion carries no usable orientation.
const MIN_NORM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("quaternion norm {0:e} is too small to normalize")]
    NonNormalizable(f64),
    #[error("quaternion has a non-finite component")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Distance in the table plane, ignoring z.
    pub fn horizontal_distance(self, o: Vec3) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn lerp(self, o: Vec3, t: f64) -> Vec3 {
        self + (o - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.5}, {:.5}, {:.5}]", self.x, self.y, self.z)
    }
}

/// A unit quaternion. Every constructor normalizes or rejects its input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quaternion {
    x: f64,
    y: f64,
    z: f64,
    w: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { x: 0.0, y: 0.0, z: 0.0, w: 1.0 };

    pub fn new(x: f64, y: f64, z: f64, w: f64) -> Result<Self, GeometryError> {
        if !(x.is_finite() && y.is_finite() && z.is_finite() && w.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let n2 = x * x + y * y + z * z + w * w;
        if (n2 - 1.0).abs() <= NORM_SQ_KEEP {
            return Ok(Quaternion { x, y, z, w });
        }
        let n = n2.sqrt();
        if n < MIN_NORM {
            return Err(GeometryError::NonNormalizable(n));
        }
        Ok(Quaternion { x: x / n, y: y / n, z: z / n, w: w / n })
    }

    /// Rotation of `angle` radians about `axis` (right-handed).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self, GeometryError> {
        let n = axis.norm();
        if n < MIN_NORM {
            return Err(GeometryError::NonNormalizable(n));
        }
        let (s, c) = (angle / 2.0).sin_cos();
        let a = axis * (s / n);
        Quaternion::new(a.x, a.y, a.z, c)
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }
    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.z, self.w]
    }

    pub fn conjugate(self) -> Quaternion {
        Quaternion { x: -self.x, y: -self.y, z: -self.z, w: self.w }
    }

    /// Hamilton product `self * other` (apply `other` first).
    pub fn mul(self, o: Quaternion) -> Quaternion {
        let (a, b) = (self, o);
        let x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y;
        let y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x;
        let z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
        let w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z;
        Quaternion::new(x, y, z, w).expect("product of unit quaternions is a unit quaternion")
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    pub fn dot(self, o: Quaternion) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z + self.w * o.w
    }

    /// Smallest rotation angle taking `self` onto `o`, in `[0, pi]`.
    pub fn angle_to(self, o: Quaternion) -> f64 {
        2.0 * self.dot(o).abs().min(1.0).acos()
    }

    /// Shortest-arc spherical interpolation.
    pub fn slerp(self, o: Quaternion, t: f64) -> Quaternion {
        let mut d = self.dot(o);
        let mut end = o;
        if d < 0.0 {
            d = -d;
            end = Quaternion { x: -o.x, y: -o.y, z: -o.z, w: -o.w };
        }
        let (s0, s1) = if d > 0.9995 {
            (1.0 - t, t)
        } else {
            let theta = d.acos();
            let sin = theta.sin();
            (((1.0 - t) * theta).sin() / sin, (t * theta).sin() / sin)
        };
        Quaternion::new(
            s0 * self.x + s1 * end.x,
            s0 * self.y + s1 * end.y,
            s0 * self.z + s1 * end.z,
            s0 * self.w + s1 * end.w,
        )
        .expect("interpolated unit quaternions stay normalizable")
    }
}

impl Default for Quaternion {
    fn default() -> Self {
        Quaternion::IDENTITY
    }
}

impl TryFrom<[f64; 4]> for Quaternion {
    type Error = GeometryError;
    fn try_from(a: [f64; 4]) -> Result<Self, Self::Error> {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        q.to_array()
    }
}

pub fn quat_rotate(q: Quaternion, v: Vec3) -> Vec3 {
    q.rotate(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quaternion,
}

impl Pose {
    pub fn new(position: Vec3, orientation: Quaternion) -> Self {
        Pose { position, orientation }
    }

    /// Position plus orientation as a 7-vector `[x, y, z, qx, qy, qz, qw]`.
    pub fn to_array(self) -> [f64; 7] {
        let p = self.position;
        let q = self.orientation;
        [p.x, p.y, p.z, q.x, q.y, q.z, q.w]
    }
}

/// One arm's commanded end-effector pose and gripper opening.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmCommand {
    pub pose: Pose,
    /// 0 = fully closed, 1 = fully open.
    pub gripper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowLevelAction {
    pub left: ArmCommand,
    pub right: ArmCommand,
}

pub const ACTION_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActionDecodeError {
    #[error("expected 16 values, got {0}")]
    WrongArity(usize),
    #[error("value at index {0} is not finite")]
    NonFinite(usize),
    #[error("{arm} quaternion cannot be normalized")]
    NonNormalizable { arm: &'static str },
}

/// Splits `[left xyz, left quat, left gripper, right xyz, right quat,
/// right gripper]` into a validated action.
pub fn decode_action(raw: &[f64]) -> Result<LowLevelAction, ActionDecodeError> {
    if raw.len() != ACTION_LEN {
        return Err(ActionDecodeError::WrongArity(raw.len()));
    }
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(ActionDecodeError::NonFinite(i));
    }
    let arm = |s: &[f64], name: &'static str| -> Result<ArmCommand, ActionDecodeError> {
        let orientation = Quaternion::new(s[3], s[4], s[5], s[6])
            .map_err(|_| ActionDecodeError::NonNormalizable { arm: name })?;
        Ok(ArmCommand {
            pose: Pose::new(Vec3::new(s[0], s[1], s[2]), orientation),
            gripper: s[7].clamp(0.0, 1.0),
        })
    };
    Ok(LowLevelAction { left: arm(&raw[..8], "left")?, right: arm(&raw[8..], "right")? })
}

pub fn encode_action(a: &LowLevelAction) -> [f64; ACTION_LEN] {
    let mut out = [0.0; ACTION_LEN];
    for (slot, cmd) in [(0usize, &a.left), (8, &a.right)] {
        out[slot..slot + 7].copy_from_slice(&cmd.pose.to_array());
        out[slot + 7] = cmd.gripper;
    }
    out
}

/// Axis-aligned box used for collision volumes and footprints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_center(center: Vec3, half: Vec3) -> Self {
        Aabb { min: center - half, max: center + half }
    }

    pub fn translated(self, d: Vec3) -> Self {
        Aabb { min: self.min + d, max: self.max + d }
    }

    /// Strict overlap: boxes that only touch do not overlap.
    pub fn overlaps(&self, o: &Aabb, eps: f64) -> bool {
        (0..3).all(|a| {
            self.min.component(a) < o.max.component(a) - eps
                && o.min.component(a) < self.max.component(a) - eps
        })
    }

    pub fn overlaps_xy(&self, o: &Aabb, eps: f64) -> bool {
        (0..2).all(|a| {
            self.min.component(a) < o.max.component(a) - eps
                && o.min.component(a) < self.max.component(a) - eps
        })
    }

    /// True when this box's footprint lies inside `o`'s footprint.
    pub fn footprint_within(&self, o: &Aabb, eps: f64) -> bool {
        self.min.x >= o.min.x - eps
            && self.max.x <= o.max.x + eps
            && self.min.y >= o.min.y - eps
            && self.max.y <= o.max.y + eps
    }

    pub fn contains_xy(&self, p: Vec3) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn distance_to_point(&self, p: Vec3) -> f64 {
        let d = |lo: f64, hi: f64, v: f64| (lo - v).max(0.0).max(v - hi);
        Vec3::new(
            d(self.min.x, self.max.x, p.x),
            d(self.min.y, self.max.y, p.y),
            d(self.min.z, self.max.z, p.z),
        )
        .norm()
    }

    /// Earliest fraction `t` in `[0, 1]` at which this box, moving by `d`,
    /// starts to overlap `o`. `None` if the swept motion stays clear.
    pub fn time_of_impact(&self, d: Vec3, o: &Aabb, eps: f64) -> Option<f64> {
        let mut enter = 0.0_f64;
        let mut exit = 1.0_f64;
        for a in 0..3 {
            let (lo, hi) = (self.min.component(a), self.max.component(a));
            let (olo, ohi) = (o.min.component(a), o.max.component(a));
            let v = d.component(a);
            // Overlap on this axis requires lo + v t < ohi - eps and olo + eps < hi + v t.
            if v.abs() < 1e-15 {
                if !(lo < ohi - eps && olo < hi - eps) {
                    return None;
                }
                continue;
            }
            let t1 = (ohi - eps - lo) / v;
            let t2 = (olo + eps - hi) / v;
            let (t_in, t_out) = if v > 0.0 { (t2, t1) } else { (t1, t2) };
            enter = enter.max(t_in);
            exit = exit.min(t_out);
            if enter >= exit {
                return None;
            }
        }
        Some(enter.max(0.0))
    }
}
