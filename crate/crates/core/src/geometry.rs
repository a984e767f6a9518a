//! Vector math, wall frames and specular mirror geometry.
//!
//! Frame: x-y is the floor plane, z points up, one room corner at the origin.
//! Ceiling access points face straight down.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking that a vector is unit length.
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
    #[error("invalid mirror orientation (roll {roll:.6} rad, yaw {yaw:.6} rad): normal leaves the room")]
    InvalidOrientation { roll: f64, yaw: f64 },
    #[error("mirror normal is (anti)parallel to the yaw axis; orientation is ambiguous")]
    AmbiguousOrientation,
    #[error("wall normal must be horizontal and unit length")]
    BadWallNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Positions share the vector representation.
pub type Point3 = Vec3;

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const UP: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
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

    pub fn distance(self, o: Vec3) -> f64 {
        (o - self).norm()
    }

    /// Horizontal (x-y) distance.
    pub fn planar_distance(self, o: Vec3) -> f64 {
        (o.x - self.x).hypot(o.y - self.y)
    }

    pub fn normalized(self) -> Result<UnitVec3, GeometryError> {
        UnitVec3::new(self)
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
        write!(f, "({:.4}, {:.4}, {:.4})", self.x, self.y, self.z)
    }
}

/// A direction with Euclidean norm 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec3(Vec3);

impl UnitVec3 {
    pub const DOWN: UnitVec3 = UnitVec3(Vec3::new(0.0, 0.0, -1.0));
    pub const UP: UnitVec3 = UnitVec3(Vec3::new(0.0, 0.0, 1.0));

    /// Normalizes `v`; fails on a (numerically) zero vector.
    pub fn new(v: Vec3) -> Result<Self, GeometryError> {
        let n = v.norm();
        if !(n > f64::MIN_POSITIVE) || !n.is_finite() {
            return Err(GeometryError::Degenerate("zero-length direction"));
        }
        Ok(UnitVec3(v * (1.0 / n)))
    }

    pub fn get(self) -> Vec3 {
        self.0
    }

    pub fn dot(self, o: UnitVec3) -> f64 {
        self.0.dot(o.0)
    }

    /// Angle between two directions in radians, in `[0, π]`.
    pub fn angle_to(self, o: UnitVec3) -> f64 {
        self.dot(o).clamp(-1.0, 1.0).acos()
    }
}

impl Neg for UnitVec3 {
    type Output = UnitVec3;
    fn neg(self) -> UnitVec3 {
        UnitVec3(-self.0)
    }
}

/// Cosine of the angle between `d` and the unit normal `n`.
pub fn cos_angle(d: Vec3, n: UnitVec3) -> Result<f64, GeometryError> {
    let len = d.norm();
    if !(len > 0.0) {
        return Err(GeometryError::Degenerate("zero-length displacement"));
    }
    Ok((d.dot(n.get()) / len).clamp(-1.0, 1.0))
}

/// Mirrors the incident direction about the plane with normal `n`.
pub fn specular_reflect(incident: UnitVec3, n: UnitVec3) -> UnitVec3 {
    let d = incident.get();
    let nv = n.get();
    let r = d - nv * (2.0 * d.dot(nv));
    // |r| = |d| for a unit normal, renormalize only to shed round-off.
    UnitVec3::new(r).unwrap_or(incident)
}

/// Mirror tilt relative to its mounting wall.
///
/// `roll_y` rotates the wall's inward normal about the wall's horizontal
/// tangent (positive tilts the normal towards the floor), then `yaw_z` turns
/// it about the vertical axis. Both angles lie in `(-π/2, π/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MirrorOrientation {
    pub roll_y: f64,
    pub yaw_z: f64,
}

impl MirrorOrientation {
    pub fn new(roll_y: f64, yaw_z: f64) -> Result<Self, GeometryError> {
        let o = Self { roll_y, yaw_z };
        o.check()?;
        Ok(o)
    }

    fn check(&self) -> Result<(), GeometryError> {
        let half = std::f64::consts::FRAC_PI_2;
        let ok = |a: f64| a.is_finite() && a > -half && a < half;
        if ok(self.roll_y) && ok(self.yaw_z) {
            Ok(())
        } else {
            Err(GeometryError::InvalidOrientation {
                roll: self.roll_y,
                yaw: self.yaw_z,
            })
        }
    }
}

/// Orthonormal wall frame: inward normal, horizontal tangent, vertical.
fn wall_frame(base: UnitVec3) -> Result<(Vec3, Vec3, Vec3), GeometryError> {
    let x = base.get();
    if x.z.abs() > UNIT_TOLERANCE || (x.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(GeometryError::BadWallNormal);
    }
    let z = Vec3::UP;
    let y = z.cross(x);
    Ok((x, y, z))
}

/// Mirror normal for an orientation relative to the wall's inward normal.
pub fn normal_from_orientation(
    base_wall_normal: UnitVec3,
    o: MirrorOrientation,
) -> Result<UnitVec3, GeometryError> {
    o.check()?;
    let (ex, ey, ez) = wall_frame(base_wall_normal)?;
    let (sr, cr) = o.roll_y.sin_cos();
    let (sy, cy) = o.yaw_z.sin_cos();
    let n = ex * (cy * cr) + ey * (sy * cr) - ez * sr;
    let n = UnitVec3::new(n)?;
    if n.dot(base_wall_normal) <= 0.0 {
        return Err(GeometryError::InvalidOrientation {
            roll: o.roll_y,
            yaw: o.yaw_z,
        });
    }
    Ok(n)
}

/// Inverse of [`normal_from_orientation`].
pub fn orientation_from_normal(
    base_wall_normal: UnitVec3,
    n: UnitVec3,
) -> Result<MirrorOrientation, GeometryError> {
    let (ex, ey, ez) = wall_frame(base_wall_normal)?;
    let v = n.get();
    let (a, b, c) = (v.dot(ex), v.dot(ey), v.dot(ez));
    let horizontal = a.hypot(b);
    if horizontal < 1e-12 {
        return Err(GeometryError::AmbiguousOrientation);
    }
    if a <= 0.0 {
        return Err(GeometryError::InvalidOrientation {
            roll: (-c).clamp(-1.0, 1.0).asin(),
            yaw: b.atan2(a),
        });
    }
    let roll = (-c).atan2(horizontal);
    let yaw = b.atan2(a);
    MirrorOrientation::new(roll, yaw)
}

/// Orients a mirror so light from `ap_pos` is reflected onto `target`.
///
/// The normal is the bisector of the directions mirror→AP and mirror→target.
pub fn steer_mirror(
    mirror_center: Point3,
    ap_pos: Point3,
    target: Point3,
    base_wall_normal: UnitVec3,
) -> Result<MirrorOrientation, GeometryError> {
    let to_ap = (ap_pos - mirror_center).normalized()?;
    let to_target = (target - mirror_center).normalized()?;
    let bisector = to_ap.get() + to_target.get();
    if bisector.norm() < 1e-9 {
        return Err(GeometryError::Degenerate(
            "access point, mirror and target are collinear",
        ));
    }
    orientation_from_normal(base_wall_normal, bisector.normalized()?)
}

/// One photodiode of an angle-diversity receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverBranch {
    /// Angle from the vertical, radians. Zero faces the ceiling.
    pub elevation: f64,
    pub azimuth: f64,
    /// Detector area, m².
    pub area: f64,
    /// Acceptance semi-angle of the concentrator, radians.
    pub fov_semi_angle: f64,
}

impl ReceiverBranch {
    pub fn upward(area: f64, fov_semi_angle: f64) -> Self {
        Self {
            elevation: 0.0,
            azimuth: 0.0,
            area,
            fov_semi_angle,
        }
    }

    pub fn normal(&self) -> UnitVec3 {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        UnitVec3::new(Vec3::new(se * ca, se * sa, ce)).unwrap_or(UnitVec3::UP)
    }

    pub fn is_valid(&self) -> bool {
        self.area > 0.0
            && self.fov_semi_angle > 0.0
            && self.fov_semi_angle <= std::f64::consts::FRAC_PI_2
            && self.elevation.is_finite()
            && self.azimuth.is_finite()
    }
}
