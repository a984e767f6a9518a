//! The immutable world description: room, emitters, mirrors, users, blockers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blockage::Blocker;
use crate::channel::{AccessPoint, MirrorElement, NoiseModel, UserTerminal};
use crate::geometry::{normal_from_orientation, Point3, UnitVec3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    /// Extent along x, m.
    pub length: f64,
    /// Extent along y, m.
    pub width: f64,
    pub height: f64,
}

impl Room {
    pub fn new(length: f64, width: f64, height: f64) -> Self {
        Self { length, width, height }
    }

    /// Inclusive containment with a small slack for wall-mounted items.
    pub fn contains(&self, p: Point3) -> bool {
        const SLACK: f64 = 1e-9;
        p.x >= -SLACK
            && p.x <= self.length + SLACK
            && p.y >= -SLACK
            && p.y <= self.width + SLACK
            && p.z >= -SLACK
            && p.z <= self.height + SLACK
    }

    pub fn strictly_contains(&self, p: Point3) -> bool {
        p.x > 0.0 && p.x < self.length && p.y > 0.0 && p.y < self.width && p.z >= 0.0 && p.z < self.height
    }
}

/// Mounting wall for a mirror array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wall {
    /// x = 0
    X0,
    /// x = length
    X1,
    /// y = 0
    Y0,
    /// y = width
    Y1,
}

impl Wall {
    pub fn inward_normal(self) -> UnitVec3 {
        let v = match self {
            Wall::X0 => Vec3::new(1.0, 0.0, 0.0),
            Wall::X1 => Vec3::new(-1.0, 0.0, 0.0),
            Wall::Y0 => Vec3::new(0.0, 1.0, 0.0),
            Wall::Y1 => Vec3::new(0.0, -1.0, 0.0),
        };
        UnitVec3::new(v).expect("axis vector")
    }

    /// Point on the wall at horizontal offset `along` and height `z`.
    ///
    /// `along` runs in the +x direction on y-walls and +y on x-walls.
    pub fn point(self, room: &Room, along: f64, z: f64) -> Point3 {
        match self {
            Wall::X0 => Vec3::new(0.0, along, z),
            Wall::X1 => Vec3::new(room.length, along, z),
            Wall::Y0 => Vec3::new(along, 0.0, z),
            Wall::Y1 => Vec3::new(along, room.width, z),
        }
    }

    pub fn span(self, room: &Room) -> f64 {
        match self {
            Wall::X0 | Wall::X1 => room.width,
            Wall::Y0 | Wall::Y1 => room.length,
        }
    }

    /// Signed distance of `p` from the wall plane, positive inside the room.
    pub fn depth(self, room: &Room, p: Point3) -> f64 {
        match self {
            Wall::X0 => p.x,
            Wall::X1 => room.length - p.x,
            Wall::Y0 => p.y,
            Wall::Y1 => room.width - p.y,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("{0}")]
    Invalid(String),
}

fn invalid<T>(msg: String) -> Result<T, SceneError> {
    Err(SceneError::Invalid(msg))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub room: Room,
    pub aps: Vec<AccessPoint>,
    pub mirrors: Vec<MirrorElement>,
    pub users: Vec<UserTerminal>,
    pub blockers: Vec<Blocker>,
    pub noise: NoiseModel,
    /// Maximum angle between the specular ray and the mirror→user direction.
    pub alignment_tolerance: f64,
}

impl Scene {
    pub fn validate(&self) -> Result<(), SceneError> {
        let room = &self.room;
        if !(room.length > 0.0 && room.width > 0.0 && room.height > 0.0) {
            return invalid(format!("room dimensions must be positive, got {room:?}"));
        }
        if self.aps.is_empty() {
            return invalid("at least one access point is required".into());
        }
        if self.users.is_empty() {
            return invalid("at least one user is required".into());
        }
        for (i, ap) in self.aps.iter().enumerate() {
            if !room.contains(ap.position) {
                return invalid(format!("access point {i} at {} is outside the room", ap.position));
            }
            let half = ap.half_power_semi_angle;
            if !(half > 0.0 && half < std::f64::consts::FRAC_PI_2) {
                return invalid(format!("access point {i}: half-power semi-angle must be in (0, 90) degrees"));
            }
            if !(ap.optical_power > 0.0) || !(ap.bandwidth > 0.0) {
                return invalid(format!("access point {i}: power and bandwidth must be positive"));
            }
        }
        for (i, m) in self.mirrors.iter().enumerate() {
            if !room.contains(m.center) || m.wall.depth(room, m.center).abs() > 1e-9 {
                return invalid(format!("mirror {i} at {} is not on wall {:?}", m.center, m.wall));
            }
            if !(m.width > 0.0 && m.height > 0.0) {
                return invalid(format!("mirror {i}: element area must be positive"));
            }
            if !(m.reflectivity > 0.0 && m.reflectivity <= 1.0) {
                return invalid(format!("mirror {i}: reflectivity must be in (0, 1]"));
            }
            if let Err(e) = normal_from_orientation(m.wall.inward_normal(), m.orientation) {
                return invalid(format!("mirror {i}: {e}"));
            }
        }
        for (k, u) in self.users.iter().enumerate() {
            if !room.strictly_contains(u.position) {
                return invalid(format!("user {k} at {} is outside the room", u.position));
            }
            if u.branches.is_empty() || !u.branches.iter().all(|b| b.is_valid()) {
                return invalid(format!("user {k}: needs at least one valid receiver branch"));
            }
            if !(u.responsivity > 0.0) || !(u.min_rate >= 0.0) {
                return invalid(format!("user {k}: responsivity must be positive and min rate non-negative"));
            }
        }
        for (i, b) in self.blockers.iter().enumerate() {
            let [x, y] = b.center_xy;
            if !(b.radius > 0.0 && b.height > 0.0 && b.height < room.height)
                || x < 0.0
                || y < 0.0
                || x > room.length
                || y > room.width
            {
                return invalid(format!("blocker {i} is malformed or outside the room"));
            }
        }
        if !(self.alignment_tolerance > 0.0 && self.alignment_tolerance < std::f64::consts::PI) {
            return invalid("alignment tolerance must be in (0, 180) degrees".into());
        }
        if !self.noise.is_valid() {
            return invalid("noise densities must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn ap_count(&self) -> usize {
        self.aps.len()
    }

    pub fn mirror_count(&self) -> usize {
        self.mirrors.len()
    }

    /// Sets every access point to the same optical power.
    pub fn with_power(mut self, watts: f64) -> Self {
        for ap in &mut self.aps {
            ap.optical_power = watts;
        }
        self
    }
}
