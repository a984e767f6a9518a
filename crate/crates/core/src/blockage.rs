//! Static human blockers: hard-core placement and segment occlusion.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point3;
use crate::scene::Room;

/// Proposal budget for sequential hard-core placement.
pub const PLACEMENT_PROPOSALS: usize = 10_000;

/// A person modelled as a solid vertical cylinder standing on the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blocker {
    pub center_xy: [f64; 2],
    pub radius: f64,
    pub height: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlockageError {
    #[error("placed only {placed} of {requested} blockers after {PLACEMENT_PROPOSALS} proposals")]
    PlacementFailed { placed: usize, requested: usize },
    #[error("invalid blocker parameters: {0}")]
    InvalidParameters(String),
}

impl Blocker {
    pub fn new(x: f64, y: f64, radius: f64, height: f64) -> Self {
        Self {
            center_xy: [x, y],
            radius,
            height,
        }
    }

    fn planar_distance_to(&self, p: Point3) -> f64 {
        (p.x - self.center_xy[0]).hypot(p.y - self.center_xy[1])
    }
}

/// True iff the segment `p0`-`p1` passes through the solid cylinder.
///
/// The segment is first clipped to the cylinder's height slab; the remaining
/// piece intersects iff its planar distance to the axis is within the radius.
pub fn segment_blocked(p0: Point3, p1: Point3, b: &Blocker) -> bool {
    let dz = p1.z - p0.z;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    if dz.abs() < 1e-15 {
        if p0.z < 0.0 || p0.z > b.height {
            return false;
        }
    } else {
        let ta = (0.0 - p0.z) / dz;
        let tb = (b.height - p0.z) / dz;
        let (lo, hi) = if ta < tb { (ta, tb) } else { (tb, ta) };
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 {
            return false;
        }
    }
    let ax = p0.x + (p1.x - p0.x) * t0 - b.center_xy[0];
    let ay = p0.y + (p1.y - p0.y) * t0 - b.center_xy[1];
    let bx = p0.x + (p1.x - p0.x) * t1 - b.center_xy[0];
    let by = p0.y + (p1.y - p0.y) * t1 - b.center_xy[1];
    let (ex, ey) = (bx - ax, by - ay);
    let len2 = ex * ex + ey * ey;
    let s = if len2 > 0.0 {
        (-(ax * ex + ay * ey) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (ax + ex * s, ay + ey * s);
    cx * cx + cy * cy <= b.radius * b.radius
}

pub fn path_clear(p0: Point3, p1: Point3, blockers: &[Blocker]) -> bool {
    !blockers.iter().any(|b| segment_blocked(p0, p1, b))
}

/// Sequential hard-core placement of `count` cylinders.
///
/// Proposals are uniform over the floor with the cylinder fully inside the
/// walls. A proposal is rejected when it lies closer than `hardcore_distance`
/// to an accepted center or when its footprint covers one of `keep_clear`.
/// Deterministic for a given generator state.
pub fn sample_blockers<R: Rng + ?Sized>(
    count: usize,
    hardcore_distance: f64,
    radius: f64,
    height: f64,
    room: &Room,
    keep_clear: &[Point3],
    rng: &mut R,
) -> Result<Vec<Blocker>, BlockageError> {
    if !(radius > 0.0) || !(height > 0.0) || height >= room.height {
        return Err(BlockageError::InvalidParameters(format!(
            "radius {radius} and height {height} must be positive and below the ceiling"
        )));
    }
    if hardcore_distance < 2.0 * radius {
        return Err(BlockageError::InvalidParameters(format!(
            "hard-core distance {hardcore_distance} is below the blocker diameter {}",
            2.0 * radius
        )));
    }
    if 2.0 * radius >= room.length || 2.0 * radius >= room.width {
        return Err(BlockageError::InvalidParameters(
            "blocker does not fit in the room".into(),
        ));
    }
    let mut placed: Vec<Blocker> = Vec::with_capacity(count);
    let mut proposals = 0;
    while placed.len() < count {
        if proposals == PLACEMENT_PROPOSALS {
            return Err(BlockageError::PlacementFailed {
                placed: placed.len(),
                requested: count,
            });
        }
        proposals += 1;
        let x = rng.gen_range(radius..room.length - radius);
        let y = rng.gen_range(radius..room.width - radius);
        let cand = Blocker::new(x, y, radius, height);
        let spaced = placed.iter().all(|b| {
            (b.center_xy[0] - x).hypot(b.center_xy[1] - y) >= hardcore_distance
        });
        let clear = keep_clear.iter().all(|&p| cand.planar_distance_to(p) > radius);
        if spaced && clear {
            placed.push(cand);
        }
    }
    Ok(placed)
}
