//! Scenario files: a TOML description of the room, equipment, users and the
//! experiment, turned into concrete [`Scene`]s per seed.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Algorithm, TrainConfig};
use crate::baselines::DEFAULT_ORACLE_BUDGET;
use crate::blockage::{sample_blockers, BlockageError};
use crate::channel::{AccessPoint, MirrorElement, NoiseModel, UserTerminal};
use crate::env::{EnvOptions, DEFAULT_REWARD_SCALE};
use crate::geometry::{steer_mirror, GeometryError, MirrorOrientation, ReceiverBranch, Vec3};
use crate::scene::{Room, Scene, SceneError, Wall};

/// Generator streams carved out of one seed.
pub mod streams {
    pub const USERS: u64 = 1;
    pub const BLOCKERS: u64 = 2;
    pub const TRAIN: u64 = 3;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Blockage(#[from] BlockageError),
    #[error("mirror steering failed: {0}")]
    Steering(#[from] GeometryError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default = "defaults::alignment_tolerance_deg")]
    pub alignment_tolerance_deg: f64,
    pub room: Room,
    pub access_points: AccessPointsConfig,
    #[serde(default)]
    pub mirror_arrays: Vec<MirrorArrayConfig>,
    pub users: UsersConfig,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub blockers: BlockersConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

mod defaults {
    pub fn alignment_tolerance_deg() -> f64 {
        10.0
    }
    pub fn semi_angle_deg() -> f64 {
        60.0
    }
    pub fn bandwidth() -> f64 {
        20e6
    }
    pub fn reflectivity() -> f64 {
        0.95
    }
    pub fn element_width() -> f64 {
        0.25
    }
    pub fn element_height() -> f64 {
        0.10
    }
    pub fn responsivity() -> f64 {
        0.4
    }
    pub fn area_mm2() -> f64 {
        20.0
    }
    pub fn fov_deg() -> f64 {
        85.0
    }
    pub fn user_height() -> f64 {
        0.85
    }
    pub fn margin() -> f64 {
        0.3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessPointsConfig {
    pub positions: Vec<[f64; 3]>,
    #[serde(default = "defaults::semi_angle_deg")]
    pub half_power_semi_angle_deg: f64,
    pub power_w: f64,
    #[serde(default = "defaults::bandwidth")]
    pub bandwidth_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Steering {
    /// Each mirror sends its nearest AP's light to one cell of a floor grid.
    Coverage,
    /// Angles listed in `angles_deg`, one `[roll, yaw]` per element.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorArrayConfig {
    pub wall: Wall,
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "defaults::element_width")]
    pub element_width: f64,
    #[serde(default = "defaults::element_height")]
    pub element_height: f64,
    /// Gap between neighbouring elements, m.
    #[serde(default)]
    pub spacing: f64,
    /// Horizontal position of the array center along the wall, m.
    pub center_along: f64,
    pub center_height: f64,
    #[serde(default = "defaults::reflectivity")]
    pub reflectivity: f64,
    pub steering: Steering,
    #[serde(default)]
    pub angles_deg: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    pub fov_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsersConfig {
    pub count: usize,
    /// Explicit positions; random uniform placement when empty.
    #[serde(default)]
    pub positions: Vec<[f64; 3]>,
    #[serde(default = "defaults::user_height")]
    pub height: f64,
    /// Minimum distance of random users from the walls, m.
    #[serde(default = "defaults::margin")]
    pub margin: f64,
    #[serde(default = "defaults::responsivity")]
    pub responsivity: f64,
    #[serde(default)]
    pub min_rate_bps: f64,
    /// Per-user minimum rates; overrides `min_rate_bps` when present.
    #[serde(default)]
    pub min_rates_bps: Vec<f64>,
    #[serde(default = "defaults::area_mm2")]
    pub detector_area_mm2: f64,
    /// Field of view of the default single upward branch.
    #[serde(default = "defaults::fov_deg")]
    pub fov_deg: f64,
    #[serde(default)]
    pub branches: Vec<BranchConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlockersConfig {
    pub count: usize,
    pub hardcore_distance: f64,
    pub diameter: f64,
    pub height: f64,
}

impl Default for BlockersConfig {
    fn default() -> Self {
        Self {
            count: 0,
            hardcore_distance: 0.3,
            diameter: 0.3,
            height: 1.65,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    /// Seeds to average over; twenty consecutive seeds from `seed` when empty.
    pub seeds: Vec<u64>,
    pub powers_w: Vec<f64>,
    pub blocker_counts: Vec<usize>,
    /// Array counts for the blockage sweep; every count up to the configured
    /// number of arrays when empty.
    pub array_counts: Vec<usize>,
    pub oracle_budget: u64,
    pub exclusive_mirrors: bool,
    pub reward_scale_bps: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::QLearning,
            seeds: Vec::new(),
            powers_w: (1..=10).map(|i| i as f64 * 0.5).collect(),
            blocker_counts: vec![0, 2, 3],
            array_counts: Vec::new(),
            oracle_budget: DEFAULT_ORACLE_BUDGET,
            exclusive_mirrors: false,
            reward_scale_bps: DEFAULT_REWARD_SCALE,
        }
    }
}

/// Per-run modifications of a scenario.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SceneOverrides {
    pub power_w: Option<f64>,
    pub blockers: Option<usize>,
    /// Use only the first `n` mirror arrays.
    pub arrays: Option<usize>,
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Rows × cols grid with `cells` cells, as square as the factors allow.
pub fn grid_shape(cells: usize) -> (usize, usize) {
    let mut rows = (cells as f64).sqrt().floor() as usize;
    while rows > 1 && cells % rows != 0 {
        rows -= 1;
    }
    let rows = rows.max(1);
    (rows, cells / rows)
}

impl ScenarioConfig {
    pub fn seeds(&self) -> Vec<u64> {
        if self.experiment.seeds.is_empty() {
            (0..20).map(|i| self.seed.wrapping_add(i)).collect()
        } else {
            self.experiment.seeds.clone()
        }
    }

    pub fn array_counts(&self) -> Vec<usize> {
        if self.experiment.array_counts.is_empty() {
            (1..=self.mirror_arrays.len()).collect()
        } else {
            self.experiment.array_counts.clone()
        }
    }

    pub fn env_options(&self) -> EnvOptions {
        EnvOptions {
            exclusive_mirrors: self.experiment.exclusive_mirrors,
            reward_scale: self.experiment.reward_scale_bps,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = &self.room;
        if !(r.length > 0.0 && r.width > 0.0 && r.height > 0.0) {
            return invalid("room dimensions must be positive");
        }
        let inside = |p: [f64; 3]| {
            p.iter().all(|c| c.is_finite())
                && (0.0..=r.length).contains(&p[0])
                && (0.0..=r.width).contains(&p[1])
                && (0.0..=r.height).contains(&p[2])
        };
        let aps = &self.access_points;
        if aps.positions.is_empty() {
            return invalid("at least one access point position is required");
        }
        for (i, &p) in aps.positions.iter().enumerate() {
            if !inside(p) {
                return invalid(format!("access point {i} at {p:?} is outside the {}x{}x{} room", r.length, r.width, r.height));
            }
        }
        if !(aps.power_w > 0.0) || !(aps.bandwidth_hz > 0.0) {
            return invalid("access point power and bandwidth must be positive");
        }
        if !(aps.half_power_semi_angle_deg > 0.0 && aps.half_power_semi_angle_deg < 90.0) {
            return invalid("half-power semi-angle must be in (0, 90) degrees");
        }
        for (i, a) in self.mirror_arrays.iter().enumerate() {
            if a.rows == 0 || a.cols == 0 {
                return invalid(format!("mirror array {i} is empty"));
            }
            let span_h = a.cols as f64 * a.element_width + (a.cols - 1) as f64 * a.spacing;
            let span_v = a.rows as f64 * a.element_height + (a.rows - 1) as f64 * a.spacing;
            let along = a.wall.span(r);
            if a.center_along - span_h / 2.0 < 0.0
                || a.center_along + span_h / 2.0 > along
                || a.center_height - span_v / 2.0 < 0.0
                || a.center_height + span_v / 2.0 > r.height
            {
                return invalid(format!("mirror array {i} does not fit on wall {:?}", a.wall));
            }
            if a.steering == Steering::Explicit && a.angles_deg.len() != a.rows * a.cols {
                return invalid(format!(
                    "mirror array {i}: explicit steering needs {} angle pairs, got {}",
                    a.rows * a.cols,
                    a.angles_deg.len()
                ));
            }
        }
        let u = &self.users;
        if u.count == 0 {
            return invalid("at least one user is required");
        }
        if !u.positions.is_empty() && u.positions.len() != u.count {
            return invalid(format!("users.count is {} but {} positions are listed", u.count, u.positions.len()));
        }
        for (k, &p) in u.positions.iter().enumerate() {
            if !inside(p) || p[2] >= r.height {
                return invalid(format!("user {k} at {p:?} is outside the room"));
            }
        }
        if u.positions.is_empty() && (2.0 * u.margin >= r.length.min(r.width) || !(0.0..r.height).contains(&u.height)) {
            return invalid("random user placement region is empty");
        }
        if !u.min_rates_bps.is_empty() && u.min_rates_bps.len() != u.count {
            return invalid("min_rates_bps must list one rate per user");
        }
        if u.min_rate_bps < 0.0 || u.min_rates_bps.iter().any(|&m| m < 0.0) {
            return invalid("minimum rates must be non-negative");
        }
        if !(self.alignment_tolerance_deg > 0.0 && self.alignment_tolerance_deg < 180.0) {
            return invalid("alignment tolerance must be in (0, 180) degrees");
        }
        if self.experiment.powers_w.iter().any(|&p| !(p > 0.0)) {
            return invalid("sweep powers must be positive");
        }
        if self.experiment.array_counts.iter().any(|&n| n == 0 || n > self.mirror_arrays.len()) {
            return invalid("array counts must be between 1 and the number of configured arrays");
        }
        self.training
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    fn branches(&self) -> Vec<ReceiverBranch> {
        let area = self.users.detector_area_mm2 * 1e-6;
        if self.users.branches.is_empty() {
            return vec![ReceiverBranch::upward(area, self.users.fov_deg.to_radians())];
        }
        self.users
            .branches
            .iter()
            .map(|b| ReceiverBranch {
                elevation: b.elevation_deg.to_radians(),
                azimuth: b.azimuth_deg.to_radians(),
                area,
                fov_semi_angle: b.fov_deg.to_radians(),
            })
            .collect()
    }

    fn user_positions(&self, seed: u64) -> Vec<Vec3> {
        let u = &self.users;
        if !u.positions.is_empty() {
            return u.positions.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
        }
        let mut rng = stream_rng(seed, streams::USERS);
        let r = &self.room;
        (0..u.count)
            .map(|_| {
                let x = rng.gen_range(u.margin..r.length - u.margin);
                let y = rng.gen_range(u.margin..r.width - u.margin);
                Vec3::new(x, y, u.height)
            })
            .collect()
    }

    fn mirrors(&self, arrays: usize, aps: &[AccessPoint], target_height: f64) -> Result<Vec<MirrorElement>, ConfigError> {
        let r = &self.room;
        let total: usize = self.mirror_arrays.iter().take(arrays).map(|a| a.rows * a.cols).sum();
        let (grid_rows, grid_cols) = grid_shape(total.max(1));
        let mut out = Vec::with_capacity(total);
        for a in self.mirror_arrays.iter().take(arrays) {
            let pitch_h = a.element_width + a.spacing;
            let pitch_v = a.element_height + a.spacing;
            for row in 0..a.rows {
                for col in 0..a.cols {
                    let along = a.center_along + (col as f64 - (a.cols - 1) as f64 / 2.0) * pitch_h;
                    let z = a.center_height + ((a.rows - 1) as f64 / 2.0 - row as f64) * pitch_v;
                    let center = a.wall.point(r, along, z);
                    let orientation = match a.steering {
                        Steering::Explicit => {
                            let [roll, yaw] = a.angles_deg[row * a.cols + col];
                            MirrorOrientation::new(roll.to_radians(), yaw.to_radians())?
                        }
                        Steering::Coverage => {
                            let i = out.len();
                            let (gy, gx) = (i / grid_cols, i % grid_cols);
                            let target = Vec3::new(
                                (gx as f64 + 0.5) * r.length / grid_cols as f64,
                                (gy as f64 + 0.5) * r.width / grid_rows as f64,
                                target_height,
                            );
                            let ap = nearest_ap(aps, center);
                            steer_mirror(center, ap.position, target, a.wall.inward_normal())?
                        }
                    };
                    out.push(MirrorElement {
                        center,
                        width: a.element_width,
                        height: a.element_height,
                        reflectivity: a.reflectivity,
                        orientation,
                        wall: a.wall,
                    });
                }
            }
        }
        Ok(out)
    }

    /// The concrete scene for one seed.
    pub fn build_scene(&self, seed: u64, ov: &SceneOverrides) -> Result<Scene, ConfigError> {
        let power = ov.power_w.unwrap_or(self.access_points.power_w);
        if !(power > 0.0) {
            return invalid(format!("power {power} W must be positive"));
        }
        let arrays = ov.arrays.unwrap_or(self.mirror_arrays.len());
        if arrays > self.mirror_arrays.len() {
            return invalid(format!("{arrays} mirror arrays requested, {} configured", self.mirror_arrays.len()));
        }
        let semi = self.access_points.half_power_semi_angle_deg.to_radians();
        let aps: Vec<AccessPoint> = self
            .access_points
            .positions
            .iter()
            .map(|p| AccessPoint::ceiling(Vec3::new(p[0], p[1], p[2]), semi, power, self.access_points.bandwidth_hz))
            .collect();
        let positions = self.user_positions(seed);
        let branches = self.branches();
        let users: Vec<UserTerminal> = positions
            .iter()
            .enumerate()
            .map(|(k, &position)| UserTerminal {
                position,
                branches: branches.clone(),
                responsivity: self.users.responsivity,
                min_rate: self.users.min_rates_bps.get(k).copied().unwrap_or(self.users.min_rate_bps),
            })
            .collect();
        let target_height = if self.users.positions.is_empty() {
            self.users.height
        } else {
            positions.iter().map(|p| p.z).sum::<f64>() / positions.len() as f64
        };
        let mirrors = self.mirrors(arrays, &aps, target_height)?;
        let b = &self.blockers;
        let count = ov.blockers.unwrap_or(b.count);
        let mut rng = stream_rng(seed, streams::BLOCKERS);
        let blockers = sample_blockers(count, b.hardcore_distance, b.diameter / 2.0, b.height, &self.room, &positions, &mut rng)?;
        let scene = Scene {
            room: self.room,
            aps,
            mirrors,
            users,
            blockers,
            noise: self.noise,
            alignment_tolerance: self.alignment_tolerance_deg.to_radians(),
        };
        scene.validate()?;
        Ok(scene)
    }
}

fn nearest_ap(aps: &[AccessPoint], p: Vec3) -> &AccessPoint {
    let mut best = &aps[0];
    for ap in &aps[1..] {
        if ap.position.distance(p) < best.position.distance(p) {
            best = ap;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
[room]
length = 5.0
width = 5.0
height = 3.0
[access_points]
positions = [[1.25, 1.25, 3.0], [3.75, 3.75, 3.0]]
power_w = 5.0
[[mirror_arrays]]
wall = "y0"
rows = 2
cols = 3
center_along = 2.5
center_height = 2.0
steering = "coverage"
[users]
count = 3
"#;

    #[test]
    fn minimal_scenario_gets_defaults() {
        let cfg = parse_scenario(MINIMAL).unwrap();
        assert_eq!(cfg.noise, NoiseModel::default());
        assert_eq!(cfg.training, TrainConfig::default());
        assert_eq!(cfg.access_points.half_power_semi_angle_deg, 60.0);
        assert_eq!(cfg.seeds(), (3..23).collect::<Vec<_>>());
        let scene = cfg.build_scene(3, &SceneOverrides::default()).unwrap();
        assert_eq!(scene.mirrors.len(), 6);
        assert_eq!(scene.users.len(), 3);
        assert!(scene.blockers.is_empty());
    }

    #[test]
    fn missing_seed_is_an_error() {
        let text = MINIMAL.replace("seed = 3", "");
        assert!(matches!(parse_scenario(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("[users]", "[users]\ncolour = \"red\"");
        assert!(parse_scenario(&text).is_err());
        let text = format!("{MINIMAL}\n[noise]\namplifier_noise_density = 1e-22\nbackground_current = 0.0\ninclude_signal_shot = false\nextra = 1\n");
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn ap_above_ceiling_is_rejected() {
        let text = MINIMAL.replace("[3.75, 3.75, 3.0]", "[3.75, 3.75, 3.5]");
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("outside"), "{err}");
    }

    #[test]
    fn explicit_angles_need_one_pair_per_element() {
        let text = MINIMAL.replace("steering = \"coverage\"", "steering = \"explicit\"\nangles_deg = [[0.0, 0.0]]");
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn coverage_steering_hits_grid_cells() {
        let cfg = parse_scenario(MINIMAL).unwrap();
        let scene = cfg.build_scene(3, &SceneOverrides::default()).unwrap();
        let (rows, cols) = grid_shape(6);
        assert_eq!((rows, cols), (2, 3));
        for (i, m) in scene.mirrors.iter().enumerate() {
            let ap = nearest_ap(&scene.aps, m.center);
            let incident = (m.center - ap.position).normalized().unwrap();
            let reflected = crate::geometry::specular_reflect(incident, m.normal().unwrap());
            let target = Vec3::new((i % 3) as f64 * 5.0 / 3.0 + 5.0 / 6.0, (i / 3) as f64 * 2.5 + 1.25, 0.85);
            let want = (target - m.center).normalized().unwrap();
            assert!(reflected.angle_to(want) < 1e-6);
        }
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(grid_shape(25), (5, 5));
        assert_eq!(grid_shape(50), (5, 10));
        assert_eq!(grid_shape(7), (1, 7));
        assert_eq!(grid_shape(1), (1, 1));
    }

    #[test]
    fn scenes_are_seed_deterministic() {
        let cfg = parse_scenario(MINIMAL).unwrap();
        let ov = SceneOverrides { blockers: Some(2), ..Default::default() };
        assert_eq!(cfg.build_scene(9, &ov).unwrap(), cfg.build_scene(9, &ov).unwrap());
        assert_ne!(cfg.build_scene(9, &ov).unwrap().users, cfg.build_scene(10, &ov).unwrap().users);
        // blocker count does not disturb the user drop
        let none = cfg.build_scene(9, &SceneOverrides::default()).unwrap();
        assert_eq!(none.users, cfg.build_scene(9, &ov).unwrap().users);
    }
}
