//! Optical link budget: Lambertian LoS gain, specular mirror-path gain,
//! interference, SINR and the IM/DD rate bound.

use std::f64::consts::{LN_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blockage::{path_clear, Blocker};
use crate::geometry::{
    cos_angle, normal_from_orientation, specular_reflect, GeometryError, MirrorOrientation, Point3,
    ReceiverBranch, UnitVec3,
};
use crate::scene::{Scene, Wall};

/// Elementary charge, C.
pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("half-power semi-angle {0} rad must lie in (0, π/2]")]
    SemiAngle(f64),
    #[error("user {0}: interference and noise are both zero, SINR is undefined")]
    ZeroDenominator(usize),
    #[error("user {user} is not covered by the partial allocation of {assigned} users")]
    Unassigned { user: usize, assigned: usize },
    #[error("allocation index out of range: {0}")]
    OutOfRange(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessPoint {
    pub position: Point3,
    pub normal: UnitVec3,
    /// Radians.
    pub half_power_semi_angle: f64,
    /// Transmitted optical power, W.
    pub optical_power: f64,
    /// Modulation bandwidth, Hz.
    pub bandwidth: f64,
}

impl AccessPoint {
    pub fn ceiling(position: Point3, half_power_semi_angle: f64, optical_power: f64, bandwidth: f64) -> Self {
        Self {
            position,
            normal: UnitVec3::DOWN,
            half_power_semi_angle,
            optical_power,
            bandwidth,
        }
    }

    pub fn lambertian_order(&self) -> Result<f64, ChannelError> {
        lambertian_order(self.half_power_semi_angle)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorElement {
    pub center: Point3,
    pub width: f64,
    pub height: f64,
    pub reflectivity: f64,
    pub orientation: MirrorOrientation,
    pub wall: Wall,
}

impl MirrorElement {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn normal(&self) -> Result<UnitVec3, GeometryError> {
        normal_from_orientation(self.wall.inward_normal(), self.orientation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserTerminal {
    pub position: Point3,
    pub branches: Vec<ReceiverBranch>,
    /// A/W.
    pub responsivity: f64,
    /// bit/s.
    pub min_rate: f64,
}

/// Receiver noise: preamplifier, background shot and (optionally) signal shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Input-referred preamplifier current noise density, A²/Hz.
    pub amplifier_noise_density: f64,
    /// Ambient-light induced photocurrent, A.
    pub background_current: f64,
    pub include_signal_shot: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            amplifier_noise_density: 1.0e-19,
            background_current: 5.1e-3,
            include_signal_shot: true,
        }
    }
}

impl NoiseModel {
    pub fn is_valid(&self) -> bool {
        self.amplifier_noise_density.is_finite()
            && self.amplifier_noise_density >= 0.0
            && self.background_current.is_finite()
            && self.background_current >= 0.0
    }
}

/// Lambertian emission order `-ln 2 / ln cos(φ½)`.
pub fn lambertian_order(half_power_semi_angle: f64) -> Result<f64, ChannelError> {
    let a = half_power_semi_angle;
    if !(a > 0.0 && a <= std::f64::consts::FRAC_PI_2) {
        return Err(ChannelError::SemiAngle(a));
    }
    let n = -LN_2 / a.cos().ln();
    // cos(π/3) and cos(π/4) are inexact in binary; recover the integer orders.
    let r = n.round();
    if r >= 1.0 && (n - r).abs() <= 8.0 * f64::EPSILON * r {
        Ok(r)
    } else {
        Ok(n)
    }
}

fn within_fov(cos_incidence: f64, fov: f64) -> bool {
    cos_incidence > 0.0 && cos_incidence.clamp(-1.0, 1.0).acos() <= fov
}

/// Direct-path gain from `ap` to one receiver branch at `position`.
pub fn los_gain(
    ap: &AccessPoint,
    position: Point3,
    branch: &ReceiverBranch,
    blockers: &[Blocker],
) -> Result<f64, ChannelError> {
    let d = position - ap.position;
    let dist = d.norm();
    if !(dist > 0.0) {
        return Err(GeometryError::Degenerate("access point and receiver coincide").into());
    }
    let order = ap.lambertian_order()?;
    let cos_irr = cos_angle(d, ap.normal)?;
    if cos_irr <= 0.0 {
        return Ok(0.0);
    }
    let cos_inc = cos_angle(-d, branch.normal())?;
    if !within_fov(cos_inc, branch.fov_semi_angle) {
        return Ok(0.0);
    }
    if !path_clear(ap.position, position, blockers) {
        return Ok(0.0);
    }
    Ok((order + 1.0) * branch.area * cos_irr.powf(order) * cos_inc / (2.0 * PI * dist * dist))
}

/// Gain of the path AP → mirror → receiver branch.
///
/// Zero unless the receiver sees the mirror within its field of view, both
/// legs are unobstructed, the AP illuminates the mirror's front face, and the
/// specular ray leaves within `alignment_tolerance` of the mirror→user
/// direction.
pub fn irs_gain(
    ap: &AccessPoint,
    mirror: &MirrorElement,
    position: Point3,
    branch: &ReceiverBranch,
    blockers: &[Blocker],
    alignment_tolerance: f64,
) -> Result<f64, ChannelError> {
    let d_ml = mirror.center - ap.position;
    let d_km = mirror.center - position;
    let (dist_ml, dist_km) = (d_ml.norm(), d_km.norm());
    if !(dist_ml > 0.0) || !(dist_km > 0.0) {
        return Err(GeometryError::Degenerate("mirror coincides with an endpoint").into());
    }
    let order = ap.lambertian_order()?;
    let cos_irr = cos_angle(d_ml, ap.normal)?;
    if cos_irr <= 0.0 {
        return Ok(0.0);
    }
    let cos_inc = cos_angle(d_km, branch.normal())?;
    if !within_fov(cos_inc, branch.fov_semi_angle) {
        return Ok(0.0);
    }
    let normal = mirror.normal()?;
    let incident = d_ml.normalized()?;
    if incident.dot(normal) >= 0.0 {
        return Ok(0.0);
    }
    let reflected = specular_reflect(incident, normal);
    let outgoing = (-d_km).normalized()?;
    if reflected.angle_to(outgoing) > alignment_tolerance {
        return Ok(0.0);
    }
    if !path_clear(ap.position, mirror.center, blockers) || !path_clear(mirror.center, position, blockers) {
        return Ok(0.0);
    }
    let total = dist_ml + dist_km;
    Ok((order + 1.0)
        * mirror.reflectivity
        * branch.area
        * mirror.area()
        * cos_irr.powf(order)
        * cos_inc
        / (2.0 * PI * total * total))
}

/// Select-best combining over a user's branches.
///
/// With `mirror = None` the LoS gain is combined, otherwise the mirror-path
/// gain. Returns the best gain and the lowest branch index attaining it.
pub fn branch_select(
    ap: &AccessPoint,
    mirror: Option<&MirrorElement>,
    user: &UserTerminal,
    blockers: &[Blocker],
    alignment_tolerance: f64,
) -> Result<(f64, usize), ChannelError> {
    let mut best = (0.0, 0);
    for (i, b) in user.branches.iter().enumerate() {
        let g = match mirror {
            None => los_gain(ap, user.position, b, blockers)?,
            Some(m) => irs_gain(ap, m, user.position, b, blockers, alignment_tolerance)?,
        };
        if g > best.0 {
            best = (g, i);
        }
    }
    Ok(best)
}

/// Total receiver noise variance σ², A².
pub fn noise_variance(model: &NoiseModel, received_optical_power: f64, responsivity: f64, bandwidth: f64) -> f64 {
    let q = ELECTRON_CHARGE;
    let signal_shot = if model.include_signal_shot {
        2.0 * q * responsivity * received_optical_power * bandwidth
    } else {
        0.0
    };
    signal_shot + 2.0 * q * model.background_current * bandwidth + model.amplifier_noise_density * bandwidth
}

/// The IM/DD rate bound `B/K_in · log2(1 + e/(2π)·SINR)`.
pub fn rate_from_sinr(bandwidth: f64, sharing_users: usize, sinr: f64) -> f64 {
    bandwidth / sharing_users.max(1) as f64 * (1.0 + std::f64::consts::E / (2.0 * PI) * sinr).log2()
}

/// Blockage-adjusted gains for every (user, AP) and (user, mirror, AP).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTables {
    users: usize,
    aps: usize,
    mirrors: usize,
    h_los: Vec<f64>,
    h_irs: Vec<f64>,
}

impl ChannelTables {
    pub fn zeros(users: usize, aps: usize, mirrors: usize) -> Self {
        Self {
            users,
            aps,
            mirrors,
            h_los: vec![0.0; users * aps],
            h_irs: vec![0.0; users * mirrors * aps],
        }
    }

    pub fn from_raw(users: usize, aps: usize, mirrors: usize, h_los: Vec<f64>, h_irs: Vec<f64>) -> Self {
        assert_eq!(h_los.len(), users * aps);
        assert_eq!(h_irs.len(), users * mirrors * aps);
        Self { users, aps, mirrors, h_los, h_irs }
    }

    pub fn build(scene: &Scene) -> Result<Self, ChannelError> {
        let (aps, mirrors) = (scene.aps.len(), scene.mirrors.len());
        let rows: Vec<(Vec<f64>, Vec<f64>)> = scene
            .users
            .par_iter()
            .map(|user| -> Result<_, ChannelError> {
                let mut los = Vec::with_capacity(aps);
                for ap in &scene.aps {
                    los.push(branch_select(ap, None, user, &scene.blockers, scene.alignment_tolerance)?.0);
                }
                let mut irs = Vec::with_capacity(mirrors * aps);
                for m in &scene.mirrors {
                    for ap in &scene.aps {
                        irs.push(branch_select(ap, Some(m), user, &scene.blockers, scene.alignment_tolerance)?.0);
                    }
                }
                Ok((los, irs))
            })
            .collect::<Result<_, _>>()?;
        let (h_los, h_irs): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        Ok(Self {
            users: scene.users.len(),
            aps,
            mirrors,
            h_los: h_los.concat(),
            h_irs: h_irs.concat(),
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn aps(&self) -> usize {
        self.aps
    }

    pub fn mirrors(&self) -> usize {
        self.mirrors
    }

    pub fn los(&self, user: usize, ap: usize) -> f64 {
        self.h_los[user * self.aps + ap]
    }

    pub fn irs(&self, user: usize, mirror: usize, ap: usize) -> f64 {
        self.h_irs[(user * self.mirrors + mirror) * self.aps + ap]
    }

    /// Mirror-path gain, zero for the null mirror.
    pub fn irs_or_zero(&self, user: usize, mirror: Option<usize>, ap: usize) -> f64 {
        mirror.map_or(0.0, |m| self.irs(user, m, ap))
    }

    pub fn los_table(&self) -> &[f64] {
        &self.h_los
    }

    pub fn irs_table(&self) -> &[f64] {
        &self.h_irs
    }

    pub fn without_irs(&self) -> Self {
        Self {
            h_irs: vec![0.0; self.h_irs.len()],
            ..self.clone()
        }
    }
}

/// One user's serving AP and mirror; `None` is the null mirror.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Link {
    pub ap: usize,
    pub mirror: Option<usize>,
}

impl Link {
    pub fn new(ap: usize, mirror: Option<usize>) -> Self {
        Self { ap, mirror }
    }
}

/// Everything needed to turn a (partial) assignment into user rates.
///
/// `links[k]` is user `k`'s link; a slice shorter than the user count is a
/// partial assignment of the first users, and only assigned users count as
/// interferers or bandwidth sharers.
#[derive(Debug, Clone, PartialEq)]
pub struct RateModel {
    tables: ChannelTables,
    ap_power: Vec<f64>,
    ap_bandwidth: Vec<f64>,
    responsivity: Vec<f64>,
    min_rate: Vec<f64>,
    noise: NoiseModel,
}

impl RateModel {
    pub fn from_scene(scene: &Scene) -> Result<Self, ChannelError> {
        Ok(Self::new(ChannelTables::build(scene)?, scene))
    }

    pub fn new(tables: ChannelTables, scene: &Scene) -> Self {
        Self {
            tables,
            ap_power: scene.aps.iter().map(|a| a.optical_power).collect(),
            ap_bandwidth: scene.aps.iter().map(|a| a.bandwidth).collect(),
            responsivity: scene.users.iter().map(|u| u.responsivity).collect(),
            min_rate: scene.users.iter().map(|u| u.min_rate).collect(),
            noise: scene.noise,
        }
    }

    pub fn from_parts(
        tables: ChannelTables,
        ap_power: Vec<f64>,
        ap_bandwidth: Vec<f64>,
        responsivity: Vec<f64>,
        min_rate: Vec<f64>,
        noise: NoiseModel,
    ) -> Self {
        assert_eq!(ap_power.len(), tables.aps());
        assert_eq!(ap_bandwidth.len(), tables.aps());
        assert_eq!(responsivity.len(), tables.users());
        assert_eq!(min_rate.len(), tables.users());
        Self { tables, ap_power, ap_bandwidth, responsivity, min_rate, noise }
    }

    pub fn tables(&self) -> &ChannelTables {
        &self.tables
    }

    pub fn users(&self) -> usize {
        self.tables.users()
    }

    pub fn aps(&self) -> usize {
        self.tables.aps()
    }

    pub fn mirrors(&self) -> usize {
        self.tables.mirrors()
    }

    pub fn min_rate(&self, user: usize) -> f64 {
        self.min_rate[user]
    }

    pub fn min_rates(&self) -> &[f64] {
        &self.min_rate
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn ap_power(&self, ap: usize) -> f64 {
        self.ap_power[ap]
    }

    /// Same model with every mirror path zeroed.
    pub fn without_irs(&self) -> Self {
        Self {
            tables: self.tables.without_irs(),
            ..self.clone()
        }
    }

    fn check(&self, user: usize, links: &[Link]) -> Result<Link, ChannelError> {
        let link = *links.get(user).ok_or(ChannelError::Unassigned {
            user,
            assigned: links.len(),
        })?;
        for l in links {
            if l.ap >= self.aps() || l.mirror.is_some_and(|m| m >= self.mirrors()) {
                return Err(ChannelError::OutOfRange(format!("{l:?}")));
            }
        }
        Ok(link)
    }

    /// Photocurrent from other APs that serve at least one assigned user, A.
    pub fn interference(&self, user: usize, links: &[Link]) -> Result<f64, ChannelError> {
        let own = self.check(user, links)?.ap;
        let mut active = vec![false; self.aps()];
        for l in links {
            active[l.ap] = true;
        }
        let sum: f64 = (0..self.aps())
            .filter(|&l| l != own && active[l])
            .map(|l| self.ap_power[l] * self.tables.los(user, l))
            .sum();
        Ok(self.responsivity[user] * sum)
    }

    pub fn sinr(&self, user: usize, links: &[Link]) -> Result<f64, ChannelError> {
        let link = self.check(user, links)?;
        let h = self.tables.los(user, link.ap) + self.tables.irs_or_zero(user, link.mirror, link.ap);
        let p = self.ap_power[link.ap];
        let r0 = self.responsivity[user];
        let i = self.interference(user, links)?;
        let sigma2 = noise_variance(&self.noise, p * h, r0, self.ap_bandwidth[link.ap]);
        let denom = i * i + sigma2;
        if !(denom > 0.0) {
            return Err(ChannelError::ZeroDenominator(user));
        }
        let s = r0 * p * h;
        Ok(s * s / denom)
    }

    /// Achievable rate of `user`, bit/s.
    pub fn rate(&self, user: usize, links: &[Link]) -> Result<f64, ChannelError> {
        let link = self.check(user, links)?;
        let sharing = links.iter().filter(|l| l.ap == link.ap).count();
        let sinr = self.sinr(user, links)?;
        Ok(rate_from_sinr(self.ap_bandwidth[link.ap], sharing, sinr))
    }

    pub fn rates(&self, links: &[Link]) -> Result<Vec<f64>, ChannelError> {
        (0..links.len()).map(|k| self.rate(k, links)).collect()
    }
}
