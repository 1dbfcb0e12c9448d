//! Interaction Pose Safety: conjunction of collision clearance, reach
//! feasibility, and center-of-mass stability, plus stance micro-adjustment.

use nalgebra::{Rotation2, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{min_clearance, GeometryError, MeshSdf};

#[derive(Debug, Error)]
pub enum IpsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("support polygon has zero area")]
    DegenerateSupport,
    #[error("no feasible stance within the candidate budget")]
    NoFeasibleStance,
}

/// Default geometric safety margin in meters.
pub const DELTA_SAFE: f64 = 0.05;
/// Inward erosion of the support polygon in meters.
pub const SUPPORT_SHRINK: f64 = 0.02;
/// Contact allowance around the reach target in meters.
pub const CONTACT_ALLOWANCE: f64 = 0.05;
/// Sampling step along the reach segment in meters.
const REACH_STEP: f64 = 0.01;

/// Axis-aligned foot rectangle in the stance frame.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FootRect {
    pub length: f64,
    pub width: f64,
    /// Foot center offset from the base frame (stance coordinates).
    pub offset: Vector2<f64>,
}

/// Planar robot stance with its geometric proxies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StancePose {
    pub x: f64,
    pub y: f64,
    /// Heading, normalized to (-pi, pi].
    pub heading: f64,
    /// Collision proxy: spheres as (offset from base frame, radius).
    pub body: Vec<(Vector3<f64>, f64)>,
    pub feet: [FootRect; 2],
    /// Center of mass offset from the base frame.
    pub com_offset: Vector3<f64>,
}

pub fn normalize_angle(a: f64) -> f64 {
    let mut a = a.rem_euclid(std::f64::consts::TAU);
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    }
    a
}

impl StancePose {
    pub fn at(&self, x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
            body: self.body.clone(),
            feet: self.feet,
            com_offset: self.com_offset,
        }
    }

    fn rot2(&self) -> Rotation2<f64> {
        Rotation2::new(self.heading)
    }

    /// Rotates a stance-frame offset into the world (yaw about z).
    pub fn to_world(&self, offset: &Vector3<f64>) -> Vector3<f64> {
        let xy = self.rot2() * Vector2::new(offset.x, offset.y);
        Vector3::new(self.x + xy.x, self.y + xy.y, offset.z)
    }

    /// Body spheres in world coordinates.
    pub fn body_world(&self) -> Vec<(Vector3<f64>, f64)> {
        self.body
            .iter()
            .map(|(c, r)| (self.to_world(c), *r))
            .collect()
    }

    /// World (x, y) corners of both feet.
    pub fn foot_corners(&self) -> Vec<Vector2<f64>> {
        let rot = self.rot2();
        let base = Vector2::new(self.x, self.y);
        let mut corners = Vec::with_capacity(8);
        for foot in &self.feet {
            let (hl, hw) = (foot.length / 2.0, foot.width / 2.0);
            for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
                let local = foot.offset + Vector2::new(sx * hl, sy * hw);
                corners.push(base + rot * local);
            }
        }
        corners
    }

    /// World center of mass.
    pub fn com_world(&self) -> Vector3<f64> {
        self.to_world(&self.com_offset)
    }

    /// Largest base-to-sphere-surface distance; circumscribes the body.
    pub fn body_radius(&self) -> f64 {
        self.body
            .iter()
            .map(|(c, r)| Vector2::new(c.x, c.y).norm() + r)
            .fold(0.0, f64::max)
    }
}

/// Reach annulus proxy for arm kinematics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReachModel {
    pub shoulder_offset: Vector3<f64>,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for ReachModel {
    fn default() -> Self {
        Self {
            shoulder_offset: Vector3::new(0.0, 0.0, 1.2),
            r_min: 0.25,
            r_max: 0.85,
        }
    }
}

/// Per-term IPS diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IpsDiagnostics {
    pub i_col: bool,
    pub i_ik: bool,
    pub i_stab: bool,
    pub clearance_m: f64,
    pub reach_m: f64,
    pub stability_margin_m: f64,
}

/// Collision term: body clearance strictly above `delta_safe`.
pub fn check_collision(pose: &StancePose, sdf: &MeshSdf, delta_safe: f64) -> (bool, f64) {
    let clearance = min_clearance(&pose.body_world(), sdf);
    (clearance > delta_safe, clearance)
}

/// Reach term: target inside the shoulder annulus and the shoulder-to-target
/// segment clear of the mesh except within the contact allowance.
pub fn check_reach(
    pose: &StancePose,
    target: &Vector3<f64>,
    reach: &ReachModel,
    sdf: &MeshSdf,
) -> (bool, f64) {
    let shoulder = pose.to_world(&reach.shoulder_offset);
    let span = target - shoulder;
    let dist = span.norm();
    if dist < reach.r_min || dist > reach.r_max {
        return (false, dist);
    }
    let steps = (dist / REACH_STEP).ceil() as usize;
    for k in 0..=steps {
        let t = k as f64 / steps.max(1) as f64;
        let p = shoulder + t * span;
        if (target - p).norm() <= CONTACT_ALLOWANCE {
            continue;
        }
        if sdf.signed_distance(&p) <= 0.0 {
            return (false, dist);
        }
    }
    (true, dist)
}

/// 2D convex hull (monotone chain), counter-clockwise, no duplicates.
fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts: Vec<Vector2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| (a.x - b.x).abs() < 1e-15 && (a.y - b.y).abs() < 1e-15);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut lower: Vec<Vector2<f64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Vector2<f64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn polygon_area(hull: &[Vector2<f64>]) -> f64 {
    let mut area = 0.0;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        area += a.x * b.y - b.x * a.y;
    }
    area / 2.0
}

/// Signed distance of `p` to the hull boundary: positive inside.
/// A point lies in the polygon eroded by `d` iff this exceeds `d`.
fn inward_margin(hull: &[Vector2<f64>], p: &Vector2<f64>) -> f64 {
    let mut margin = f64::INFINITY;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let edge = b - a;
        let normal = Vector2::new(-edge.y, edge.x).normalize(); // inward for CCW
        margin = margin.min(normal.dot(&(p - a)));
    }
    margin
}

/// Stability term: CoM projection strictly inside the support hull eroded by
/// [`SUPPORT_SHRINK`]. Returns the margin beyond the shrink band.
pub fn check_stability(pose: &StancePose, com: &Vector3<f64>) -> Result<(bool, f64), IpsError> {
    let hull = convex_hull(&pose.foot_corners());
    if hull.len() < 3 || polygon_area(&hull) <= 1e-12 {
        return Err(IpsError::DegenerateSupport);
    }
    let margin = inward_margin(&hull, &Vector2::new(com.x, com.y)) - SUPPORT_SHRINK;
    Ok((margin > 0.0, margin))
}

/// The three-term conjunction with per-term diagnostics.
pub fn ips(
    pose: &StancePose,
    sdf: &MeshSdf,
    target: &Vector3<f64>,
    reach: &ReachModel,
    delta_safe: f64,
) -> Result<(bool, IpsDiagnostics), IpsError> {
    let (i_col, clearance_m) = check_collision(pose, sdf, delta_safe);
    let (i_ik, reach_m) = check_reach(pose, target, reach, sdf);
    let (i_stab, stability_margin_m) = check_stability(pose, &pose.com_world())?;
    let diag = IpsDiagnostics {
        i_col,
        i_ik,
        i_stab,
        clearance_m,
        reach_m,
        stability_margin_m,
    };
    Ok((i_col && i_ik && i_stab, diag))
}

const RING_RADII: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
const RING_HEADINGS: usize = 16;

/// Searches candidate stances in deterministic order: the initial pose, then
/// concentric rings around it with headings facing the target. Returns the
/// first candidate passing the full IPS check.
pub fn micro_adjust_stance(
    initial: &StancePose,
    sdf: &MeshSdf,
    target: &Vector3<f64>,
    reach: &ReachModel,
    delta_safe: f64,
    max_candidates: usize,
) -> Result<(StancePose, IpsDiagnostics), IpsError> {
    let mut tried = 0;
    let consider = |pose: StancePose| -> Result<Option<(StancePose, IpsDiagnostics)>, IpsError> {
        let (ok, diag) = ips(&pose, sdf, target, reach, delta_safe)?;
        Ok(ok.then_some((pose, diag)))
    };
    if let Some(hit) = consider(initial.clone())? {
        return Ok(hit);
    }
    tried += 1;
    for radius in RING_RADII {
        for k in 0..RING_HEADINGS {
            if tried >= max_candidates {
                return Err(IpsError::NoFeasibleStance);
            }
            let angle = k as f64 / RING_HEADINGS as f64 * std::f64::consts::TAU;
            let x = initial.x + radius * angle.cos();
            let y = initial.y + radius * angle.sin();
            let heading = (target.y - y).atan2(target.x - x);
            if let Some(hit) = consider(initial.at(x, y, heading))? {
                return Ok(hit);
            }
            tried += 1;
        }
    }
    Err(IpsError::NoFeasibleStance)
}
