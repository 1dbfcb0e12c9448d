//! Deterministic synthetic environment: ground-truth objects with meshes,
//! scripted relocate/remove/add events, an oracle observation model with
//! gait-jitter instability statistics, and ground-truth success adjudication.

mod scenario;

pub use scenario::{
    build_scenario, load_scenario, load_scenario_str, scenario_to_json, EventSpec, FeetSpec,
    ObjectSpec, ParamsSpec, PoseSpec, QuerySpec, ReachSpec, RobotSpec, RoomSpec, RunParams,
    Scenario, ScenarioDoc, ScenarioError,
};

use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{place_mesh, AssetLibrary, TriangleMesh};
use crate::ips::{self, ReachModel, StancePose, DELTA_SAFE};
use crate::navigation::Pose2;

pub const FEATURE_DIM: usize = 32;

/// Synthetic ids for single-tick spurious detections.
pub const TRANSIENT_ID_BASE: u64 = 900_000;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("event references unknown object {0}")]
    UnknownObject(u64),
    #[error("add event reuses existing object id {0}")]
    DuplicateObject(u64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Room {
    pub name: String,
    pub polygon: Vec<Vector2<f64>>,
}

impl Room {
    /// Even-odd ray-cast point-in-polygon test.
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        let mut inside = false;
        let n = self.polygon.len();
        for i in 0..n {
            let a = self.polygon[i];
            let b = self.polygon[(i + 1) % n];
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if x > p.x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: u64,
    pub category: String,
    pub room: String,
    pub position: Vector3<f64>,
    pub yaw: f64,
    pub mesh_ref: String,
    pub height: f64,
    /// Unit semantic feature: category prototype plus a seeded perturbation.
    pub feature: Vec<f64>,
}

impl WorldObject {
    pub fn centroid(&self) -> Vector3<f64> {
        self.position + Vector3::new(0.0, 0.0, self.height / 2.0)
    }

    /// Manipulation target: a point just above the object's top surface.
    pub fn interaction_point(&self) -> Vector3<f64> {
        self.position + Vector3::new(0.0, 0.0, self.height + 0.05)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum EventKind {
    Relocate { object_id: u64, position: Vector3<f64>, yaw: f64 },
    Remove { object_id: u64 },
    Add { object: Box<WorldObject> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneEvent {
    pub tick: u64,
    pub kind: EventKind,
}

/// Gait-induced instability model: primitives observed while moving inherit
/// instability that grows with speed and path curvature.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct JitterModel {
    pub amp0: f64,
    pub k_speed: f64,
    pub k_curv: f64,
    pub noise_seed: u64,
    /// Per-tick probability of one spurious single-tick detection.
    pub p_spurious: f64,
}

impl Default for JitterModel {
    fn default() -> Self {
        Self {
            amp0: 0.02,
            k_speed: 0.5,
            k_curv: 0.15,
            noise_seed: 0,
            p_spurious: 0.0,
        }
    }
}

impl JitterModel {
    pub fn validate(&self) -> bool {
        self.amp0 >= 0.0
            && self.k_speed >= 0.0
            && self.k_curv >= 0.0
            && (0.0..=1.0).contains(&self.p_spurious)
    }

    /// Deterministic instability base for a given motion state.
    pub fn base_instability(&self, v: f64, kappa: f64) -> f64 {
        self.amp0 + self.k_speed * v.abs() + self.k_curv * kappa.abs()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct Fov {
    pub range: f64,
    pub half_angle: f64,
}

impl Default for Fov {
    fn default() -> Self {
        Self {
            range: 6.0,
            half_angle: 1.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub seed: u64,
    pub rooms: Vec<Room>,
    pub objects: BTreeMap<u64, WorldObject>,
    /// Removed objects, kept for adjudication.
    pub removed: BTreeMap<u64, WorldObject>,
    pub assets: AssetLibrary,
    pub history: Vec<SceneEvent>,
}

impl WorldState {
    pub fn room_at(&self, p: &Vector2<f64>) -> Option<&str> {
        self.rooms
            .iter()
            .find(|r| r.contains(p))
            .map(|r| r.name.as_str())
    }

    /// Ground-truth mesh of an object placed at its current pose. Asset
    /// meshes are origin-centered; the object rests with its base at the
    /// pose's z.
    pub fn placed_mesh(&self, id: u64) -> Result<TriangleMesh, EventError> {
        let obj = self.objects.get(&id).ok_or(EventError::UnknownObject(id))?;
        let mesh = self
            .assets
            .ground_truth(&obj.mesh_ref)
            .map_err(|_| EventError::UnknownObject(id))?;
        Ok(place_mesh(mesh, &obj.centroid(), obj.yaw))
    }
}

fn hash64(mut x: u64) -> u64 {
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn category_hash(category: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64; // FNV-1a
    for b in category.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn normalize(mut f: Vec<f64>) -> Vec<f64> {
    let n = f.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 1e-12 {
        for x in &mut f {
            *x /= n;
        }
    }
    f
}

/// Deterministic unit prototype feature for a category.
pub fn prototype_feature(category: &str) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(category_hash(category));
    let normal = Normal::new(0.0, 1.0).unwrap();
    normalize((0..FEATURE_DIM).map(|_| normal.sample(&mut rng)).collect())
}

/// Category prototype plus a per-object seeded perturbation, renormalized.
pub fn object_feature(category: &str, scenario_seed: u64, object_id: u64) -> Vec<f64> {
    let mut f = prototype_feature(category);
    let mut rng = ChaCha8Rng::seed_from_u64(hash64(scenario_seed ^ hash64(object_id)));
    let normal = Normal::new(0.0, 0.1).unwrap();
    for x in &mut f {
        *x += normal.sample(&mut rng);
    }
    normalize(f)
}

/// One detected object with the raw primitive samples backing it.
#[derive(Debug, Clone)]
pub struct ObservedObject {
    pub object_id: u64,
    pub category: String,
    pub room: String,
    pub centroid: Vector3<f64>,
    pub height: f64,
    pub feature: Vec<f64>,
    /// Per-primitive (instability, opacity) pairs.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct Observation {
    pub detections: Vec<ObservedObject>,
    /// Mean instability over all primitive samples this tick.
    pub mean_instability: f64,
}

const PRIMITIVES_PER_DETECTION: usize = 12;
const SENSOR_HEIGHT: f64 = 1.0;

fn segment_hits_triangle(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    v0: &Vector3<f64>,
    v1: &Vector3<f64>,
    v2: &Vector3<f64>,
) -> bool {
    // Moller-Trumbore restricted to the segment parameter range
    let dir = b - a;
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-12 {
        return false;
    }
    let inv = 1.0 / det;
    let s = a - v0;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    let t = e2.dot(&q) * inv;
    (1e-9..=1.0 - 1e-9).contains(&t)
}

fn segment_hits_mesh(mesh: &TriangleMesh, a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
    mesh.triangles.iter().any(|t| {
        segment_hits_triangle(
            a,
            b,
            &mesh.vertices[t[0]],
            &mesh.vertices[t[1]],
            &mesh.vertices[t[2]],
        )
    })
}

/// Oracle observation: objects inside the range/wedge field of view with an
/// unblocked line of sight are detected. Primitive instability follows
/// amp0 + k_speed·v + k_curv·|κ| plus seeded half-normal noise; centroid and
/// feature noise grow with instability.
pub fn observe(
    world: &WorldState,
    pose: &Pose2,
    v: f64,
    kappa: f64,
    jitter: &JitterModel,
    fov: &Fov,
    tick: u64,
) -> Observation {
    let sensor = Vector3::new(pose.x, pose.y, SENSOR_HEIGHT);
    let base_g = jitter.base_instability(v, kappa);
    let mut detections = Vec::new();
    let mut g_sum = 0.0;
    let mut g_count = 0usize;

    for obj in world.objects.values() {
        let centroid = obj.centroid();
        let to_obj = Vector2::new(centroid.x - pose.x, centroid.y - pose.y);
        let dist = to_obj.norm();
        if dist > fov.range {
            continue;
        }
        if dist > 1e-9 {
            let bearing = to_obj.y.atan2(to_obj.x);
            let err = crate::ips::normalize_angle(bearing - pose.theta);
            if err.abs() > fov.half_angle {
                continue;
            }
        }
        // line of sight against every other object's ground-truth mesh
        let blocked = world
            .objects
            .values()
            .filter(|o| o.id != obj.id)
            .any(|o| match world.placed_mesh(o.id) {
                Ok(mesh) => segment_hits_mesh(&mesh, &sensor, &centroid),
                Err(_) => false,
            });
        if blocked {
            continue;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(hash64(
            jitter.noise_seed ^ hash64(tick).rotate_left(17) ^ hash64(obj.id),
        ));
        let g_noise: Normal<f64> = Normal::new(0.0, 0.03).unwrap();
        let samples: Vec<(f64, f64)> = (0..PRIMITIVES_PER_DETECTION)
            .map(|_| {
                let g = base_g + g_noise.sample(&mut rng).abs();
                let alpha = rng.gen_range(0.6..0.95);
                (g, alpha)
            })
            .collect();
        let mean_g = samples.iter().map(|(g, _)| g).sum::<f64>() / samples.len() as f64;
        g_sum += samples.iter().map(|(g, _)| g).sum::<f64>();
        g_count += samples.len();

        let sigma_c = 0.02 + 0.08 * mean_g;
        let c_noise = Normal::new(0.0, sigma_c).unwrap();
        let centroid_obs = centroid
            + Vector3::new(
                c_noise.sample(&mut rng),
                c_noise.sample(&mut rng),
                0.2 * c_noise.sample(&mut rng),
            );
        let f_noise = Normal::new(0.0, 0.01 + 0.04 * mean_g).unwrap();
        let feature = normalize(
            obj.feature
                .iter()
                .map(|x| x + f_noise.sample(&mut rng))
                .collect(),
        );
        detections.push(ObservedObject {
            object_id: obj.id,
            category: obj.category.clone(),
            room: obj.room.clone(),
            centroid: centroid_obs,
            height: obj.height,
            feature,
            samples,
        });
    }

    // single-tick spurious detection emulating transient discrepancies
    if jitter.p_spurious > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(hash64(
            jitter.noise_seed ^ hash64(tick).rotate_left(41) ^ 0x5eed,
        ));
        if rng.gen_range(0.0..1.0) < jitter.p_spurious {
            let r = rng.gen_range(0.5..fov.range.min(3.0));
            let a = pose.theta + rng.gen_range(-fov.half_angle..fov.half_angle);
            let p = Vector2::new(pose.x + r * a.cos(), pose.y + r * a.sin());
            let room = world.room_at(&p).unwrap_or("").to_string();
            let g = base_g + 0.5;
            detections.push(ObservedObject {
                object_id: TRANSIENT_ID_BASE + tick,
                category: "transient".to_string(),
                room,
                centroid: Vector3::new(p.x, p.y, 0.3),
                height: 0.6,
                feature: prototype_feature("transient"),
                samples: vec![(g, 0.7); PRIMITIVES_PER_DETECTION],
            });
        }
    }

    Observation {
        detections,
        mean_instability: if g_count > 0 {
            g_sum / g_count as f64
        } else {
            0.0
        },
    }
}

/// Applies a scripted event and records it in the ground-truth history.
pub fn apply_event(world: &mut WorldState, event: &SceneEvent) -> Result<(), EventError> {
    match &event.kind {
        EventKind::Relocate {
            object_id,
            position,
            yaw,
        } => {
            let obj = world
                .objects
                .get_mut(object_id)
                .ok_or(EventError::UnknownObject(*object_id))?;
            obj.position = *position;
            obj.yaw = *yaw;
            let p = Vector2::new(position.x, position.y);
            if let Some(room) = world
                .rooms
                .iter()
                .find(|r| r.contains(&p))
                .map(|r| r.name.clone())
            {
                world.objects.get_mut(object_id).unwrap().room = room;
            }
        }
        EventKind::Remove { object_id } => {
            let obj = world
                .objects
                .remove(object_id)
                .ok_or(EventError::UnknownObject(*object_id))?;
            world.removed.insert(*object_id, obj);
        }
        EventKind::Add { object } => {
            if world.objects.contains_key(&object.id) {
                return Err(EventError::DuplicateObject(object.id));
            }
            world.objects.insert(object.id, (**object).clone());
        }
    }
    world.history.push(event.clone());
    Ok(())
}

#[derive(Debug, Clone)]
pub enum TaskOutcome {
    Arrived { stance: StancePose, target_id: u64 },
    ReportedRemoved { target_id: u64 },
    Failed { reason: String },
}

const ADJUDICATION_RADIUS: f64 = 1.0;
const SCENE_RADIUS: f64 = 3.0;

fn merge_meshes(meshes: &[TriangleMesh]) -> TriangleMesh {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for m in meshes {
        let base = vertices.len();
        vertices.extend_from_slice(&m.vertices);
        triangles.extend(m.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }
    TriangleMesh {
        vertices,
        triangles,
    }
}

/// Ground-truth success check: the final stance must be near the target's
/// current location and pass the full safety check against true geometry, or
/// a removed-report must match an actual removal. Arriving at obsolete
/// coordinates counts as failure.
pub fn adjudicate(
    world: &WorldState,
    outcome: &TaskOutcome,
    reach: &ReachModel,
) -> (bool, String) {
    match outcome {
        TaskOutcome::ReportedRemoved { target_id } => {
            if world.removed.contains_key(target_id) {
                (true, format!("object {target_id} correctly reported removed"))
            } else {
                (false, format!("object {target_id} reported removed but present"))
            }
        }
        TaskOutcome::Failed { reason } => (false, reason.clone()),
        TaskOutcome::Arrived { stance, target_id } => {
            let Some(obj) = world.objects.get(target_id) else {
                return (false, format!("arrived but object {target_id} was removed"));
            };
            let truth = obj.centroid();
            let dist = Vector2::new(truth.x - stance.x, truth.y - stance.y).norm();
            if dist > ADJUDICATION_RADIUS {
                return (
                    false,
                    format!("arrived {dist:.2} m from the object's current location"),
                );
            }
            let nearby: Vec<TriangleMesh> = world
                .objects
                .values()
                .filter(|o| {
                    Vector2::new(o.position.x - stance.x, o.position.y - stance.y).norm()
                        < SCENE_RADIUS
                })
                .filter_map(|o| world.placed_mesh(o.id).ok())
                .collect();
            let merged = merge_meshes(&nearby);
            let sdf = match crate::geometry::MeshSdf::new(merged) {
                Ok(s) => s,
                Err(e) => return (false, format!("ground-truth geometry invalid: {e}")),
            };
            match ips::ips(stance, &sdf, &obj.interaction_point(), reach, DELTA_SAFE) {
                Ok((true, _)) => (true, "arrived with a safe interaction stance".to_string()),
                Ok((false, diag)) => (
                    false,
                    format!(
                        "stance unsafe against ground truth (col {} ik {} stab {})",
                        diag.i_col, diag.i_ik, diag.i_stab
                    ),
                ),
                Err(e) => (false, format!("safety check failed: {e}")),
            }
        }
    }
}
