//! Scenario documents: JSON schema, validation with descriptive errors, and
//! construction of the deterministic world state.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::appearance::ConfidenceParams;
use crate::geometry::{builtin_mesh, AssetLibrary, TriangleMesh};
use crate::ips::{FootRect, ReachModel, StancePose, DELTA_SAFE};
use crate::navigation::{Pose2, TrackingParams};
use crate::spatial::{DiscrepancyParams, TargetQuery};

use super::{
    object_feature, EventKind, Fov, JitterModel, Room, SceneEvent, WorldObject, WorldState,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario JSON invalid at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate object id {0}")]
    DuplicateObjectId(u64),
    #[error("object {object} references unknown room \"{room}\"")]
    UnknownRoom { object: u64, room: String },
    #[error("room \"{0}\" has fewer than 3 polygon vertices")]
    DegenerateRoom(String),
    #[error("mesh \"{name}\" failed to load: {message}")]
    BadMesh { name: String, message: String },
    #[error("event at tick {tick}: {message}")]
    BadEvent { tick: u64, message: String },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseSpec {
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoomSpec {
    pub name: String,
    pub polygon: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: u64,
    pub category: String,
    pub room: String,
    pub pose: PoseSpec,
    pub mesh: String,
    pub height: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventSpec {
    pub tick: u64,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_pose: Option<PoseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<ObjectSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeetSpec {
    pub length: f64,
    pub width: f64,
    pub separation: f64,
}

impl Default for FeetSpec {
    fn default() -> Self {
        Self {
            length: 0.24,
            width: 0.1,
            separation: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReachSpec {
    pub shoulder: [f64; 3],
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for ReachSpec {
    fn default() -> Self {
        let d = ReachModel::default();
        Self {
            shoulder: [d.shoulder_offset.x, d.shoulder_offset.y, d.shoulder_offset.z],
            r_min: d.r_min,
            r_max: d.r_max,
        }
    }
}

fn default_body() -> Vec<([f64; 3], f64)> {
    vec![
        ([0.0, 0.0, 0.4], 0.22),
        ([0.0, 0.0, 0.9], 0.22),
        ([0.0, 0.0, 1.3], 0.2),
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotSpec {
    /// Start pose as (x, y, heading).
    pub start: [f64; 3],
    /// Collision spheres as (offset, radius).
    pub body: Vec<([f64; 3], f64)>,
    pub feet: FeetSpec,
    pub reach: ReachSpec,
}

impl Default for RobotSpec {
    fn default() -> Self {
        Self {
            start: [0.0, 0.0, 0.0],
            body: default_body(),
            feet: FeetSpec::default(),
            reach: ReachSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct QuerySpec {
    pub region: String,
    pub landmark: String,
    pub object: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamsSpec {
    pub confidence: Option<ConfidenceParams>,
    pub discrepancy: Option<DiscrepancyParams>,
    pub tracking: Option<TrackingParams>,
    pub delta_safe: Option<f64>,
    pub fov: Option<Fov>,
    pub jitter: Option<JitterModel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioDoc {
    pub seed: u64,
    pub rooms: Vec<RoomSpec>,
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    #[serde(default)]
    pub robot: RobotSpec,
    #[serde(default)]
    pub query: QuerySpec,
    #[serde(default)]
    pub params: ParamsSpec,
}

/// Resolved run-time parameter block.
#[derive(Debug, Clone)]
pub struct RunParams {
    pub confidence: ConfidenceParams,
    pub discrepancy: DiscrepancyParams,
    pub tracking: TrackingParams,
    pub delta_safe: f64,
    pub fov: Fov,
    pub jitter: JitterModel,
}

/// Fully loaded scenario: world, script, query, robot model, parameters.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub world: WorldState,
    pub events: Vec<SceneEvent>,
    pub query: TargetQuery,
    pub robot_start: Pose2,
    pub stance_template: StancePose,
    pub reach: ReachModel,
    pub params: RunParams,
}

fn load_mesh_asset(name: &str, base_dir: Option<&Path>) -> Result<TriangleMesh, ScenarioError> {
    let bad = |message: String| ScenarioError::BadMesh {
        name: name.to_string(),
        message,
    };
    if name.contains(':') {
        return builtin_mesh(name).map_err(|e| bad(e.to_string()));
    }
    let path = match base_dir {
        Some(dir) => dir.join(name),
        None => Path::new(name).to_path_buf(),
    };
    let file = File::open(&path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "obj" => TriangleMesh::from_obj(file).map_err(|e| bad(e.to_string())),
        "stl" => TriangleMesh::from_stl(file).map_err(|e| bad(e.to_string())),
        other => Err(bad(format!("unsupported mesh format \"{other}\""))),
    }
}

fn build_object(
    spec: &ObjectSpec,
    seed: u64,
    rooms: &BTreeSet<String>,
) -> Result<WorldObject, ScenarioError> {
    if !rooms.contains(&spec.room) {
        return Err(ScenarioError::UnknownRoom {
            object: spec.id,
            room: spec.room.clone(),
        });
    }
    Ok(WorldObject {
        id: spec.id,
        category: spec.category.clone(),
        room: spec.room.clone(),
        position: Vector3::from(spec.pose.position),
        yaw: spec.pose.yaw,
        mesh_ref: spec.mesh.clone(),
        height: spec.height,
        feature: object_feature(&spec.category, seed, spec.id),
    })
}

/// Parses and validates a scenario document. `base_dir` resolves relative
/// mesh paths.
pub fn load_scenario_str(
    doc: &str,
    base_dir: Option<&Path>,
) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = serde_json::from_str(doc).map_err(|e| ScenarioError::Json {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    build_scenario(&doc, base_dir)
}

/// Builds the deterministic world from a parsed document.
pub fn build_scenario(
    doc: &ScenarioDoc,
    base_dir: Option<&Path>,
) -> Result<Scenario, ScenarioError> {
    let mut rooms = Vec::new();
    let mut room_names = BTreeSet::new();
    for r in &doc.rooms {
        if r.polygon.len() < 3 {
            return Err(ScenarioError::DegenerateRoom(r.name.clone()));
        }
        room_names.insert(r.name.clone());
        rooms.push(Room {
            name: r.name.clone(),
            polygon: r.polygon.iter().map(|p| Vector2::new(p[0], p[1])).collect(),
        });
    }

    let jitter = doc.params.jitter.clone().unwrap_or_default();
    if !jitter.validate() {
        return Err(ScenarioError::InvalidParams(
            "jitter coefficients must be non-negative and p_spurious in [0, 1]".to_string(),
        ));
    }
    let tracking = doc.params.tracking.unwrap_or_default();
    if !tracking.validate() {
        return Err(ScenarioError::InvalidParams(
            "tracking lookahead/velocity bounds violated".to_string(),
        ));
    }

    let mut assets = AssetLibrary::default();
    let mut objects = std::collections::BTreeMap::new();
    let mut ids = BTreeSet::new();
    for spec in &doc.objects {
        if !ids.insert(spec.id) {
            return Err(ScenarioError::DuplicateObjectId(spec.id));
        }
        if !assets.contains(&spec.mesh) {
            assets.insert(&spec.mesh, load_mesh_asset(&spec.mesh, base_dir)?);
        }
        let obj = build_object(spec, doc.seed, &room_names)?;
        objects.insert(obj.id, obj);
    }

    let mut events = Vec::new();
    for e in &doc.events {
        let need_id = || {
            e.object_id.ok_or_else(|| ScenarioError::BadEvent {
                tick: e.tick,
                message: format!("\"{}\" event requires object_id", e.kind),
            })
        };
        let kind = match e.kind.as_str() {
            "relocate" => {
                let pose = e.new_pose.clone().ok_or_else(|| ScenarioError::BadEvent {
                    tick: e.tick,
                    message: "relocate event requires new_pose".to_string(),
                })?;
                EventKind::Relocate {
                    object_id: need_id()?,
                    position: Vector3::from(pose.position),
                    yaw: pose.yaw,
                }
            }
            "remove" => EventKind::Remove {
                object_id: need_id()?,
            },
            "add" => {
                let spec = e.object.clone().ok_or_else(|| ScenarioError::BadEvent {
                    tick: e.tick,
                    message: "add event requires an object definition".to_string(),
                })?;
                if ids.contains(&spec.id) {
                    return Err(ScenarioError::DuplicateObjectId(spec.id));
                }
                ids.insert(spec.id);
                if !assets.contains(&spec.mesh) {
                    assets.insert(&spec.mesh, load_mesh_asset(&spec.mesh, base_dir)?);
                }
                EventKind::Add {
                    object: Box::new(build_object(&spec, doc.seed, &room_names)?),
                }
            }
            other => {
                return Err(ScenarioError::BadEvent {
                    tick: e.tick,
                    message: format!("unknown event kind \"{other}\""),
                })
            }
        };
        events.push(SceneEvent { tick: e.tick, kind });
    }
    events.sort_by_key(|e| e.tick);

    let robot = &doc.robot;
    let half_sep = robot.feet.separation / 2.0;
    let stance_template = StancePose {
        x: robot.start[0],
        y: robot.start[1],
        heading: robot.start[2],
        body: robot
            .body
            .iter()
            .map(|(c, r)| (Vector3::from(*c), *r))
            .collect(),
        feet: [
            FootRect {
                length: robot.feet.length,
                width: robot.feet.width,
                offset: Vector2::new(0.0, half_sep),
            },
            FootRect {
                length: robot.feet.length,
                width: robot.feet.width,
                offset: Vector2::new(0.0, -half_sep),
            },
        ],
        com_offset: Vector3::new(0.0, 0.0, 0.85),
    };
    let reach = ReachModel {
        shoulder_offset: Vector3::from(robot.reach.shoulder),
        r_min: robot.reach.r_min,
        r_max: robot.reach.r_max,
    };

    Ok(Scenario {
        world: WorldState {
            seed: doc.seed,
            rooms,
            objects,
            removed: std::collections::BTreeMap::new(),
            assets,
            history: Vec::new(),
        },
        events,
        query: TargetQuery {
            region: doc.query.region.clone(),
            landmark: doc.query.landmark.clone(),
            object: doc.query.object.clone(),
        },
        robot_start: Pose2::new(robot.start[0], robot.start[1], robot.start[2]),
        stance_template,
        reach,
        params: RunParams {
            confidence: doc.params.confidence.unwrap_or_default(),
            discrepancy: doc.params.discrepancy.clone().unwrap_or_default(),
            tracking,
            delta_safe: doc.params.delta_safe.unwrap_or(DELTA_SAFE),
            fov: doc.params.fov.unwrap_or_default(),
            jitter,
        },
    })
}

/// Loads a scenario file; relative mesh paths resolve against its directory.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    load_scenario_str(&text, path.parent())
}

/// Canonical pretty-printed document form, used by the suite generator.
pub fn scenario_to_json(doc: &ScenarioDoc) -> String {
    serde_json::to_string_pretty(doc).expect("scenario documents always serialize")
}
