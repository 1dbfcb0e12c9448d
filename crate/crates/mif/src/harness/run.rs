//! The task execution loop: grounding, navigation with discrepancy
//! monitoring, triggered local updates, and final stance selection.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{Vector2, Vector3};

use crate::appearance::{estimate_confidence, ConfidenceParams, GaussianPrimitive};
use crate::geometry::{
    coarse_init, sample_surface_points, sample_viewpoints, scaled_robust_icp, viewpoint_utility,
    MeshNoise, MeshSdf, TriangleMesh,
};
use crate::ips::{micro_adjust_stance, IpsDiagnostics, StancePose};
use crate::navigation::{plan_path, pure_pursuit_step, step_unicycle, OccupancyGrid, Pose2};
use crate::simworld::{
    adjudicate, apply_event, observe, ObservedObject, Scenario, TaskOutcome, WorldState,
    TRANSIENT_ID_BASE,
};
use crate::spatial::{
    affected_region, build_local_graph, match_nodes, patch_graph, query_target, total_discrepancy,
    Detection, SceneGraph,
};

use super::{MemoryMode, OutcomeKind, TaskReport};

/// Tick budget and integration step for a run.
#[derive(Debug, Clone, Copy)]
pub struct RunLimits {
    pub max_ticks: u64,
    pub dt: f64,
}

impl Default for RunLimits {
    fn default() -> Self {
        Self {
            max_ticks: 4000,
            dt: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
struct MemoryMeta {
    mesh_ref: String,
    height: f64,
}

/// The stored graph as built by the pre-task mapping pass: ground-truth
/// object layout observed while stationary, so reliabilities are 1.
fn memory_from_world(world: &WorldState) -> (SceneGraph, BTreeMap<u64, MemoryMeta>) {
    let detections: Vec<Detection> = world
        .objects
        .values()
        .map(|o| Detection {
            object_id: o.id,
            caption: o.category.clone(),
            room: o.room.clone(),
            centroid: o.centroid(),
            height: o.height,
            feature: o.feature.clone(),
            support_confidences: vec![1.0; 8],
        })
        .collect();
    let graph = build_local_graph(&detections);
    let meta = world
        .objects
        .values()
        .map(|o| {
            (
                o.id,
                MemoryMeta {
                    mesh_ref: o.mesh_ref.clone(),
                    height: o.height,
                },
            )
        })
        .collect();
    (graph, meta)
}

/// The stored scene graph a run starts from, exposed for export and diffing.
pub fn stored_graph(world: &WorldState) -> SceneGraph {
    memory_from_world(world).0
}

/// Reference samples at typical walking-gait instability; they anchor the
/// normalization so stationary observations score high confidence while
/// fast or sharply-turning sightings are discounted.
fn baseline_samples(world: &WorldState, jitter: &crate::simworld::JitterModel, v_ref: f64) -> Vec<(f64, f64)> {
    let g_ref = jitter.amp0 + jitter.k_speed * v_ref;
    world
        .objects
        .values()
        .flat_map(|_| (0..12).map(move |_| (g_ref, 0.8)))
        .collect()
}

/// Confidence-gates raw observations into graph detections.
fn confident_detections(
    detections: &[ObservedObject],
    baseline: &[(f64, f64)],
    conf: &ConfidenceParams,
) -> Vec<Detection> {
    let mut prims: Vec<GaussianPrimitive> = baseline
        .iter()
        .map(|&(g, a)| GaussianPrimitive {
            id: 0,
            position: Vector3::zeros(),
            opacity: a,
            feature: Vec::new(),
            instability: g,
            confidence: 0.0,
            object_id: None,
        })
        .collect();
    let base_len = prims.len();
    for (di, d) in detections.iter().enumerate() {
        for &(g, a) in &d.samples {
            prims.push(GaussianPrimitive {
                id: di as u64,
                position: d.centroid,
                opacity: a,
                feature: Vec::new(),
                instability: g,
                confidence: 0.0,
                object_id: Some(d.object_id),
            });
        }
    }
    if prims.is_empty() || estimate_confidence(&mut prims, conf).is_err() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(detections.len());
    let mut cursor = base_len;
    for d in detections {
        let support: Vec<f64> = prims[cursor..cursor + d.samples.len()]
            .iter()
            .map(|p| p.confidence)
            .collect();
        cursor += d.samples.len();
        out.push(Detection {
            object_id: d.object_id,
            caption: d.category.clone(),
            room: d.room.clone(),
            centroid: d.centroid,
            height: d.height,
            feature: d.feature.clone(),
            support_confidences: support,
        });
    }
    out
}

/// Stored nodes the sensor should currently see (range and wedge test on
/// remembered centroids).
fn expected_subgraph(memory: &SceneGraph, pose: &Pose2, fov: &crate::simworld::Fov) -> SceneGraph {
    let mut out = SceneGraph::default();
    for node in memory.nodes.values() {
        let to = Vector2::new(node.centroid.x - pose.x, node.centroid.y - pose.y);
        let dist = to.norm();
        if dist > fov.range {
            continue;
        }
        if dist > 1e-9 {
            let err = crate::ips::normalize_angle(to.y.atan2(to.x) - pose.theta);
            if err.abs() > fov.half_angle {
                continue;
            }
        }
        out.insert_node(node.clone());
    }
    let ids: Vec<u64> = out.nodes.keys().copied().collect();
    for (a, l, b) in &memory.edges {
        if ids.contains(a) && ids.contains(b) {
            out.edges.insert((*a, l.clone(), *b));
        }
    }
    out
}

/// Stored nodes within `radius` of a center, with their mutual edges.
fn nearby_subgraph(memory: &SceneGraph, center: &Vector3<f64>, radius: f64) -> SceneGraph {
    let mut out = SceneGraph::default();
    for node in memory.nodes.values() {
        if Vector2::new(node.centroid.x - center.x, node.centroid.y - center.y).norm() <= radius {
            out.insert_node(node.clone());
        }
    }
    let ids: Vec<u64> = out.nodes.keys().copied().collect();
    for (a, l, b) in &memory.edges {
        if ids.contains(a) && ids.contains(b) {
            out.edges.insert((*a, l.clone(), *b));
        }
    }
    out
}

const GRID_RESOLUTION: f64 = 0.1;
const GRID_MARGIN: f64 = 1.0;

/// Occupancy grid over the rooms' bounding box with current object
/// footprints marked (the robot's local obstacle sensing).
fn build_grid(world: &WorldState) -> OccupancyGrid {
    let mut min = Vector2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vector2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for room in &world.rooms {
        for p in &room.polygon {
            min = min.inf(p);
            max = max.sup(p);
        }
    }
    if !min.x.is_finite() {
        min = Vector2::new(-5.0, -5.0);
        max = Vector2::new(5.0, 5.0);
    }
    min -= Vector2::new(GRID_MARGIN, GRID_MARGIN);
    max += Vector2::new(GRID_MARGIN, GRID_MARGIN);
    let width = ((max.x - min.x) / GRID_RESOLUTION).ceil() as usize;
    let height = ((max.y - min.y) / GRID_RESOLUTION).ceil() as usize;
    let mut grid = OccupancyGrid::new(GRID_RESOLUTION, min, width.max(1), height.max(1));
    for obj in world.objects.values() {
        let Ok(mesh) = world.placed_mesh(obj.id) else {
            continue;
        };
        let mut lo = Vector2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vector2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &mesh.vertices {
            let p = Vector2::new(v.x, v.y);
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
        let (ix0, iy0) = grid.to_cell(&lo);
        let (ix1, iy1) = grid.to_cell(&hi);
        for iy in iy0..=iy1 {
            for ix in ix0..=ix1 {
                if grid.in_bounds(ix, iy) {
                    grid.set(ix as usize, iy as usize, true);
                }
            }
        }
    }
    grid
}

const STANDOFFS: [f64; 3] = [0.9, 1.1, 1.3];

/// Plans to a free approach point near the target, preferring the direct
/// bearing and falling back to other bearings and standoffs.
fn approach_plan(
    grid: &OccupancyGrid,
    from: &Vector2<f64>,
    target: &Vector2<f64>,
    inflation: f64,
) -> Option<(Vec<Vector2<f64>>, Vector2<f64>)> {
    let base = {
        let d = from - target;
        if d.norm() > 1e-9 {
            d.y.atan2(d.x)
        } else {
            0.0
        }
    };
    for standoff in STANDOFFS {
        for k in 0..8 {
            let a = base + k as f64 * std::f64::consts::TAU / 8.0;
            let goal = target + standoff * Vector2::new(a.cos(), a.sin());
            if let Ok(path) = plan_path(grid, from, &goal, inflation) {
                return Some((path, goal));
            }
        }
    }
    None
}

const SCAN_RING_RADIUS: f64 = 1.5;
const SCAN_POSES: usize = 8;

/// Stationary ring scan around a discrepant region: 8 inward-facing poses,
/// transient detections dropped, one merged detection per object.
fn active_scan(
    world: &WorldState,
    scenario: &Scenario,
    center: &Vector3<f64>,
    tick: u64,
) -> Vec<Detection> {
    let baseline = baseline_samples(world, &scenario.params.jitter, scenario.params.tracking.v_max);
    let mut merged: BTreeMap<u64, ObservedObject> = BTreeMap::new();
    for k in 0..SCAN_POSES {
        let a = k as f64 / SCAN_POSES as f64 * std::f64::consts::TAU;
        let pos = Vector2::new(
            center.x + SCAN_RING_RADIUS * a.cos(),
            center.y + SCAN_RING_RADIUS * a.sin(),
        );
        let heading = (center.y - pos.y).atan2(center.x - pos.x);
        let pose = Pose2::new(pos.x, pos.y, heading);
        let obs = observe(
            world,
            &pose,
            0.0,
            0.0,
            &scenario.params.jitter,
            &scenario.params.fov,
            tick * SCAN_POSES as u64 + k as u64 + 1_000_000,
        );
        for det in obs.detections {
            if det.object_id >= TRANSIENT_ID_BASE {
                continue;
            }
            merged.insert(det.object_id, det);
        }
    }
    let dets: Vec<ObservedObject> = merged.into_values().collect();
    confident_detections(&dets, &baseline, &scenario.params.confidence)
}

fn hash2(a: u64, b: u64) -> u64 {
    let mut x = a
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(b.rotate_left(23));
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x ^ (x >> 27)
}

fn merge_meshes(meshes: &[TriangleMesh]) -> TriangleMesh {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for m in meshes {
        let base = vertices.len();
        vertices.extend_from_slice(&m.vertices);
        triangles.extend(m.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }
    TriangleMesh { vertices, triangles }
}

struct Phase3Input<'a> {
    scenario: &'a Scenario,
    world: &'a WorldState,
    memory: &'a SceneGraph,
    meta: &'a BTreeMap<u64, MemoryMeta>,
    pose: Pose2,
    target_id: u64,
    believed_centroid: Vector3<f64>,
    believed_height: f64,
    /// Whether the target is currently visible; only then may the surface be
    /// observed for registration.
    observed: bool,
}

/// Final stance selection: viewpoint choice, on-demand mesh registration,
/// and safety-checked micro-adjustment with a retry budget of 5 candidate
/// seeds.
fn phase3(input: &Phase3Input<'_>) -> (TaskOutcome, Option<StancePose>, Option<IpsDiagnostics>) {
    let Phase3Input {
        scenario,
        world,
        memory,
        meta,
        pose,
        target_id,
        believed_centroid,
        believed_height,
        observed,
    } = input;
    let target_id = *target_id;
    let fail = |reason: String| {
        (
            TaskOutcome::Failed { reason },
            None::<StancePose>,
            None::<IpsDiagnostics>,
        )
    };

    let mesh_ref = world
        .objects
        .get(&target_id)
        .map(|o| o.mesh_ref.clone())
        .or_else(|| meta.get(&target_id).map(|m| m.mesh_ref.clone()));
    let Some(mesh_ref) = mesh_ref else {
        return fail(format!("no mesh reference for object {target_id}"));
    };

    // viewpoint choice seeds the surface observation
    let reliabilities: Vec<f64> = memory
        .nodes
        .get(&target_id)
        .map(|n| vec![n.reliability])
        .unwrap_or_else(|| vec![1.0]);
    let views = sample_viewpoints(believed_centroid, 1.5, 8);
    let best_view = views
        .iter()
        .enumerate()
        .filter_map(|(i, v)| {
            viewpoint_utility(v, believed_centroid, &reliabilities, 1.0, 2.0)
                .ok()
                .map(|q| (i, q))
        })
        .max_by(|(ia, qa), (ib, qb)| qa.total_cmp(qb).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .unwrap_or(0);

    let seed = hash2(world.seed, target_id);
    let model = match world.assets.provide_mesh(
        &mesh_ref,
        MeshNoise {
            vertex_sigma: 0.002,
            remesh: false,
        },
        seed,
    ) {
        Ok(m) => m,
        Err(e) => return fail(format!("mesh provider failed: {e}")),
    };

    // register the model to observed surface points when the target is
    // visible; otherwise place it at the remembered pose
    let registered = if *observed {
        world.placed_mesh(target_id).ok().and_then(|gt| {
            let observed_pts =
                sample_surface_points(&gt, 200, hash2(seed, best_view as u64 + 1));
            let model_pts = sample_surface_points(&model, 200, hash2(seed, 2));
            let init = coarse_init(&model_pts, &observed_pts);
            scaled_robust_icp(&model_pts, &observed_pts, &init, 0.05, 30)
                .ok()
                .map(|r| {
                    model.transformed(
                        r.transform.scale,
                        &r.transform.rotation,
                        &r.transform.translation,
                    )
                })
        })
    } else {
        None
    };
    let registered = registered.unwrap_or_else(|| {
        let lift = Vector3::new(
            believed_centroid.x,
            believed_centroid.y,
            believed_centroid.z.max(believed_height / 2.0),
        );
        model.transformed(1.0, &nalgebra::Rotation3::identity(), &lift)
    });

    // interaction point from the registered geometry: just above its top
    let top = registered
        .vertices
        .iter()
        .map(|v| v.z)
        .fold(f64::NEG_INFINITY, f64::max);
    let center: Vector3<f64> =
        registered.vertices.iter().sum::<Vector3<f64>>() / registered.vertices.len().max(1) as f64;
    let target_point = Vector3::new(center.x, center.y, top + 0.05);

    // obstacle scene: registered target plus remembered neighbors
    let mut obstacle_meshes = vec![registered];
    for node in memory.nodes.values() {
        if node.id == target_id {
            continue;
        }
        if Vector2::new(node.centroid.x - center.x, node.centroid.y - center.y).norm() > 3.0 {
            continue;
        }
        let neighbor_ref = world
            .objects
            .get(&node.id)
            .map(|o| o.mesh_ref.clone())
            .or_else(|| meta.get(&node.id).map(|m| m.mesh_ref.clone()));
        if let Some(nref) = neighbor_ref {
            if let Ok(m) = world.assets.ground_truth(&nref) {
                obstacle_meshes.push(m.transformed(
                    1.0,
                    &nalgebra::Rotation3::identity(),
                    &node.centroid,
                ));
            }
        }
    }
    let sdf = match MeshSdf::new(merge_meshes(&obstacle_meshes)) {
        Ok(s) => s,
        Err(e) => return fail(format!("scene geometry invalid: {e}")),
    };

    // retry budget: the arrival pose plus 4 alternative bearings
    let planar = Vector2::new(center.x, center.y);
    let arrival_bearing = {
        let d = Vector2::new(pose.x, pose.y) - planar;
        if d.norm() > 1e-9 {
            d.y.atan2(d.x)
        } else {
            0.0
        }
    };
    let mut seeds = vec![(pose.x, pose.y)];
    for k in 1..5 {
        let a = arrival_bearing + k as f64 * std::f64::consts::TAU / 5.0;
        seeds.push((planar.x + 0.65 * a.cos(), planar.y + 0.65 * a.sin()));
    }
    // plan against a slightly shrunk reach annulus so the accepted stance
    // keeps margin when rechecked against the true object pose
    let plan_reach = crate::ips::ReachModel {
        r_max: (scenario.reach.r_max - 0.05).max(scenario.reach.r_min),
        ..scenario.reach
    };
    for (sx, sy) in seeds {
        let heading = (center.y - sy).atan2(center.x - sx);
        let initial = scenario.stance_template.at(sx, sy, heading);
        if let Ok((stance, diag)) = micro_adjust_stance(
            &initial,
            &sdf,
            &target_point,
            &plan_reach,
            scenario.params.delta_safe,
            81,
        ) {
            return (
                TaskOutcome::Arrived {
                    stance: stance.clone(),
                    target_id,
                },
                Some(stance),
                Some(diag),
            );
        }
    }
    fail("no feasible interaction stance".to_string())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    Navigate,
    Explore,
    Spin(u8),
    AwaitTarget(u8),
}

/// Runs one task end to end and adjudicates against ground truth.
pub fn run_task(scenario: &Scenario, mode: MemoryMode) -> TaskReport {
    run_task_with_limits(scenario, mode, RunLimits::default())
}

pub fn run_task_with_limits(
    scenario: &Scenario,
    mode: MemoryMode,
    limits: RunLimits,
) -> TaskReport {
    let mut world = scenario.world.clone();
    let (mut memory, meta) = memory_from_world(&world);
    let baseline = baseline_samples(&world, &scenario.params.jitter, scenario.params.tracking.v_max);
    let disc = &scenario.params.discrepancy;

    let mut pose = scenario.robot_start;
    let mut d_trace: Vec<(u64, f64)> = Vec::new();
    let mut updates_triggered = 0u32;
    let mut path_length = 0.0;
    let mut streak = 0u32;
    let mut last_v = 0.0;
    let mut last_kappa = 0.0;

    let target_in_memory = query_target(&memory, &scenario.query).is_ok();
    let mut target_id = query_target(&memory, &scenario.query).ok().map(|n| n.id);

    let finish = |outcome: TaskOutcome,
                  stance: Option<StancePose>,
                  diag: Option<IpsDiagnostics>,
                  ticks: u64,
                  d_trace: Vec<(u64, f64)>,
                  updates: u32,
                  path_length: f64,
                  world: &WorldState| {
        let (success, reason) = adjudicate(world, &outcome, &scenario.reach);
        let kind = match (&outcome, success) {
            (TaskOutcome::ReportedRemoved { .. }, _) => OutcomeKind::RemovedReport,
            (_, true) => OutcomeKind::Success,
            (_, false) => OutcomeKind::Failure,
        };
        TaskReport {
            scenario_seed: scenario.world.seed,
            mode,
            outcome: kind,
            success,
            reason,
            ticks,
            d_trace,
            updates_triggered: updates,
            final_stance: stance,
            ips_diag: diag,
            path_length,
        }
    };

    // exploration goals: each room's centroid and bounding-box quarter points
    let mut explore_goals: VecDeque<Vector2<f64>> = VecDeque::new();
    for room in &world.rooms {
        let n = room.polygon.len() as f64;
        let centroid = room.polygon.iter().sum::<Vector2<f64>>() / n;
        let mut lo = Vector2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vector2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &room.polygon {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        explore_goals.push_back(centroid);
        for (fx, fy) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
            explore_goals.push_back(Vector2::new(
                lo.x + fx * (hi.x - lo.x),
                lo.y + fy * (hi.y - lo.y),
            ));
        }
    }

    if target_id.is_none() && mode != MemoryMode::Full {
        let outcome = TaskOutcome::Failed {
            reason: "target not found in stored memory".to_string(),
        };
        return finish(outcome, None, None, 0, d_trace, 0, 0.0, &world);
    }

    let mut state = if target_id.is_some() {
        State::Navigate
    } else {
        State::Explore
    };
    let mut path: Option<Vec<Vector2<f64>>> = None;
    let inflation = scenario.stance_template.body_radius() + scenario.params.delta_safe;
    let mut event_idx = 0usize;
    let observing = mode != MemoryMode::Static;

    let mut tick = 0u64;
    loop {
        if tick >= limits.max_ticks {
            let outcome = TaskOutcome::Failed {
                reason: "tick budget exhausted".to_string(),
            };
            return finish(
                outcome,
                None,
                None,
                tick,
                d_trace,
                updates_triggered,
                path_length,
                &world,
            );
        }

        while event_idx < scenario.events.len() && scenario.events[event_idx].tick <= tick {
            // script errors are authoring bugs; surface them as failures
            if let Err(e) = apply_event(&mut world, &scenario.events[event_idx]) {
                let outcome = TaskOutcome::Failed {
                    reason: format!("bad event script: {e}"),
                };
                return finish(
                    outcome,
                    None,
                    None,
                    tick,
                    d_trace,
                    updates_triggered,
                    path_length,
                    &world,
                );
            }
            event_idx += 1;
            path = None; // obstacle layout changed; replan
        }

        let mut target_visible = false;
        if observing {
            let obs = observe(
                &world,
                &pose,
                last_v,
                last_kappa,
                &scenario.params.jitter,
                &scenario.params.fov,
                tick,
            );
            target_visible = target_id
                .map(|id| obs.detections.iter().any(|d| d.object_id == id))
                .unwrap_or(false);
            let dets = confident_detections(&obs.detections, &baseline, &scenario.params.confidence);
            let local = build_local_graph(&dets);
            let expected = expected_subgraph(&memory, &pose, &scenario.params.fov);
            let matching = match_nodes(&local, &expected, disc);
            let d = total_discrepancy(&local, &expected, &matching, disc).unwrap_or(0.0);
            d_trace.push((tick, d));
            if d > disc.tau {
                streak += 1;
            } else {
                streak = 0;
            }

            if mode == MemoryMode::Full && streak >= disc.persistence_ticks {
                streak = 0;
                if let Ok(region) = affected_region(&local, &expected, &matching, disc) {
                    if let Some(center) = region.centroid(&local, &expected) {
                        let coverage = (scenario.params.fov.range - SCAN_RING_RADIUS).max(1.0);
                        let scan_dets: Vec<Detection> = active_scan(&world, scenario, &center, tick)
                            .into_iter()
                            .filter(|det| {
                                Vector2::new(det.centroid.x - center.x, det.centroid.y - center.y)
                                    .norm()
                                    <= coverage
                            })
                            .collect();
                        let scan_local = build_local_graph(&scan_dets);
                        let scan_expected = nearby_subgraph(&memory, &center, coverage);
                        let scan_matching = match_nodes(&scan_local, &scan_expected, disc);
                        if let Ok(scan_region) =
                            affected_region(&scan_local, &scan_expected, &scan_matching, disc)
                        {
                            if !scan_region.is_empty() {
                                if let Ok(patched) =
                                    patch_graph(&memory, &scan_region, &scan_local)
                                {
                                    memory = patched;
                                    updates_triggered += 1;
                                    path = None;
                                    match query_target(&memory, &scenario.query) {
                                        Ok(node) => {
                                            target_id = Some(node.id);
                                            if state == State::Explore
                                                || matches!(state, State::Spin(_))
                                            {
                                                state = State::Navigate;
                                            }
                                            if matches!(state, State::AwaitTarget(_)) {
                                                state = State::Navigate;
                                            }
                                        }
                                        Err(_) => {
                                            if target_in_memory {
                                                let id = target_id.unwrap_or(0);
                                                let outcome =
                                                    TaskOutcome::ReportedRemoved { target_id: id };
                                                return finish(
                                                    outcome,
                                                    None,
                                                    None,
                                                    tick,
                                                    d_trace,
                                                    updates_triggered,
                                                    path_length,
                                                    &world,
                                                );
                                            }
                                            target_id = None;
                                            if state == State::Navigate {
                                                state = State::Explore;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }

        last_v = 0.0;
        last_kappa = 0.0;
        match state {
            State::Spin(remaining) => {
                // slow enough that anything in view stays inside the wedge
                // beyond the trigger persistence window
                pose.theta = crate::ips::normalize_angle(
                    pose.theta + std::f64::consts::FRAC_PI_8 / 2.0,
                );
                state = if remaining > 1 {
                    State::Spin(remaining - 1)
                } else if target_id.is_some() {
                    State::Navigate
                } else {
                    path = None;
                    State::Explore
                };
            }
            State::AwaitTarget(remaining) => {
                let believed = target_id
                    .and_then(|id| memory.nodes.get(&id))
                    .map(|n| n.centroid);
                let Some(believed) = believed else {
                    let outcome = TaskOutcome::Failed {
                        reason: "target lost from memory".to_string(),
                    };
                    return finish(
                        outcome,
                        None,
                        None,
                        tick,
                        d_trace,
                        updates_triggered,
                        path_length,
                        &world,
                    );
                };
                let bearing = (believed.y - pose.y).atan2(believed.x - pose.x);
                let err = crate::ips::normalize_angle(bearing - pose.theta);
                if err.abs() > 0.15 {
                    pose.theta = crate::ips::normalize_angle(
                        pose.theta + err.clamp(-0.3, 0.3),
                    );
                } else {
                    let decide = match mode {
                        MemoryMode::Static => true,
                        _ => target_visible || remaining == 0,
                    };
                    if decide {
                        let id = target_id.unwrap();
                        if mode != MemoryMode::Static && !target_visible {
                            if mode == MemoryMode::Initial {
                                let outcome = TaskOutcome::ReportedRemoved { target_id: id };
                                return finish(
                                    outcome,
                                    None,
                                    None,
                                    tick,
                                    d_trace,
                                    updates_triggered,
                                    path_length,
                                    &world,
                                );
                            }
                            // full mode: the discrepancy trigger above should
                            // have resolved this; if it has not after the
                            // wait, fall through with remembered data
                        }
                        let believed_height = meta
                            .get(&id)
                            .map(|m| m.height)
                            .or_else(|| world.objects.get(&id).map(|o| o.height))
                            .unwrap_or(believed.z * 2.0);
                        let observed = mode != MemoryMode::Static && target_visible;
                        let (outcome, stance, diag) = phase3(&Phase3Input {
                            scenario,
                            world: &world,
                            memory: &memory,
                            meta: &meta,
                            pose,
                            target_id: id,
                            believed_centroid: believed,
                            believed_height,
                            observed,
                        });
                        return finish(
                            outcome,
                            stance,
                            diag,
                            tick,
                            d_trace,
                            updates_triggered,
                            path_length,
                            &world,
                        );
                    }
                    state = State::AwaitTarget(remaining.saturating_sub(1));
                }
            }
            State::Navigate | State::Explore => {
                let goal_planar = match state {
                    State::Navigate => {
                        let believed = target_id
                            .and_then(|id| memory.nodes.get(&id))
                            .map(|n| Vector2::new(n.centroid.x, n.centroid.y));
                        match believed {
                            Some(g) => g,
                            None => {
                                let outcome = TaskOutcome::Failed {
                                    reason: "target lost from memory".to_string(),
                                };
                                return finish(
                                    outcome,
                                    None,
                                    None,
                                    tick,
                                    d_trace,
                                    updates_triggered,
                                    path_length,
                                    &world,
                                );
                            }
                        }
                    }
                    _ => match explore_goals.front() {
                        Some(g) => *g,
                        None => {
                            let outcome = if target_in_memory {
                                TaskOutcome::ReportedRemoved {
                                    target_id: target_id.unwrap_or(0),
                                }
                            } else {
                                TaskOutcome::Failed {
                                    reason: "target never found during exploration".to_string(),
                                }
                            };
                            return finish(
                                outcome,
                                None,
                                None,
                                tick,
                                d_trace,
                                updates_triggered,
                                path_length,
                                &world,
                            );
                        }
                    },
                };

                if path.is_none() {
                    let grid = build_grid(&world);
                    let from = Vector2::new(pose.x, pose.y);
                    let planned = if state == State::Navigate {
                        approach_plan(&grid, &from, &goal_planar, inflation).map(|(p, _)| p)
                    } else {
                        plan_path(&grid, &from, &goal_planar, inflation).ok()
                    };
                    match planned {
                        Some(p) => path = Some(p),
                        None => {
                            if state == State::Explore {
                                explore_goals.pop_front();
                                if explore_goals.is_empty() {
                                    let outcome = if target_in_memory {
                                        TaskOutcome::ReportedRemoved {
                                            target_id: target_id.unwrap_or(0),
                                        }
                                    } else {
                                        TaskOutcome::Failed {
                                            reason: "target never found during exploration"
                                                .to_string(),
                                        }
                                    };
                                    return finish(
                                        outcome,
                                        None,
                                        None,
                                        tick,
                                        d_trace,
                                        updates_triggered,
                                        path_length,
                                        &world,
                                    );
                                }
                                tick += 1;
                                continue;
                            }
                            let outcome = TaskOutcome::Failed {
                                reason: "no collision-free path to the target".to_string(),
                            };
                            return finish(
                                outcome,
                                None,
                                None,
                                tick,
                                d_trace,
                                updates_triggered,
                                path_length,
                                &world,
                            );
                        }
                    }
                }

                let cmd = match pure_pursuit_step(
                    &pose,
                    path.as_ref().unwrap(),
                    &scenario.params.tracking,
                ) {
                    Ok(c) => c,
                    Err(_) => {
                        path = None;
                        tick += 1;
                        continue;
                    }
                };
                if cmd.arrived {
                    path = None;
                    state = match state {
                        State::Navigate => State::AwaitTarget(5),
                        _ => {
                            explore_goals.pop_front();
                            State::Spin(32)
                        }
                    };
                } else if cmd.v < 1e-6 {
                    // heading error beyond the velocity-scaling floor: turn
                    // in place toward the lookahead point
                    let err = crate::ips::normalize_angle(
                        (cmd.target.y - pose.y).atan2(cmd.target.x - pose.x) - pose.theta,
                    );
                    pose.theta =
                        crate::ips::normalize_angle(pose.theta + err.clamp(-0.3, 0.3));
                } else {
                    pose = step_unicycle(&pose, cmd.v, cmd.omega, limits.dt);
                    path_length += cmd.v * limits.dt;
                    last_v = cmd.v;
                    last_kappa = cmd.kappa;
                }
            }
        }
        tick += 1;
    }
}
