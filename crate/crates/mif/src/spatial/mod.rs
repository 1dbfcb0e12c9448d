//! Hierarchical scene-graph memory.
//!
//! Nodes carry caption, room, confidence-weighted centroid, reliability and a
//! distilled feature. Live local graphs built from oracle detections are
//! matched against the stored global graph; discrepancy scoring decides when
//! a local region of the stored graph must be patched.

mod assignment;
mod serial;

pub use serial::{graph_from_json, graph_to_json};

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::appearance::node_reliability;

#[derive(Debug, Error)]
pub enum SpatialError {
    #[error("feature is not unit norm (|f| = {norm})")]
    NormalizationError { norm: f64 },
    #[error("no graph node matches the query")]
    TargetNotFound,
    #[error("region references unknown node id {0}")]
    InvalidRegion(u64),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph parse error: {0}")]
    Parse(String),
}

/// One object node of the scene graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: u64,
    pub caption: String,
    pub room: String,
    pub centroid: Vector3<f64>,
    /// Node reliability in [0, 1].
    pub reliability: f64,
    /// Unit-norm distilled feature.
    pub feature: Vec<f64>,
}

pub type Edge = (u64, String, u64);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneGraph {
    pub nodes: BTreeMap<u64, GraphNode>,
    pub edges: BTreeSet<Edge>,
    pub rooms: BTreeSet<String>,
}

impl SceneGraph {
    pub fn insert_node(&mut self, node: GraphNode) {
        self.rooms.insert(node.room.clone());
        self.nodes.insert(node.id, node);
    }

    pub fn insert_edge(&mut self, src: u64, label: &str, dst: u64) {
        debug_assert!(self.nodes.contains_key(&src) && self.nodes.contains_key(&dst));
        self.edges.insert((src, label.to_string(), dst));
    }

    pub fn remove_node(&mut self, id: u64) {
        self.nodes.remove(&id);
        self.edges.retain(|(a, _, b)| *a != id && *b != id);
    }

    pub fn edges_incident(&self, id: u64) -> Vec<Edge> {
        self.edges
            .iter()
            .filter(|(a, _, b)| *a == id || *b == id)
            .cloned()
            .collect()
    }
}

/// Weights and thresholds of the discrepancy monitor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscrepancyParams {
    pub w_pos: f64,
    pub w_sem: f64,
    pub w_rel: f64,
    /// Structural-mismatch trigger threshold on D (also reused per node for
    /// region selection).
    pub tau: f64,
    /// Maximum centroid distance for a local-global pairing.
    pub gate_radius: f64,
    /// Node-term contribution of an unmatched node, scaled by its reliability.
    pub delta_unmatched: f64,
    /// Consecutive ticks with D > tau required before an update triggers.
    pub persistence_ticks: u32,
}

impl Default for DiscrepancyParams {
    fn default() -> Self {
        Self {
            w_pos: 1.0,
            w_sem: 0.5,
            w_rel: 0.8,
            tau: 0.45,
            gate_radius: 1.0,
            delta_unmatched: 1.0,
            persistence_ticks: 3,
        }
    }
}

/// An oracle object detection feeding local graph construction.
#[derive(Debug, Clone)]
pub struct Detection {
    pub object_id: u64,
    pub caption: String,
    pub room: String,
    pub centroid: Vector3<f64>,
    /// Vertical extent of the detected object.
    pub height: f64,
    pub feature: Vec<f64>,
    /// Confidences of the primitives supporting this detection.
    pub support_confidences: Vec<f64>,
}

fn normalize(mut f: Vec<f64>) -> Vec<f64> {
    let n = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        for v in f.iter_mut() {
            *v /= n;
        }
    }
    f
}

fn check_unit(f: &[f64]) -> Result<(), SpatialError> {
    let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(SpatialError::NormalizationError { norm });
    }
    Ok(())
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Horizontal separation below which stacked objects are considered "on"
/// rather than "next_to".
const ON_MAX_HORIZONTAL: f64 = 0.3;
const NEXT_TO_MAX_DIST: f64 = 1.0;

/// Builds a local graph from oracle detections: one node per detection,
/// edges from deterministic spatial predicates.
pub fn build_local_graph(detections: &[Detection]) -> SceneGraph {
    let mut graph = SceneGraph::default();
    for d in detections {
        let reliability = node_reliability(&d.support_confidences).unwrap_or(0.0);
        graph.insert_node(GraphNode {
            id: d.object_id,
            caption: d.caption.clone(),
            room: d.room.clone(),
            centroid: d.centroid,
            reliability,
            feature: normalize(d.feature.clone()),
        });
    }
    for (i, a) in detections.iter().enumerate() {
        for b in detections.iter().skip(i + 1) {
            let dx = a.centroid.x - b.centroid.x;
            let dy = a.centroid.y - b.centroid.y;
            let horiz = (dx * dx + dy * dy).sqrt();
            let dz = a.centroid.z - b.centroid.z;
            let (upper, lower) = if dz >= 0.0 { (a, b) } else { (b, a) };
            let stacked = horiz < ON_MAX_HORIZONTAL
                && dz.abs() > 1e-9
                && dz.abs() <= lower.height + 0.1;
            if stacked {
                graph.insert_edge(upper.object_id, "on", lower.object_id);
            } else if horiz < NEXT_TO_MAX_DIST {
                let (s, t) = if a.object_id < b.object_id {
                    (a.object_id, b.object_id)
                } else {
                    (b.object_id, a.object_id)
                };
                graph.insert_edge(s, "next_to", t);
            }
        }
    }
    graph
}

/// Result of local-global node association.
#[derive(Debug, Clone, Default)]
pub struct Matching {
    /// (local id, global id) pairs.
    pub pairs: Vec<(u64, u64)>,
    pub unmatched_local: Vec<u64>,
    pub unmatched_global: Vec<u64>,
}

fn pair_cost(l: &GraphNode, g: &GraphNode, params: &DiscrepancyParams) -> Option<f64> {
    let dist = (l.centroid - g.centroid).norm();
    if dist > params.gate_radius {
        return None;
    }
    Some(params.w_pos * dist + params.w_sem * (1.0 - cosine(&l.feature, &g.feature)))
}

/// Penalty for leaving a node unmatched inside the assignment objective.
/// Larger than any admissible pair cost, so gated pairs are always preferred.
pub fn unmatch_penalty(params: &DiscrepancyParams) -> f64 {
    params.w_pos * params.gate_radius + 2.0 * params.w_sem + 1.0
}

/// Minimum-cost one-to-one association of local and global nodes.
///
/// Pairs whose centroid distance exceeds the gate radius are forbidden; every
/// node left unpaired costs [`unmatch_penalty`].
pub fn match_nodes(
    local: &SceneGraph,
    global: &SceneGraph,
    params: &DiscrepancyParams,
) -> Matching {
    let locals: Vec<&GraphNode> = local.nodes.values().collect();
    let globals: Vec<&GraphNode> = global.nodes.values().collect();
    let (n, m) = (locals.len(), globals.len());
    if n == 0 && m == 0 {
        return Matching::default();
    }
    let size = n + m;
    let penalty = unmatch_penalty(params);
    // [real | dummy] square matrix: dummy row/col i pairs only with its twin
    let mut cost = vec![vec![0.0f64; size]; size];
    for i in 0..size {
        for j in 0..size {
            cost[i][j] = match (i < n, j < m) {
                (true, true) => {
                    pair_cost(locals[i], globals[j], params).unwrap_or(assignment::FORBIDDEN)
                }
                (true, false) | (false, true) => penalty,
                (false, false) => 0.0,
            };
        }
    }
    let assign = assignment::solve_square(&cost);
    let mut out = Matching::default();
    for (i, &j) in assign.iter().enumerate() {
        match (i < n, j < m) {
            (true, true) => {
                if cost[i][j] < assignment::FORBIDDEN / 2.0 {
                    out.pairs.push((locals[i].id, globals[j].id));
                } else {
                    out.unmatched_local.push(locals[i].id);
                    out.unmatched_global.push(globals[j].id);
                }
            }
            (true, false) => out.unmatched_local.push(locals[i].id),
            (false, true) => out.unmatched_global.push(globals[j].id),
            (false, false) => {}
        }
    }
    out.pairs.sort_unstable();
    out.unmatched_local.sort_unstable();
    out.unmatched_global.sort_unstable();
    out
}

/// Node-level discrepancy between a matched local/global pair.
pub fn node_discrepancy(
    local: &GraphNode,
    global: &GraphNode,
    params: &DiscrepancyParams,
) -> Result<f64, SpatialError> {
    check_unit(&local.feature)?;
    check_unit(&global.feature)?;
    let pos = (local.centroid - global.centroid).norm();
    let sem = 1.0 - cosine(&local.feature, &global.feature);
    Ok(local.reliability * (params.w_pos * pos + params.w_sem * sem))
}

/// Edge identity token with global ids resolved into local-id space through
/// the matching; unmatched endpoints stay distinct.
#[derive(PartialEq, Eq, PartialOrd, Ord, Clone)]
enum EndTok {
    Shared(u64),
    LocalOnly(u64),
    GlobalOnly(u64),
}

fn edge_sets_under_matching(
    local: &SceneGraph,
    global: &SceneGraph,
    matching: &Matching,
) -> (BTreeSet<(EndTok, String, EndTok)>, BTreeSet<(EndTok, String, EndTok)>) {
    let g2l: BTreeMap<u64, u64> = matching.pairs.iter().map(|&(l, g)| (g, l)).collect();
    let matched_l: BTreeSet<u64> = matching.pairs.iter().map(|&(l, _)| l).collect();
    let loc_tok = |id: u64| {
        if matched_l.contains(&id) {
            EndTok::Shared(id)
        } else {
            EndTok::LocalOnly(id)
        }
    };
    let glob_tok = |id: u64| match g2l.get(&id) {
        Some(&l) => EndTok::Shared(l),
        None => EndTok::GlobalOnly(id),
    };
    let e_loc = local
        .edges
        .iter()
        .map(|(a, l, b)| (loc_tok(*a), l.clone(), loc_tok(*b)))
        .collect();
    let e_glob = global
        .edges
        .iter()
        .map(|(a, l, b)| (glob_tok(*a), l.clone(), glob_tok(*b)))
        .collect();
    (e_loc, e_glob)
}

/// Total discrepancy D: mean node term over local nodes plus relational
/// Jaccard distance of the edge sets, weighted by `w_rel`.
pub fn total_discrepancy(
    local: &SceneGraph,
    global: &SceneGraph,
    matching: &Matching,
    params: &DiscrepancyParams,
) -> Result<f64, SpatialError> {
    if local.nodes.is_empty() && matching.unmatched_global.is_empty() {
        return Ok(0.0);
    }
    let mut node_sum = 0.0;
    for &(l, g) in &matching.pairs {
        node_sum += node_discrepancy(&local.nodes[&l], &global.nodes[&g], params)?;
    }
    for id in &matching.unmatched_local {
        node_sum += params.delta_unmatched * local.nodes[id].reliability;
    }
    for id in &matching.unmatched_global {
        node_sum += params.delta_unmatched * global.nodes[id].reliability;
    }
    let denom = local.nodes.len().max(1) as f64;
    let node_term = node_sum / denom;

    let (e_loc, e_glob) = edge_sets_under_matching(local, global, matching);
    let union = e_loc.union(&e_glob).count();
    let rel_term = if union == 0 {
        0.0
    } else {
        let sym_diff = e_loc.symmetric_difference(&e_glob).count();
        params.w_rel * sym_diff as f64 / union as f64
    };
    Ok(node_term + rel_term)
}

/// The locally inconsistent subgraph selected for patching.
#[derive(Debug, Clone, Default)]
pub struct Region {
    /// Matched pairs whose node discrepancy exceeds tau: (local id, global id).
    pub changed: Vec<(u64, u64)>,
    /// Local nodes with no stored counterpart (additions).
    pub added_local: Vec<u64>,
    /// Stored nodes with no live counterpart (removals).
    pub removed_global: Vec<u64>,
    /// Stored edges incident to any region node.
    pub edges: BTreeSet<Edge>,
    /// Full local-to-global id map from the matching that produced the
    /// region; lets patched edges reconnect to untouched neighbors.
    pub node_map: BTreeMap<u64, u64>,
}

impl Region {
    pub fn is_empty(&self) -> bool {
        self.changed.is_empty() && self.added_local.is_empty() && self.removed_global.is_empty()
    }

    /// Mean local-evidence centroid over the region, used to aim the active
    /// scan. Falls back to stored centroids for removals.
    pub fn centroid(&self, local: &SceneGraph, global: &SceneGraph) -> Option<Vector3<f64>> {
        let mut acc = Vector3::zeros();
        let mut count = 0.0;
        for &(l, _) in &self.changed {
            acc += local.nodes[&l].centroid;
            count += 1.0;
        }
        for id in &self.added_local {
            acc += local.nodes[id].centroid;
            count += 1.0;
        }
        for id in &self.removed_global {
            if let Some(n) = global.nodes.get(id) {
                acc += n.centroid;
                count += 1.0;
            }
        }
        (count > 0.0).then(|| acc / count)
    }
}

/// Selects the affected region: matched pairs with per-node discrepancy above
/// tau plus all unmatched nodes, with every incident stored edge.
pub fn affected_region(
    local: &SceneGraph,
    global: &SceneGraph,
    matching: &Matching,
    params: &DiscrepancyParams,
) -> Result<Region, SpatialError> {
    let mut region = Region {
        added_local: matching.unmatched_local.clone(),
        removed_global: matching.unmatched_global.clone(),
        node_map: matching.pairs.iter().cloned().collect(),
        ..Default::default()
    };
    for &(l, g) in &matching.pairs {
        let delta = node_discrepancy(&local.nodes[&l], &global.nodes[&g], params)?;
        if delta > params.tau {
            region.changed.push((l, g));
        }
    }
    for &(_, g) in &region.changed {
        region.edges.extend(global.edges_incident(g));
    }
    for id in &region.removed_global {
        region.edges.extend(global.edges_incident(*id));
    }
    Ok(region)
}

/// Applies local evidence to the stored graph inside the region only.
///
/// Relocations update node payloads in place, removals delete nodes and their
/// edges, additions insert local nodes under their own ids. Everything outside
/// the region is left value-identical. Idempotent for fixed evidence.
pub fn patch_graph(
    global: &SceneGraph,
    region: &Region,
    local_evidence: &SceneGraph,
) -> Result<SceneGraph, SpatialError> {
    let mut out = global.clone();
    let mut touched: BTreeSet<u64> = BTreeSet::new();

    for &(l, g) in &region.changed {
        let src = local_evidence
            .nodes
            .get(&l)
            .ok_or(SpatialError::InvalidRegion(l))?;
        let dst = out.nodes.get_mut(&g).ok_or(SpatialError::InvalidRegion(g))?;
        dst.caption = src.caption.clone();
        dst.room = src.room.clone();
        dst.centroid = src.centroid;
        dst.reliability = src.reliability;
        dst.feature = src.feature.clone();
        touched.insert(g);
    }
    for id in &region.removed_global {
        // already absent on a repeated patch: nothing to do
        out.remove_node(*id);
    }
    for id in &region.added_local {
        let src = local_evidence
            .nodes
            .get(id)
            .ok_or(SpatialError::InvalidRegion(*id))?;
        out.insert_node(src.clone());
        touched.insert(*id);
    }

    // region edges are rebuilt from local evidence
    for e in &region.edges {
        out.edges.remove(e);
    }
    // translate local edges into global ids; matched nodes map through the
    // matching, additions keep their local id
    let l2g: BTreeMap<u64, u64> = region
        .node_map
        .iter()
        .map(|(&l, &g)| (l, g))
        .chain(region.added_local.iter().map(|&id| (id, id)))
        .collect();
    for (a, label, b) in &local_evidence.edges {
        if let (Some(&ga), Some(&gb)) = (l2g.get(a), l2g.get(b)) {
            let in_region = touched.contains(&ga) || touched.contains(&gb);
            if in_region && out.nodes.contains_key(&ga) && out.nodes.contains_key(&gb) {
                out.edges.insert((ga, label.clone(), gb));
            }
        }
    }
    Ok(out)
}

/// A structured (region, landmark, object) target query.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct TargetQuery {
    pub region: String,
    pub landmark: String,
    pub object: String,
}

fn caption_score(caption: &str, term: &str) -> u32 {
    let c = caption.to_ascii_lowercase();
    let t = term.to_ascii_lowercase();
    if c == t {
        2
    } else if c.contains(&t) || t.contains(&c) {
        1
    } else {
        0
    }
}

/// Grounds a query triplet to a graph node: filter by room, optionally by
/// adjacency to a landmark match, then best caption similarity with lowest-id
/// tie break.
pub fn query_target<'a>(
    graph: &'a SceneGraph,
    query: &TargetQuery,
) -> Result<&'a GraphNode, SpatialError> {
    let in_room: Vec<&GraphNode> = graph
        .nodes
        .values()
        .filter(|n| n.room == query.region)
        .collect();
    let candidates: Vec<&GraphNode> = if query.landmark.is_empty() {
        in_room
    } else {
        let landmarks: BTreeSet<u64> = in_room
            .iter()
            .filter(|n| caption_score(&n.caption, &query.landmark) > 0)
            .map(|n| n.id)
            .collect();
        in_room
            .iter()
            .filter(|n| {
                graph.edges.iter().any(|(a, _, b)| {
                    (*a == n.id && landmarks.contains(b)) || (*b == n.id && landmarks.contains(a))
                })
            })
            .copied()
            .collect()
    };
    candidates
        .into_iter()
        .map(|n| (caption_score(&n.caption, &query.object), n))
        .filter(|(s, _)| *s > 0)
        .max_by(|(sa, na), (sb, nb)| sa.cmp(sb).then(nb.id.cmp(&na.id)))
        .map(|(_, n)| n)
        .ok_or(SpatialError::TargetNotFound)
}
