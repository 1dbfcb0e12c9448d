//! Scene-graph document format: nodes array, edges array, rooms array.

use serde::{Deserialize, Serialize};

use super::{GraphNode, SceneGraph, SpatialError};

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    src: u64,
    label: String,
    dst: u64,
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    nodes: Vec<GraphNode>,
    edges: Vec<EdgeDoc>,
    rooms: Vec<String>,
}

pub fn graph_to_json(graph: &SceneGraph) -> String {
    let doc = GraphDoc {
        nodes: graph.nodes.values().cloned().collect(),
        edges: graph
            .edges
            .iter()
            .map(|(src, label, dst)| EdgeDoc {
                src: *src,
                label: label.clone(),
                dst: *dst,
            })
            .collect(),
        rooms: graph.rooms.iter().cloned().collect(),
    };
    serde_json::to_string_pretty(&doc).expect("graph serialization")
}

pub fn graph_from_json(text: &str) -> Result<SceneGraph, SpatialError> {
    let doc: GraphDoc = serde_json::from_str(text).map_err(|e| SpatialError::Parse(e.to_string()))?;
    let mut graph = SceneGraph::default();
    for n in doc.nodes {
        graph.insert_node(n);
    }
    for e in &doc.edges {
        if !graph.nodes.contains_key(&e.src) || !graph.nodes.contains_key(&e.dst) {
            return Err(SpatialError::Parse(format!(
                "edge ({}, {}, {}) references a missing node",
                e.src, e.label, e.dst
            )));
        }
        graph.insert_edge(e.src, &e.label, e.dst);
    }
    for r in doc.rooms {
        graph.rooms.insert(r);
    }
    Ok(graph)
}
