//! Multi-modal spatial memory for mobile manipulation: a confidence-gated
//! appearance store, a hierarchical scene graph with discrepancy-triggered
//! local updates, on-demand interaction geometry with safety verification,
//! stability-aware navigation, and a deterministic scenario simulator.

pub mod appearance;
pub mod geometry;
pub mod harness;
pub mod ips;
pub mod navigation;
pub mod simworld;
pub mod spatial;
