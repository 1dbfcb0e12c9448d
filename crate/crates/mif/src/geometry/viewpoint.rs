//! Hemisphere viewpoint sampling and task-local utility ranking.

use nalgebra::Vector3;

use super::GeometryError;

#[derive(Debug, Clone, Copy)]
pub struct Viewpoint {
    pub position: Vector3<f64>,
    /// Unit optical axis.
    pub optical_axis: Vector3<f64>,
}

const GOLDEN_ANGLE: f64 = 2.399963229728653; // pi * (3 - sqrt(5))

/// Deterministic Fibonacci lattice on the upper hemisphere around `centroid`,
/// each view aimed at the centroid. The seed point sits directly above.
pub fn sample_viewpoints(centroid: &Vector3<f64>, radius: f64, n: usize) -> Vec<Viewpoint> {
    assert!(radius > 0.0 && n >= 1);
    (0..n)
        .map(|i| {
            let z = 1.0 - i as f64 / n as f64; // (0, 1], top included
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = i as f64 * GOLDEN_ANGLE;
            let dir = Vector3::new(r * phi.cos(), r * phi.sin(), z);
            let position = centroid + radius * dir;
            let optical_axis = (centroid - position).normalize();
            Viewpoint { position, optical_axis }
        })
        .collect()
}

/// Task-local viewpoint utility: distance falloff times foveal alignment to
/// the power `gamma_view`, times mean neighborhood reliability.
pub fn viewpoint_utility(
    view: &Viewpoint,
    centroid: &Vector3<f64>,
    neighborhood_reliability: &[f64],
    sigma_d: f64,
    gamma_view: f64,
) -> Result<f64, GeometryError> {
    let offset = centroid - view.position;
    let dist = offset.norm();
    if dist < 1e-12 {
        return Err(GeometryError::DegenerateView);
    }
    let to_centroid = offset / dist;
    let align = view.optical_axis.dot(&to_centroid).max(0.0);
    let mean_rel = if neighborhood_reliability.is_empty() {
        0.0
    } else {
        neighborhood_reliability.iter().sum::<f64>() / neighborhood_reliability.len() as f64
    };
    Ok((-dist * dist / (2.0 * sigma_d * sigma_d)).exp() * align.powf(gamma_view) * mean_rel)
}
