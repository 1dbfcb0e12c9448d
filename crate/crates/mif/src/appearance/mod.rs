//! Confidence-gated primitive store.
//!
//! Each map primitive carries an accumulated instability statistic `g` and an
//! opacity `alpha`. The confidence gate turns those into a per-primitive
//! reliability `C` that downstream stages use to weight semantic evidence,
//! centroids, and graph-node reliability.

mod codec;
mod serial;

pub use codec::{FeatureCodec, LATENT_DIM};
pub use serial::{load_primitives, save_primitives};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default raw semantic feature dimension before distillation.
pub const RAW_FEATURE_DIM: usize = 512;

#[derive(Debug, Error)]
pub enum AppearanceError {
    #[error("empty primitive set")]
    EmptyInput,
    #[error("mean opacity is zero; confidence normalization is undefined")]
    DegenerateOpacity,
    #[error("total compositing weight is zero")]
    DegenerateWeight,
    #[error("need at least {needed} training features, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A single map primitive with its reliability bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianPrimitive {
    pub id: u64,
    pub position: Vector3<f64>,
    /// Opacity in [0, 1].
    pub opacity: f64,
    /// Unit-norm semantic feature (raw or distilled).
    pub feature: Vec<f64>,
    /// Accumulated optimization-instability proxy, >= 0.
    pub instability: f64,
    /// Confidence in [0, 1]; filled by [`estimate_confidence`].
    pub confidence: f64,
    /// Oracle object association, if known.
    pub object_id: Option<u64>,
}

impl GaussianPrimitive {
    pub fn new(id: u64, position: Vector3<f64>, opacity: f64, feature: Vec<f64>) -> Self {
        Self {
            id,
            position,
            opacity,
            feature,
            instability: 0.0,
            confidence: 1.0,
            object_id: None,
        }
    }
}

/// Parameters of the confidence gate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConfidenceParams {
    /// Sharpness of the instability penalty.
    pub beta: f64,
    /// Opacity scaling inside the sigmoid term.
    pub gamma_conf: f64,
    /// Minimum confidence for a primitive to count as rendering/graph evidence.
    pub tau_conf: f64,
}

impl Default for ConfidenceParams {
    fn default() -> Self {
        Self {
            beta: 5.0,
            gamma_conf: 2.0,
            tau_conf: 0.6,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar form of the confidence gate on mean-normalized inputs.
pub fn confidence_gate(g_n: f64, alpha_n: f64, beta: f64, gamma: f64) -> f64 {
    let decay = (-beta * g_n).exp();
    let c = decay + (1.0 - decay) * sigmoid(gamma * alpha_n * (1.0 - g_n));
    c.clamp(0.0, 1.0)
}

/// Fills `confidence` for every primitive from its instability and opacity,
/// each normalized by the global mean over the set.
///
/// A set with zero mean instability is fully stable and gets confidence 1
/// everywhere.
pub fn estimate_confidence(
    primitives: &mut [GaussianPrimitive],
    params: &ConfidenceParams,
) -> Result<(), AppearanceError> {
    if primitives.is_empty() {
        return Err(AppearanceError::EmptyInput);
    }
    let n = primitives.len() as f64;
    let mean_g: f64 = primitives.iter().map(|p| p.instability).sum::<f64>() / n;
    let mean_a: f64 = primitives.iter().map(|p| p.opacity).sum::<f64>() / n;
    if mean_g == 0.0 {
        for p in primitives.iter_mut() {
            p.confidence = 1.0;
        }
        return Ok(());
    }
    if mean_a == 0.0 {
        return Err(AppearanceError::DegenerateOpacity);
    }
    for p in primitives.iter_mut() {
        let g_n = p.instability / mean_g;
        let a_n = p.opacity / mean_a;
        p.confidence = confidence_gate(g_n, a_n, params.beta, params.gamma_conf);
    }
    Ok(())
}

/// One front-to-back ray sample for feature compositing.
#[derive(Debug, Clone)]
pub struct RaySample<'a> {
    pub confidence: f64,
    pub opacity: f64,
    pub feature: &'a [f64],
}

/// Confidence-weighted alpha compositing of features along a ray.
///
/// Returns the accumulated feature and the accumulated weight
/// `sum C_i a_i T_i` (in [0, 1]). Empty input yields a zero vector.
pub fn composite_features(samples: &[RaySample<'_>], dim: usize) -> (Vec<f64>, f64) {
    let mut out = vec![0.0; dim];
    let mut transmittance = 1.0;
    let mut weight = 0.0;
    for s in samples {
        let w = s.confidence * s.opacity * transmittance;
        for (o, f) in out.iter_mut().zip(s.feature) {
            *o += w * f;
        }
        weight += w;
        transmittance *= 1.0 - s.confidence * s.opacity;
    }
    (out, weight)
}

/// Confidence-weighted centroid of a point set.
pub fn weighted_centroid(
    points: &[Vector3<f64>],
    confidences: &[f64],
    opacities: &[f64],
) -> Result<Vector3<f64>, AppearanceError> {
    assert_eq!(points.len(), confidences.len());
    assert_eq!(points.len(), opacities.len());
    let mut total = 0.0;
    let mut acc = Vector3::zeros();
    for ((p, c), a) in points.iter().zip(confidences).zip(opacities) {
        let w = c * a;
        acc += w * p;
        total += w;
    }
    if total <= 0.0 {
        return Err(AppearanceError::DegenerateWeight);
    }
    Ok(acc / total)
}

/// Node-level reliability: arithmetic mean of supporting confidences.
pub fn node_reliability(confidences: &[f64]) -> Result<f64, AppearanceError> {
    if confidences.is_empty() {
        return Err(AppearanceError::EmptyInput);
    }
    Ok(confidences.iter().sum::<f64>() / confidences.len() as f64)
}
