//! Scale-invariant robust ICP.
//!
//! Alternates nearest-neighbor correspondence with a closed-form weighted
//! similarity solve (Umeyama), reweighted by a Huber loss. An iterate is only
//! accepted if it lowers the robust residual, so the reported residual is
//! non-increasing.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use super::GeometryError;

/// s * R * x + t
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }
}

#[derive(Debug, Clone, Copy)]
pub enum RobustLoss {
    /// Huber with the given transition point.
    Huber(f64),
    /// Plain squared loss (no robustification); kept for comparisons.
    Squared,
}

impl RobustLoss {
    fn rho(&self, r: f64) -> f64 {
        match *self {
            RobustLoss::Huber(d) => {
                if r.abs() <= d {
                    0.5 * r * r
                } else {
                    d * (r.abs() - 0.5 * d)
                }
            }
            RobustLoss::Squared => 0.5 * r * r,
        }
    }

    /// IRLS weight rho'(r) / r.
    fn weight(&self, r: f64) -> f64 {
        match *self {
            RobustLoss::Huber(d) => {
                if r.abs() <= d {
                    1.0
                } else {
                    d / r.abs()
                }
            }
            RobustLoss::Squared => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    pub transform: SimilarityTransform,
    /// Final robust residual (mean of rho over correspondences).
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual after each accepted iteration; non-increasing.
    pub residual_trace: Vec<f64>,
}

/// Weighted similarity alignment of paired points (closed form).
fn weighted_similarity(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    weights: &[f64],
) -> Option<SimilarityTransform> {
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return None;
    }
    let mut mx = Vector3::zeros();
    let mut my = Vector3::zeros();
    for ((x, y), &w) in src.iter().zip(dst).zip(weights) {
        mx += w * x;
        my += w * y;
    }
    mx /= wsum;
    my /= wsum;
    let mut cov = Matrix3::zeros();
    let mut var_x = 0.0;
    for ((x, y), &w) in src.iter().zip(dst).zip(weights) {
        let dx = x - mx;
        let dy = y - my;
        cov += w * dy * dx.transpose();
        var_x += w * dx.norm_squared();
    }
    cov /= wsum;
    var_x /= wsum;
    if var_x <= 1e-18 {
        return None;
    }
    let svd = cov.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let det = (u * v_t).determinant();
    let mut s_diag = Vector3::new(1.0, 1.0, 1.0);
    if det < 0.0 {
        s_diag.z = -1.0;
    }
    let rot_mat = u * Matrix3::from_diagonal(&s_diag) * v_t;
    let rotation = Rotation3::from_matrix_unchecked(rot_mat);
    let scale = (svd.singular_values.component_mul(&s_diag)).sum() / var_x;
    if scale <= 0.0 {
        return None;
    }
    let translation = my - scale * (rotation * mx);
    Some(SimilarityTransform {
        rotation,
        translation,
        scale,
    })
}

fn check_nondegenerate(points: &[Vector3<f64>]) -> Result<(), GeometryError> {
    if points.len() < 4 {
        return Err(GeometryError::DegenerateGeometry(
            "need at least 4 points".into(),
        ));
    }
    let mean: Vector3<f64> = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let svd = cov.svd(false, false);
    let smax = svd.singular_values[0];
    if smax <= 0.0 || svd.singular_values[2] / smax < 1e-9 {
        return Err(GeometryError::DegenerateGeometry(
            "source points are collinear or coplanar".into(),
        ));
    }
    Ok(())
}

pub fn scaled_robust_icp(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    init: &SimilarityTransform,
    huber_delta: f64,
    max_iters: usize,
) -> Result<IcpResult, GeometryError> {
    icp_with_loss(source, target, init, RobustLoss::Huber(huber_delta), max_iters)
}

pub fn icp_with_loss(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    init: &SimilarityTransform,
    loss: RobustLoss,
    max_iters: usize,
) -> Result<IcpResult, GeometryError> {
    check_nondegenerate(source)?;
    if target.len() < 4 {
        return Err(GeometryError::DegenerateGeometry(
            "need at least 4 target points".into(),
        ));
    }
    let tree = KdTree::new(target.to_vec());

    let residual_of = |tf: &SimilarityTransform| -> (f64, Vec<usize>, Vec<f64>) {
        let mut total = 0.0;
        let mut corr = Vec::with_capacity(source.len());
        let mut res = Vec::with_capacity(source.len());
        for x in source {
            let y = tf.apply(x);
            let (i, d) = tree.nearest(&y);
            total += loss.rho(d);
            corr.push(i);
            res.push(d);
        }
        (total / source.len() as f64, corr, res)
    };

    let mut best = *init;
    let (mut best_res, mut corr, mut res) = residual_of(&best);
    let mut trace = vec![best_res];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;
        let weights: Vec<f64> = res.iter().map(|&r| loss.weight(r)).collect();
        let dst: Vec<Vector3<f64>> = corr.iter().map(|&i| tree.point(i)).collect();
        let Some(candidate) = weighted_similarity(source, &dst, &weights) else {
            break;
        };
        let (cand_res, cand_corr, cand_r) = residual_of(&candidate);
        if cand_res > best_res {
            break; // keep the best iterate; residual stays non-increasing
        }
        let rel_change = (best_res - cand_res) / best_res.max(1e-300);
        best = candidate;
        best_res = cand_res;
        corr = cand_corr;
        res = cand_r;
        trace.push(best_res);
        if rel_change < 1e-8 {
            converged = true;
            break;
        }
    }

    Ok(IcpResult {
        transform: best,
        residual: best_res,
        iterations,
        converged,
        residual_trace: trace,
    })
}

/// Centroid/RMS-scale initialization: aligns centroids and matches RMS
/// radius, identity rotation.
pub fn coarse_init(source: &[Vector3<f64>], target: &[Vector3<f64>]) -> SimilarityTransform {
    let ms: Vector3<f64> = source.iter().sum::<Vector3<f64>>() / source.len().max(1) as f64;
    let mt: Vector3<f64> = target.iter().sum::<Vector3<f64>>() / target.len().max(1) as f64;
    let rs: f64 = (source.iter().map(|p| (p - ms).norm_squared()).sum::<f64>()
        / source.len().max(1) as f64)
        .sqrt();
    let rt: f64 = (target.iter().map(|p| (p - mt).norm_squared()).sum::<f64>()
        / target.len().max(1) as f64)
        .sqrt();
    let scale = if rs > 1e-12 { rt / rs } else { 1.0 };
    SimilarityTransform {
        rotation: Rotation3::identity(),
        translation: mt - scale * ms,
        scale,
    }
}

/// Robust registration followed by an inlier-only polish.
///
/// The Huber stage tolerates outliers but its weights never reach zero, so
/// wrong matches leave a small residual bias (~1e-3 at unit scale). The
/// polish repeats trim-and-resolve on correspondences inside the Huber
/// transition band until the transform settles, removing that bias.
pub fn trimmed_registration(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    init: &SimilarityTransform,
    huber_delta: f64,
    max_iters: usize,
) -> Result<IcpResult, GeometryError> {
    let mut result = scaled_robust_icp(source, target, init, huber_delta, max_iters)?;
    let tree = KdTree::new(target.to_vec());
    let loss = RobustLoss::Huber(huber_delta);
    for _ in 0..10 {
        let mut in_src = Vec::new();
        let mut in_dst = Vec::new();
        for x in source {
            let y = result.transform.apply(x);
            let (i, d) = tree.nearest(&y);
            if d <= huber_delta {
                in_src.push(*x);
                in_dst.push(tree.point(i));
            }
        }
        if in_src.len() < 4 {
            break;
        }
        let weights = vec![1.0; in_src.len()];
        let Some(candidate) = weighted_similarity(&in_src, &in_dst, &weights) else {
            break;
        };
        let shift = (candidate.translation - result.transform.translation).norm()
            + (candidate.scale - result.transform.scale).abs();
        result.transform = candidate;
        if shift < 1e-12 {
            break;
        }
    }
    // report the robust residual of the polished transform
    result.residual = source
        .iter()
        .map(|x| loss.rho(tree.nearest(&result.transform.apply(x)).1))
        .sum::<f64>()
        / source.len().max(1) as f64;
    Ok(result)
}

/// Axis directions for the rotation scouting grid: coordinate axes plus cube
/// diagonals.
const SCOUT_AXES: [[f64; 3]; 13] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
    [1.0, -1.0, 0.0],
    [1.0, 0.0, 1.0],
    [1.0, 0.0, -1.0],
    [0.0, 1.0, 1.0],
    [0.0, 1.0, -1.0],
    [1.0, 1.0, 1.0],
    [1.0, 1.0, -1.0],
    [1.0, -1.0, 1.0],
    [-1.0, 1.0, 1.0],
];
const SCOUT_ANGLES: [f64; 2] = [0.5, 1.0];

/// Rotation-grid initialization on top of [`coarse_init`]: runs a short
/// scouting pass from each candidate rotation on a subsampled source and
/// returns the iterate with the lowest robust residual. Deterministic.
pub fn rotation_multi_start(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    huber_delta: f64,
) -> SimilarityTransform {
    let base = coarse_init(source, target);
    let stride = (source.len() / 200).max(1);
    let sub: Vec<Vector3<f64>> = source.iter().step_by(stride).cloned().collect();
    let ms: Vector3<f64> = source.iter().sum::<Vector3<f64>>() / source.len().max(1) as f64;

    let mut candidates = vec![Rotation3::identity()];
    for axis in SCOUT_AXES {
        let axis = nalgebra::Unit::new_normalize(Vector3::new(axis[0], axis[1], axis[2]));
        for angle in SCOUT_ANGLES {
            candidates.push(Rotation3::from_axis_angle(&axis, angle));
            candidates.push(Rotation3::from_axis_angle(&axis, -angle));
        }
    }

    let mut best = base;
    let mut best_res = f64::INFINITY;
    for rot in candidates {
        // rotate about the source centroid so centroids stay aligned
        let init = SimilarityTransform {
            rotation: rot * base.rotation,
            translation: base.translation + base.scale * (base.rotation * ms - rot * (base.rotation * ms)),
            scale: base.scale,
        };
        let Ok(r) = scaled_robust_icp(&sub, target, &init, huber_delta, 8) else {
            continue;
        };
        if r.residual < best_res {
            best_res = r.residual;
            best = r.transform;
        }
    }
    best
}
