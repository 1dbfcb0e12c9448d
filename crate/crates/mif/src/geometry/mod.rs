//! Interaction geometry: watertight meshes, signed-distance queries,
//! viewpoint ranking, the mesh oracle, and scale-invariant robust ICP.

mod icp;
mod kdtree;
mod mesh;
mod sdf;
mod viewpoint;

pub use icp::{
    coarse_init, icp_with_loss, rotation_multi_start, scaled_robust_icp, trimmed_registration,
    IcpResult, RobustLoss, SimilarityTransform,
};
pub use kdtree::KdTree;
pub use mesh::TriangleMesh;
pub use sdf::{closest_point_on_triangle, min_clearance, MeshSdf};
pub use viewpoint::{sample_viewpoints, viewpoint_utility, Viewpoint};

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("mesh topology error: {0}")]
    Topology(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("viewpoint coincides with target centroid")]
    DegenerateView,
    #[error("unknown mesh asset '{0}'")]
    AssetNotFound(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Mesh noise applied by the oracle provider.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeshNoise {
    /// Per-vertex Gaussian jitter sigma in meters, truncated at 4 sigma.
    pub vertex_sigma: f64,
    /// Re-tessellate (midpoint subdivision) before jittering.
    pub remesh: bool,
}

/// Named ground-truth meshes for the scenario's objects.
#[derive(Debug, Clone, Default)]
pub struct AssetLibrary {
    assets: BTreeMap<String, TriangleMesh>,
}

impl AssetLibrary {
    pub fn insert(&mut self, name: &str, mesh: TriangleMesh) {
        self.assets.insert(name.to_string(), mesh);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.assets.contains_key(name)
    }

    pub fn ground_truth(&self, name: &str) -> Result<&TriangleMesh, GeometryError> {
        self.assets
            .get(name)
            .ok_or_else(|| GeometryError::AssetNotFound(name.to_string()))
    }

    /// Oracle mesh provider: ground truth plus a deterministic seeded
    /// perturbation. Output stays watertight because only vertex positions
    /// move (or the mesh is subdivided first).
    pub fn provide_mesh(
        &self,
        name: &str,
        noise: MeshNoise,
        seed: u64,
    ) -> Result<TriangleMesh, GeometryError> {
        let mut mesh = self.ground_truth(name)?.clone();
        if noise.remesh {
            mesh = mesh.subdivided();
        }
        if noise.vertex_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, noise.vertex_sigma).expect("sigma > 0");
            let cap = 4.0 * noise.vertex_sigma;
            for v in mesh.vertices.iter_mut() {
                for i in 0..3 {
                    let mut d = normal.sample(&mut rng);
                    while d.abs() > cap {
                        d = normal.sample(&mut rng);
                    }
                    v[i] += d;
                }
            }
        }
        mesh.validate()?;
        Ok(mesh)
    }
}

/// Builds a mesh from a compact asset spec: `box:SX,SY,SZ` or
/// `cyl:RADIUS,HEIGHT[,SEGMENTS]`.
pub fn builtin_mesh(spec: &str) -> Result<TriangleMesh, GeometryError> {
    let bad = || GeometryError::AssetNotFound(spec.to_string());
    let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
    let nums: Vec<f64> = rest
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    match (kind, nums.as_slice()) {
        ("box", [sx, sy, sz]) => Ok(TriangleMesh::unit_box(*sx, *sy, *sz)),
        ("cyl", [r, h]) => Ok(TriangleMesh::cylinder(*r, *h, 16)),
        ("cyl", [r, h, n]) => Ok(TriangleMesh::cylinder(*r, *h, (*n as usize).max(3))),
        _ => Err(bad()),
    }
}

/// Places an object mesh in the world: yaw about z, then translate.
pub fn place_mesh(mesh: &TriangleMesh, position: &Vector3<f64>, yaw: f64) -> TriangleMesh {
    let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
    mesh.transformed(1.0, &rot, position)
}

/// Seeded sample of surface points (triangle-area weighted), used as the
/// observed support for registration.
pub fn sample_surface_points(mesh: &TriangleMesh, n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let areas: Vec<f64> = (0..mesh.triangles.len())
        .map(|i| mesh.triangle_area(i))
        .collect();
    let total: f64 = areas.iter().sum();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pick = rng.gen_range(0.0..total);
        let mut ti = 0;
        for (i, a) in areas.iter().enumerate() {
            if pick < *a {
                ti = i;
                break;
            }
            pick -= a;
        }
        let [a, b, c] = mesh.triangles[ti];
        let (mut u, mut v) = (rng.gen::<f64>(), rng.gen::<f64>());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        out.push(
            mesh.vertices[a]
                + u * (mesh.vertices[b] - mesh.vertices[a])
                + v * (mesh.vertices[c] - mesh.vertices[a]),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn library() -> AssetLibrary {
        let mut lib = AssetLibrary::default();
        lib.insert("crate", TriangleMesh::unit_box(0.4, 0.4, 0.5));
        lib
    }

    #[test]
    fn zero_noise_returns_ground_truth() {
        let lib = library();
        let m = lib.provide_mesh("crate", MeshNoise::default(), 7).unwrap();
        let gt = lib.ground_truth("crate").unwrap();
        for (a, b) in m.vertices.iter().zip(&gt.vertices) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn jitter_is_bounded_and_watertight() {
        let lib = library();
        let sigma = 0.005;
        let m = lib
            .provide_mesh("crate", MeshNoise { vertex_sigma: sigma, remesh: false }, 3)
            .unwrap();
        let gt = lib.ground_truth("crate").unwrap();
        for (a, b) in m.vertices.iter().zip(&gt.vertices) {
            assert!((a - b).norm() <= 4.0 * sigma * 3f64.sqrt() + 1e-12);
        }
        m.validate().unwrap();
    }

    #[test]
    fn same_seed_same_mesh() {
        let lib = library();
        let noise = MeshNoise { vertex_sigma: 0.01, remesh: true };
        let a = lib.provide_mesh("crate", noise, 42).unwrap();
        let b = lib.provide_mesh("crate", noise, 42).unwrap();
        for (x, y) in a.vertices.iter().zip(&b.vertices) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn unknown_asset_is_an_error() {
        let lib = library();
        assert!(matches!(
            lib.provide_mesh("ghost", MeshNoise::default(), 0),
            Err(GeometryError::AssetNotFound(_))
        ));
    }

    #[test]
    fn builtin_specs_parse() {
        builtin_mesh("box:0.4,0.4,0.5").unwrap().validate().unwrap();
        builtin_mesh("cyl:0.2,0.8").unwrap().validate().unwrap();
        assert!(builtin_mesh("torus:1").is_err());
    }
}
