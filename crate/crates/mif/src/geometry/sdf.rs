//! Signed distance queries on watertight meshes.
//!
//! Distance magnitude comes from a BVH over the triangles; the sign comes
//! from the generalized winding number, which is exact for watertight input.

use nalgebra::Vector3;

use super::mesh::TriangleMesh;

/// Closest point on triangle (a, b, c) to p. Ericson, Real-Time Collision
/// Detection, 5.1.5.
pub fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + v * ab;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + w * ac;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + w * (c - b);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[derive(Clone, Copy)]
struct Aabb {
    min: Vector3<f64>,
    max: Vector3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vector3::repeat(f64::INFINITY),
            max: Vector3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vector3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn merge(&mut self, other: &Aabb) {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
    }

    fn distance_sq(&self, p: &Vector3<f64>) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let v = if p[i] < self.min[i] {
                self.min[i] - p[i]
            } else if p[i] > self.max[i] {
                p[i] - self.max[i]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    fn intersects_segment(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
        // slab test
        let d = b - a;
        let mut tmin = 0.0f64;
        let mut tmax = 1.0f64;
        for i in 0..3 {
            if d[i].abs() < 1e-15 {
                if a[i] < self.min[i] || a[i] > self.max[i] {
                    return false;
                }
            } else {
                let inv = 1.0 / d[i];
                let mut t0 = (self.min[i] - a[i]) * inv;
                let mut t1 = (self.max[i] - a[i]) * inv;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                tmin = tmin.max(t0);
                tmax = tmax.min(t1);
                if tmin > tmax {
                    return false;
                }
            }
        }
        true
    }
}

enum BvhNode {
    Leaf {
        aabb: Aabb,
        tris: Vec<usize>,
    },
    Inner {
        aabb: Aabb,
        left: Box<BvhNode>,
        right: Box<BvhNode>,
    },
}

impl BvhNode {
    fn aabb(&self) -> &Aabb {
        match self {
            BvhNode::Leaf { aabb, .. } => aabb,
            BvhNode::Inner { aabb, .. } => aabb,
        }
    }
}

/// Immutable distance/intersection accelerator over one mesh.
pub struct MeshSdf {
    mesh: TriangleMesh,
    root: BvhNode,
}

const LEAF_SIZE: usize = 8;

impl MeshSdf {
    /// Validates watertightness, then builds the BVH.
    pub fn new(mesh: TriangleMesh) -> Result<Self, super::GeometryError> {
        mesh.validate()?;
        let mut items: Vec<(usize, Vector3<f64>, Aabb)> = mesh
            .triangles
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut aabb = Aabb::empty();
                let mut centroid = Vector3::zeros();
                for &vi in t {
                    aabb.grow(&mesh.vertices[vi]);
                    centroid += mesh.vertices[vi];
                }
                (i, centroid / 3.0, aabb)
            })
            .collect();
        let root = Self::build(&mut items);
        Ok(Self { mesh, root })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    fn build(items: &mut [(usize, Vector3<f64>, Aabb)]) -> BvhNode {
        let mut aabb = Aabb::empty();
        for (_, _, b) in items.iter() {
            aabb.merge(b);
        }
        if items.len() <= LEAF_SIZE {
            return BvhNode::Leaf {
                aabb,
                tris: items.iter().map(|(i, _, _)| *i).collect(),
            };
        }
        let extent = aabb.max - aabb.min;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let mid = items.len() / 2;
        items.select_nth_unstable_by(mid, |a, b| a.1[axis].total_cmp(&b.1[axis]));
        let (l, r) = items.split_at_mut(mid);
        BvhNode::Inner {
            aabb,
            left: Box::new(Self::build(l)),
            right: Box::new(Self::build(r)),
        }
    }

    /// Unsigned distance from p to the surface.
    pub fn unsigned_distance(&self, p: &Vector3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        self.nearest(&self.root, p, &mut best);
        best.sqrt()
    }

    fn nearest(&self, node: &BvhNode, p: &Vector3<f64>, best: &mut f64) {
        if node.aabb().distance_sq(p) >= *best {
            return;
        }
        match node {
            BvhNode::Leaf { tris, .. } => {
                for &ti in tris {
                    let [a, b, c] = self.mesh.triangles[ti];
                    let q = closest_point_on_triangle(
                        p,
                        &self.mesh.vertices[a],
                        &self.mesh.vertices[b],
                        &self.mesh.vertices[c],
                    );
                    let d = (p - q).norm_squared();
                    if d < *best {
                        *best = d;
                    }
                }
            }
            BvhNode::Inner { left, right, .. } => {
                // visit nearer child first for tighter pruning
                let dl = left.aabb().distance_sq(p);
                let dr = right.aabb().distance_sq(p);
                if dl <= dr {
                    self.nearest(left, p, best);
                    self.nearest(right, p, best);
                } else {
                    self.nearest(right, p, best);
                    self.nearest(left, p, best);
                }
            }
        }
    }

    /// Generalized winding number of the surface around p (Van Oosterom and
    /// Strackee solid angles summed over all triangles, divided by 4 pi).
    pub fn winding_number(&self, p: &Vector3<f64>) -> f64 {
        let mut total = 0.0;
        for t in &self.mesh.triangles {
            let a = self.mesh.vertices[t[0]] - p;
            let b = self.mesh.vertices[t[1]] - p;
            let c = self.mesh.vertices[t[2]] - p;
            let la = a.norm();
            let lb = b.norm();
            let lc = c.norm();
            let num = a.dot(&b.cross(&c));
            let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
            total += 2.0 * num.atan2(den);
        }
        total / (4.0 * std::f64::consts::PI)
    }

    /// Signed distance: negative inside.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        let d = self.unsigned_distance(p);
        if self.winding_number(p) > 0.5 {
            -d
        } else {
            d
        }
    }

    /// True if the open segment (a, b) crosses the surface.
    pub fn segment_hits(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
        self.segment_hits_node(&self.root, a, b)
    }

    fn segment_hits_node(&self, node: &BvhNode, a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
        if !node.aabb().intersects_segment(a, b) {
            return false;
        }
        match node {
            BvhNode::Leaf { tris, .. } => tris.iter().any(|&ti| {
                let [i, j, k] = self.mesh.triangles[ti];
                segment_triangle_hit(
                    a,
                    b,
                    &self.mesh.vertices[i],
                    &self.mesh.vertices[j],
                    &self.mesh.vertices[k],
                )
            }),
            BvhNode::Inner { left, right, .. } => {
                self.segment_hits_node(left, a, b) || self.segment_hits_node(right, a, b)
            }
        }
    }
}

/// Moller-Trumbore segment/triangle test.
fn segment_triangle_hit(
    orig: &Vector3<f64>,
    end: &Vector3<f64>,
    v0: &Vector3<f64>,
    v1: &Vector3<f64>,
    v2: &Vector3<f64>,
) -> bool {
    let dir = end - orig;
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-15 {
        return false;
    }
    let inv = 1.0 / det;
    let s = orig - v0;
    let u = inv * s.dot(&h);
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = s.cross(&e1);
    let v = inv * dir.dot(&q);
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    let t = inv * e2.dot(&q);
    (1e-9..=1.0 - 1e-9).contains(&t)
}

/// Minimum clearance of a sphere-set body: min over spheres of
/// signed distance at the center minus the radius.
pub fn min_clearance(spheres: &[(Vector3<f64>, f64)], sdf: &MeshSdf) -> f64 {
    spheres
        .iter()
        .map(|(c, r)| sdf.signed_distance(c) - r)
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_cube_01() -> MeshSdf {
        // [0,1]^3
        let mut m = TriangleMesh::unit_box(1.0, 1.0, 1.0);
        for v in m.vertices.iter_mut() {
            *v += Vector3::new(0.5, 0.5, 0.5);
        }
        MeshSdf::new(m).unwrap()
    }

    #[test]
    fn cube_analytic_values() {
        let sdf = unit_cube_01();
        assert_relative_eq!(
            sdf.signed_distance(&Vector3::new(0.5, 0.5, 0.5)),
            -0.5,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            sdf.signed_distance(&Vector3::new(1.5, 0.5, 0.5)),
            0.5,
            epsilon = 1e-12
        );
        // on a face
        assert!(sdf.unsigned_distance(&Vector3::new(1.0, 0.5, 0.5)).abs() < 1e-9);
    }

    #[test]
    fn clearance_analytic() {
        let sdf = unit_cube_01();
        let body = [(Vector3::new(1.5, 0.5, 0.5), 0.1)];
        assert_relative_eq!(min_clearance(&body, &sdf), 0.4, epsilon = 1e-12);
        let inside = [(Vector3::new(0.5, 0.5, 0.5), 0.1)];
        assert!(min_clearance(&inside, &sdf) < 0.0);
    }

    #[test]
    fn clearance_invariant_under_joint_rigid_motion() {
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 0.9);
        let t = Vector3::new(2.0, -1.0, 0.7);
        let mesh = TriangleMesh::unit_box(0.8, 1.2, 0.5);
        let sdf0 = MeshSdf::new(mesh.clone()).unwrap();
        let sdf1 = MeshSdf::new(mesh.transformed(1.0, &rot, &t)).unwrap();
        let body0 = [(Vector3::new(1.5, 0.2, 0.1), 0.15)];
        let body1 = [(rot * body0[0].0 + t, 0.15)];
        assert_relative_eq!(
            min_clearance(&body0, &sdf0),
            min_clearance(&body1, &sdf1),
            epsilon = 1e-9
        );
    }

    #[test]
    fn segment_hit_detection() {
        let sdf = unit_cube_01();
        assert!(sdf.segment_hits(&Vector3::new(-1.0, 0.5, 0.5), &Vector3::new(2.0, 0.5, 0.5)));
        assert!(!sdf.segment_hits(&Vector3::new(-1.0, 0.5, 2.0), &Vector3::new(2.0, 0.5, 2.0)));
    }
}
