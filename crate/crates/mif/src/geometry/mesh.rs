//! Watertight triangle meshes: validation, primitive generators, subdivision,
//! and OBJ/STL loading.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};

use nalgebra::Vector3;

use super::GeometryError;

#[derive(Debug, Clone)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<Self, GeometryError> {
        let mesh = Self { vertices, triangles };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Watertightness: every directed edge appears exactly once, so every
    /// undirected edge is shared by exactly two consistently wound triangles.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (ti, t) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let a = t[k];
                let b = t[(k + 1) % 3];
                if a >= self.vertices.len() || b >= self.vertices.len() {
                    return Err(GeometryError::Topology(format!(
                        "triangle {ti} references vertex out of range"
                    )));
                }
                if directed.insert((a, b), ti).is_some() {
                    return Err(GeometryError::Topology(format!(
                        "directed edge ({a},{b}) appears more than once"
                    )));
                }
            }
            if self.triangle_area(ti) <= 1e-12 {
                return Err(GeometryError::Topology(format!("triangle {ti} is degenerate")));
            }
        }
        for (&(a, b), _) in &directed {
            if !directed.contains_key(&(b, a)) {
                return Err(GeometryError::Topology(format!(
                    "boundary edge ({a},{b}) has no opposite"
                )));
            }
        }
        Ok(())
    }

    pub fn triangle_area(&self, ti: usize) -> f64 {
        let [a, b, c] = self.triangles[ti];
        let u = self.vertices[b] - self.vertices[a];
        let v = self.vertices[c] - self.vertices[a];
        u.cross(&v).norm() * 0.5
    }

    pub fn centroid(&self) -> Vector3<f64> {
        let n = self.vertices.len().max(1) as f64;
        self.vertices.iter().sum::<Vector3<f64>>() / n
    }

    pub fn transformed(&self, scale: f64, rot: &nalgebra::Rotation3<f64>, t: &Vector3<f64>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| scale * (rot * v) + t).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Axis-aligned box centered at the origin.
    pub fn unit_box(sx: f64, sy: f64, sz: f64) -> Self {
        let (hx, hy, hz) = (sx / 2.0, sy / 2.0, sz / 2.0);
        let v = vec![
            Vector3::new(-hx, -hy, -hz),
            Vector3::new(hx, -hy, -hz),
            Vector3::new(hx, hy, -hz),
            Vector3::new(-hx, hy, -hz),
            Vector3::new(-hx, -hy, hz),
            Vector3::new(hx, -hy, hz),
            Vector3::new(hx, hy, hz),
            Vector3::new(-hx, hy, hz),
        ];
        // 12 triangles, outward winding
        let t = vec![
            [0, 2, 1], [0, 3, 2], // bottom (-z)
            [4, 5, 6], [4, 6, 7], // top (+z)
            [0, 1, 5], [0, 5, 4], // -y
            [2, 3, 7], [2, 7, 6], // +y
            [1, 2, 6], [1, 6, 5], // +x
            [3, 0, 4], [3, 4, 7], // -x
        ];
        Self { vertices: v, triangles: t }
    }

    /// Closed cylinder along z, centered at the origin.
    pub fn cylinder(radius: f64, height: f64, segments: usize) -> Self {
        let n = segments.max(3);
        let hz = height / 2.0;
        let mut vertices = Vec::with_capacity(2 * n + 2);
        for i in 0..n {
            let a = i as f64 / n as f64 * std::f64::consts::TAU;
            vertices.push(Vector3::new(radius * a.cos(), radius * a.sin(), -hz));
        }
        for i in 0..n {
            let a = i as f64 / n as f64 * std::f64::consts::TAU;
            vertices.push(Vector3::new(radius * a.cos(), radius * a.sin(), hz));
        }
        let bot_c = vertices.len();
        vertices.push(Vector3::new(0.0, 0.0, -hz));
        let top_c = vertices.len();
        vertices.push(Vector3::new(0.0, 0.0, hz));
        let mut triangles = Vec::new();
        for i in 0..n {
            let j = (i + 1) % n;
            // side quad
            triangles.push([i, j, n + j]);
            triangles.push([i, n + j, n + i]);
            // caps
            triangles.push([bot_c, j, i]);
            triangles.push([top_c, n + i, n + j]);
        }
        Self { vertices, triangles }
    }

    /// One step of 1-to-4 midpoint subdivision; preserves watertightness.
    pub fn subdivided(&self) -> Self {
        let mut vertices = self.vertices.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                vertices.push((vertices[a] + vertices[b]) * 0.5);
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(self.triangles.len() * 4);
        for &[a, b, c] in &self.triangles {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        }
        Self { vertices, triangles }
    }

    pub fn from_obj<R: Read>(input: R) -> Result<Self, GeometryError> {
        let reader = BufReader::new(input);
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (ln, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let coords: Vec<f64> = parts
                        .take(3)
                        .map(|s| s.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| GeometryError::Topology(format!("obj line {}: {e}", ln + 1)))?;
                    if coords.len() != 3 {
                        return Err(GeometryError::Topology(format!(
                            "obj line {}: vertex needs 3 coordinates",
                            ln + 1
                        )));
                    }
                    vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = parts
                        .map(|s| {
                            s.split('/')
                                .next()
                                .unwrap_or("")
                                .parse::<usize>()
                                .map(|i| i - 1)
                        })
                        .collect::<Result<_, _>>()
                        .map_err(|e| GeometryError::Topology(format!("obj line {}: {e}", ln + 1)))?;
                    if idx.len() < 3 {
                        return Err(GeometryError::Topology(format!(
                            "obj line {}: face needs >= 3 indices",
                            ln + 1
                        )));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        Self::new(vertices, triangles)
    }

    /// Binary STL. Duplicate vertices are merged by exact coordinate value so
    /// that watertightness can be validated.
    pub fn from_stl<R: Read>(mut input: R) -> Result<Self, GeometryError> {
        let mut header = [0u8; 80];
        input.read_exact(&mut header)?;
        let mut count_buf = [0u8; 4];
        input.read_exact(&mut count_buf)?;
        let count = u32::from_le_bytes(count_buf) as usize;
        let mut vertices: Vec<Vector3<f64>> = Vec::new();
        let mut index: HashMap<[u32; 3], usize> = HashMap::new();
        let mut triangles = Vec::with_capacity(count);
        let mut rec = [0u8; 50];
        for _ in 0..count {
            input.read_exact(&mut rec)?;
            let mut tri = [0usize; 3];
            for v in 0..3 {
                let off = 12 + v * 12;
                let bits = [
                    u32::from_le_bytes(rec[off..off + 4].try_into().unwrap()),
                    u32::from_le_bytes(rec[off + 4..off + 8].try_into().unwrap()),
                    u32::from_le_bytes(rec[off + 8..off + 12].try_into().unwrap()),
                ];
                let id = *index.entry(bits).or_insert_with(|| {
                    vertices.push(Vector3::new(
                        f32::from_bits(bits[0]) as f64,
                        f32::from_bits(bits[1]) as f64,
                        f32::from_bits(bits[2]) as f64,
                    ));
                    vertices.len() - 1
                });
                tri[v] = id;
            }
            triangles.push(tri);
        }
        Self::new(vertices, triangles)
    }
}
