//! Minimal static kd-tree for nearest-neighbor lookups in 3D.

use nalgebra::Vector3;

pub struct KdTree {
    points: Vec<Vector3<f64>>,
    // implicit tree: nodes[i] = index into points, laid out by recursive median split
    order: Vec<u32>,
}

impl KdTree {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        build(&points, &mut order, 0);
        Self { points, order }
    }

    pub fn nearest(&self, q: &Vector3<f64>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(&self.order, 0, q, &mut best);
        (best.0, best.1.sqrt())
    }

    pub fn point(&self, i: usize) -> Vector3<f64> {
        self.points[i]
    }

    fn search(&self, slice: &[u32], depth: usize, q: &Vector3<f64>, best: &mut (usize, f64)) {
        if slice.is_empty() {
            return;
        }
        let mid = slice.len() / 2;
        let idx = slice[mid] as usize;
        let d = (self.points[idx] - q).norm_squared();
        if d < best.1 {
            *best = (idx, d);
        }
        let axis = depth % 3;
        let split = self.points[idx][axis];
        let diff = q[axis] - split;
        let (near, far) = if diff <= 0.0 {
            (&slice[..mid], &slice[mid + 1..])
        } else {
            (&slice[mid + 1..], &slice[..mid])
        };
        self.search(near, depth + 1, q, best);
        if diff * diff < best.1 {
            self.search(far, depth + 1, q, best);
        }
    }
}

fn build(points: &[Vector3<f64>], slice: &mut [u32], depth: usize) {
    if slice.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis].total_cmp(&points[b as usize][axis])
    });
    let (l, rest) = slice.split_at_mut(mid);
    build(points, l, depth + 1);
    build(points, &mut rest[1..], depth + 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_linear_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vector3<f64>> = (0..500)
            .map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let tree = KdTree::new(pts.clone());
        for _ in 0..200 {
            let q = Vector3::new(rng.gen(), rng.gen(), rng.gen());
            let (i, d) = tree.nearest(&q);
            let (bi, bd) = pts
                .iter()
                .enumerate()
                .map(|(j, p)| (j, (p - q).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!((d - bd).abs() < 1e-12);
            assert!((pts[i] - pts[bi]).norm() < 1e-12);
        }
    }
}
