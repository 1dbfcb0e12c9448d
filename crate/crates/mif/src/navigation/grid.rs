//! Occupancy-grid path planning: obstacle inflation, 8-connected A*, and
//! greedy line-of-sight shortcutting.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector2;

use super::NavError;

#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub origin: Vector2<f64>,
    pub width: usize,
    pub height: usize,
    cells: Vec<bool>,
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

impl OccupancyGrid {
    pub fn new(resolution: f64, origin: Vector2<f64>, width: usize, height: usize) -> Self {
        assert!(resolution > 0.0);
        Self {
            resolution,
            origin,
            width,
            height,
            cells: vec![false; width * height],
        }
    }

    pub fn in_bounds(&self, ix: i64, iy: i64) -> bool {
        ix >= 0 && iy >= 0 && (ix as usize) < self.width && (iy as usize) < self.height
    }

    pub fn occupied(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.width + ix]
    }

    pub fn set(&mut self, ix: usize, iy: usize, value: bool) {
        self.cells[iy * self.width + ix] = value;
    }

    pub fn to_cell(&self, p: &Vector2<f64>) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.resolution).floor() as i64,
            ((p.y - self.origin.y) / self.resolution).floor() as i64,
        )
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Vector2<f64> {
        Vector2::new(
            self.origin.x + (ix as f64 + 0.5) * self.resolution,
            self.origin.y + (iy as f64 + 0.5) * self.resolution,
        )
    }

    /// Marks every cell whose center lies within `radius` of an occupied cell.
    pub fn inflated(&self, radius: f64) -> Self {
        let r_cells = (radius / self.resolution).ceil() as i64;
        let mut out = self.clone();
        if r_cells == 0 {
            return out;
        }
        let r2 = (radius / self.resolution) * (radius / self.resolution);
        for iy in 0..self.height {
            for ix in 0..self.width {
                if !self.occupied(ix, iy) {
                    continue;
                }
                for dy in -r_cells..=r_cells {
                    for dx in -r_cells..=r_cells {
                        if (dx * dx + dy * dy) as f64 <= r2 {
                            let (nx, ny) = (ix as i64 + dx, iy as i64 + dy);
                            if self.in_bounds(nx, ny) {
                                out.set(nx as usize, ny as usize, true);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// True if the straight segment between two world points stays on free
    /// cells (sampled at quarter-resolution).
    pub fn line_of_sight(&self, a: &Vector2<f64>, b: &Vector2<f64>) -> bool {
        let dist = (b - a).norm();
        let steps = (dist / (self.resolution / 4.0)).ceil() as usize;
        for k in 0..=steps {
            let t = k as f64 / steps.max(1) as f64;
            let p = a + t * (b - a);
            let (ix, iy) = self.to_cell(&p);
            if !self.in_bounds(ix, iy) || self.occupied(ix as usize, iy as usize) {
                return false;
            }
        }
        true
    }
}

#[derive(PartialEq)]
struct QueueItem {
    f: f64,
    cell: (usize, usize),
}

impl Eq for QueueItem {}

impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f) // min-heap
    }
}

impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn octile(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dx = (a.0 as f64 - b.0 as f64).abs();
    let dy = (a.1 as f64 - b.1 as f64).abs();
    (dx + dy) + (SQRT2 - 2.0) * dx.min(dy)
}

const NEIGHBORS: [(i64, i64, f64); 8] = [
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, SQRT2),
    (1, -1, SQRT2),
    (-1, 1, SQRT2),
    (-1, -1, SQRT2),
];

/// 8-connected shortest path between cells; cost in cell units.
pub fn grid_path(
    grid: &OccupancyGrid,
    start: (usize, usize),
    goal: (usize, usize),
) -> Option<(Vec<(usize, usize)>, f64)> {
    if grid.occupied(start.0, start.1) || grid.occupied(goal.0, goal.1) {
        return None;
    }
    let idx = |c: (usize, usize)| c.1 * grid.width + c.0;
    let mut dist = vec![f64::INFINITY; grid.width * grid.height];
    let mut prev = vec![usize::MAX; grid.width * grid.height];
    let mut heap = BinaryHeap::new();
    dist[idx(start)] = 0.0;
    heap.push(QueueItem { f: octile(start, goal), cell: start });
    while let Some(QueueItem { cell, .. }) = heap.pop() {
        if cell == goal {
            let mut path = vec![goal];
            let mut cur = idx(goal);
            while prev[cur] != usize::MAX {
                cur = prev[cur];
                path.push((cur % grid.width, cur / grid.width));
            }
            path.reverse();
            return Some((path, dist[idx(goal)]));
        }
        let g = dist[idx(cell)];
        for (dx, dy, step) in NEIGHBORS {
            let (nx, ny) = (cell.0 as i64 + dx, cell.1 as i64 + dy);
            if !grid.in_bounds(nx, ny) {
                continue;
            }
            let ncell = (nx as usize, ny as usize);
            if grid.occupied(ncell.0, ncell.1) {
                continue;
            }
            // no corner cutting on diagonal moves
            if dx != 0 && dy != 0 {
                if grid.occupied(ncell.0, cell.1) || grid.occupied(cell.0, ncell.1) {
                    continue;
                }
            }
            let ng = g + step;
            if ng < dist[idx(ncell)] - 1e-12 {
                dist[idx(ncell)] = ng;
                prev[idx(ncell)] = idx(cell);
                heap.push(QueueItem { f: ng + octile(ncell, goal), cell: ncell });
            }
        }
    }
    None
}

/// Plans a smoothed world-coordinate path on the inflated grid.
pub fn plan_path(
    grid: &OccupancyGrid,
    start: &Vector2<f64>,
    goal: &Vector2<f64>,
    inflation: f64,
) -> Result<Vec<Vector2<f64>>, NavError> {
    let inflated = grid.inflated(inflation);
    let (sx, sy) = inflated.to_cell(start);
    let (gx, gy) = inflated.to_cell(goal);
    if !inflated.in_bounds(sx, sy) || !inflated.in_bounds(gx, gy) {
        return Err(NavError::NoPath);
    }
    let (cells, _) = grid_path(
        &inflated,
        (sx as usize, sy as usize),
        (gx as usize, gy as usize),
    )
    .ok_or(NavError::NoPath)?;

    let mut pts: Vec<Vector2<f64>> = Vec::with_capacity(cells.len() + 2);
    pts.push(*start);
    pts.extend(cells.iter().map(|&(x, y)| inflated.cell_center(x, y)));
    pts.push(*goal);

    // greedy shortcutting: from each kept point jump to the farthest visible one
    let mut out = vec![pts[0]];
    let mut i = 0;
    while i < pts.len() - 1 {
        let mut j = pts.len() - 1;
        while j > i + 1 && !inflated.line_of_sight(&pts[i], &pts[j]) {
            j -= 1;
        }
        out.push(pts[j]);
        i = j;
    }
    Ok(out)
}
