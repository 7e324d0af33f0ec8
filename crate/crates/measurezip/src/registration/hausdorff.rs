//! Exact Hausdorff distance between finite point sets.
//!
//! Nearest neighbors are found through a uniform grid over the candidate
//! set, scanning cells ring by ring outward from the query and stopping
//! once no unvisited cell can beat the best squared distance found. The
//! result is the exact distance: the grid only prunes, it never rounds.

use nalgebra::Vector3;

use crate::error::{Error, Result};

#[inline]
fn dist2(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

struct Grid<'a> {
    points: &'a [Vector3<f64>],
    cells: Vec<Vec<u32>>,
    counts: [i64; 3],
    origin: Vector3<f64>,
    cell_size: f64,
}

impl<'a> Grid<'a> {
    fn build(points: &'a [Vector3<f64>]) -> Self {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let target = (points.len() as f64).cbrt().ceil().max(1.0);
        let extent = (hi - lo).max().max(0.0);
        // All points coincident: one cell holds everything.
        let cell_size = if extent > 0.0 { extent / target } else { 1.0 };
        let counts = std::array::from_fn(|axis| {
            let span = hi[axis] - lo[axis];
            ((span / cell_size).ceil() as i64).max(1)
        });

        let grid_index = |p: &Vector3<f64>| -> usize {
            let mut idx = 0usize;
            for axis in 0..3 {
                let c = (((p[axis] - lo[axis]) / cell_size).floor() as i64)
                    .clamp(0, counts[axis] - 1);
                idx = idx * counts[axis] as usize + c as usize;
            }
            idx
        };

        let total = (counts[0] * counts[1] * counts[2]) as usize;
        let mut cells = vec![Vec::new(); total];
        for (i, p) in points.iter().enumerate() {
            cells[grid_index(p)].push(i as u32);
        }
        Self {
            points,
            cells,
            counts,
            origin: lo,
            cell_size,
        }
    }

    /// Squared distance from `query` to its nearest stored point.
    fn nearest2(&self, query: &Vector3<f64>) -> f64 {
        // Unclamped cell coordinates: a query outside the bounding box
        // lives in a virtual cell, which keeps the ring bound valid.
        let home: [i64; 3] =
            std::array::from_fn(|axis| ((query[axis] - self.origin[axis]) / self.cell_size)
                .floor() as i64);
        let max_ring = (0..3)
            .map(|axis| (self.counts[axis] - 1 - home[axis]).max(home[axis]).max(0))
            .max()
            .unwrap();

        let mut best = f64::INFINITY;
        for ring in 0..=max_ring {
            // A cell whose Chebyshev ring index is r keeps all its points
            // at least (r - 1) * cell_size away from the query.
            let bound = (ring - 1).max(0) as f64 * self.cell_size;
            if ring > 0 && best <= bound * bound {
                break;
            }
            self.scan_ring(query, home, ring, &mut best);
        }
        best
    }

    fn scan_ring(&self, query: &Vector3<f64>, home: [i64; 3], ring: i64, best: &mut f64) {
        let lo: [i64; 3] = std::array::from_fn(|a| (home[a] - ring).max(0));
        let hi: [i64; 3] = std::array::from_fn(|a| (home[a] + ring).min(self.counts[a] - 1));
        for cx in lo[0]..=hi[0] {
            for cy in lo[1]..=hi[1] {
                for cz in lo[2]..=hi[2] {
                    let on_shell = (cx - home[0]).abs() == ring
                        || (cy - home[1]).abs() == ring
                        || (cz - home[2]).abs() == ring;
                    if !on_shell {
                        continue;
                    }
                    let idx = ((cx * self.counts[1] + cy) * self.counts[2] + cz) as usize;
                    for &pi in &self.cells[idx] {
                        let d2 = dist2(query, &self.points[pi as usize]);
                        if d2 < *best {
                            *best = d2;
                        }
                    }
                }
            }
        }
    }
}

/// Largest squared distance from a point of `from` to the set `to`.
fn directed2(from: &[Vector3<f64>], to: &Grid) -> f64 {
    let mut worst = 0.0f64;
    for a in from {
        let d2 = to.nearest2(a);
        if d2 > worst {
            worst = d2;
        }
    }
    worst
}

/// Hausdorff distance between two non-empty point sets:
/// `max(sup_a inf_b |a-b|, sup_b inf_a |a-b|)`, computed exactly.
pub fn hausdorff_distance(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument(
            "Hausdorff distance needs two non-empty point sets".into(),
        ));
    }
    let grid_a = Grid::build(a);
    let grid_b = Grid::build(b);
    let forward = directed2(a, &grid_b);
    let backward = directed2(b, &grid_a);
    Ok(forward.max(backward).sqrt())
}
