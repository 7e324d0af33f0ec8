//! Triangle meshes and the per-triangle geometry the measure constructions
//! consume.
//!
//! A triangle with vertices `v1, v2, v3` contributes its centroid
//! `(v1 + v2 + v3) / 3` and its area-weighted normal
//! `nu = 0.5 * (v3 - v2) x (v2 - v1)`. The length of `nu` is the triangle
//! area, so summing `|nu|` over a mesh gives total surface area, and the
//! vector sum of `nu` over any closed mesh cancels to zero.

mod io;

pub use io::{load_mesh, save_obj, MeshFormat};

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Indexed triangle mesh with `f64` vertex coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh, validating that every triangle references existing
    /// vertices and that all coordinates are finite.
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidArgument("mesh has no vertices".into()));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "vertex {i} has non-finite coordinates"
                )));
            }
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &idx in tri {
                if idx >= vertices.len() {
                    return Err(Error::InvalidArgument(format!(
                        "triangle {t} references vertex {idx}, mesh has {}",
                        vertices.len()
                    )));
                }
            }
        }
        Ok(TriangleMesh {
            vertices,
            triangles,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Centroid and area-weighted normal of every triangle, in triangle
    /// order. Degenerate triangles yield a zero normal.
    pub fn triangle_geometry(&self) -> Vec<(Vector3<f64>, Vector3<f64>)> {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                let (v1, v2, v3) = (self.vertices[a], self.vertices[b], self.vertices[c]);
                triangle_centroid_normal(&v1, &v2, &v3)
            })
            .collect()
    }

    /// Sum of triangle areas.
    pub fn total_area(&self) -> f64 {
        self.triangle_geometry()
            .iter()
            .map(|(_, nu)| nu.norm())
            .sum()
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Rigidly translates the vertex centroid to the origin and scales the
    /// mesh uniformly so the longest bounding-box edge equals
    /// `target_extent`. Fails when all vertices coincide.
    pub fn center_and_scale(&self, target_extent: f64) -> Result<TriangleMesh> {
        if !(target_extent > 0.0) || !target_extent.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "target extent must be positive and finite, got {target_extent}"
            )));
        }
        let n = self.vertices.len() as f64;
        let center = self.vertices.iter().sum::<Vector3<f64>>() / n;
        let (lo, hi) = self.bounding_box();
        let extent = (hi - lo).max();
        if extent <= 0.0 {
            return Err(Error::DegenerateExtent);
        }
        let scale = target_extent / extent;
        let vertices = self
            .vertices
            .iter()
            .map(|v| (v - center) * scale)
            .collect();
        Ok(TriangleMesh {
            vertices,
            triangles: self.triangles.clone(),
        })
    }
}

/// Centroid and area-weighted normal of a single triangle.
pub fn triangle_centroid_normal(
    v1: &Vector3<f64>,
    v2: &Vector3<f64>,
    v3: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    let centroid = (v1 + v2 + v3) / 3.0;
    let nu = 0.5 * (v3 - v2).cross(&(v2 - v1));
    (centroid, nu)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn heron_area(v1: &Vector3<f64>, v2: &Vector3<f64>, v3: &Vector3<f64>) -> f64 {
        let a = (v2 - v1).norm();
        let b = (v3 - v2).norm();
        let c = (v1 - v3).norm();
        let s = 0.5 * (a + b + c);
        (s * (s - a) * (s - b) * (s - c)).max(0.0).sqrt()
    }

    pub(crate) fn tetrahedron() -> TriangleMesh {
        // Regular tetrahedron on alternating cube corners; outward winding.
        let v = vec![
            Vector3::new(1.0, 1.0, 1.0),
            Vector3::new(1.0, -1.0, -1.0),
            Vector3::new(-1.0, 1.0, -1.0),
            Vector3::new(-1.0, -1.0, 1.0),
        ];
        let t = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
        TriangleMesh::new(v, t).unwrap()
    }

    #[test]
    fn test_right_triangle_geometry() {
        let (c, nu) = triangle_centroid_normal(
            &Vector3::new(0.0, 0.0, 0.0),
            &Vector3::new(1.0, 0.0, 0.0),
            &Vector3::new(0.0, 1.0, 0.0),
        );
        assert_relative_eq!(c, Vector3::new(1.0 / 3.0, 1.0 / 3.0, 0.0));
        assert_relative_eq!(nu, Vector3::new(0.0, 0.0, -0.5));
    }

    #[test]
    fn test_collinear_triangle_zero_normal() {
        let (_, nu) = triangle_centroid_normal(
            &Vector3::new(0.0, 0.0, 0.0),
            &Vector3::new(1.0, 2.0, 3.0),
            &Vector3::new(2.0, 4.0, 6.0),
        );
        assert_eq!(nu.norm(), 0.0);
    }

    #[test]
    fn test_closed_mesh_normals_cancel() {
        let mesh = tetrahedron();
        let total: Vector3<f64> = mesh.triangle_geometry().iter().map(|(_, nu)| nu).sum();
        let area = mesh.total_area();
        assert!(total.norm() <= 1e-10 * area, "residual {}", total.norm());
    }

    #[test]
    fn test_normal_length_matches_heron_area() {
        let mut rng = crate::rng::stream_rng(11, 0);
        for _ in 0..50 {
            let v: Vec<Vector3<f64>> = (0..3)
                .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
                .collect();
            let (_, nu) = triangle_centroid_normal(&v[0], &v[1], &v[2]);
            let heron = heron_area(&v[0], &v[1], &v[2]);
            assert_relative_eq!(nu.norm(), heron, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn test_center_and_scale_unit_box() {
        let mesh = tetrahedron();
        let scaled = mesh.center_and_scale(2.0).unwrap();
        let n = scaled.n_vertices() as f64;
        let c: Vector3<f64> = scaled.vertices().iter().sum::<Vector3<f64>>() / n;
        assert!(c.norm() < 1e-14);
        let (lo, hi) = scaled.bounding_box();
        assert_relative_eq!((hi - lo).max(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn test_center_and_scale_idempotent() {
        let once = tetrahedron().center_and_scale(1.5).unwrap();
        let twice = once.center_and_scale(1.5).unwrap();
        for (a, b) in once.vertices().iter().zip(twice.vertices()) {
            assert!((a - b).norm() <= 1e-14 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn test_center_and_scale_point_mesh_fails() {
        let v = vec![Vector3::new(1.0, 1.0, 1.0); 3];
        let mesh = TriangleMesh::new(v, vec![[0, 1, 2]]).unwrap();
        assert!(matches!(
            mesh.center_and_scale(1.0),
            Err(Error::DegenerateExtent)
        ));
    }

    #[test]
    fn test_out_of_range_triangle_rejected() {
        let v = vec![Vector3::zeros(), Vector3::x(), Vector3::y()];
        assert!(TriangleMesh::new(v, vec![[0, 1, 3]]).is_err());
    }
}
