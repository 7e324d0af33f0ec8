//! Discrete measure representations of surfaces.
//!
//! A mesh becomes a weighted sum of Dirac atoms, one per triangle. Two
//! representations share the same container:
//!
//! * **Current**: atoms live at triangle centroids in `R^d` and carry the
//!   area-weighted normal as a vector weight. Orientation matters; opposite
//!   orientations cancel.
//! * **Varifold**: atoms live on `R^d x S^{d-1}` as (centroid, unit normal)
//!   pairs and carry the triangle area as a scalar weight. Unoriented up to
//!   the choice of spherical kernel.
//!
//! Atom order always follows triangle order, so an atom can be traced back
//! to the triangle that produced it.

use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

/// Base space the atoms of a measure live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseSpace {
    /// `R^dim`; points are `dim`-vectors.
    Euclidean { dim: usize },
    /// `R^dim x S^{dim-1}`; points are `2 * dim`-vectors storing position
    /// then unit direction.
    Oriented { dim: usize },
}

impl BaseSpace {
    pub fn dim(&self) -> usize {
        match *self {
            BaseSpace::Euclidean { dim } | BaseSpace::Oriented { dim } => dim,
        }
    }

    /// Length of one stored point row.
    pub fn point_len(&self) -> usize {
        match *self {
            BaseSpace::Euclidean { dim } => dim,
            BaseSpace::Oriented { dim } => 2 * dim,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::InvalidArgument("base space dimension is zero".into()));
        }
        Ok(())
    }
}

impl fmt::Display for BaseSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BaseSpace::Euclidean { dim } => write!(f, "euclidean({dim})"),
            BaseSpace::Oriented { dim } => write!(f, "oriented({dim})"),
        }
    }
}

/// Dense row-major matrix. Kernel sums iterate over atoms, so point and
/// weight rows must be contiguous slices; nalgebra stores column-major,
/// hence this minimal container for bulk data (all arithmetic still runs
/// through nalgebra types).
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RowMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("matrix with zero rows".into()));
        }
        let cols = rows[0].len();
        if cols == 0 {
            return Err(Error::InvalidArgument("matrix with zero columns".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(RowMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// New matrix holding the selected rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> RowMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        RowMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Weighted sum of Dirac atoms `sum_i delta(x_i) alpha_i` with `n` points
/// and `n x w` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracMeasure {
    space: BaseSpace,
    points: RowMatrix,
    weights: RowMatrix,
}

impl DiracMeasure {
    /// Validates and assembles a measure. Oriented points must carry a
    /// unit-norm direction component.
    pub fn new(space: BaseSpace, points: RowMatrix, weights: RowMatrix) -> Result<Self> {
        space.validate()?;
        if points.rows() != weights.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} points vs {} weight rows",
                points.rows(),
                weights.rows()
            )));
        }
        if points.cols() != space.point_len() {
            return Err(Error::DimensionMismatch(format!(
                "point rows have {} entries, space {space} expects {}",
                points.cols(),
                space.point_len()
            )));
        }
        for i in 0..points.rows() {
            if !points.row(i).iter().all(|c| c.is_finite())
                || !weights.row(i).iter().all(|c| c.is_finite())
            {
                return Err(Error::InvalidArgument(format!(
                    "atom {i} has non-finite data"
                )));
            }
        }
        if let BaseSpace::Oriented { dim } = space {
            for i in 0..points.rows() {
                let dir = &points.row(i)[dim..];
                let norm: f64 = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-8 {
                    return Err(Error::InvalidArgument(format!(
                        "atom {i} direction has norm {norm}, expected 1"
                    )));
                }
            }
        }
        Ok(DiracMeasure {
            space,
            points,
            weights,
        })
    }

    pub fn space(&self) -> BaseSpace {
        self.space
    }

    pub fn n(&self) -> usize {
        self.points.rows()
    }

    pub fn weight_width(&self) -> usize {
        self.weights.cols()
    }

    pub fn points(&self) -> &RowMatrix {
        &self.points
    }

    pub fn weights(&self) -> &RowMatrix {
        &self.weights
    }

    /// Checks that two measures can enter a joint dual-metric expression.
    pub fn check_compatible(&self, other: &DiracMeasure) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch {
                left: self.space.to_string(),
                right: other.space.to_string(),
            });
        }
        if self.weight_width() != other.weight_width() {
            return Err(Error::DimensionMismatch(format!(
                "weight widths {} vs {}",
                self.weight_width(),
                other.weight_width()
            )));
        }
        Ok(())
    }

    /// Writes one atom per row: point coordinates, then weight entries,
    /// with 17 significant digits.
    pub fn write_csv<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        let d = self.space.dim();
        let mut header: Vec<String> = Vec::new();
        for k in 0..d {
            header.push(format!("p{k}"));
        }
        if matches!(self.space, BaseSpace::Oriented { .. }) {
            for k in 0..d {
                header.push(format!("n{k}"));
            }
        }
        for k in 0..self.weight_width() {
            header.push(format!("w{k}"));
        }
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.n() {
            let fields: Vec<String> = self
                .points
                .row(i)
                .iter()
                .chain(self.weights.row(i))
                .map(|v| format!("{v:.16e}"))
                .collect();
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct MeasureSchema {
    space: BaseSpace,
    points: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
}

impl Serialize for DiracMeasure {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureSchema {
            space: self.space,
            points: self.points.to_nested(),
            weights: self.weights.to_nested(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DiracMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let schema = MeasureSchema::deserialize(deserializer)?;
        let points = RowMatrix::from_rows(schema.points).map_err(serde::de::Error::custom)?;
        let weights = RowMatrix::from_rows(schema.weights).map_err(serde::de::Error::custom)?;
        DiracMeasure::new(schema.space, points, weights).map_err(serde::de::Error::custom)
    }
}

/// Which measure representation to build from a mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Current,
    Varifold,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Representation::Current => write!(f, "current"),
            Representation::Varifold => write!(f, "varifold"),
        }
    }
}

/// Current representation: atom `i` sits at the centroid of triangle `i`
/// and carries its area-weighted normal. Zero-area triangles are kept; a
/// zero weight contributes nothing to any dual-metric expression.
pub fn current_of_mesh(mesh: &TriangleMesh) -> Result<DiracMeasure> {
    if mesh.n_triangles() == 0 {
        return Err(Error::EmptyMeasure { dropped: 0 });
    }
    let geometry = mesh.triangle_geometry();
    let n = geometry.len();
    let mut points = RowMatrix::zeros(n, 3);
    let mut weights = RowMatrix::zeros(n, 3);
    for (i, (centroid, nu)) in geometry.iter().enumerate() {
        points.row_mut(i).copy_from_slice(centroid.as_slice());
        weights.row_mut(i).copy_from_slice(nu.as_slice());
    }
    DiracMeasure::new(BaseSpace::Euclidean { dim: 3 }, points, weights)
}

/// Varifold representation: atom `i` is the (centroid, unit normal) pair of
/// triangle `i` weighted by its area. Zero-area triangles have no normal
/// direction and are skipped; the second return value counts them.
pub fn varifold_of_mesh(mesh: &TriangleMesh) -> Result<(DiracMeasure, usize)> {
    let geometry = mesh.triangle_geometry();
    let mut rows_p: Vec<Vec<f64>> = Vec::with_capacity(geometry.len());
    let mut rows_w: Vec<Vec<f64>> = Vec::with_capacity(geometry.len());
    let mut dropped = 0usize;
    for (centroid, nu) in &geometry {
        let area = nu.norm();
        if area == 0.0 {
            dropped += 1;
            continue;
        }
        let dir = nu / area;
        rows_p.push(vec![
            centroid[0],
            centroid[1],
            centroid[2],
            dir[0],
            dir[1],
            dir[2],
        ]);
        rows_w.push(vec![area]);
    }
    if rows_p.is_empty() {
        return Err(Error::EmptyMeasure { dropped });
    }
    let measure = DiracMeasure::new(
        BaseSpace::Oriented { dim: 3 },
        RowMatrix::from_rows(rows_p)?,
        RowMatrix::from_rows(rows_w)?,
    )?;
    Ok((measure, dropped))
}

/// Uniform entry point over both representations. The count of dropped
/// zero-area triangles is always zero for currents.
pub fn measure_of_mesh(mesh: &TriangleMesh, rep: Representation) -> Result<(DiracMeasure, usize)> {
    match rep {
        Representation::Current => Ok((current_of_mesh(mesh)?, 0)),
        Representation::Varifold => varifold_of_mesh(mesh),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn single_right_triangle() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn test_current_single_triangle() {
        let mu = current_of_mesh(&single_right_triangle()).unwrap();
        assert_eq!(mu.n(), 1);
        assert_eq!(mu.space(), BaseSpace::Euclidean { dim: 3 });
        assert_relative_eq!(mu.points().row(0)[0], 1.0 / 3.0);
        assert_relative_eq!(mu.points().row(0)[1], 1.0 / 3.0);
        assert_eq!(mu.points().row(0)[2], 0.0);
        assert_eq!(mu.weights().row(0), &[0.0, 0.0, -0.5]);
    }

    #[test]
    fn test_varifold_single_triangle() {
        let (mu, dropped) = varifold_of_mesh(&single_right_triangle()).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(mu.space(), BaseSpace::Oriented { dim: 3 });
        assert_eq!(&mu.points().row(0)[3..], &[0.0, 0.0, -1.0]);
        assert_relative_eq!(mu.weights().row(0)[0], 0.5);
    }

    #[test]
    fn test_closed_mesh_current_weights_cancel() {
        let mesh = crate::mesh::tests::tetrahedron();
        let mu = current_of_mesh(&mesh).unwrap();
        let mut total = [0.0; 3];
        for i in 0..mu.n() {
            for k in 0..3 {
                total[k] += mu.weights().row(i)[k];
            }
        }
        let norm = total.iter().map(|c| c * c).sum::<f64>().sqrt();
        assert!(norm < 1e-12 * mesh.total_area());
    }

    #[test]
    fn test_varifold_mass_is_total_area() {
        let mesh = crate::mesh::tests::tetrahedron();
        let (mu, _) = varifold_of_mesh(&mesh).unwrap();
        let mass: f64 = (0..mu.n()).map(|i| mu.weights().row(i)[0]).sum();
        assert_relative_eq!(mass, mesh.total_area(), max_relative = 1e-12);
        // The varifold mass also equals the sum of current weight norms.
        let cur = current_of_mesh(&mesh).unwrap();
        let cur_mass: f64 = (0..cur.n())
            .map(|i| {
                cur.weights().row(i).iter().map(|c| c * c).sum::<f64>().sqrt()
            })
            .sum();
        assert_relative_eq!(mass, cur_mass, max_relative = 1e-12);
    }

    #[test]
    fn test_degenerate_triangles_dropped_from_varifold() {
        let mesh = TriangleMesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
                Vector3::new(2.0, 0.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 1, 3], [1, 1, 2]],
        )
        .unwrap();
        let (mu, dropped) = varifold_of_mesh(&mesh).unwrap();
        assert_eq!(dropped, 2);
        assert_eq!(mu.n(), 1);
        // Currents keep degenerate triangles as zero-weight atoms.
        let cur = current_of_mesh(&mesh).unwrap();
        assert_eq!(cur.n(), 3);
        assert_eq!(cur.weights().row(1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn test_all_degenerate_mesh_is_empty_varifold() {
        let mesh = TriangleMesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(2.0, 0.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        match varifold_of_mesh(&mesh) {
            Err(Error::EmptyMeasure { dropped }) => assert_eq!(dropped, 1),
            other => panic!("expected empty-measure error, got {other:?}"),
        }
    }

    #[test]
    fn test_atom_order_follows_triangle_order() {
        let mesh = crate::mesh::tests::tetrahedron();
        let mu = current_of_mesh(&mesh).unwrap();
        let geometry = mesh.triangle_geometry();
        for (i, (centroid, nu)) in geometry.iter().enumerate() {
            assert_eq!(mu.points().row(i), centroid.as_slice());
            assert_eq!(mu.weights().row(i), nu.as_slice());
        }
    }

    #[test]
    fn test_json_roundtrip() {
        let (mu, _) = varifold_of_mesh(&crate::mesh::tests::tetrahedron()).unwrap();
        let text = serde_json::to_string(&mu).unwrap();
        let back: DiracMeasure = serde_json::from_str(&text).unwrap();
        assert_eq!(mu, back);
    }

    #[test]
    fn test_json_rejects_non_unit_direction() {
        let text = r#"{
            "space": {"kind": "oriented", "dim": 3},
            "points": [[0, 0, 0, 0.5, 0.5, 0.5]],
            "weights": [[1.0]]
        }"#;
        assert!(serde_json::from_str::<DiracMeasure>(text).is_err());
    }

    #[test]
    fn test_csv_layout() {
        let mu = current_of_mesh(&single_right_triangle()).unwrap();
        let mut buf = Vec::new();
        mu.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "p0,p1,p2,w0,w1,w2");
        assert_eq!(lines.next().unwrap().split(',').count(), 6);
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn test_mismatched_rows_rejected() {
        let points = RowMatrix::from_rows(vec![vec![0.0, 0.0, 0.0]]).unwrap();
        let weights = RowMatrix::from_rows(vec![vec![1.0], vec![2.0]]).unwrap();
        assert!(DiracMeasure::new(BaseSpace::Euclidean { dim: 3 }, points, weights).is_err());
    }
}
