//! Oracles and generators shared by unit tests. Compiled only for tests.
//!
//! The eigensolver here is an independent cyclic Jacobi implementation so
//! that spectral quantities computed through nalgebra elsewhere in the
//! crate are checked against a second route.

use nalgebra::DMatrix;
use rand::Rng;

use crate::measures::{BaseSpace, DiracMeasure, RowMatrix};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted in
/// descending order.
pub(crate) fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + m.diagonal().amax()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = m.diagonal().iter().cloned().collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eigs
}

/// Random Euclidean point cloud in `[-1, 1]^3` as a row matrix.
pub(crate) fn random_points(seed: u64, n: usize) -> RowMatrix {
    let mut rng = crate::rng::stream_rng(seed, 91);
    RowMatrix::from_rows(
        (0..n)
            .map(|_| (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect(),
    )
    .unwrap()
}

/// Random vector-weighted Euclidean measure.
pub(crate) fn random_euclidean_measure(seed: u64, n: usize, w: usize) -> DiracMeasure {
    let mut rng = crate::rng::stream_rng(seed, 92);
    let points = RowMatrix::from_rows(
        (0..n)
            .map(|_| (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect(),
    )
    .unwrap();
    let weights = RowMatrix::from_rows(
        (0..n)
            .map(|_| (0..w).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect(),
    )
    .unwrap();
    DiracMeasure::new(BaseSpace::Euclidean { dim: 3 }, points, weights).unwrap()
}
