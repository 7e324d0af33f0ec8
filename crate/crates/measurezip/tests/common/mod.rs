//! Shared generators and brute-force oracles for the integration suites.
//!
//! Everything here recomputes values through the most direct formula
//! available (dense double loops, explicit inverses, exhaustive
//! enumeration), so the library's streamed and factored paths are checked
//! against arithmetic that shares none of their code.

#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use measurezip::kernels::KernelSpec;
use measurezip::measures::{BaseSpace, DiracMeasure, RowMatrix};
use measurezip::mesh::TriangleMesh;
use measurezip::rng::stream_rng;
use nalgebra::{DMatrix, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Kernels, written out longhand.

/// Direct kernel evaluation from the formulas, one match arm per case.
pub fn kernel_value(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    match spec {
        KernelSpec::Gaussian(sigma) => {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            (-d2 / (2.0 * sigma * sigma)).exp()
        }
        KernelSpec::SumOfGaussians(sigmas) => {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            sigmas.iter().map(|s| (-d2 / (2.0 * s * s)).exp()).sum()
        }
        KernelSpec::SphericalGaussian(sigma) => {
            let t: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
            (-(2.0 - 2.0 * t) / (2.0 * sigma * sigma)).exp()
        }
        KernelSpec::LinearSpherical => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        KernelSpec::Product { spatial, spherical } => {
            kernel_value(spatial, &x[..3], &y[..3]) * kernel_value(spherical, &x[3..], &y[3..])
        }
    }
}

/// `sum_ij k(x_i, y_j) <alpha_i, beta_j>` by double loop.
pub fn dual_inner_oracle(a: &DiracMeasure, b: &DiracMeasure, spec: &KernelSpec) -> f64 {
    let mut total = 0.0;
    for i in 0..a.n() {
        for j in 0..b.n() {
            let k = kernel_value(spec, a.points().row(i), b.points().row(j));
            let dot: f64 = a
                .weights()
                .row(i)
                .iter()
                .zip(b.weights().row(j))
                .map(|(u, v)| u * v)
                .sum();
            total += k * dot;
        }
    }
    total
}

pub fn dual_distance2_oracle(a: &DiracMeasure, b: &DiracMeasure, spec: &KernelSpec) -> f64 {
    dual_inner_oracle(a, a, spec) - 2.0 * dual_inner_oracle(a, b, spec)
        + dual_inner_oracle(b, b, spec)
}

// ---------------------------------------------------------------------------
// Dense linear-algebra oracles.

/// Dense kernel matrix between two index lists of one point set.
pub fn kernel_matrix_oracle(
    spec: &KernelSpec,
    points: &RowMatrix,
    rows: &[usize],
    cols: &[usize],
) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
        kernel_value(spec, points.row(rows[r]), points.row(cols[c]))
    })
}

/// Explicit inverse of an SPD matrix after the same escalating diagonal
/// shift the library applies, but inverted by dense LU instead of a
/// Cholesky solve.
pub fn spd_inverse_oracle(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mean_diag = {
        let t = a.diagonal().sum() / n as f64;
        if t > 0.0 {
            t
        } else {
            1.0
        }
    };
    for rel in [1e-10, 1e-9, 1e-8, 1e-7, 1e-6] {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] += rel * mean_diag;
        }
        if nalgebra::Cholesky::new(shifted.clone()).is_some() {
            return shifted.try_inverse().expect("factorable matrix must invert");
        }
    }
    panic!("matrix failed to factor at every shift level");
}

/// `tr(K) - tr(K_XC K_CC^{-1} K_CX)` with every block dense.
pub fn trace_error_oracle(spec: &KernelSpec, points: &RowMatrix, controls: &[usize]) -> f64 {
    let n = points.rows();
    let all: Vec<usize> = (0..n).collect();
    let k_xc = kernel_matrix_oracle(spec, points, &all, controls);
    let k_cc = kernel_matrix_oracle(spec, points, controls, controls);
    let inv = spd_inverse_oracle(&k_cc);
    let q = &k_xc * inv * k_xc.transpose();
    let mut trace = 0.0;
    for i in 0..n {
        trace += kernel_value(spec, points.row(i), points.row(i)) - q[(i, i)];
    }
    trace
}

/// Projection weights `K_CC^{-1} K_CX alpha` by explicit inverse.
pub fn projection_oracle(
    mu: &DiracMeasure,
    controls: &[usize],
    spec: &KernelSpec,
) -> DiracMeasure {
    let all: Vec<usize> = (0..mu.n()).collect();
    let k_cx = kernel_matrix_oracle(spec, mu.points(), controls, &all);
    let k_cc = kernel_matrix_oracle(spec, mu.points(), controls, controls);
    let w = mu.weight_width();
    let mut y = DMatrix::<f64>::zeros(controls.len(), w);
    for j in 0..controls.len() {
        for i in 0..mu.n() {
            for c in 0..w {
                y[(j, c)] += k_cx[(j, i)] * mu.weights().row(i)[c];
            }
        }
    }
    let beta = spd_inverse_oracle(&k_cc) * y;
    let weights = RowMatrix::from_rows(
        (0..controls.len())
            .map(|j| (0..w).map(|c| beta[(j, c)]).collect())
            .collect(),
    )
    .unwrap();
    DiracMeasure::new(mu.space(), mu.points().select(controls), weights).unwrap()
}

// ---------------------------------------------------------------------------
// Hausdorff by exhaustive scan.

fn nearest2(p: &Vector3<f64>, cloud: &[Vector3<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for q in cloud {
        let dx = p.x - q.x;
        let dy = p.y - q.y;
        let dz = p.z - q.z;
        let d2 = dx * dx + dy * dy + dz * dz;
        if d2 < best {
            best = d2;
        }
    }
    best
}

pub fn hausdorff_oracle(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    let fwd = a.iter().map(|p| nearest2(p, b)).fold(0.0f64, f64::max);
    let bwd = b.iter().map(|p| nearest2(p, a)).fold(0.0f64, f64::max);
    fwd.max(bwd).sqrt()
}

// ---------------------------------------------------------------------------
// Exhaustive fixed-size determinantal distributions.

/// All size-`m` subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..m).collect();
    loop {
        out.push(current.clone());
        // Advance the rightmost index that still has room.
        let mut i = m;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if current[i] < n - (m - i) {
                current[i] += 1;
                for j in i + 1..m {
                    current[j] = current[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Exact subset probabilities `P(S) = det K_S / sum_T det K_T`.
pub fn mdpp_enumeration(
    spec: &KernelSpec,
    points: &RowMatrix,
    m: usize,
) -> Vec<(Vec<usize>, f64)> {
    let all = subsets(points.rows(), m);
    let dets: Vec<f64> = all
        .iter()
        .map(|s| kernel_matrix_oracle(spec, points, s, s).determinant().max(0.0))
        .collect();
    let z: f64 = dets.iter().sum();
    assert!(z > 0.0, "degenerate kernel: all subset determinants vanish");
    all.into_iter()
        .zip(dets)
        .map(|(s, d)| (s, d / z))
        .collect()
}

// ---------------------------------------------------------------------------
// Random instances.

/// Box-Muller standard normal; test-grade precision only.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Gaussian cloud with 3-vector weights on `Euclidean(3)`.
pub fn random_euclidean_measure(n: usize, seed: u64) -> DiracMeasure {
    let mut rng = stream_rng(seed, 101);
    let points =
        RowMatrix::from_rows((0..n).map(|_| (0..3).map(|_| normal(&mut rng)).collect()).collect())
            .unwrap();
    let weights = RowMatrix::from_rows(
        (0..n)
            .map(|_| (0..3).map(|_| 0.5 * normal(&mut rng)).collect())
            .collect(),
    )
    .unwrap();
    DiracMeasure::new(BaseSpace::Euclidean { dim: 3 }, points, weights).unwrap()
}

/// Gaussian positions with unit directions and scalar weights on
/// `Oriented(3)`.
pub fn random_oriented_measure(n: usize, seed: u64) -> DiracMeasure {
    let mut rng = stream_rng(seed, 103);
    let points = RowMatrix::from_rows(
        (0..n)
            .map(|_| {
                let pos: Vec<f64> = (0..3).map(|_| normal(&mut rng)).collect();
                let mut dir = [normal(&mut rng), normal(&mut rng), normal(&mut rng)];
                let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2])
                    .sqrt()
                    .max(1e-12);
                dir.iter_mut().for_each(|d| *d /= norm);
                pos.into_iter().chain(dir).collect()
            })
            .collect(),
    )
    .unwrap();
    let weights =
        RowMatrix::from_rows((0..n).map(|_| vec![0.5 * normal(&mut rng)]).collect()).unwrap();
    DiracMeasure::new(BaseSpace::Oriented { dim: 3 }, points, weights).unwrap()
}

/// Scalar-weight atoms drawn from a three-component Gaussian mixture.
pub fn gaussian_mixture_measure(n: usize, seed: u64) -> DiracMeasure {
    let mut rng = stream_rng(seed, 107);
    let centers = [
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(2.5, 0.5, -0.5),
        Vector3::new(-1.0, 2.0, 1.5),
    ];
    let spreads = [0.6, 0.4, 0.8];
    let points = RowMatrix::from_rows(
        (0..n)
            .map(|_| {
                let c = (rng.random::<f64>() * 3.0) as usize % 3;
                (0..3)
                    .map(|k| centers[c][k] + spreads[c] * normal(&mut rng))
                    .collect()
            })
            .collect(),
    )
    .unwrap();
    let weights = RowMatrix::from_rows(
        (0..n)
            .map(|_| vec![(1.0 + 0.2 * normal(&mut rng)) / n as f64])
            .collect(),
    )
    .unwrap();
    DiracMeasure::new(BaseSpace::Euclidean { dim: 3 }, points, weights).unwrap()
}

/// `m` distinct indices below `n`, in draw order.
pub fn random_subset(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    assert!(m <= n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = i + (rng.random::<f64>() * (n - i) as f64) as usize % (n - i);
        pool.swap(i, j);
    }
    pool.truncate(m);
    pool
}

// ---------------------------------------------------------------------------
// Meshes.

fn spherical_point(theta: f64, phi: f64, r: f64) -> Vector3<f64> {
    Vector3::new(
        r * theta.sin() * phi.cos(),
        r * theta.sin() * phi.sin(),
        r * theta.cos(),
    )
}

/// Latitude-longitude sphere with `2 * lon * (lat - 1)` triangles. The
/// polar angle of ring `i` is `pi * (i / lat)^power`, so `power > 1`
/// crowds the rings toward the north pole and makes the triangulation
/// non-uniform.
pub fn sphere_mesh(
    lat: usize,
    lon: usize,
    power: f64,
    radius: impl Fn(f64, f64) -> f64,
) -> TriangleMesh {
    assert!(lat >= 2 && lon >= 3);
    let mut vertices = vec![spherical_point(0.0, 0.0, radius(0.0, 0.0))];
    for i in 1..lat {
        let theta = PI * (i as f64 / lat as f64).powf(power);
        for j in 0..lon {
            let phi = 2.0 * PI * j as f64 / lon as f64;
            vertices.push(spherical_point(theta, phi, radius(theta, phi)));
        }
    }
    vertices.push(spherical_point(PI, 0.0, radius(PI, 0.0)));
    let bottom = vertices.len() - 1;
    let ring = |i: usize, j: usize| 1 + (i - 1) * lon + (j % lon);

    let mut triangles = Vec::with_capacity(2 * lon * (lat - 1));
    for j in 0..lon {
        triangles.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..lat - 1 {
        for j in 0..lon {
            let a = ring(i, j);
            let b = ring(i, j + 1);
            let c = ring(i + 1, j);
            let d = ring(i + 1, j + 1);
            triangles.push([a, b, c]);
            triangles.push([b, d, c]);
        }
    }
    for j in 0..lon {
        triangles.push([bottom, ring(lat - 1, j + 1), ring(lat - 1, j)]);
    }
    TriangleMesh::new(vertices, triangles).unwrap()
}

/// Unit sphere with polar crowding; the workhorse non-uniform test mesh.
pub fn power_sphere(lat: usize, lon: usize, power: f64) -> TriangleMesh {
    sphere_mesh(lat, lon, power, |_, _| 1.0)
}

/// Smoothly bumped sphere with seeded low-frequency radius modulation.
pub fn bumpy_sphere(lat: usize, lon: usize, seed: u64) -> TriangleMesh {
    let mut rng = stream_rng(seed, 109);
    let amp: Vec<f64> = (0..3).map(|_| 0.05 + 0.15 * rng.random::<f64>()).collect();
    let phase: Vec<f64> = (0..3).map(|_| 2.0 * PI * rng.random::<f64>()).collect();
    sphere_mesh(lat, lon, 1.0, move |theta, phi| {
        1.0 + amp[0] * (2.0 * theta).sin() * (3.0 * phi + phase[0]).cos()
            + amp[1] * (3.0 * theta).cos() * (2.0 * phi + phase[1]).sin()
            + amp[2] * theta.sin() * (5.0 * phi + phase[2]).sin()
    })
}

/// Icosahedron refined `subdivisions` times and projected to the unit
/// sphere: `20 * 4^s` triangles.
pub fn icosphere(subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let v = ((vertices[a] + vertices[b]) / 2.0).normalize();
                vertices.push(v);
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    TriangleMesh::new(vertices, faces).unwrap()
}

/// Axis-aligned anisotropic scaling.
pub fn scaled_mesh(mesh: &TriangleMesh, s: [f64; 3]) -> TriangleMesh {
    TriangleMesh::new(
        mesh.vertices()
            .iter()
            .map(|v| Vector3::new(v.x * s[0], v.y * s[1], v.z * s[2]))
            .collect(),
        mesh.triangles().to_vec(),
    )
    .unwrap()
}
