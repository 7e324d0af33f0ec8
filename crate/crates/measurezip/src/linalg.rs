//! Dense symmetric positive definite solves with diagonal jitter.
//!
//! Kernel Gram matrices are positive definite in exact arithmetic but lose
//! definiteness in floating point when two points nearly coincide. Every
//! factorization in this crate therefore goes through [`factor_spd`], which
//! adds a small relative jitter to the diagonal and escalates it by decades
//! before giving up with a diagnostic that names the offending index pairs.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter ladder: `1e-10 * mean(diag)` on the first attempt,
/// escalating by a factor of ten up to `1e-6 * mean(diag)`.
pub const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky factor of `A + jitter * I` for a symmetric positive definite `A`.
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    /// Absolute jitter that was added to the diagonal.
    pub jitter: f64,
}

impl SpdFactor {
    /// Solves `(A + jitter I) X = B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// Solves `(A + jitter I) x = b` for a single right-hand side.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// Lower-triangular factor `L` with `L L^T = A + jitter I`.
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

/// Factors `A + e * mean(diag(A)) * I`, escalating `e` along
/// [`JITTER_LADDER`] until the factorization succeeds.
pub fn factor_spd(a: &DMatrix<f64>) -> Result<SpdFactor> {
    debug_assert_eq!(a.nrows(), a.ncols());
    let n = a.nrows();
    let mean_diag = {
        let t = a.diagonal().sum() / n as f64;
        if t > 0.0 {
            t
        } else {
            1.0
        }
    };
    for rel in JITTER_LADDER {
        let jitter = rel * mean_diag;
        let mut jittered = a.clone();
        for i in 0..n {
            jittered[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok(SpdFactor { chol, jitter });
        }
    }
    Err(Error::Factorization {
        max_jitter: *JITTER_LADDER.last().unwrap(),
        near_duplicates: near_duplicate_pairs(a),
    })
}

/// Index pairs whose rows of `A` are collinear to within Cauchy-Schwarz
/// slack `1e-10`. For a strictly positive definite kernel this means the
/// underlying points coincide to numerical precision.
pub(crate) fn near_duplicate_pairs(a: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = a.nrows();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let bound = a[(i, i)] * a[(j, j)];
            if a[(i, j)] * a[(i, j)] >= (1.0 - 1e-10) * bound {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// In-place forward substitution `B <- L^{-1} B`, reading only the lower
/// triangle of `l`.
pub fn forward_solve_lower(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    debug_assert_eq!(b.nrows(), n);
    for col in 0..b.ncols() {
        for i in 0..n {
            let mut s = b[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * b[(k, col)];
            }
            b[(i, col)] = s / l[(i, i)];
        }
    }
}

/// Cholesky factor of a principal submatrix that supports O(m^2) insertion
/// and deletion of single indices. Backs the determinant-ratio acceptance
/// step of the subset swap chain: appending an index is one triangular
/// solve, deleting one is a rank-one update of the trailing block.
#[derive(Clone)]
pub(crate) struct SubsetCholesky {
    /// Lower-triangular factor, dimension = current subset size.
    l: DMatrix<f64>,
}

impl SubsetCholesky {
    /// Factors a full subset Gram matrix. Returns `None` when it is
    /// numerically singular.
    pub fn new(k_ss: &DMatrix<f64>) -> Option<Self> {
        Cholesky::new(k_ss.clone()).map(|c| SubsetCholesky { l: c.l() })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// log det of the factored Gram matrix.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    /// Extends the subset by one index with cross-kernel column `cross` and
    /// self-kernel `diag`. Returns `false` (leaving the factor unchanged)
    /// when the extended matrix is not positive definite, i.e. the extended
    /// determinant is zero or negative in floating point.
    pub fn append(&mut self, cross: &DVector<f64>, diag: f64) -> bool {
        let m = self.dim();
        debug_assert_eq!(cross.len(), m);
        let mut c = cross.clone();
        for i in 0..m {
            let mut s = c[i];
            for k in 0..i {
                s -= self.l[(i, k)] * c[k];
            }
            c[i] = s / self.l[(i, i)];
        }
        let d2 = diag - c.norm_squared();
        if !(d2 > 0.0) || !d2.is_finite() {
            return false;
        }
        let mut grown = DMatrix::zeros(m + 1, m + 1);
        grown.view_mut((0, 0), (m, m)).copy_from(&self.l);
        for i in 0..m {
            grown[(m, i)] = c[i];
        }
        grown[(m, m)] = d2.sqrt();
        self.l = grown;
        true
    }

    /// Removes the subset member at position `pos`. The leading block and
    /// the rows below it keep their factors; the trailing block absorbs the
    /// deleted column through a rank-one update.
    pub fn remove(&mut self, pos: usize) {
        let m = self.dim();
        debug_assert!(pos < m);
        let tail = m - pos - 1;
        let mut update: Vec<f64> = (0..tail).map(|i| self.l[(pos + 1 + i, pos)]).collect();
        let mut shrunk = DMatrix::zeros(m - 1, m - 1);
        for i in 0..m - 1 {
            let src_i = if i < pos { i } else { i + 1 };
            for j in 0..=i {
                let src_j = if j < pos { j } else { j + 1 };
                shrunk[(i, j)] = self.l[(src_i, src_j)];
            }
        }
        // Rank-one update of the trailing block: L33 L33^T += u u^T.
        for k in 0..tail {
            let row = pos + k;
            let lkk = shrunk[(row, row)];
            let r = lkk.hypot(update[k]);
            let c = r / lkk;
            let s = update[k] / lkk;
            shrunk[(row, row)] = r;
            for i in (k + 1)..tail {
                let v = shrunk[(pos + i, row)];
                shrunk[(pos + i, row)] = (v + s * update[i]) / c;
                update[i] = c * update[i] - s * shrunk[(pos + i, row)];
            }
        }
        self.l = shrunk;
    }
}
