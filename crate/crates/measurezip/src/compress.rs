//! Measure compression onto control subsets.
//!
//! Given a measure `mu = sum_i delta(x_i) a_i` and controls `C`, the
//! compressed measure keeps only atoms at the control points and chooses
//! their weights `beta = K_CC^{-1} Y_C`, `Y_C[j] = sum_i k(c_j, x_i) a_i`,
//! which is the orthogonal projection of `mu` onto the span of the control
//! atoms in the dual norm. The projection error never exceeds the error of
//! any other weighting of the control atoms, in particular the ridge
//! variant [`nystrom_krr_weights`], whose error is in turn bounded by a
//! constant times the Nystrom trace error of `C`. That chain is what makes
//! the cheap trace a usable stopping rule for [`choose_m_trace`].

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{dual_distance2, kernel_matrix_sym, KernelSpec};
use crate::linalg::factor_spd;
use crate::measures::{BaseSpace, DiracMeasure, RowMatrix};
use crate::nystrom::{
    nystrom_trace_error, sample_controls, validate_indices, ControlSet, SamplerConfig,
    SamplerKind,
};
use crate::rng::{substream, STREAM_CHOOSE_M};

/// First `m` entries of a full priority ordering, as the set the sampler
/// would have returned for size `m` directly.
fn prefix_controls(full: &ControlSet, m: usize) -> ControlSet {
    let mut cs = ControlSet {
        indices: full.indices[..m].to_vec(),
        ..full.clone()
    };
    if cs.params.m_exact.is_some() {
        cs.params.m_exact = Some(m);
    }
    cs
}

/// A compressed measure together with its provenance and quality numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressionResult {
    pub compressed: DiracMeasure,
    pub controls: ControlSet,
    /// Nystrom trace error of the control subset.
    pub trace_error: f64,
    /// Exact squared dual distance to the original, when evaluated.
    pub squared_error: Option<f64>,
    pub wall_time_s: f64,
}

/// Orthogonal projection of `mu` onto the span of its control atoms.
/// Runs in O(n m + m^3) kernel evaluations and never materializes an
/// `n x n` matrix.
pub fn project_measure(
    mu: &DiracMeasure,
    controls: &ControlSet,
    spec: &KernelSpec,
) -> Result<DiracMeasure> {
    project_onto_indices(mu, &controls.indices, spec)
}

/// Intermediate state of a projection solve, kept around when a caller
/// also needs the factorization (gradient code differentiates through
/// the solve and reuses the same factor for the transpose system).
pub(crate) struct ProjectionParts {
    pub control_points: RowMatrix,
    pub factor: crate::linalg::SpdFactor,
    pub beta: DMatrix<f64>,
}

pub(crate) fn projection_parts(
    mu: &DiracMeasure,
    indices: &[usize],
    spec: &KernelSpec,
) -> Result<ProjectionParts> {
    spec.compatible_with(mu.space())?;
    validate_indices(indices, mu.n())?;
    let ctrl_points = mu.points().select(indices);
    let m = indices.len();
    let w = mu.weight_width();

    let k_cc = kernel_matrix_sym(spec, &ctrl_points)?;
    let factor = factor_spd(&k_cc)?;

    // Y[j, :] = sum_i k(c_j, x_i) a_i, parallel over control rows.
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let cj = ctrl_points.row(j);
            let mut acc = vec![0.0; w];
            for i in 0..mu.n() {
                let k = spec.eval_unchecked(cj, mu.points().row(i));
                for (a, &wi) in acc.iter_mut().zip(mu.weights().row(i)) {
                    *a += k * wi;
                }
            }
            acc
        })
        .collect();
    let mut y = DMatrix::<f64>::zeros(m, w);
    for (j, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            y[(j, c)] = v;
        }
    }

    let beta = factor.solve(&y);
    Ok(ProjectionParts {
        control_points: ctrl_points,
        factor,
        beta,
    })
}

pub(crate) fn measure_from_parts(parts: &ProjectionParts, space: BaseSpace) -> Result<DiracMeasure> {
    let (m, w) = (parts.beta.nrows(), parts.beta.ncols());
    let weights = RowMatrix::from_rows(
        (0..m)
            .map(|j| (0..w).map(|c| parts.beta[(j, c)]).collect())
            .collect(),
    )?;
    DiracMeasure::new(space, parts.control_points.clone(), weights)
}

/// Projection onto an explicit index set; the workhorse behind
/// [`project_measure`].
pub fn project_onto_indices(
    mu: &DiracMeasure,
    indices: &[usize],
    spec: &KernelSpec,
) -> Result<DiracMeasure> {
    let parts = projection_parts(mu, indices, spec)?;
    measure_from_parts(&parts, mu.space())
}

/// Ridge-regression weighting of the control atoms: each weight column
/// solves `(K_CX K_XC + mu_reg K_CC) beta = K_CX y~` with the smoothed
/// targets `y~ = (K_XX + mu_reg I) a`. Dense in `n` and guarded by the
/// same cap as the other dense paths; used to verify the projection error
/// chain, not to compress at scale.
pub fn nystrom_krr_weights(
    mu: &DiracMeasure,
    controls: &ControlSet,
    spec: &KernelSpec,
    mu_reg: f64,
) -> Result<DiracMeasure> {
    spec.compatible_with(mu.space())?;
    validate_indices(&controls.indices, mu.n())?;
    if !(mu_reg > 0.0) || !mu_reg.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ridge parameter must be positive, got {mu_reg}"
        )));
    }
    let n = mu.n();
    if n > crate::nystrom::DENSE_CAP {
        return Err(Error::CapExceeded {
            n,
            cap: crate::nystrom::DENSE_CAP,
        });
    }
    let w = mu.weight_width();
    let indices = &controls.indices;
    let m = indices.len();
    let ctrl_points = mu.points().select(indices);

    // Smoothed targets y~ = (K_XX + mu_reg I) a, streamed by rows.
    let ytil_rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = mu.points().row(i);
            let mut acc = vec![0.0; w];
            for t in 0..n {
                let k = spec.eval_unchecked(xi, mu.points().row(t));
                for (a, &wt) in acc.iter_mut().zip(mu.weights().row(t)) {
                    *a += k * wt;
                }
            }
            for (a, &wi) in acc.iter_mut().zip(mu.weights().row(i)) {
                *a += mu_reg * wi;
            }
            acc
        })
        .collect();

    // Normal matrix G = K_CX K_XC and right-hand side K_CX y~, streamed.
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DMatrix::<f64>::zeros(m, w);
    const BLOCK: usize = 1024;
    for start in (0..n).step_by(BLOCK) {
        let stop = (start + BLOCK).min(n);
        let width = stop - start;
        let mut k_cb = DMatrix::<f64>::zeros(m, width);
        for (col, i) in (start..stop).enumerate() {
            let xi = mu.points().row(i);
            for r in 0..m {
                k_cb[(r, col)] = spec.eval_unchecked(ctrl_points.row(r), xi);
            }
        }
        gram += &k_cb * k_cb.transpose();
        for (col, i) in (start..stop).enumerate() {
            for r in 0..m {
                for c in 0..w {
                    rhs[(r, c)] += k_cb[(r, col)] * ytil_rows[i][c];
                }
            }
        }
    }

    let k_cc = kernel_matrix_sym(spec, &ctrl_points)?;
    let system = gram + k_cc * mu_reg;
    let factor = factor_spd(&system)?;
    let beta = factor.solve(&rhs);
    let weights = RowMatrix::from_rows(
        (0..m)
            .map(|j| (0..w).map(|c| beta[(j, c)]).collect())
            .collect(),
    )?;
    DiracMeasure::new(mu.space(), ctrl_points, weights)
}

/// Squared dual distance between a measure and its compressed form.
pub fn compression_error2(
    original: &DiracMeasure,
    compressed: &DiracMeasure,
    spec: &KernelSpec,
) -> Result<f64> {
    dual_distance2(original, compressed, spec)
}

/// Compresses `mu` with `m` controls from the given sampler, reporting the
/// trace error and, on request, the exact squared error (an O(n^2) pass).
pub fn compress_measure(
    mu: &DiracMeasure,
    spec: &KernelSpec,
    sampler: SamplerKind,
    config: &SamplerConfig,
    m: usize,
    seed: u64,
    evaluate: bool,
) -> Result<CompressionResult> {
    let start = Instant::now();
    let controls = sample_controls(spec, mu.points(), sampler, config, m, seed)?;
    let compressed = project_measure(mu, &controls, spec)?;
    let trace_error = nystrom_trace_error(spec, mu.points(), &controls.indices)?;
    let squared_error = if evaluate {
        Some(compression_error2(mu, &compressed, spec)?)
    } else {
        None
    };
    Ok(CompressionResult {
        compressed,
        controls,
        trace_error,
        squared_error,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// How [`choose_m_trace`] grows the control count between evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthPolicy {
    /// `m <- m + 1`; every size is evaluated.
    AddOne,
    /// `m <- 2 m`; with a prefix-capable sampler the subsets are nested,
    /// which makes the trace trajectory non-increasing by construction.
    Double,
}

/// One evaluated size in a [`SizeSearch`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeStep {
    pub m: usize,
    pub trace_error: f64,
}

/// Result of the trace-driven size search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeSearch {
    pub controls: ControlSet,
    pub trajectory: Vec<SizeStep>,
    /// Whether successive subsets were nested (prefixes of one ordering).
    pub nested: bool,
    /// Whether the final trace error met the tolerance (false only when
    /// the search exhausted all `n` atoms first).
    pub met_tolerance: bool,
}

/// Grows the control count from 1 until the Nystrom trace error drops to
/// `tau`, or all atoms are controls. Uniform and leverage-score samplers
/// draw nested subsets (prefixes of one seeded ordering), so under
/// doubling growth their trace trajectory is non-increasing; the DPP
/// sampler redraws its chain at each size and is never nested.
pub fn choose_m_trace(
    mu: &DiracMeasure,
    spec: &KernelSpec,
    tau: f64,
    sampler: SamplerKind,
    config: &SamplerConfig,
    seed: u64,
    growth: GrowthPolicy,
) -> Result<SizeSearch> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be non-negative and finite, got {tau}"
        )));
    }
    spec.compatible_with(mu.space())?;
    config.validate()?;
    let n = mu.n();
    let points = mu.points();

    // Prefix-capable samplers expose one full priority ordering; drawing m
    // controls is taking its first m entries.
    let order: Option<ControlSet> = match sampler {
        SamplerKind::McmcKdpp => None,
        _ => Some(sample_controls(spec, points, sampler, config, n, seed)?),
    };
    let nested = order.is_some();

    let mut m = 1usize;
    let mut trajectory = Vec::new();
    let mut redraw = 0u64;
    loop {
        let controls = match &order {
            Some(full) => prefix_controls(full, m),
            None => {
                // Fresh chain per size; the derived seed is recorded in the
                // returned set, so the final draw stays reproducible.
                let sub_seed = substream(STREAM_CHOOSE_M.wrapping_add(seed), redraw);
                redraw += 1;
                sample_controls(spec, points, sampler, config, m, sub_seed)?
            }
        };
        let trace_error = nystrom_trace_error(spec, points, &controls.indices)?;
        trajectory.push(SizeStep { m, trace_error });
        let met = trace_error <= tau;
        if met || m == n {
            return Ok(SizeSearch {
                controls,
                trajectory,
                nested,
                met_tolerance: met,
            });
        }
        m = match growth {
            GrowthPolicy::AddOne => m + 1,
            GrowthPolicy::Double => (2 * m).min(n),
        };
    }
}

/// One row of an error-curve sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorCurveRow {
    pub sampler: SamplerKind,
    pub m: usize,
    pub seed: u64,
    pub squared_error: f64,
    pub trace_error: f64,
    pub wall_time_s: f64,
}

/// Sweeps compression quality over samplers, control counts, and seeds.
/// Rows come back in sampler-major, then size, then seed order, and are
/// bit-reproducible for a fixed input (wall time aside). Leverage scores
/// are computed once per (sampler, seed) and shared across sizes, which
/// changes no output: the drawn subsets are prefixes of one ordering
/// either way. `wall_time_s` covers the per-cell projection and error
/// evaluation.
pub fn error_curve(
    mu: &DiracMeasure,
    spec: &KernelSpec,
    ms: &[usize],
    samplers: &[SamplerKind],
    seeds: &[u64],
    config: &SamplerConfig,
) -> Result<Vec<ErrorCurveRow>> {
    spec.compatible_with(mu.space())?;
    config.validate()?;
    let n = mu.n();
    for &m in ms {
        if m == 0 || m > n {
            return Err(Error::InvalidArgument(format!(
                "control count {m} out of range for {n} atoms"
            )));
        }
    }
    let mut rows = Vec::with_capacity(samplers.len() * ms.len() * seeds.len());
    for &sampler in samplers {
        // One full priority ordering per seed for prefix-capable samplers;
        // its prefixes equal the direct draws at every size.
        let mut orders: std::collections::HashMap<u64, ControlSet> =
            std::collections::HashMap::new();
        if sampler != SamplerKind::McmcKdpp {
            for &seed in seeds {
                orders.insert(
                    seed,
                    sample_controls(spec, mu.points(), sampler, config, n, seed)?,
                );
            }
        }
        for &m in ms {
            for &seed in seeds {
                let start = Instant::now();
                let controls = match orders.get(&seed) {
                    Some(full) => prefix_controls(full, m),
                    None => sample_controls(spec, mu.points(), sampler, config, m, seed)?,
                };
                let compressed = project_measure(mu, &controls, spec)?;
                let squared_error = compression_error2(mu, &compressed, spec)?;
                let trace_error = nystrom_trace_error(spec, mu.points(), &controls.indices)?;
                rows.push(ErrorCurveRow {
                    sampler,
                    m,
                    seed,
                    squared_error,
                    trace_error,
                    wall_time_s: start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Ok(rows)
}
