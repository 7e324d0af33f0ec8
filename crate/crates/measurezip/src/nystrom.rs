//! Control-subset selection and Nystrom approximation quality.
//!
//! For points `X` and a control subset `C`, the Nystrom approximation of
//! the Gram matrix is `Q = K_XC K_CC^{-1} K_CX`. Its trace error
//!
//! ```text
//! tr(K_XX - Q) = sum_i k(x_i, x_i) - sum_i |L^{-1} K_C,i|^2,   L L^T = K_CC
//! ```
//!
//! is computable in O(n m^2 + m^3) without ever materializing `K_XX`, and
//! it upper-bounds the squared dual-norm error of projecting any measure
//! supported on `X` onto the span of `C` (up to the weight magnitudes).
//! Everything here is streamed: only `m x m` and `m x block` matrices are
//! ever allocated.
//!
//! Three samplers produce control subsets:
//!
//! * uniform without replacement,
//! * ridge leverage scores `l_i = (K (K + lambda I)^{-1})_ii`, either exact
//!   (dense, capped) or by recursive halving with Nystrom-approximated
//!   scores at each level,
//! * a fixed-size determinantal point process `p(S) ~ det(K_S)` via a
//!   swap Markov chain.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix_sym, KernelSpec};
use crate::linalg::{factor_spd, forward_solve_lower, SubsetCholesky};
use crate::measures::RowMatrix;
use crate::rng::{
    stream_rng, substream, STREAM_KDPP_CHAIN, STREAM_KDPP_INIT, STREAM_RLS_PERMUTE,
    STREAM_RLS_SELECT, STREAM_RLS_SKETCH, STREAM_UNIFORM,
};

/// Largest point count for which dense `n x n` paths (exact leverage
/// scores, eigenvalue tails) are allowed.
pub const DENSE_CAP: usize = 20_000;

/// Subset size below which recursive leverage-score estimation switches to
/// the exact dense computation.
pub const RLS_BASE_N: usize = 1024;

/// Column block size for streamed cross-kernel passes.
const BLOCK: usize = 1024;

/// How a control subset was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Uniform,
    ExactRls,
    RecursiveRls,
    McmcKdpp,
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SamplerKind::Uniform => "uniform",
            SamplerKind::ExactRls => "exact_rls",
            SamplerKind::RecursiveRls => "recursive_rls",
            SamplerKind::McmcKdpp => "mcmc_kdpp",
        };
        write!(f, "{s}")
    }
}

/// Tuning knobs shared by the samplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Target rank `S`; without an explicit override the sample size is
    /// `ceil(S ln(S / delta))`.
    pub target_rank: usize,
    /// Failure probability; must lie in (0, 1/32).
    pub delta: f64,
    /// Ridge parameter of the leverage scores.
    pub lambda_reg: f64,
    /// Swap-chain length for the DPP sampler.
    pub chain_iterations: usize,
    /// Explicit sample size, overriding the `target_rank`-derived one.
    pub m_exact: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            target_rank: 64,
            delta: 0.02,
            lambda_reg: 1e-3,
            chain_iterations: 2000,
            m_exact: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_rank == 0 {
            return Err(Error::InvalidArgument("target rank must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0 / 32.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must lie in (0, 1/32), got {}",
                self.delta
            )));
        }
        if !(self.lambda_reg > 0.0) || !self.lambda_reg.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda_reg must be positive, got {}",
                self.lambda_reg
            )));
        }
        if self.m_exact == Some(0) {
            return Err(Error::InvalidArgument("sample size must be positive".into()));
        }
        Ok(())
    }

    /// Number of controls to draw: the explicit override if set, otherwise
    /// `ceil(S ln(S / delta))`, capped at `n`.
    pub fn sample_size(&self, n: usize) -> usize {
        let derived = match self.m_exact {
            Some(m) => m,
            None => {
                let s = self.target_rank as f64;
                (s * (s / self.delta).ln()).ceil() as usize
            }
        };
        derived.clamp(1, n)
    }

    fn with_sample_size(&self, m: usize) -> SamplerConfig {
        SamplerConfig {
            m_exact: Some(m),
            ..self.clone()
        }
    }
}

/// Sampler parameters echoed into a [`ControlSet`] for provenance; only
/// the fields the sampler actually consulted are present.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SamplerParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_reg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_exact: Option<usize>,
}

impl SamplerParams {
    fn for_rls(config: &SamplerConfig) -> Self {
        SamplerParams {
            target_rank: config.m_exact.is_none().then_some(config.target_rank),
            delta: Some(config.delta),
            lambda_reg: Some(config.lambda_reg),
            chain_iterations: None,
            m_exact: config.m_exact,
        }
    }
}

/// A control subset with its sampling provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    /// Distinct atom indices into the source point set.
    pub indices: Vec<usize>,
    pub sampler: SamplerKind,
    pub seed: u64,
    pub params: SamplerParams,
}

impl ControlSet {
    pub fn m(&self) -> usize {
        self.indices.len()
    }

    /// Checks distinctness and range against a source of size `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        validate_indices(&self.indices, n)
    }
}

pub(crate) fn validate_indices(indices: &[usize], n: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("empty control set".into()));
    }
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n {
            return Err(Error::InvalidArgument(format!(
                "control index {i} out of range for {n} atoms"
            )));
        }
        if seen[i] {
            return Err(Error::InvalidArgument(format!(
                "duplicate control index {i}"
            )));
        }
        seen[i] = true;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Trace error

/// `tr(K_XX - Q)` for the Nystrom approximation induced by `controls`,
/// computed in O(n m^2) memory-streamed form. An empty control set yields
/// the full trace `sum_i k(x_i, x_i)` (the approximation by nothing).
/// Tiny negative rounding residuals are clamped to zero.
pub fn nystrom_trace_error(
    spec: &KernelSpec,
    points: &RowMatrix,
    controls: &[usize],
) -> Result<f64> {
    spec.validate()?;
    let n = points.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("no points".into()));
    }
    let diag_total = || -> f64 {
        (0..n)
            .map(|i| spec.eval_unchecked(points.row(i), points.row(i)))
            .sum()
    };
    if controls.is_empty() {
        return Ok(diag_total());
    }
    validate_indices(controls, n)?;
    let ctrl_points = points.select(controls);
    let k_cc = kernel_matrix_sym(spec, &ctrl_points)?;
    let factor = factor_spd(&k_cc)?;
    let l = factor.l();
    let m = controls.len();

    let block_sums: Vec<(f64, f64)> = (0..n)
        .step_by(BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let stop = (start + BLOCK).min(n);
            let width = stop - start;
            let mut cross = DMatrix::<f64>::zeros(m, width);
            let mut diag = 0.0;
            for (col, i) in (start..stop).enumerate() {
                let xi = points.row(i);
                diag += spec.eval_unchecked(xi, xi);
                for r in 0..m {
                    cross[(r, col)] = spec.eval_unchecked(ctrl_points.row(r), xi);
                }
            }
            forward_solve_lower(&l, &mut cross);
            (diag, cross.iter().map(|v| v * v).sum::<f64>())
        })
        .collect();

    let mut trace = 0.0;
    for (diag, explained) in block_sums {
        trace += diag - explained;
    }
    Ok(trace.max(0.0))
}

// ---------------------------------------------------------------------------
// Ridge leverage scores

/// Exact ridge leverage scores `l_i = (K (K + lambda I)^{-1})_ii`
/// computed as `1 - lambda ((K + lambda I)^{-1})_ii` from one dense
/// factorization. Guarded by [`DENSE_CAP`].
pub fn exact_rls(spec: &KernelSpec, points: &RowMatrix, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ridge parameter must be positive, got {lambda}"
        )));
    }
    let n = points.rows();
    if n > DENSE_CAP {
        return Err(Error::CapExceeded { n, cap: DENSE_CAP });
    }
    let mut a = kernel_matrix_sym(spec, points)?;
    for i in 0..n {
        a[(i, i)] += lambda;
    }
    let inv = match nalgebra::Cholesky::new(a) {
        Some(c) => c.inverse(),
        None => {
            return Err(Error::Factorization {
                max_jitter: 0.0,
                near_duplicates: Vec::new(),
            })
        }
    };
    Ok((0..n)
        .map(|i| (1.0 - lambda * inv[(i, i)]).clamp(0.0, 1.0))
        .collect())
}

/// Approximate ridge leverage scores by recursive halving: score half the
/// points recursively, draw a sketch from that half proportional to its
/// scores, and score everyone against the sketch via
/// `(k_ii - K_iC (K_CC + lambda I)^{-1} K_Ci) / lambda`. Subsets at or
/// below [`RLS_BASE_N`] are scored exactly, so small inputs reproduce
/// [`exact_rls`] verbatim.
pub fn approximate_rls_scores(
    spec: &KernelSpec,
    points: &RowMatrix,
    config: &SamplerConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    spec.validate()?;
    config.validate()?;
    let n = points.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("no points".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    recurse_scores(spec, points, &all, config, seed, 0)
}

/// Sketch size per recursion level: twice the `target_rank`-derived sample
/// size (the oversampling keeps score estimates within constant factors).
fn sketch_size(config: &SamplerConfig, half: usize) -> usize {
    let s = config.target_rank as f64;
    let m = (s * (s / config.delta).ln()).ceil() as usize;
    (2 * m).clamp(1, half)
}

fn recurse_scores(
    spec: &KernelSpec,
    points: &RowMatrix,
    subset: &[usize],
    config: &SamplerConfig,
    seed: u64,
    depth: u64,
) -> Result<Vec<f64>> {
    let len = subset.len();
    if len <= RLS_BASE_N {
        return exact_rls(spec, &points.select(subset), config.lambda_reg);
    }

    let mut perm: Vec<usize> = subset.to_vec();
    perm.shuffle(&mut stream_rng(seed, substream(STREAM_RLS_PERMUTE, depth)));
    let half = &perm[..len / 2];
    let half_scores = recurse_scores(spec, points, half, config, seed, depth + 1)?;

    let sketch_m = sketch_size(config, half.len());
    let mut sketch_rng = stream_rng(seed, substream(STREAM_RLS_SKETCH, depth));
    let picked = gumbel_top_k(&half_scores, sketch_m, &mut sketch_rng);
    let sketch: Vec<usize> = picked.iter().map(|&p| half[p]).collect();

    let sketch_points = points.select(&sketch);
    let mut a = kernel_matrix_sym(spec, &sketch_points)?;
    for i in 0..sketch_m {
        a[(i, i)] += config.lambda_reg;
    }
    let factor = match nalgebra::Cholesky::new(a.clone()) {
        Some(c) => c,
        None => factor_into_cholesky(&a)?,
    };

    let lambda = config.lambda_reg;
    let mut scores = vec![0.0; len];
    for start in (0..len).step_by(BLOCK) {
        let stop = (start + BLOCK).min(len);
        let width = stop - start;
        let mut cross = DMatrix::<f64>::zeros(sketch_m, width);
        for (col, &i) in subset[start..stop].iter().enumerate() {
            let xi = points.row(i);
            for r in 0..sketch_m {
                cross[(r, col)] = spec.eval_unchecked(sketch_points.row(r), xi);
            }
        }
        let solved = factor.solve(&cross);
        for (col, &i) in subset[start..stop].iter().enumerate() {
            let xi = points.row(i);
            let kii = spec.eval_unchecked(xi, xi);
            let explained: f64 = (0..sketch_m).map(|r| cross[(r, col)] * solved[(r, col)]).sum();
            scores[start + col] = ((kii - explained) / lambda).clamp(1e-12, 1.0);
        }
    }
    Ok(scores)
}

/// Retries a failed ridge factorization through the jitter ladder.
fn factor_into_cholesky(a: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let f = factor_spd(a)?;
    let n = a.nrows();
    let mut jittered = a.clone();
    for i in 0..n {
        jittered[(i, i)] += f.jitter;
    }
    nalgebra::Cholesky::new(jittered).ok_or(Error::Factorization {
        max_jitter: f.jitter,
        near_duplicates: Vec::new(),
    })
}

/// Draws `m` indices without replacement with probabilities proportional
/// to `scores`, via Gumbel-perturbed keys. For a fixed generator state the
/// result is a nested family: the first `m'` of the returned indices are
/// exactly the draw of size `m'`.
pub(crate) fn gumbel_top_k<R: Rng>(scores: &[f64], m: usize, rng: &mut R) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut u: f64 = rng.random();
            if u == 0.0 {
                u = f64::MIN_POSITIVE;
            }
            let gumbel = -(-u.ln()).ln();
            (s.max(1e-300).ln() + gumbel, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    keyed.truncate(m);
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Samples controls by exact ridge leverage scores (dense, capped).
pub fn exact_rls_sample(
    spec: &KernelSpec,
    points: &RowMatrix,
    config: &SamplerConfig,
    seed: u64,
) -> Result<ControlSet> {
    config.validate()?;
    let scores = exact_rls(spec, points, config.lambda_reg)?;
    let m = config.sample_size(points.rows());
    let mut rng = stream_rng(seed, STREAM_RLS_SELECT);
    let indices = gumbel_top_k(&scores, m, &mut rng);
    Ok(ControlSet {
        indices,
        sampler: SamplerKind::ExactRls,
        seed,
        params: SamplerParams::for_rls(config),
    })
}

/// Samples controls by recursively approximated ridge leverage scores.
/// Runs in O(n m^2) time and O(m^2) extra memory.
pub fn recursive_rls_sample(
    spec: &KernelSpec,
    points: &RowMatrix,
    config: &SamplerConfig,
    seed: u64,
) -> Result<ControlSet> {
    let scores = approximate_rls_scores(spec, points, config, seed)?;
    let m = config.sample_size(points.rows());
    let mut rng = stream_rng(seed, STREAM_RLS_SELECT);
    let indices = gumbel_top_k(&scores, m, &mut rng);
    Ok(ControlSet {
        indices,
        sampler: SamplerKind::RecursiveRls,
        seed,
        params: SamplerParams::for_rls(config),
    })
}

/// Uniform sample of `m` of `n` indices without replacement. Samples with
/// the same seed are nested across `m`.
pub fn uniform_sample(n: usize, m: usize, seed: u64) -> Result<ControlSet> {
    if n == 0 || m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {m} of {n} indices"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, STREAM_UNIFORM));
    order.truncate(m);
    Ok(ControlSet {
        indices: order,
        sampler: SamplerKind::Uniform,
        seed,
        params: SamplerParams::default(),
    })
}

// ---------------------------------------------------------------------------
// Fixed-size DPP by Markov chain

/// Samples an `m`-subset from the determinantal distribution
/// `p(S) ~ det(K_S)` by a swap chain: propose exchanging a uniformly
/// chosen member against a uniformly chosen outsider and accept with
/// probability `min(1, det(K_T) / det(K_S)) / 2`. Determinant ratios come
/// from O(m^2) incremental Cholesky updates. Singular proposals are never
/// accepted, so subsets with duplicated points carry no mass.
pub fn mcmc_kdpp_sample(
    spec: &KernelSpec,
    points: &RowMatrix,
    m: usize,
    iterations: usize,
    seed: u64,
) -> Result<ControlSet> {
    spec.validate()?;
    let n = points.rows();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {m} of {n} indices"
        )));
    }
    let finish = |mut indices: Vec<usize>| {
        indices.sort_unstable();
        ControlSet {
            indices,
            sampler: SamplerKind::McmcKdpp,
            seed,
            params: SamplerParams {
                chain_iterations: Some(iterations),
                ..SamplerParams::default()
            },
        }
    };
    if m == n {
        return Ok(finish((0..n).collect()));
    }

    // Initial state: uniform draws until the subset Gram matrix factors.
    let mut init_rng = stream_rng(seed, STREAM_KDPP_INIT);
    let mut state: Option<(Vec<usize>, SubsetCholesky)> = None;
    for _ in 0..64 {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut init_rng);
        let subset = order[..m].to_vec();
        let k_ss = kernel_matrix_sym(spec, &points.select(&subset))?;
        if let Some(factor) = SubsetCholesky::new(&k_ss) {
            state = Some((subset, factor));
            break;
        }
    }
    let (mut subset, mut factor) = state.ok_or_else(|| {
        Error::InvalidArgument(
            "could not find a non-singular initial subset for the swap chain".into(),
        )
    })?;
    let mut outside: Vec<usize> = {
        let inside: std::collections::HashSet<usize> = subset.iter().copied().collect();
        (0..n).filter(|i| !inside.contains(i)).collect()
    };

    let mut chain_rng = stream_rng(seed, STREAM_KDPP_CHAIN);
    let mut log_det = factor.log_det();
    for _ in 0..iterations {
        let pos = chain_rng.random_range(0..m);
        let out_pos = chain_rng.random_range(0..outside.len());
        let candidate = outside[out_pos];
        let u: f64 = chain_rng.random();

        let mut trial = factor.clone();
        trial.remove(pos);
        let rest: Vec<usize> = subset
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != pos)
            .map(|(_, &v)| v)
            .collect();
        let cross = DVector::from_iterator(
            m - 1,
            rest.iter()
                .map(|&r| spec.eval_unchecked(points.row(r), points.row(candidate))),
        );
        let diag = spec.eval_unchecked(points.row(candidate), points.row(candidate));
        if !trial.append(&cross, diag) {
            continue; // det(K_T) = 0: acceptance probability is zero.
        }
        let trial_log_det = trial.log_det();
        let accept = 0.5 * (trial_log_det - log_det).exp().min(1.0);
        if u < accept {
            let evicted = subset.remove(pos);
            subset.push(candidate);
            outside[out_pos] = evicted;
            factor = trial;
            log_det = trial_log_det;
        }
    }
    Ok(finish(subset))
}

// ---------------------------------------------------------------------------
// Eigenvalue tails

/// Sum of the eigenvalues of the Gram matrix past the largest `m`
/// (`sum_{i > m} lambda_i`), the quantity that bounds the expected trace
/// error of determinantal control sets. Dense; guarded by [`DENSE_CAP`].
/// Tiny negative eigenvalues from rounding are clamped to zero.
pub fn eigen_tail_sum(spec: &KernelSpec, points: &RowMatrix, m: usize) -> Result<f64> {
    let n = points.rows();
    if n > DENSE_CAP {
        return Err(Error::CapExceeded { n, cap: DENSE_CAP });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no points".into()));
    }
    if m >= n {
        return Ok(0.0);
    }
    let k = kernel_matrix_sym(spec, points)?;
    let mut eigs: Vec<f64> = nalgebra::SymmetricEigen::new(k)
        .eigenvalues
        .iter()
        .cloned()
        .collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(eigs[m..].iter().map(|&v| v.max(0.0)).sum())
}

/// Draws `m` controls with the given sampler. The shared entry point used
/// by compression, size selection, and the CLI.
pub fn sample_controls(
    spec: &KernelSpec,
    points: &RowMatrix,
    sampler: SamplerKind,
    config: &SamplerConfig,
    m: usize,
    seed: u64,
) -> Result<ControlSet> {
    let sized = config.with_sample_size(m);
    match sampler {
        SamplerKind::Uniform => uniform_sample(points.rows(), m, seed),
        SamplerKind::ExactRls => exact_rls_sample(spec, points, &sized, seed),
        SamplerKind::RecursiveRls => recursive_rls_sample(spec, points, &sized, seed),
        SamplerKind::McmcKdpp => {
            mcmc_kdpp_sample(spec, points, m, config.chain_iterations, seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{jacobi_eigenvalues, random_points};
    use approx::assert_relative_eq;

    fn gaussian(sigma: f64) -> KernelSpec {
        KernelSpec::Gaussian(sigma)
    }

    /// Dense reference: tr(K - K_XC (K_CC + jitter I)^{-1} K_CX) with the
    /// same first-rung jitter the streamed path applies.
    fn dense_trace_error(spec: &KernelSpec, points: &RowMatrix, controls: &[usize]) -> f64 {
        let k = kernel_matrix_sym(spec, points).unwrap();
        let ctrl = points.select(controls);
        let mut k_cc = kernel_matrix_sym(spec, &ctrl).unwrap();
        let jitter = 1e-10 * k_cc.diagonal().sum() / k_cc.nrows() as f64;
        for i in 0..k_cc.nrows() {
            k_cc[(i, i)] += jitter;
        }
        let k_xc = crate::kernels::kernel_matrix(spec, points, &ctrl).unwrap();
        let q = &k_xc * k_cc.try_inverse().unwrap() * k_xc.transpose();
        (k - q).trace()
    }

    #[test]
    fn test_trace_error_empty_controls_is_full_trace() {
        let pts = random_points(1, 40);
        let t = nystrom_trace_error(&gaussian(0.5), &pts, &[]).unwrap();
        assert_relative_eq!(t, 40.0, max_relative = 1e-14);
    }

    #[test]
    fn test_trace_error_full_controls_vanishes() {
        let pts = random_points(2, 30);
        let all: Vec<usize> = (0..30).collect();
        let t = nystrom_trace_error(&gaussian(0.5), &pts, &all).unwrap();
        assert!(t >= 0.0);
        assert!(t < 1e-6, "trace {t}");
    }

    #[test]
    fn test_trace_error_matches_dense_reference() {
        for seed in 0..5 {
            let pts = random_points(10 + seed, 60);
            let controls = uniform_sample(60, 12, seed).unwrap().indices;
            let streamed = nystrom_trace_error(&gaussian(0.6), &pts, &controls).unwrap();
            let dense = dense_trace_error(&gaussian(0.6), &pts, &controls);
            assert_relative_eq!(streamed, dense, max_relative = 1e-8, epsilon = 1e-10);
        }
    }

    #[test]
    fn test_trace_error_decreases_when_controls_grow() {
        let pts = random_points(3, 80);
        let base = uniform_sample(80, 10, 7).unwrap().indices;
        let t_small = nystrom_trace_error(&gaussian(0.5), &pts, &base).unwrap();
        let mut grown = base.clone();
        grown.push(*(0..80usize).find(|i| !base.contains(i)).as_ref().unwrap());
        let t_big = nystrom_trace_error(&gaussian(0.5), &pts, &grown).unwrap();
        assert!(t_big <= t_small + 1e-10, "{t_big} > {t_small}");
    }

    #[test]
    fn test_trace_error_rejects_bad_controls() {
        let pts = random_points(4, 10);
        assert!(nystrom_trace_error(&gaussian(0.5), &pts, &[0, 0]).is_err());
        assert!(nystrom_trace_error(&gaussian(0.5), &pts, &[11]).is_err());
    }

    #[test]
    fn test_exact_rls_matches_dense_product() {
        let pts = random_points(5, 35);
        let lambda = 0.05;
        let scores = exact_rls(&gaussian(0.5), &pts, lambda).unwrap();
        let k = kernel_matrix_sym(&gaussian(0.5), &pts).unwrap();
        let mut a = k.clone();
        for i in 0..35 {
            a[(i, i)] += lambda;
        }
        let product = &k * a.try_inverse().unwrap();
        for i in 0..35 {
            assert_relative_eq!(scores[i], product[(i, i)], max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn test_exact_rls_sum_is_effective_dimension() {
        let pts = random_points(6, 50);
        let lambda = 0.1;
        let scores = exact_rls(&gaussian(0.4), &pts, lambda).unwrap();
        let total: f64 = scores.iter().sum();
        let k = kernel_matrix_sym(&gaussian(0.4), &pts).unwrap();
        let d_eff: f64 = jacobi_eigenvalues(&k)
            .iter()
            .map(|&l| l / (l + lambda))
            .sum();
        assert_relative_eq!(total, d_eff, max_relative = 1e-8);
    }

    #[test]
    fn test_exact_rls_limits() {
        // Far-apart points: K is essentially the identity, every score is
        // 1 / (1 + lambda).
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![10.0 * i as f64, 0.0, 0.0]).collect();
        let pts = RowMatrix::from_rows(rows).unwrap();
        let scores = exact_rls(&gaussian(0.3), &pts, 1.0).unwrap();
        for s in &scores {
            assert_relative_eq!(*s, 0.5, max_relative = 1e-10);
        }
        // Vanishing ridge: scores approach 1 for a full-rank kernel.
        let near = exact_rls(&gaussian(0.3), &pts, 1e-12).unwrap();
        assert!(near.iter().all(|&s| s > 0.99));
        // Scores always lie in [0, 1].
        let cloud = random_points(7, 40);
        for lambda in [1e-6, 1e-2, 1.0, 100.0] {
            let sc = exact_rls(&gaussian(0.5), &cloud, lambda).unwrap();
            assert!(sc.iter().all(|&s| (0.0..=1.0).contains(&s)));
        }
    }

    #[test]
    fn test_recursive_scores_reduce_to_exact_below_base() {
        let pts = random_points(8, 300);
        let config = SamplerConfig {
            lambda_reg: 0.05,
            ..SamplerConfig::default()
        };
        let approx = approximate_rls_scores(&gaussian(0.5), &pts, &config, 3).unwrap();
        let exact = exact_rls(&gaussian(0.5), &pts, 0.05).unwrap();
        assert_eq!(approx, exact);
    }

    #[test]
    fn test_recursive_scores_track_exact_above_base() {
        let pts = random_points(9, 2000);
        let config = SamplerConfig {
            target_rank: 24,
            lambda_reg: 0.05,
            ..SamplerConfig::default()
        };
        let approx = approximate_rls_scores(&gaussian(0.5), &pts, &config, 3).unwrap();
        let exact = exact_rls(&gaussian(0.5), &pts, 0.05).unwrap();
        assert!(approx.iter().all(|&s| s > 0.0 && s <= 1.0));
        // The approximation overestimates individual scores but must stay
        // strongly correlated with the exact ones.
        let mean_a: f64 = approx.iter().sum::<f64>() / 2000.0;
        let mean_e: f64 = exact.iter().sum::<f64>() / 2000.0;
        let mut cov = 0.0;
        let mut var_a = 0.0;
        let mut var_e = 0.0;
        for i in 0..2000 {
            let da = approx[i] - mean_a;
            let de = exact[i] - mean_e;
            cov += da * de;
            var_a += da * da;
            var_e += de * de;
        }
        let corr = cov / (var_a.sqrt() * var_e.sqrt());
        assert!(corr > 0.5, "correlation {corr}");
    }

    #[test]
    fn test_gumbel_top_k_marginals() {
        let scores = [10.0, 1.0, 1.0, 1.0];
        let mut hits = 0usize;
        let draws = 20000;
        let mut rng = crate::rng::stream_rng(0, 99);
        for _ in 0..draws {
            let top = gumbel_top_k(&scores, 1, &mut rng);
            if top[0] == 0 {
                hits += 1;
            }
        }
        let freq = hits as f64 / draws as f64;
        assert!((freq - 10.0 / 13.0).abs() < 0.02, "frequency {freq}");
    }

    #[test]
    fn test_gumbel_top_k_nested() {
        let scores: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let mut rng1 = crate::rng::stream_rng(5, 99);
        let mut rng2 = crate::rng::stream_rng(5, 99);
        let small = gumbel_top_k(&scores, 5, &mut rng1);
        let large = gumbel_top_k(&scores, 12, &mut rng2);
        assert_eq!(&large[..5], &small[..]);
    }

    #[test]
    fn test_uniform_sample_determinism_and_nesting() {
        let a = uniform_sample(100, 10, 42).unwrap();
        let b = uniform_sample(100, 10, 42).unwrap();
        assert_eq!(a.indices, b.indices);
        let wider = uniform_sample(100, 25, 42).unwrap();
        assert_eq!(&wider.indices[..10], &a.indices[..]);
        assert!(uniform_sample(10, 11, 0).is_err());
        assert!(uniform_sample(10, 0, 0).is_err());
    }

    #[test]
    fn test_uniform_sample_frequencies() {
        let n = 10;
        let m = 2;
        let draws = 5000;
        let mut counts = vec![0usize; n];
        for seed in 0..draws {
            for &i in &uniform_sample(n, m, seed as u64).unwrap().indices {
                counts[i] += 1;
            }
        }
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.2).abs() < 0.03, "frequency {freq}");
        }
    }

    #[test]
    fn test_kdpp_full_subset_is_identity() {
        let pts = random_points(11, 12);
        let cs = mcmc_kdpp_sample(&gaussian(0.5), &pts, 12, 100, 0).unwrap();
        assert_eq!(cs.indices, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn test_kdpp_never_selects_duplicated_pair() {
        // Points 0 and 1 coincide, so every subset containing both has a
        // singular Gram matrix and zero probability.
        let mut rows: Vec<Vec<f64>> = vec![vec![0.3, 0.3, 0.3], vec![0.3, 0.3, 0.3]];
        for i in 0..6 {
            rows.push(vec![i as f64, 0.5, -0.5]);
        }
        let pts = RowMatrix::from_rows(rows).unwrap();
        for seed in 0..50 {
            let cs = mcmc_kdpp_sample(&gaussian(0.8), &pts, 3, 400, seed).unwrap();
            let both = cs.indices.contains(&0) && cs.indices.contains(&1);
            assert!(!both, "seed {seed} selected the duplicated pair");
        }
    }

    #[test]
    fn test_kdpp_determinism() {
        let pts = random_points(12, 30);
        let a = mcmc_kdpp_sample(&gaussian(0.5), &pts, 6, 500, 9).unwrap();
        let b = mcmc_kdpp_sample(&gaussian(0.5), &pts, 6, 500, 9).unwrap();
        assert_eq!(a.indices, b.indices);
        a.validate(30).unwrap();
    }

    #[test]
    fn test_eigen_tail_against_jacobi() {
        let pts = random_points(13, 30);
        let spec = gaussian(0.5);
        let k = kernel_matrix_sym(&spec, &pts).unwrap();
        let eigs = jacobi_eigenvalues(&k);
        for m in [0usize, 5, 29, 30] {
            let lib = eigen_tail_sum(&spec, &pts, m).unwrap();
            let oracle: f64 = eigs.iter().skip(m).map(|&v| v.max(0.0)).sum();
            assert_relative_eq!(lib, oracle, max_relative = 1e-8, epsilon = 1e-10);
        }
        assert_eq!(eigen_tail_sum(&spec, &pts, 31).unwrap(), 0.0);
    }

    #[test]
    fn test_sampler_config_validation() {
        let mut cfg = SamplerConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.delta = 0.5;
        assert!(cfg.validate().is_err());
        cfg.delta = 0.02;
        cfg.lambda_reg = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn test_sample_size_derivation() {
        let cfg = SamplerConfig {
            target_rank: 10,
            delta: 0.02,
            ..SamplerConfig::default()
        };
        // ceil(10 ln(10 / 0.02)) = ceil(62.14...) = 63.
        assert_eq!(cfg.sample_size(1000), 63);
        assert_eq!(cfg.sample_size(40), 40);
        let fixed = cfg.with_sample_size(17);
        assert_eq!(fixed.sample_size(1000), 17);
    }

    #[test]
    fn test_control_set_json_roundtrip() {
        let pts = random_points(14, 40);
        let cfg = SamplerConfig::default().with_sample_size(8);
        let cs = recursive_rls_sample(&gaussian(0.5), &pts, &cfg, 21).unwrap();
        let text = serde_json::to_string(&cs).unwrap();
        let back: ControlSet = serde_json::from_str(&text).unwrap();
        assert_eq!(cs, back);
        assert_eq!(back.m(), 8);
    }
}
