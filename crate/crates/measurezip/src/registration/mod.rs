//! Geodesic shape registration driven by compressed measures.
//!
//! A deformation is parameterized by initial momenta attached to carrier
//! points (the centroids of the control triangles). Carriers follow the
//! Hamiltonian equations of the deformation kernel, template vertices are
//! advected by the induced velocity field, and the data term compares the
//! deformed surface measure, projected onto the transported control
//! atoms, against a target measure. Gradients come from a hand-rolled
//! reverse pass through every Euler step, so each optimization iteration
//! costs a small constant times the forward evaluation.

mod hausdorff;
mod objective;

use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use hausdorff::hausdorff_distance;
pub use objective::{objective, ObjectiveValue};

use crate::compress::project_measure;
use crate::error::{Error, Result};
use crate::kernels::{dual_norm2, KernelSpec};
use crate::measures::{measure_of_mesh, BaseSpace, DiracMeasure, Representation};
use crate::mesh::TriangleMesh;
use crate::nystrom::{sample_controls, ControlSet, SamplerConfig, SamplerKind};
use objective::MatchProblem;

/// Step-size policy for the gradient descent loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Constant step size.
    Fixed { eta: f64 },
    /// Armijo backtracking: accept the largest step in
    /// `{eta0, eta0/2, ...}` that decreases the objective by at least
    /// `1e-4 * step * |grad|^2`.
    Backtracking,
}

/// Parameters of the deformation model shared by shooting, flowing and
/// matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationConfig {
    /// Spatial kernel generating the velocity fields.
    pub kernel_v: KernelSpec,
    /// Number of forward-Euler steps on the unit time interval.
    pub n_steps: usize,
    /// Weight of the measure discrepancy term in the objective. Zero
    /// turns the objective into the pure deformation energy.
    pub lambda_match: f64,
    /// Iteration budget for `compressed_match`.
    pub max_iters: usize,
    pub step_rule: StepRule,
}

impl DeformationConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel_v.validate()?;
        self.kernel_v
            .compatible_with(BaseSpace::Euclidean { dim: 3 })
            .map_err(|_| {
                Error::InvalidArgument(
                    "deformation kernel must be a spatial kernel acting on positions".into(),
                )
            })?;
        if self.n_steps == 0 {
            return Err(Error::InvalidArgument(
                "n_steps must be at least 1".into(),
            ));
        }
        if !self.lambda_match.is_finite() || self.lambda_match < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda_match must be finite and non-negative, got {}",
                self.lambda_match
            )));
        }
        if let StepRule::Fixed { eta } = self.step_rule {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "fixed step size must be positive, got {eta}"
                )));
            }
        }
        Ok(())
    }

    fn step_len(&self) -> f64 {
        1.0 / self.n_steps as f64
    }
}

/// Carrier trajectory produced by [`shoot`]: positions and momenta at
/// every Euler grid point `t = 0..=n_steps`, plus the path energy.
#[derive(Debug, Clone)]
pub struct ShootingState {
    pub q: Vec<Vec<Vector3<f64>>>,
    pub p: Vec<Vec<Vector3<f64>>>,
    pub energy: f64,
}

/// Velocity induced at `x` by carriers `q` with momenta `p`.
///
/// Both the carrier update in [`shoot`] and the advection in
/// [`flow_points`] go through this one function so that a point started
/// on a carrier reproduces the carrier trajectory bit for bit.
fn velocity_at(
    x: &Vector3<f64>,
    q: &[Vector3<f64>],
    p: &[Vector3<f64>],
    kv: &crate::kernels::RadialProfile,
) -> Vector3<f64> {
    let mut v = Vector3::zeros();
    for (qj, pj) in q.iter().zip(p) {
        let d = x - qj;
        v += kv.eval(d.norm_squared()) * pj;
    }
    v
}

fn check_finite(points: &[Vector3<f64>], step: usize) -> Result<()> {
    for pt in points {
        if !(pt.x.is_finite() && pt.y.is_finite() && pt.z.is_finite()) {
            return Err(Error::Divergence { step });
        }
    }
    Ok(())
}

/// Integrates the Hamiltonian system of the deformation kernel from the
/// initial carrier configuration, with forward Euler on `[0, 1]`.
///
/// The reported energy is the left-endpoint Riemann sum of the squared
/// velocity-field norm, `(1/n_steps) * sum_t sum_ij k(q_i, q_j) <p_i, p_j>`.
pub fn shoot(
    q0: &[Vector3<f64>],
    p0: &[Vector3<f64>],
    cfg: &DeformationConfig,
) -> Result<ShootingState> {
    cfg.validate()?;
    if q0.is_empty() || q0.len() != p0.len() {
        return Err(Error::InvalidArgument(format!(
            "carrier and momentum counts must match and be positive, got {} and {}",
            q0.len(),
            p0.len()
        )));
    }
    check_finite(q0, 0)?;
    check_finite(p0, 0)?;
    let kv = cfg.kernel_v.radial_profile()?;
    let h = cfg.step_len();
    let n = q0.len();

    let mut qs = Vec::with_capacity(cfg.n_steps + 1);
    let mut ps = Vec::with_capacity(cfg.n_steps + 1);
    qs.push(q0.to_vec());
    ps.push(p0.to_vec());
    let mut energy = 0.0;

    for t in 0..cfg.n_steps {
        let (q, p) = (&qs[t], &ps[t]);
        let mut q_next = Vec::with_capacity(n);
        let mut p_next = Vec::with_capacity(n);
        for i in 0..n {
            let u = velocity_at(&q[i], q, p, &kv);
            energy += h * u.dot(&p[i]);
            // dp_i/dt = -d/dq_i of the Hamiltonian: pairwise radial pull.
            let mut w = Vector3::zeros();
            for j in 0..n {
                let d = q[i] - q[j];
                w -= 2.0 * kv.d1(d.norm_squared()) * p[i].dot(&p[j]) * d;
            }
            q_next.push(q[i] + h * u);
            p_next.push(p[i] + h * w);
        }
        check_finite(&q_next, t + 1)?;
        check_finite(&p_next, t + 1)?;
        qs.push(q_next);
        ps.push(p_next);
    }
    Ok(ShootingState {
        q: qs,
        p: ps,
        energy: energy.max(0.0),
    })
}

/// Advects `x0` through the velocity fields of a shooting trajectory and
/// returns every intermediate configuration, `x0` first.
pub(crate) fn flow_trajectory(
    x0: &[Vector3<f64>],
    state: &ShootingState,
    cfg: &DeformationConfig,
) -> Result<Vec<Vec<Vector3<f64>>>> {
    cfg.validate()?;
    if state.q.len() != cfg.n_steps + 1 || state.p.len() != cfg.n_steps + 1 {
        return Err(Error::InvalidArgument(format!(
            "shooting state holds {} configurations but the configuration asks for {} steps",
            state.q.len(),
            cfg.n_steps
        )));
    }
    check_finite(x0, 0)?;
    let kv = cfg.kernel_v.radial_profile()?;
    let h = cfg.step_len();

    let mut levels = Vec::with_capacity(cfg.n_steps + 1);
    levels.push(x0.to_vec());
    for t in 0..cfg.n_steps {
        let (q, p) = (&state.q[t], &state.p[t]);
        let prev = &levels[t];
        let next: Vec<Vector3<f64>> = prev
            .iter()
            .map(|x| x + h * velocity_at(x, q, p, &kv))
            .collect();
        check_finite(&next, t + 1)?;
        levels.push(next);
    }
    Ok(levels)
}

/// End positions of points advected by a shooting trajectory. Passing the
/// carriers themselves reproduces `state.q` exactly.
pub fn flow_points(
    x0: &[Vector3<f64>],
    state: &ShootingState,
    cfg: &DeformationConfig,
) -> Result<Vec<Vector3<f64>>> {
    Ok(flow_trajectory(x0, state, cfg)?.pop().expect("non-empty"))
}

/// What a matching run deforms the template towards.
#[derive(Debug, Clone)]
pub enum MatchTarget {
    Mesh(TriangleMesh),
    Measure(DiracMeasure),
}

/// Measure-side choices of a matching run: representation, matching
/// kernel, and how hard to compress each side.
#[derive(Debug, Clone)]
pub struct MatchOptions {
    pub representation: Representation,
    pub kernel: KernelSpec,
    pub sampler: SamplerKind,
    pub sampler_config: SamplerConfig,
    /// Number of control triangles; `None` keeps every atom as a control.
    pub m_template: Option<usize>,
    /// Compressed size of the target measure; `None` keeps it as given.
    pub m_target: Option<usize>,
    pub seed: u64,
}

/// One gradient-descent iteration of [`compressed_match`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Deformation energy at the iterate.
    pub energy: f64,
    /// Unweighted squared measure discrepancy at the iterate.
    pub data_term: f64,
    /// energy + lambda_match * data_term.
    pub total: f64,
    /// Accepted step size (0 on the final record if no step was taken).
    pub step_size: f64,
    pub wall_time_s: f64,
}

/// Outcome of [`compressed_match`].
#[derive(Debug, Clone)]
pub struct MatchResult {
    /// Optimized initial momenta, one per control triangle.
    pub p0: Vec<Vector3<f64>>,
    /// Control triangles fixed at the start of the run.
    pub controls: ControlSet,
    pub iterations: Vec<IterationRecord>,
    pub deformed_template: TriangleMesh,
    /// Hausdorff distance between the deformed template vertices and the
    /// target vertex set (atom positions when the target is a measure).
    pub hausdorff: f64,
    pub wall_time_s: f64,
}

fn expected_space(rep: Representation) -> BaseSpace {
    match rep {
        Representation::Current => BaseSpace::Euclidean { dim: 3 },
        Representation::Varifold => BaseSpace::Oriented { dim: 3 },
    }
}

/// Template measure with atom index equal to triangle index, as the
/// matching loop requires. For varifolds that rules out zero-area
/// triangles, which have no orientation atom.
fn template_measure(mesh: &TriangleMesh, rep: Representation) -> Result<DiracMeasure> {
    let (measure, dropped) = measure_of_mesh(mesh, rep)?;
    if dropped > 0 {
        return Err(Error::InvalidArgument(format!(
            "template has {dropped} zero-area triangles; varifold matching needs all \
             triangles non-degenerate"
        )));
    }
    Ok(measure)
}

fn target_points(target: &MatchTarget) -> Vec<Vector3<f64>> {
    match target {
        MatchTarget::Mesh(mesh) => mesh.vertices().to_vec(),
        MatchTarget::Measure(mu) => {
            let d = mu.space().dim();
            (0..mu.n())
                .map(|i| {
                    let row = mu.points().row(i);
                    debug_assert!(d == 3);
                    Vector3::new(row[0], row[1], row[2])
                })
                .collect()
        }
    }
}

/// Registers a template mesh to a target by gradient descent on the
/// initial momenta of a geodesic flow.
///
/// Control triangles are sampled once on the template measure and stay
/// fixed; each objective evaluation re-projects the deformed measure onto
/// the transported control atoms. The target, when requested, is
/// compressed up front with an independent seed (`seed + 1`). The loop
/// stops after `cfg.max_iters` iterations, when the relative objective
/// decrease falls below `1e-6`, or when backtracking cannot find a
/// descending step.
pub fn compressed_match(
    template: &TriangleMesh,
    target: &MatchTarget,
    cfg: &DeformationConfig,
    opts: &MatchOptions,
) -> Result<MatchResult> {
    let start = Instant::now();
    cfg.validate()?;
    if cfg.lambda_match <= 0.0 {
        return Err(Error::InvalidArgument(
            "matching requires a positive lambda_match".into(),
        ));
    }
    let rep = opts.representation;
    let mu_template = template_measure(template, rep)?;
    opts.kernel.compatible_with(mu_template.space())?;

    let n = mu_template.n();
    let m = opts.m_template.unwrap_or(n);
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "m_template must lie in 1..={n}, got {m}"
        )));
    }
    let controls = if m == n {
        ControlSet {
            indices: (0..n).collect(),
            sampler: opts.sampler,
            seed: opts.seed,
            params: Default::default(),
        }
    } else {
        sample_controls(
            &opts.kernel,
            mu_template.points(),
            opts.sampler,
            &opts.sampler_config,
            m,
            opts.seed,
        )?
    };

    let target_hat = {
        let mut measure = match target {
            MatchTarget::Mesh(mesh) => measure_of_mesh(mesh, rep)?.0,
            MatchTarget::Measure(mu) => {
                if mu.space() != expected_space(rep) {
                    return Err(Error::SpaceMismatch {
                        left: expected_space(rep).to_string(),
                        right: mu.space().to_string(),
                    });
                }
                mu.clone()
            }
        };
        if let Some(mt) = opts.m_target {
            if mt == 0 || mt > measure.n() {
                return Err(Error::InvalidArgument(format!(
                    "m_target must lie in 1..={}, got {mt}",
                    measure.n()
                )));
            }
            if mt < measure.n() {
                let tc = sample_controls(
                    &opts.kernel,
                    measure.points(),
                    opts.sampler,
                    &opts.sampler_config,
                    mt,
                    opts.seed.wrapping_add(1),
                )?;
                measure = project_measure(&measure, &tc, &opts.kernel)?;
            }
        }
        measure
    };

    let problem = MatchProblem::new(
        template,
        &controls.indices,
        rep,
        &opts.kernel,
        &target_hat,
        cfg,
    )?;

    let mut p0 = vec![Vector3::zeros(); controls.indices.len()];
    let mut iterations = Vec::new();
    let mut current = problem.evaluate(&p0, true)?;
    let mut eta = match cfg.step_rule {
        StepRule::Fixed { eta } => eta,
        StepRule::Backtracking => 1.0,
    };
    // Below this the data term is indistinguishable from the rounding
    // noise of the dual metric, so the match is as good as it gets.
    let objective_floor =
        1e-13 * cfg.lambda_match * dual_norm2(&target_hat, &opts.kernel)?.max(1e-300);

    for iteration in 0..cfg.max_iters {
        let iter_start = Instant::now();
        let grad = current.gradient.clone().expect("gradient requested");
        let grad_norm2: f64 = grad.iter().map(|g| g.norm_squared()).sum();
        let gtol = 1e-12 * current.total.abs().max(1.0);
        if current.total <= objective_floor || grad_norm2.sqrt() <= gtol {
            iterations.push(IterationRecord {
                iteration,
                energy: current.energy,
                data_term: current.data_term,
                total: current.total,
                step_size: 0.0,
                wall_time_s: iter_start.elapsed().as_secs_f64(),
            });
            break;
        }

        let accepted: Option<(Vec<Vector3<f64>>, f64)> = match cfg.step_rule {
            StepRule::Fixed { eta } => {
                let trial: Vec<Vector3<f64>> =
                    p0.iter().zip(&grad).map(|(p, g)| p - eta * g).collect();
                Some((trial, eta))
            }
            StepRule::Backtracking => {
                // Restart the search a notch above the last accepted step
                // so a run that needed small steps early can recover.
                let mut step = (eta * 2.0).min(1.0);
                let mut found = None;
                while step > 1e-16 {
                    let trial: Vec<Vector3<f64>> =
                        p0.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
                    let value = problem.evaluate(&trial, false)?;
                    if value.total <= current.total - 1e-4 * step * grad_norm2 {
                        found = Some((trial, step));
                        break;
                    }
                    step *= 0.5;
                }
                found
            }
        };

        let Some((next_p0, step_size)) = accepted else {
            // No descending step exists at resolvable sizes: converged.
            iterations.push(IterationRecord {
                iteration,
                energy: current.energy,
                data_term: current.data_term,
                total: current.total,
                step_size: 0.0,
                wall_time_s: iter_start.elapsed().as_secs_f64(),
            });
            break;
        };

        let previous_total = current.total;
        p0 = next_p0;
        current = problem.evaluate(&p0, true)?;
        eta = step_size;
        iterations.push(IterationRecord {
            iteration,
            energy: current.energy,
            data_term: current.data_term,
            total: current.total,
            step_size,
            wall_time_s: iter_start.elapsed().as_secs_f64(),
        });

        let rel_change = (previous_total - current.total).abs() / previous_total.abs().max(1e-300);
        if rel_change < 1e-6 {
            break;
        }
    }

    let state = shoot(problem.carriers(), &p0, cfg)?;
    let deformed_vertices = flow_points(template.vertices(), &state, cfg)?;
    let deformed_template = TriangleMesh::new(deformed_vertices, template.triangles().to_vec())?;
    let hausdorff = hausdorff_distance(deformed_template.vertices(), &target_points(target))?;

    Ok(MatchResult {
        p0,
        controls,
        iterations,
        deformed_template,
        hausdorff,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
