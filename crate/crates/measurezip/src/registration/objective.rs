//! Matching objective and its reverse-accumulated gradient.
//!
//! The forward pass chains shooting, vertex advection, measure
//! construction, projection onto the transported control atoms, and the
//! dual-metric distance. The backward pass walks the same chain in
//! reverse with explicit vector-Jacobian products; nothing here is
//! approximated, so the gradient agrees with central finite differences
//! to roundoff-limited accuracy.

use nalgebra::{DMatrix, Vector3};

use crate::compress::{measure_from_parts, projection_parts};
use crate::error::{Error, Result};
use crate::kernels::{dual_distance2, KernelSpec, RadialProfile, SphericalProfile};
use crate::measures::{BaseSpace, DiracMeasure, Representation, RowMatrix};
use crate::mesh::{triangle_centroid_normal, TriangleMesh};
use crate::nystrom::validate_indices;

use super::{flow_trajectory, shoot, DeformationConfig};

/// Decomposed objective value; `total = energy + lambda_match * data_term`.
#[derive(Debug, Clone)]
pub struct ObjectiveValue {
    pub energy: f64,
    /// Squared dual-metric distance between the projected deformed
    /// measure and the target, before weighting.
    pub data_term: f64,
    pub total: f64,
    pub gradient: Option<Vec<Vector3<f64>>>,
}

fn dotw(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A matching instance with everything that does not change between
/// objective evaluations resolved up front.
pub(crate) struct MatchProblem<'a> {
    template: &'a TriangleMesh,
    controls: &'a [usize],
    rep: Representation,
    kernel: &'a KernelSpec,
    target: &'a DiracMeasure,
    cfg: &'a DeformationConfig,
    carriers: Vec<Vector3<f64>>,
    spatial: RadialProfile,
    spherical: Option<SphericalProfile>,
    target_pos: Vec<Vector3<f64>>,
    target_dir: Vec<Vector3<f64>>,
}

/// Per-triangle oriented-atom geometry kept for the backward pass.
struct VarifoldGeometry {
    mass: Vec<f64>,
    dir: Vec<Vector3<f64>>,
}

impl<'a> MatchProblem<'a> {
    pub fn new(
        template: &'a TriangleMesh,
        controls: &'a [usize],
        rep: Representation,
        kernel: &'a KernelSpec,
        target: &'a DiracMeasure,
        cfg: &'a DeformationConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        validate_indices(controls, template.n_triangles())?;
        let expected = match rep {
            Representation::Current => BaseSpace::Euclidean { dim: 3 },
            Representation::Varifold => BaseSpace::Oriented { dim: 3 },
        };
        kernel.compatible_with(expected)?;
        if target.space() != expected {
            return Err(Error::SpaceMismatch {
                left: expected.to_string(),
                right: target.space().to_string(),
            });
        }
        let expected_w = match rep {
            Representation::Current => 3,
            Representation::Varifold => 1,
        };
        if target.weight_width() != expected_w {
            return Err(Error::DimensionMismatch(format!(
                "target weights have {} components, expected {expected_w}",
                target.weight_width()
            )));
        }
        let (spatial, spherical) = match rep {
            Representation::Current => (kernel.radial_profile()?, None),
            Representation::Varifold => {
                let (s, sph) = kernel.product_parts()?;
                (s, Some(sph))
            }
        };

        let carriers = controls
            .iter()
            .map(|&c| {
                let [a, b, d] = template.triangles()[c];
                let vs = template.vertices();
                triangle_centroid_normal(&vs[a], &vs[b], &vs[d]).0
            })
            .collect();

        let mut target_pos = Vec::with_capacity(target.n());
        let mut target_dir = Vec::new();
        for t in 0..target.n() {
            let row = target.points().row(t);
            target_pos.push(Vector3::new(row[0], row[1], row[2]));
            if rep == Representation::Varifold {
                target_dir.push(Vector3::new(row[3], row[4], row[5]));
            }
        }

        Ok(Self {
            template,
            controls,
            rep,
            kernel,
            target,
            cfg,
            carriers,
            spatial,
            spherical,
            target_pos,
            target_dir,
        })
    }

    pub fn carriers(&self) -> &[Vector3<f64>] {
        &self.carriers
    }

    /// Spatial and spherical kernel pieces between two oriented atoms;
    /// the spherical factor degenerates to 1 for unoriented atoms.
    fn pair(
        &self,
        xi: &Vector3<f64>,
        xj: &Vector3<f64>,
        ni: Option<&Vector3<f64>>,
        nj: Option<&Vector3<f64>>,
    ) -> PairEval {
        let r2 = (xi - xj).norm_squared();
        let g = self.spatial.eval(r2);
        let d1 = self.spatial.d1(r2);
        let (h, h1) = match (&self.spherical, ni, nj) {
            (Some(sph), Some(a), Some(b)) => {
                let t = a.dot(b);
                (sph.eval(t), sph.d1(t))
            }
            _ => (1.0, 0.0),
        };
        PairEval { g, d1, h, h1 }
    }

    /// Builds the deformed measure's atoms from deformed vertices.
    fn atoms(
        &self,
        verts: &[Vector3<f64>],
    ) -> Result<(DiracMeasure, Vec<Vector3<f64>>, Option<VarifoldGeometry>)> {
        let tris = self.template.triangles();
        let n = tris.len();
        let mut point_rows = Vec::with_capacity(n);
        let mut weight_rows = Vec::with_capacity(n);
        let mut positions = Vec::with_capacity(n);
        let mut geo = match self.rep {
            Representation::Current => None,
            Representation::Varifold => Some(VarifoldGeometry {
                mass: Vec::with_capacity(n),
                dir: Vec::with_capacity(n),
            }),
        };
        for (i, tri) in tris.iter().enumerate() {
            let (pos, nu) =
                triangle_centroid_normal(&verts[tri[0]], &verts[tri[1]], &verts[tri[2]]);
            positions.push(pos);
            match &mut geo {
                None => {
                    point_rows.push(vec![pos.x, pos.y, pos.z]);
                    weight_rows.push(vec![nu.x, nu.y, nu.z]);
                }
                Some(g) => {
                    let mass = nu.norm();
                    if mass == 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "deformed triangle {i} is degenerate; its orientation atom \
                             is undefined"
                        )));
                    }
                    let dir = nu / mass;
                    point_rows.push(vec![pos.x, pos.y, pos.z, dir.x, dir.y, dir.z]);
                    weight_rows.push(vec![mass]);
                    g.mass.push(mass);
                    g.dir.push(dir);
                }
            }
        }
        let measure = DiracMeasure::new(
            self.target.space(),
            RowMatrix::from_rows(point_rows)?,
            RowMatrix::from_rows(weight_rows)?,
        )?;
        Ok((measure, positions, geo))
    }

    /// Objective at `p0`, optionally with its gradient.
    pub fn evaluate(&self, p0: &[Vector3<f64>], want_grad: bool) -> Result<ObjectiveValue> {
        if p0.len() != self.controls.len() {
            return Err(Error::InvalidArgument(format!(
                "got {} momenta for {} control triangles",
                p0.len(),
                self.controls.len()
            )));
        }
        let cfg = self.cfg;
        let lam = cfg.lambda_match;
        let state = shoot(&self.carriers, p0, cfg)?;
        let n_steps = cfg.n_steps;
        let kv = cfg.kernel_v.radial_profile()?;

        // Pure-energy shortcut: with no data weight the advection and
        // measure stages can be skipped entirely.
        if lam == 0.0 {
            let gradient = if want_grad {
                let levels: Vec<Vec<Vector3<f64>>> = vec![Vec::new(); n_steps + 1];
                Some(self.backward(&state, &levels, Vec::new(), &kv))
            } else {
                None
            };
            return Ok(ObjectiveValue {
                energy: state.energy,
                data_term: 0.0,
                total: state.energy,
                gradient,
            });
        }

        let levels = flow_trajectory(self.template.vertices(), &state, cfg)?;
        let (mu_def, positions, geo) = self.atoms(&levels[n_steps])?;
        let parts = projection_parts(&mu_def, self.controls, self.kernel)?;
        let projected = measure_from_parts(&parts, mu_def.space())?;
        let data_term = dual_distance2(&projected, self.target, self.kernel)?;
        let energy = state.energy;
        let total = energy + lam * data_term;

        if !want_grad {
            return Ok(ObjectiveValue {
                energy,
                data_term,
                total,
                gradient: None,
            });
        }

        // ---- Backward through the data term ----
        let m = self.controls.len();
        let n_atoms = mu_def.n();
        let w = mu_def.weight_width();
        let beta = &parts.beta;
        let dirs = geo.as_ref().map(|g| &g.dir);
        let zpos: Vec<Vector3<f64>> = self.controls.iter().map(|&c| positions[c]).collect();
        let zdir: Vec<Vector3<f64>> = match dirs {
            Some(d) => self.controls.iter().map(|&c| d[c]).collect(),
            None => Vec::new(),
        };
        let atom_dir = |i: usize| dirs.map(|d| &d[i]);
        let ctrl_dir = |j: usize| match self.rep {
            Representation::Current => None,
            Representation::Varifold => Some(&zdir[j]),
        };

        // Distance term, by atom: gradients with respect to the projected
        // weights, the control-atom positions and directions.
        let mut beta_bar = DMatrix::<f64>::zeros(m, w);
        let mut zpos_bar = vec![Vector3::<f64>::zeros(); m];
        let mut zdir_bar = vec![Vector3::<f64>::zeros(); m];
        let beta_row = |j: usize| -> Vec<f64> { (0..w).map(|c| beta[(j, c)]).collect() };

        for j in 0..m {
            let bj = beta_row(j);
            for k in 0..m {
                let bk = beta_row(k);
                let pe = self.pair(&zpos[j], &zpos[k], ctrl_dir(j), ctrl_dir(k));
                let c = dotw(&bj, &bk);
                for col in 0..w {
                    beta_bar[(j, col)] += lam * 2.0 * pe.g * pe.h * bk[col];
                }
                zpos_bar[j] += lam * 4.0 * pe.d1 * pe.h * c * (zpos[j] - zpos[k]);
                if pe.h1 != 0.0 {
                    zdir_bar[j] += lam * 2.0 * pe.g * pe.h1 * c * zdir[k];
                }
            }
            for t in 0..self.target.n() {
                let gt = self.target.weights().row(t);
                let nd = self.target_dir.get(t);
                let pe = self.pair(&zpos[j], &self.target_pos[t], ctrl_dir(j), nd);
                let c = dotw(&bj, gt);
                for col in 0..w {
                    beta_bar[(j, col)] -= lam * 2.0 * pe.g * pe.h * gt[col];
                }
                zpos_bar[j] -= lam * 4.0 * pe.d1 * pe.h * c * (zpos[j] - self.target_pos[t]);
                if pe.h1 != 0.0 {
                    zdir_bar[j] -= lam * 2.0 * pe.g * pe.h1 * c * self.target_dir[t];
                }
            }
        }

        // Projection solve K_CC beta = Y: pull beta_bar back through the
        // factorization. The stabilizing diagonal shift is constant (all
        // kernels here have a position-independent diagonal), so it
        // contributes no gradient.
        let y_bar = parts.factor.solve(&beta_bar);
        let mut alpha_bar = DMatrix::<f64>::zeros(n_atoms, w);
        let mut apos_bar = vec![Vector3::<f64>::zeros(); n_atoms];
        let mut adir_bar = vec![Vector3::<f64>::zeros(); n_atoms];

        for j in 0..m {
            let yj: Vec<f64> = (0..w).map(|c| y_bar[(j, c)]).collect();
            // Matrix side: entry (j, k) of the adjoint is -<y_bar_j, beta_k>.
            for k in 0..m {
                if k == j {
                    continue;
                }
                let ca = -dotw(&yj, &beta_row(k));
                let pe = self.pair(&zpos[j], &zpos[k], ctrl_dir(j), ctrl_dir(k));
                let pull = ca * 2.0 * pe.d1 * pe.h * (zpos[j] - zpos[k]);
                zpos_bar[j] += pull;
                zpos_bar[k] -= pull;
                if pe.h1 != 0.0 {
                    zdir_bar[j] += ca * pe.g * pe.h1 * zdir[k];
                    zdir_bar[k] += ca * pe.g * pe.h1 * zdir[j];
                }
            }
            // Right-hand side: Y_j sums kernel-weighted source atoms.
            for i in 0..n_atoms {
                let ai = mu_def.weights().row(i);
                let pe = self.pair(&zpos[j], &positions[i], ctrl_dir(j), atom_dir(i));
                let cy = dotw(&yj, ai);
                let pull = cy * 2.0 * pe.d1 * pe.h * (zpos[j] - positions[i]);
                zpos_bar[j] += pull;
                apos_bar[i] -= pull;
                if pe.h1 != 0.0 {
                    zdir_bar[j] += cy * pe.g * pe.h1 * dirs.expect("oriented")[i];
                    adir_bar[i] += cy * pe.g * pe.h1 * zdir[j];
                }
                for col in 0..w {
                    alpha_bar[(i, col)] += pe.g * pe.h * yj[col];
                }
            }
        }
        for (j, &c) in self.controls.iter().enumerate() {
            apos_bar[c] += zpos_bar[j];
            adir_bar[c] += zdir_bar[j];
        }

        // ---- Atoms back to final vertex positions ----
        let verts_t = &levels[n_steps];
        let mut vbar = vec![Vector3::<f64>::zeros(); verts_t.len()];
        for (i, tri) in self.template.triangles().iter().enumerate() {
            let share = apos_bar[i] / 3.0;
            for &v in tri {
                vbar[v] += share;
            }
            let nu_bar = match &geo {
                None => Vector3::new(alpha_bar[(i, 0)], alpha_bar[(i, 1)], alpha_bar[(i, 2)]),
                Some(g) => {
                    let n = g.dir[i];
                    let nb = adir_bar[i];
                    (nb - nb.dot(&n) * n) / g.mass[i] + alpha_bar[(i, 0)] * n
                }
            };
            let a = verts_t[tri[2]] - verts_t[tri[1]];
            let b = verts_t[tri[1]] - verts_t[tri[0]];
            let a_bar = 0.5 * b.cross(&nu_bar);
            let b_bar = 0.5 * nu_bar.cross(&a);
            vbar[tri[2]] += a_bar;
            vbar[tri[1]] += b_bar - a_bar;
            vbar[tri[0]] -= b_bar;
        }

        Ok(ObjectiveValue {
            energy,
            data_term,
            total,
            gradient: Some(self.backward(&state, &levels, vbar, &kv)),
        })
    }

    /// Reverse sweep through the Euler steps: takes the cotangent of the
    /// final vertex positions and returns the gradient with respect to
    /// the initial momenta. `levels` may be empty vectors when no vertex
    /// was advected (pure-energy objective).
    fn backward(
        &self,
        state: &super::ShootingState,
        levels: &[Vec<Vector3<f64>>],
        vbar_final: Vec<Vector3<f64>>,
        kv: &RadialProfile,
    ) -> Vec<Vector3<f64>> {
        let cfg = self.cfg;
        let h = cfg.step_len();
        let m = self.carriers.len();
        let mut vbar_next = vbar_final;
        let mut qbar_next = vec![Vector3::<f64>::zeros(); m];
        let mut pbar_next = vec![Vector3::<f64>::zeros(); m];

        for t in (0..cfg.n_steps).rev() {
            let (q, p) = (&state.q[t], &state.p[t]);
            let mut qbar = vec![Vector3::<f64>::zeros(); m];
            let mut pbar = vec![Vector3::<f64>::zeros(); m];

            // Advection step: x_{t+1} = x_t + h sum_j k(x_t, q_j) p_j.
            let xs = &levels[t];
            let mut vbar = Vec::with_capacity(xs.len());
            for (a, x) in xs.iter().enumerate() {
                let xb = vbar_next[a];
                let mut acc = xb;
                for j in 0..m {
                    let d = x - q[j];
                    let r2 = d.norm_squared();
                    let k = kv.eval(r2);
                    let d1 = kv.d1(r2);
                    let s = xb.dot(&p[j]);
                    acc += h * 2.0 * d1 * s * d;
                    qbar[j] -= h * 2.0 * d1 * s * d;
                    pbar[j] += h * k * xb;
                }
                vbar.push(acc);
            }
            vbar_next = vbar;

            // Energy term at this step enters the objective directly.
            for i in 0..m {
                for j in 0..m {
                    let d = q[i] - q[j];
                    let r2 = d.norm_squared();
                    qbar[i] += h * 4.0 * kv.d1(r2) * p[i].dot(&p[j]) * d;
                    pbar[i] += h * 2.0 * kv.eval(r2) * p[j];
                }
            }

            // Hamiltonian step: identity part plus the two vector fields.
            for i in 0..m {
                qbar[i] += qbar_next[i];
                pbar[i] += pbar_next[i];
                let u_bar = h * qbar_next[i];
                let w_bar = h * pbar_next[i];
                for j in 0..m {
                    let d = q[i] - q[j];
                    let r2 = d.norm_squared();
                    let k = kv.eval(r2);
                    let d1 = kv.d1(r2);
                    let d2 = kv.d2(r2);
                    // Velocity u_i = sum_j k p_j.
                    let t1 = 2.0 * d1 * u_bar.dot(&p[j]);
                    qbar[i] += t1 * d;
                    qbar[j] -= t1 * d;
                    pbar[j] += k * u_bar;
                    // Momentum pull w_i = -2 sum_j d1 <p_i, p_j> d.
                    let c = p[i].dot(&p[j]);
                    let e = w_bar.dot(&d);
                    pbar[i] -= 2.0 * d1 * e * p[j];
                    pbar[j] -= 2.0 * d1 * e * p[i];
                    let qv = -4.0 * c * d2 * e * d - 2.0 * d1 * c * w_bar;
                    qbar[i] += qv;
                    qbar[j] -= qv;
                }
            }

            qbar_next = qbar;
            pbar_next = pbar;
        }
        pbar_next
    }
}

/// Kernel factors of one atom pair: spatial value `g`, its derivative in
/// the squared distance `d1`, spherical value `h`, its derivative in the
/// dot product `h1`.
struct PairEval {
    g: f64,
    d1: f64,
    h: f64,
    h1: f64,
}

/// Matching objective `energy + lambda * |P_c mu_deformed - target|^2`
/// and its gradient with respect to the initial momenta, one momentum
/// per control triangle.
pub fn objective(
    p0: &[Vector3<f64>],
    template: &TriangleMesh,
    target_hat: &DiracMeasure,
    controls: &crate::nystrom::ControlSet,
    rep: Representation,
    kernel: &KernelSpec,
    cfg: &DeformationConfig,
) -> Result<ObjectiveValue> {
    let problem = MatchProblem::new(template, &controls.indices, rep, kernel, target_hat, cfg)?;
    problem.evaluate(p0, true)
}
