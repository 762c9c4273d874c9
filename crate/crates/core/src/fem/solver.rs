//! Updated-Lagrangian assembly, Newton–Raphson with Dirichlet elimination,
//! and displacement-controlled load programs.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3x6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mesh::Mesh;
use super::shape::{gauss_points, shape_eval, ShapeEval};
use crate::backend::{MaterialBackend, PointRecord, PointTrial};
use crate::error::{Error, Result};
use crate::material::Environment;
use crate::tensor3::{voigt_unpack, Tensor2, Voigt6};

/// Relative residual tolerance of the Newton iteration.
pub const NEWTON_TOL: f64 = 1e-4;
pub const NEWTON_MAX_ITER: usize = 25;
/// Residual (N) below which a step counts as converged whatever the load.
pub const ABSOLUTE_RESIDUAL: f64 = 1e-10;

const GAUSS: usize = 8;

pub struct FeModel {
    pub mesh: Mesh,
    pub env: Environment,
    backend: Arc<dyn MaterialBackend>,
    /// Reference-configuration shape data per element and Gauss point.
    reference: Vec<[ShapeEval; GAUSS]>,
    records: Vec<PointRecord>,
    /// Committed Cauchy stress per Gauss point, element-major.
    pub stresses: Vec<Voigt6>,
    /// Committed nodal displacements, three per node.
    pub u: DVector<f64>,
    /// Internal nodal forces of the committed state.
    pub internal_force: DVector<f64>,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl FeModel {
    pub fn new(mesh: Mesh, env: Environment, backend: Arc<dyn MaterialBackend>) -> Result<FeModel> {
        mesh.validate()?;
        env.validate()?;
        let gp = gauss_points();
        let reference = (0..mesh.elements.len())
            .map(|e| {
                let coords = mesh.element_coords(e);
                let mut out = Vec::with_capacity(GAUSS);
                for xi in &gp {
                    out.push(shape_eval(&coords, xi)?);
                }
                Ok(out.try_into().expect("eight gauss points"))
            })
            .collect::<Result<Vec<_>>>()?;
        let n_points = mesh.elements.len() * GAUSS;
        let ndof = 3 * mesh.nodes.len();
        Ok(FeModel {
            records: (0..n_points).map(|_| backend.new_record()).collect(),
            stresses: vec![Voigt6::zeros(); n_points],
            u: DVector::zeros(ndof),
            internal_force: DVector::zeros(ndof),
            backend,
            reference,
            mesh,
            env,
            newton_tol: NEWTON_TOL,
            newton_max_iter: NEWTON_MAX_ITER,
        })
    }

    pub fn ndof(&self) -> usize {
        3 * self.mesh.nodes.len()
    }

    pub fn backend(&self) -> &dyn MaterialBackend {
        self.backend.as_ref()
    }

    /// Deformation gradient at a Gauss point for displacements `u`.
    pub fn deformation_gradient(&self, u: &DVector<f64>, element: usize, gauss_point: usize) -> Tensor2 {
        let s = &self.reference[element][gauss_point];
        let mut f = Tensor2::identity();
        for (a, &node) in self.mesh.elements[element].iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    f[(i, j)] += u[3 * node + i] * s.grad[a][j];
                }
            }
        }
        f
    }
}

/// Internal forces, tangent stiffness and the material trials behind them.
pub struct Assembly {
    pub internal_force: DVector<f64>,
    pub stiffness: DMatrix<f64>,
    pub trials: Vec<PointTrial>,
    pub stresses: Vec<Voigt6>,
    /// Wall time spent inside the material backend, seconds.
    pub material_seconds: f64,
}

struct ElementContribution {
    force: [f64; 24],
    stiffness: Box<[[f64; 24]; 24]>,
    trials: Vec<PointTrial>,
    stresses: [Voigt6; GAUSS],
    seconds: f64,
}

/// Strain-displacement rows (11, 22, 33, 12, 13, 23) of one node, shear rows
/// as engineering strains.
fn b_matrix(g: &[f64; 3]) -> Matrix3x6<f64> {
    // stored transposed: column k is the strain row k
    Matrix3x6::new(
        g[0], 0.0, 0.0, g[1], g[2], 0.0, //
        0.0, g[1], 0.0, g[0], 0.0, g[2], //
        0.0, 0.0, g[2], 0.0, g[0], g[1],
    )
}

fn element_contribution(model: &FeModel, u: &DVector<f64>, e: usize, dt: f64) -> Result<ElementContribution> {
    let mut out = ElementContribution {
        force: [0.0; 24],
        stiffness: Box::new([[0.0; 24]; 24]),
        trials: Vec::with_capacity(GAUSS),
        stresses: [Voigt6::zeros(); GAUSS],
        seconds: 0.0,
    };
    for g in 0..GAUSS {
        let f = model.deformation_gradient(u, e, g);
        let j = f.determinant();
        if !(j > 0.0) {
            return Err(Error::GaussPoint {
                element: e,
                gauss_point: g,
                source: Box::new(Error::NonPositiveJacobian { det: j }),
            });
        }
        let f_inv_t = f.try_inverse().expect("positive determinant").transpose();
        let start = Instant::now();
        let response = model
            .backend
            .evaluate(&model.records[e * GAUSS + g], &f, dt, &model.env, true)
            .map_err(|source| Error::GaussPoint {
                element: e,
                gauss_point: g,
                source: Box::new(source),
            })?;
        out.seconds += start.elapsed().as_secs_f64();

        let reference = &model.reference[e][g];
        let dv = j * reference.det_j;
        // spatial gradients ∂N/∂x = F⁻ᵀ ∂N/∂X
        let grads: [[f64; 3]; 8] = reference.grad.map(|gx| {
            let v = f_inv_t * nalgebra::Vector3::from(gx);
            [v[0], v[1], v[2]]
        });
        let sigma = voigt_unpack(&response.stress);
        let c = {
            let t = response.tangent;
            (t + t.transpose()) * 0.5
        };
        let bs: [Matrix3x6<f64>; 8] = grads.map(|gr| b_matrix(&gr));
        for a in 0..8 {
            let ga = nalgebra::Vector3::from(grads[a]);
            let fa = sigma * ga * dv;
            for i in 0..3 {
                out.force[3 * a + i] += fa[i];
            }
            let bc: Matrix3x6<f64> = bs[a] * c;
            let sg = sigma * ga;
            for b in 0..8 {
                let kab = bc * bs[b].transpose() * dv;
                let geo = sg.dot(&nalgebra::Vector3::from(grads[b])) * dv;
                for i in 0..3 {
                    for k in 0..3 {
                        out.stiffness[3 * a + i][3 * b + k] += kab[(i, k)] + if i == k { geo } else { 0.0 };
                    }
                }
            }
        }
        out.stresses[g] = response.stress;
        out.trials.push(response.trial);
    }
    Ok(out)
}

/// Internal force vector and stiffness at displacements `u`, using the
/// committed material records and time step `dt`.
pub fn assemble(model: &FeModel, u: &DVector<f64>, dt: f64) -> Result<Assembly> {
    let ndof = model.ndof();
    if u.len() != ndof {
        return Err(Error::Shape(format!("{} displacement values for {ndof} dofs", u.len())));
    }
    let parts = (0..model.mesh.elements.len())
        .into_par_iter()
        .map(|e| element_contribution(model, u, e, dt))
        .collect::<Result<Vec<_>>>()?;
    let mut asm = Assembly {
        internal_force: DVector::zeros(ndof),
        stiffness: DMatrix::zeros(ndof, ndof),
        trials: Vec::with_capacity(parts.len() * GAUSS),
        stresses: Vec::with_capacity(parts.len() * GAUSS),
        material_seconds: 0.0,
    };
    for (e, part) in parts.into_iter().enumerate() {
        let dofs: Vec<usize> = model.mesh.elements[e].iter().flat_map(|&n| [3 * n, 3 * n + 1, 3 * n + 2]).collect();
        for (p, &dp) in dofs.iter().enumerate() {
            asm.internal_force[dp] += part.force[p];
            for (q, &dq) in dofs.iter().enumerate() {
                asm.stiffness[(dp, dq)] += part.stiffness[p][q];
            }
        }
        asm.trials.extend(part.trials);
        asm.stresses.extend(part.stresses);
        asm.material_seconds += part.seconds;
    }
    Ok(asm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    /// Residual evaluations, including the converged one.
    pub iterations: usize,
    /// Relative residual after each evaluation.
    pub residuals: Vec<f64>,
    pub material_seconds: f64,
}

/// Solves one load step: `prescribed` holds `(dof, displacement)` pairs,
/// every other dof is free. On success the material records, stresses and
/// displacements are committed; on failure the model is left unchanged.
///
/// The relative residual is the norm of the free-dof internal forces over the
/// norm of all internal forces.
pub fn newton_solve(model: &mut FeModel, prescribed: &[(usize, f64)], dt: f64) -> Result<NewtonReport> {
    let ndof = model.ndof();
    let mut is_fixed = vec![false; ndof];
    let mut u = model.u.clone();
    for &(dof, value) in prescribed {
        if dof >= ndof {
            return Err(Error::InvalidConfig(format!("prescribed dof {dof} out of range ({ndof} dofs)")));
        }
        is_fixed[dof] = true;
        u[dof] = value;
    }
    let free: Vec<usize> = (0..ndof).filter(|&d| !is_fixed[d]).collect();
    let mut report = NewtonReport {
        iterations: 0,
        residuals: Vec::new(),
        material_seconds: 0.0,
    };
    let mut last = f64::INFINITY;
    for it in 1..=model.newton_max_iter {
        let asm = assemble(model, &u, dt)?;
        report.iterations = it;
        report.material_seconds += asm.material_seconds;
        let r_free = DVector::from_iterator(free.len(), free.iter().map(|&d| asm.internal_force[d]));
        let abs = r_free.norm();
        let total = asm.internal_force.norm();
        let rel = if total > 0.0 { abs / total } else { 0.0 };
        report.residuals.push(rel);
        last = rel;
        if !rel.is_finite() {
            break;
        }
        if rel < model.newton_tol || abs < ABSOLUTE_RESIDUAL {
            for (record, trial) in model.records.iter_mut().zip(asm.trials) {
                model.backend.commit(record, trial)?;
            }
            model.stresses = asm.stresses;
            model.internal_force = asm.internal_force;
            model.u = u;
            return Ok(report);
        }
        if it == model.newton_max_iter {
            break;
        }
        let k_ff = DMatrix::from_fn(free.len(), free.len(), |i, j| asm.stiffness[(free[i], free[j])]);
        let du = k_ff.lu().solve(&(-r_free)).ok_or(Error::Singular { det: 0.0 })?;
        for (k, &d) in free.iter().enumerate() {
            u[d] += du[k];
        }
    }
    Err(Error::NewtonNonConvergence {
        iterations: report.iterations,
        residual: last,
    })
}

/// Displacement-controlled program: piecewise-linear `(time s, displacement
/// mm)` knots sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadProgram {
    pub knots: Vec<[f64; 2]>,
    pub dt: f64,
}

impl LoadProgram {
    /// Triangle cycles `0 → amplitude → 0` at displacement rate `rate` mm/s.
    pub fn cyclic(amplitude: f64, rate: f64, cycles: usize, dt: f64) -> LoadProgram {
        let half = amplitude / rate;
        let mut knots = vec![[0.0, 0.0]];
        for c in 0..cycles {
            let t0 = 2.0 * half * c as f64;
            knots.push([t0 + half, amplitude]);
            knots.push([t0 + 2.0 * half, 0.0]);
        }
        LoadProgram { knots, dt }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("program time step must be positive, got {}", self.dt)));
        }
        match self.knots.first() {
            Some(&[t, u]) if t == 0.0 && u == 0.0 => {}
            _ => return Err(Error::InvalidConfig("program must start with the knot (0, 0)".into())),
        }
        if self.knots.windows(2).any(|w| !(w[1][0] > w[0][0])) || self.knots.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("program knots must be finite with increasing times".into()));
        }
        Ok(())
    }

    pub fn end_time(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k[0])
    }

    pub fn displacement_at(&self, t: f64) -> f64 {
        for w in self.knots.windows(2) {
            let ([t0, u0], [t1, u1]) = (w[0], w[1]);
            if t <= t1 {
                return u0 + (u1 - u0) * ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            }
        }
        self.knots.last().map_or(0.0, |k| k[1])
    }

    /// Sample times after 0; the last one is the end time.
    pub fn times(&self) -> Vec<f64> {
        let end = self.end_time();
        let n = (end / self.dt - 1e-9).ceil().max(0.0) as usize;
        (1..=n).map(|k| (k as f64 * self.dt).min(end)).collect()
    }
}

/// Fixed and driven dofs of a displacement-controlled test.
#[derive(Debug, Clone, PartialEq)]
pub struct Dirichlet {
    pub fixed: Vec<usize>,
    /// Dofs that follow the program displacement.
    pub driven: Vec<usize>,
}

impl Dirichlet {
    /// Tension along `axis`: the three minimum faces are symmetry planes
    /// (normal displacement zero), the maximum face along `axis` is pulled.
    pub fn uniaxial(mesh: &Mesh, axis: usize) -> Dirichlet {
        let tol = |d: usize| {
            let (lo, hi) = mesh.extent(d);
            1e-9 * (hi - lo).abs().max(1.0)
        };
        let mut fixed = Vec::new();
        for d in 0..3 {
            let (lo, _) = mesh.extent(d);
            fixed.extend(mesh.nodes_at(d, lo, tol(d)).into_iter().map(|n| 3 * n + d));
        }
        let (_, hi) = mesh.extent(axis);
        let driven = mesh.nodes_at(axis, hi, tol(axis)).into_iter().map(|n| 3 * n + axis).collect();
        fixed.sort_unstable();
        Dirichlet { fixed, driven }
    }

    pub fn prescribed(&self, displacement: f64) -> Vec<(usize, f64)> {
        self.fixed
            .iter()
            .map(|&d| (d, 0.0))
            .chain(self.driven.iter().map(|&d| (d, displacement)))
            .collect()
    }

    /// Total internal force on the driven dofs, i.e. the applied load.
    pub fn reaction(&self, internal_force: &DVector<f64>) -> f64 {
        self.driven.iter().map(|&d| internal_force[d]).sum()
    }
}

/// One row of a force–displacement table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProgramRow {
    pub displacement: f64,
    pub force: f64,
    pub time: f64,
    pub newton_iterations: usize,
    pub material_seconds: f64,
}

/// Runs `program` on `model`; the first row is the undeformed state.
pub fn run_program(model: &mut FeModel, program: &LoadProgram, bc: &Dirichlet) -> Result<Vec<ProgramRow>> {
    program.validate()?;
    let mut rows = vec![ProgramRow {
        displacement: 0.0,
        force: bc.reaction(&model.internal_force),
        time: 0.0,
        newton_iterations: 0,
        material_seconds: 0.0,
    }];
    let mut t_prev = 0.0;
    for (step, t) in program.times().into_iter().enumerate() {
        let disp = program.displacement_at(t);
        let report = newton_solve(model, &bc.prescribed(disp), t - t_prev).map_err(|e| e.at_step(step + 1))?;
        rows.push(ProgramRow {
            displacement: disp,
            force: bc.reaction(&model.internal_force),
            time: t,
            newton_iterations: report.iterations,
            material_seconds: report.material_seconds,
        });
        t_prev = t;
    }
    Ok(rows)
}

pub fn write_program_csv(location: &Path, comments: &[String], rows: &[ProgramRow]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(location)?);
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "displacement_mm,force_N,time_s,newton_iterations,material_seconds")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.displacement, r.force, r.time, r.newton_iterations, r.material_seconds
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Mean absolute difference of the forces of two tables sampled at the same
/// displacements.
pub fn force_mae(a: &[ProgramRow], b: &[ProgramRow]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!("tables of {} and {} rows", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x.force - y.force).abs()).sum::<f64>() / a.len() as f64)
}
