//! Backward-Euler integration of the internal variables and the
//! perturbation tangent.
//!
//! One step solves for the viscous (`F_v`) and viscoplastic (`F_vp`)
//! deformation gradients at the end of the increment with a fixed-point loop:
//!
//! 1. split the new isochoric gradient with the current iterate into the
//!    viscoelastic `F_ve = F_iso F_vp⁻¹` and elastic `F_e = F_ve F_v⁻¹` parts,
//! 2. update `F_v` from the Argon flow of the non-equilibrium stress,
//! 3. update `F_vp` from the viscoplastic flow of the total stress,
//! 4. stop when neither gradient moves by more than the tolerance.
//!
//! Stresses and damage are evaluated once the loop has converged.

use serde::{Deserialize, Serialize};

use super::model::{
    athermal_yield_stress, chain_stretch, damage_update, mechanical_kinematics, stress, viscoplastic_flow_rate,
    viscous_flow_rate, viscous_log_rate_slope, StressResult,
};
use super::params::{Environment, FixedPointScheme, MaterialParams};
use crate::error::{Error, Result};
use crate::tensor3::{ddot, dev, green_strain, inverse, left_cauchy_green, polar_rotation, sym_basis, Tangent66, Tensor2, VOIGT_PAIRS};

/// Fixed-point tolerance used for the perturbed re-integrations of the
/// tangent; a difference quotient with step `α` amplifies iteration error
/// by `1/α`.
pub const TANGENT_FP_TOL: f64 = 1e-12;

/// Norm of `dev(Cₑ)` below which the viscous flow direction is rounding
/// noise and no viscous flow is applied. The Argon rate is positive even at
/// zero stress, so without a floor a state at `F = I` plus round-off would
/// flow along an arbitrary direction.
const DIRECTION_FLOOR: f64 = 1e-12;

/// Internal variables of one material point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialState {
    /// Isochoric viscous deformation gradient.
    pub f_v: Tensor2,
    /// Isochoric viscoplastic deformation gradient.
    pub f_vp: Tensor2,
    /// High-water mark of the chain stretch.
    pub lambda_max: f64,
    /// Scalar damage in `[0, 1)`.
    pub d: f64,
    /// Effective Green-strain norm at which viscoplastic flow was activated.
    pub eps_onset: Option<f64>,
    /// Deformation gradient of the last converged step.
    pub f_prev: Tensor2,
}

impl Default for MaterialState {
    fn default() -> Self {
        MaterialState::virgin()
    }
}

impl MaterialState {
    pub fn virgin() -> Self {
        MaterialState {
            f_v: Tensor2::identity(),
            f_vp: Tensor2::identity(),
            lambda_max: 1.0,
            d: 0.0,
            eps_onset: None,
            f_prev: Tensor2::identity(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("F_v", &self.f_v), ("F_vp", &self.f_vp)] {
            let det = f.determinant();
            if !((det - 1.0).abs() <= 1e-6) {
                return Err(Error::InvalidParams(format!("{name} is not isochoric (det = {det})")));
            }
        }
        if !(0.0..1.0).contains(&self.d) {
            return Err(Error::InvalidParams(format!("damage {} outside [0, 1)", self.d)));
        }
        if !(self.lambda_max >= 1.0 - 1e-12) {
            return Err(Error::InvalidParams(format!("lambda_max {} below 1", self.lambda_max)));
        }
        Ok(())
    }
}

/// Outcome of one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub state: MaterialState,
    pub stress: StressResult,
    /// Fixed-point sweeps used.
    pub iterations: usize,
    /// Scalar flow-rate solves summed over all sweeps.
    pub inner_iterations: usize,
}

/// Advances `state` to the deformation gradient `f_new` over `dt` seconds.
///
/// `f_new` is measured from the freely swollen, stress-free configuration.
pub fn integrate_step(
    state: &MaterialState,
    f_new: &Tensor2,
    dt: f64,
    env: &Environment,
    params: &MaterialParams,
) -> Result<StepResult> {
    integrate_with_tol(state, f_new, dt, env, params, params.fp_tol)
}

fn integrate_with_tol(
    state: &MaterialState,
    f_new: &Tensor2,
    dt: f64,
    env: &Environment,
    params: &MaterialParams,
    tol: f64,
) -> Result<StepResult> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
    }
    let kin = mechanical_kinematics(f_new, env, params)?;
    let x = super::model::amplification_factor(env)?;
    let c_eq = x * params.mu_eq0 / kin.j;
    let c_neq = x * params.mu_neq0 / kin.j;

    let lambda = chain_stretch(&left_cauchy_green(&kin.f_iso))?;
    let lambda_max = state.lambda_max.max(lambda);
    let tau_0 = athermal_yield_stress(lambda_max, params);

    let e_new = green_strain(f_new);
    let eps_eff = e_new.norm();
    let eps_rate = (e_new - green_strain(&state.f_prev)).norm() / dt;

    let fv_old_inv = inverse(&state.f_v)?;
    let mut f_v = state.f_v;
    let mut f_vp = state.f_vp;
    let mut iterations = 0;
    let mut inner_iterations = 0;
    let mut residual = f64::INFINITY;

    while iterations < params.fp_max_iter {
        iterations += 1;
        let f_ve = kin.f_iso * inverse(&f_vp)?;
        let f_e = f_ve * inverse(&f_v)?;

        // Viscous branch. The relaxed-configuration stress Rₑᵀ σ_neq Rₑ equals
        // c_neq dev(Fₑᵀ Fₑ), so the flow direction needs no explicit rotation.
        // The implicit scheme takes the direction from the trial elastic state:
        // near full relaxation the updated deviator is a small difference of
        // large terms and re-estimating the direction from it diverges.
        let fe_trial = f_ve * fv_old_inv;
        let c_e = match params.fp_scheme {
            FixedPointScheme::ImplicitRate => fe_trial.transpose() * fe_trial,
            FixedPointScheme::Plain => f_e.transpose() * f_e,
        };
        let dev_ce = dev(&c_e);
        let n_norm = dev_ce.norm();
        let f_v_next = if n_norm > DIRECTION_FLOOR {
            let n = dev_ce / n_norm;
            let increment = match params.fp_scheme {
                FixedPointScheme::ImplicitRate => {
                    let line = ViscousLine {
                        fe_trial,
                        n,
                        c_neq,
                        tau_0,
                        dt,
                        params,
                    };
                    let (g, it) = line.solve()?;
                    inner_iterations += it;
                    g
                }
                FixedPointScheme::Plain => {
                    let tau_neq = c_neq * dev(&left_cauchy_green(&f_e)).norm();
                    dt * viscous_flow_rate(tau_neq, tau_0, params)
                }
            };
            let next = match params.fp_scheme {
                FixedPointScheme::ImplicitRate => inverse(&(Tensor2::identity() - n * increment))? * state.f_v,
                FixedPointScheme::Plain => state.f_v + n * f_v * increment,
            };
            project_isochoric(&next)?
        } else {
            state.f_v
        };

        // Viscoplastic branch, driven by the total deviatoric stress.
        let sigma_dev = dev(&left_cauchy_green(&f_ve)) * c_eq + dev(&left_cauchy_green(&f_e)) * c_neq;
        let tau_tot = sigma_dev.norm();
        let rate_vp = viscoplastic_flow_rate(tau_tot, eps_eff, state.eps_onset, eps_rate, params);
        let f_vp_next = if rate_vp > 0.0 && tau_tot > 0.0 {
            let r_ve = polar_rotation(&f_ve)?;
            let n_vp = r_ve.transpose() * sigma_dev * r_ve / tau_tot;
            let next = match params.fp_scheme {
                FixedPointScheme::ImplicitRate => inverse(&(Tensor2::identity() - n_vp * (dt * rate_vp)))? * state.f_vp,
                FixedPointScheme::Plain => state.f_vp + n_vp * f_vp * (dt * rate_vp),
            };
            project_isochoric(&next)?
        } else {
            state.f_vp
        };

        residual = (f_v_next - f_v).norm().max((f_vp_next - f_vp).norm());
        f_v = f_v_next;
        f_vp = f_vp_next;
        if !residual.is_finite() {
            break;
        }
        if residual < tol {
            return Ok(finish(state, f_new, &kin, f_v, f_vp, lambda, eps_eff, env, params, iterations, inner_iterations)?);
        }
    }
    Err(Error::NonConvergence { iterations, residual })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    state: &MaterialState,
    f_new: &Tensor2,
    kin: &super::model::Kinematics,
    f_v: Tensor2,
    f_vp: Tensor2,
    lambda: f64,
    eps_eff: f64,
    env: &Environment,
    params: &MaterialParams,
    iterations: usize,
    inner_iterations: usize,
) -> Result<StepResult> {
    let f_ve = kin.f_iso * inverse(&f_vp)?;
    let f_e = f_ve * inverse(&f_v)?;
    let (d, lambda_max) = damage_update(state.d, state.lambda_max, lambda, params);
    let stress = stress(&f_ve, &f_e, kin.j_m, kin.j, d, env, params)?;
    let eps_onset = match state.eps_onset {
        Some(onset) => Some(onset),
        None if dev(&(stress.sigma_eq + stress.sigma_neq)).norm() >= params.sigma_0 => Some(eps_eff),
        None => None,
    };
    Ok(StepResult {
        state: MaterialState {
            f_v,
            f_vp,
            lambda_max,
            d,
            eps_onset,
            f_prev: *f_new,
        },
        stress,
        iterations,
        inner_iterations,
    })
}

fn project_isochoric(f: &Tensor2) -> Result<Tensor2> {
    let det = f.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::NonPositiveJacobian { det });
    }
    Ok(f * det.powf(-1.0 / 3.0))
}

/// Viscous flow along a fixed direction `n`: the elastic gradient after an
/// increment `x` is `Fₑ(x) = Fₑ,trial (I − x n)`, and the backward-Euler
/// condition is `x = Δt ε̇_v(τ(x))`.
struct ViscousLine<'a> {
    fe_trial: Tensor2,
    n: Tensor2,
    c_neq: f64,
    tau_0: f64,
    dt: f64,
    params: &'a MaterialParams,
}

impl ViscousLine<'_> {
    /// Driving stress and its derivative with respect to the increment.
    fn tau_and_slope(&self, x: f64) -> (f64, f64) {
        let m = Tensor2::identity() - self.n * x;
        let fe = self.fe_trial * m;
        let dev_b = dev(&left_cauchy_green(&fe));
        let norm = dev_b.norm();
        let tau = self.c_neq * norm;
        if norm <= 0.0 {
            return (tau, 0.0);
        }
        let db = -(self.fe_trial * (self.n * m.transpose() + m * self.n.transpose()) * self.fe_trial.transpose());
        (tau, self.c_neq * ddot(&dev_b, &db) / norm)
    }

    /// Minimiser of τ on `[lo, hi]`, given decreasing τ at `lo` and
    /// increasing τ at `hi`.
    fn minimiser(&self, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.tau_and_slope(mid).1 < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        lo
    }

    fn ln_target(&self, tau: f64) -> f64 {
        self.dt.ln() + viscous_flow_rate(tau, self.tau_0, self.params).ln()
    }

    /// Returns the flow increment and the number of scalar iterations.
    fn solve(&self) -> Result<(f64, usize)> {
        let (tau_tr, slope_0) = self.tau_and_slope(0.0);
        let x_up = self.dt * viscous_flow_rate(tau_tr, self.tau_0, self.params);
        if !(x_up > 0.0) {
            return Ok((0.0, 0));
        }
        // The root lies where τ(x) is still decreasing; bracket it from above.
        let mut hi = x_up;
        if slope_0 < 0.0 {
            hi = hi.min(tau_tr / -slope_0);
        }
        let g = |x: f64| x - self.dt * viscous_flow_rate(self.tau_and_slope(x).0, self.tau_0, self.params);
        // Walk towards the zero of τ(x) with Newton steps. If a step passes
        // the minimum of τ without reaching a root, the best this direction
        // can do is the minimiser; the outer sweep then refreshes `n`.
        let mut lo = 0.0;
        let mut grow = 0;
        while g(hi) < 0.0 {
            let (tau, slope) = self.tau_and_slope(hi);
            grow += 1;
            if grow > 200 {
                return Err(Error::NonConvergence { iterations: grow, residual: g(hi) });
            }
            if slope >= 0.0 {
                let x_min = self.minimiser(lo, hi);
                if g(x_min) < 0.0 {
                    return Ok((x_min, grow));
                }
                hi = x_min;
                break;
            }
            lo = hi;
            hi += tau / -slope;
        }
        let x_floor = self.dt * viscous_flow_rate(self.tau_and_slope(hi).0, self.tau_0, self.params);
        if x_floor >= hi {
            return Ok((hi, 1));
        }
        let mut y_lo = x_floor.ln();
        let mut y_hi = hi.ln();
        let mut y = y_hi;
        for it in 1..=200 {
            let x = y.exp();
            let (tau, slope) = self.tau_and_slope(x);
            let h = y - self.ln_target(tau);
            if h == 0.0 {
                return Ok((x, it));
            }
            if h > 0.0 {
                y_hi = y;
            } else {
                y_lo = y;
            }
            let dh = 1.0 - x * viscous_log_rate_slope(tau, self.tau_0, self.params) * slope;
            let mut y_next = y - h / dh;
            if !(dh > 0.0) || !(y_next > y_lo && y_next < y_hi) {
                y_next = 0.5 * (y_lo + y_hi);
            }
            if (y_next - y).abs() <= 1e-13 * y.abs().max(1.0) || (y_hi - y_lo) <= 1e-13 * y.abs().max(1.0) {
                return Ok((y_next.exp(), it));
            }
            y = y_next;
        }
        Err(Error::NonConvergence {
            iterations: 200,
            residual: y_hi - y_lo,
        })
    }
}

/// Kirchhoff stress `J σ_tot,d` after integrating to `f`.
fn kirchhoff(state: &MaterialState, f: &Tensor2, dt: f64, env: &Environment, params: &MaterialParams, tol: f64) -> Result<Tensor2> {
    let step = integrate_with_tol(state, f, dt, env, params, tol)?;
    Ok(step.stress.sigma_tot_d * f.determinant())
}

/// Spatial tangent from forward differences of the Kirchhoff stress under
/// the perturbations `ΔF = (α/2)(eᵢ⊗eⱼ + eⱼ⊗eᵢ) F`, divided by `J`.
///
/// Rows are raw stress components and columns follow [`VOIGT_PAIRS`]; shear
/// columns are derivatives with respect to engineering shear strain.
pub fn tangent(state: &MaterialState, f: &Tensor2, dt: f64, env: &Environment, params: &MaterialParams) -> Result<Tangent66> {
    let tol = params.fp_tol.min(TANGENT_FP_TOL);
    let alpha = params.perturb_alpha;
    let tau = kirchhoff(state, f, dt, env, params, tol)?;
    let j = f.determinant();
    let mut c = Tangent66::zeros();
    for (col, &(i, k)) in VOIGT_PAIRS.iter().enumerate() {
        let f_hat = f + sym_basis(i, k) * f * alpha;
        let tau_hat = kirchhoff(state, &f_hat, dt, env, params, tol)?;
        let diff = (tau_hat - tau) / alpha;
        for (row, &(a, b)) in VOIGT_PAIRS.iter().enumerate() {
            c[(row, col)] = diff[(a, b)] / j;
        }
    }
    Ok(c)
}

/// Integrates a whole deformation-gradient history from the virgin state.
pub fn integrate_path(
    path: &[(Tensor2, f64)],
    env: &Environment,
    params: &MaterialParams,
) -> Result<Vec<StepResult>> {
    let mut state = MaterialState::virgin();
    let mut out = Vec::with_capacity(path.len());
    for (step, (f, dt)) in path.iter().enumerate() {
        let r = integrate_step(&state, f, *dt, env, params).map_err(|e| e.at_step(step))?;
        state = r.state;
        out.push(r);
    }
    Ok(out)
}
