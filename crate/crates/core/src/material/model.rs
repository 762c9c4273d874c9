//! Closed-form pieces of the constitutive model: kinematic split, filler and
//! moisture amplification, neo-Hookean stresses, flow laws and damage.

use serde::{Deserialize, Serialize};

use super::params::{Environment, MaterialParams};
use crate::error::{Error, Result};
use crate::tensor3::{dev, dev_and_norm, left_cauchy_green, Tensor2};

/// Bound on exponent arguments fed to `exp`.
const EXP_CLAMP: f64 = 500.0;

/// Stiffness amplification from nanoparticle loading and moisture.
pub fn amplification_factor(env: &Environment) -> Result<f64> {
    let v = env.v_np;
    let w = env.w_w;
    let x = (1.0 + 5.0 * v + 18.0 * v * v) * (1.0 + 0.057 * w * w - 9.5 * w);
    if !(x > 0.0) {
        return Err(Error::InvalidEnvironment(format!(
            "amplification factor {x} is not positive (w_w = {w}, v_np = {v})"
        )));
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    /// Total volume ratio.
    pub j: f64,
    /// Moisture swelling part.
    pub j_w: f64,
    /// Mechanical part, `j / j_w`.
    pub j_m: f64,
    /// Isochoric deformation gradient, unit determinant.
    pub f_iso: Tensor2,
}

/// Splits a total deformation gradient into swelling, mechanical volume
/// change and the isochoric part.
pub fn decompose_deformation(f: &Tensor2, env: &Environment, params: &MaterialParams) -> Result<Kinematics> {
    let j = f.determinant();
    if !(j > 0.0) || !j.is_finite() {
        return Err(Error::NonPositiveJacobian { det: j });
    }
    let j_w = 1.0 + params.alpha_w * env.w_w;
    Ok(Kinematics {
        j,
        j_w,
        j_m: j / j_w,
        f_iso: f * j.powf(-1.0 / 3.0),
    })
}

/// Kinematics of a deformation gradient measured from the freely swollen,
/// stress-free configuration.
///
/// The total gradient is `J_w^{1/3} F`, so `J_m = det F` and `J = J_w det F`.
pub fn mechanical_kinematics(f: &Tensor2, env: &Environment, params: &MaterialParams) -> Result<Kinematics> {
    let j_m = f.determinant();
    if !(j_m > 0.0) || !j_m.is_finite() {
        return Err(Error::NonPositiveJacobian { det: j_m });
    }
    let j_w = 1.0 + params.alpha_w * env.w_w;
    Ok(Kinematics {
        j: j_m * j_w,
        j_w,
        j_m,
        f_iso: f * j_m.powf(-1.0 / 3.0),
    })
}

/// Effective chain stretch `√(tr B / 3)`.
pub fn chain_stretch(b_iso: &Tensor2) -> Result<f64> {
    let tr = b_iso.trace();
    if !(tr > 0.0) {
        return Err(Error::InvalidParams(format!("chain stretch needs a positive trace, got {tr}")));
    }
    Ok((tr / 3.0).sqrt())
}

/// Sigmoid athermal yield stress driven by the maximum chain stretch.
pub fn athermal_yield_stress(lambda_max: f64, params: &MaterialParams) -> f64 {
    let arg = (-(lambda_max - params.x_0) / params.b_s).clamp(-EXP_CLAMP, EXP_CLAMP);
    params.y_0 + params.a_s / (1.0 + arg.exp())
}

/// Argon viscous flow rate.
pub fn viscous_flow_rate(tau_neq: f64, tau_0: f64, params: &MaterialParams) -> f64 {
    let ratio = (tau_neq.max(0.0) / tau_0).powf(params.m);
    let arg = (params.activation_ratio() * (ratio - 1.0)).clamp(-EXP_CLAMP, EXP_CLAMP);
    params.eps_dot_0 * arg.exp()
}

/// `d ln(rate) / dτ` of [`viscous_flow_rate`]; zero where the exponent is clamped.
pub(crate) fn viscous_log_rate_slope(tau_neq: f64, tau_0: f64, params: &MaterialParams) -> f64 {
    if tau_neq <= 0.0 {
        return 0.0;
    }
    let ratio = (tau_neq / tau_0).powf(params.m);
    let arg = params.activation_ratio() * (ratio - 1.0);
    if arg.abs() >= EXP_CLAMP {
        return 0.0;
    }
    params.activation_ratio() * params.m * ratio / tau_neq
}

/// Phenomenological viscoplastic flow rate.
///
/// Zero below the activation stress, before the onset strain has been
/// latched, and whenever the current effective strain is below the onset.
pub fn viscoplastic_flow_rate(
    tau_tot: f64,
    eps_eff: f64,
    eps_onset: Option<f64>,
    eps_rate: f64,
    params: &MaterialParams,
) -> f64 {
    if tau_tot < params.sigma_0 {
        return 0.0;
    }
    let Some(onset) = eps_onset else { return 0.0 };
    let base = eps_eff - onset;
    if !(base > 0.0) {
        return 0.0;
    }
    params.a_vp * base.powf(params.b_vp) * eps_rate.max(0.0)
}

/// Cauchy stress contributions at one material point (MPa).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressResult {
    pub sigma_eq: Tensor2,
    pub sigma_neq: Tensor2,
    pub sigma_vol: Tensor2,
    /// Undamaged total stress.
    pub sigma_tot: Tensor2,
    /// Damaged total stress, `(1 − d) σ_tot`.
    pub sigma_tot_d: Tensor2,
}

impl StressResult {
    pub fn zero() -> Self {
        StressResult {
            sigma_eq: Tensor2::zeros(),
            sigma_neq: Tensor2::zeros(),
            sigma_vol: Tensor2::zeros(),
            sigma_tot: Tensor2::zeros(),
            sigma_tot_d: Tensor2::zeros(),
        }
    }
}

/// Neo-Hookean equilibrium and non-equilibrium stresses, volumetric stress
/// and their damaged total.
///
/// Both neo-Hookean terms use the deviator of their left Cauchy–Green
/// tensor so that the undeformed state carries no stress.
pub fn stress(
    f_ve_iso: &Tensor2,
    f_e_iso: &Tensor2,
    j_m: f64,
    j: f64,
    d: f64,
    env: &Environment,
    params: &MaterialParams,
) -> Result<StressResult> {
    let x = amplification_factor(env)?;
    let scale = x / j;
    let sigma_eq = dev(&left_cauchy_green(f_ve_iso)) * (scale * params.mu_eq0);
    let sigma_neq = dev(&left_cauchy_green(f_e_iso)) * (scale * params.mu_neq0);
    let sigma_vol = Tensor2::identity() * (0.5 * params.k_v * (j_m - 1.0 / j_m));
    let sigma_tot = sigma_eq + sigma_neq + sigma_vol;
    Ok(StressResult {
        sigma_eq,
        sigma_neq,
        sigma_vol,
        sigma_tot,
        sigma_tot_d: sigma_tot * (1.0 - d),
    })
}

/// Frobenius norm of the deviatoric part.
pub fn deviatoric_norm(t: &Tensor2) -> f64 {
    dev_and_norm(t).1
}

/// Exact integral of the damage rule over a stretch increment.
///
/// Returns the new damage and the new stretch high-water mark.
pub fn damage_update(d: f64, lambda_max_old: f64, lambda_new: f64, params: &MaterialParams) -> (f64, f64) {
    if lambda_new <= lambda_max_old {
        return (d, lambda_max_old);
    }
    let increment = lambda_new - lambda_max_old;
    let d_new = 1.0 - (1.0 - d) * (-params.a_dmg * increment).exp();
    // stays strictly below one even when exp underflows
    let d_new = d_new.min(1.0 - f64::EPSILON).max(d);
    (d_new, lambda_new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn p() -> MaterialParams {
        MaterialParams::table3()
    }

    #[test]
    fn amplification_examples() {
        assert_eq!(amplification_factor(&Environment::new(0.0, 0.0)).unwrap(), 1.0);
        assert_relative_eq!(amplification_factor(&Environment::new(0.0, 0.1)).unwrap(), 1.68, epsilon = 1e-12);
        assert_relative_eq!(amplification_factor(&Environment::new(0.01, 0.0)).unwrap(), 0.9050057, epsilon = 1e-12);
        assert_relative_eq!(
            amplification_factor(&Environment::new(0.012, 0.1)).unwrap(),
            1.68 * (1.0 + 0.057 * 0.012 * 0.012 - 9.5 * 0.012),
            epsilon = 1e-12
        );
        assert!((amplification_factor(&Environment::new(0.012, 0.1)).unwrap() - 1.488493).abs() < 1e-6);
        // moisture beyond ~0.105 drives the factor negative
        assert!(amplification_factor(&Environment::new(0.2, 0.0)).is_err());
    }

    #[test]
    fn decomposition_examples() {
        let k = decompose_deformation(&Tensor2::identity(), &Environment::DRY_NEAT, &p()).unwrap();
        assert_eq!((k.j, k.j_w, k.j_m), (1.0, 1.0, 1.0));
        assert_relative_eq!(k.f_iso, Tensor2::identity(), epsilon = 1e-15);

        let k = decompose_deformation(&Tensor2::identity(), &Environment::new(0.01, 0.0), &p()).unwrap();
        assert_relative_eq!(k.j_w, 1.00039, epsilon = 1e-15);
        assert_relative_eq!(k.j_m, 1.0 / 1.00039, epsilon = 1e-15);
        assert!((k.j_m - 0.99961015).abs() < 1e-8);

        let f = Tensor2::from_diagonal(&Vector3::new(1.1, 1.0, 1.0));
        let k = decompose_deformation(&f, &Environment::DRY_NEAT, &p()).unwrap();
        assert_relative_eq!(k.j, 1.1, epsilon = 1e-15);
        assert_relative_eq!(k.f_iso, f * 1.1f64.powf(-1.0 / 3.0), epsilon = 1e-15);
        assert!((k.f_iso.determinant() - 1.0).abs() < 1e-12);

        assert!(decompose_deformation(&Tensor2::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0)), &Environment::DRY_NEAT, &p()).is_err());
    }

    #[test]
    fn mechanical_kinematics_is_swelling_free_at_identity() {
        let k = mechanical_kinematics(&Tensor2::identity(), &Environment::new(0.012, 0.1), &p()).unwrap();
        assert_eq!(k.j_m, 1.0);
        assert_relative_eq!(k.j, 1.0 + 0.039 * 0.012, epsilon = 1e-15);
    }

    #[test]
    fn chain_stretch_examples() {
        assert_eq!(chain_stretch(&Tensor2::identity()).unwrap(), 1.0);
        let b = Tensor2::from_diagonal(&Vector3::new(1.21, 1.0 / 1.1, 1.0 / 1.1));
        assert!((chain_stretch(&b).unwrap() - 1.004686).abs() < 1e-6);
        let mut f = Tensor2::identity();
        f[(0, 1)] = 0.1;
        let b = left_cauchy_green(&f);
        assert_relative_eq!(chain_stretch(&b).unwrap(), (3.01f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert!((chain_stretch(&b).unwrap() - 1.001665).abs() < 1e-6);
        assert!(chain_stretch(&Tensor2::zeros()).is_err());
    }

    #[test]
    fn athermal_yield_examples() {
        let p = p();
        assert!((athermal_yield_stress(p.x_0, &p) - 50.885).abs() < 1e-9);
        assert!((athermal_yield_stress(-1e9, &p) - 75.0).abs() < 1e-9);
        assert!((athermal_yield_stress(1e9, &p) - (75.0 - 48.23)).abs() < 1e-9);
        let expected = 75.0 - 48.23 / (1.0 + (-(1.0 - 0.2369) / 0.06786f64).exp());
        assert_relative_eq!(athermal_yield_stress(1.0, &p), expected, epsilon = 1e-12);
        assert!((athermal_yield_stress(1.0, &p) - 26.77063).abs() < 1e-5);
    }

    #[test]
    fn viscous_rate_examples() {
        let p = p();
        let tau0 = athermal_yield_stress(1.0, &p);
        assert_relative_eq!(viscous_flow_rate(tau0, tau0, &p), 1.0447e12, max_relative = 1e-14);
        let at_rest = viscous_flow_rate(0.0, tau0, &p);
        assert_relative_eq!(at_rest, 1.0447e12 * (-p.activation_ratio()).exp(), max_relative = 1e-12);
        assert!((at_rest - 1.03e-9).abs() < 0.01e-9, "{at_rest}");
        let mut last = 0.0;
        for k in 0..50 {
            let r = viscous_flow_rate(k as f64, tau0, &p);
            assert!(r > last);
            last = r;
        }
    }

    #[test]
    fn viscous_log_slope_matches_finite_difference() {
        let p = p();
        let tau0 = 26.77;
        for tau in [0.5, 3.0, 10.0, 25.0] {
            let h = 1e-6;
            let fd = (viscous_flow_rate(tau + h, tau0, &p).ln() - viscous_flow_rate(tau - h, tau0, &p).ln()) / (2.0 * h);
            assert_relative_eq!(viscous_log_rate_slope(tau, tau0, &p), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn viscoplastic_rate_examples() {
        let p = p();
        assert_eq!(viscoplastic_flow_rate(5.0, 0.05, Some(0.02), 1e-4, &p), 0.0);
        let r = viscoplastic_flow_rate(10.0, 0.05, Some(0.02), 1e-4, &p);
        assert!((r - 7.36e-7).abs() < 1e-9, "{r}");
        assert_eq!(viscoplastic_flow_rate(10.0, 0.02, Some(0.02), 1e-4, &p), 0.0);
        assert_eq!(viscoplastic_flow_rate(10.0, 0.01, Some(0.02), 1e-4, &p), 0.0);
        assert_eq!(viscoplastic_flow_rate(10.0, 0.05, None, 1e-4, &p), 0.0);
    }

    #[test]
    fn stress_examples() {
        let p = p();
        let env = Environment::DRY_NEAT;
        let i = Tensor2::identity();
        let s = stress(&i, &i, 1.0, 1.0, 0.0, &env, &p).unwrap();
        assert_eq!(s.sigma_tot, Tensor2::zeros());

        let lam: f64 = 1.02;
        let f = Tensor2::from_diagonal(&Vector3::new(lam, lam.powf(-0.5), lam.powf(-0.5)));
        let s = stress(&f, &f, 1.0, 1.0, 0.0, &env, &p).unwrap();
        let dev11 = (2.0 / 3.0) * (lam * lam - 1.0 / lam);
        assert_relative_eq!(s.sigma_tot[(0, 0)], 1550.0 * dev11, epsilon = 1e-10);
        assert!((s.sigma_tot[(0, 0)] - 62.01).abs() < 0.1);

        let s = stress(&i, &i, 1.001, 1.001, 0.0, &env, &p).unwrap();
        assert!((s.sigma_vol[(0, 0)] - 1.1534).abs() < 1e-3);
        assert_eq!(s.sigma_tot, s.sigma_vol);

        let s = stress(&f, &f, 1.001, 1.001, 0.5, &env, &p).unwrap();
        assert_eq!(s.sigma_tot_d, s.sigma_tot * 0.5);
        assert_eq!(s.sigma_tot, s.sigma_eq + s.sigma_neq + s.sigma_vol);
    }

    #[test]
    fn damage_examples() {
        let p = p();
        assert_eq!(damage_update(0.2, 1.01, 1.005, &p), (0.2, 1.01));
        let (d, lam) = damage_update(0.0, 1.0, 1.001, &p);
        assert_relative_eq!(d, 1.0 - (-320.0 * (1.001f64 - 1.0)).exp(), epsilon = 1e-14);
        assert!((d - 0.273851).abs() < 1e-6);
        assert_eq!(lam, 1.001);
        let (d, _) = damage_update(0.999999, 1.0, 10.0, &p);
        assert!(d < 1.0 && d >= 0.999999);
    }
}
