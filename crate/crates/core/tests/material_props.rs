use nalgebra::Vector3;
use vevp::material::{integrate_step, tangent, Environment, MaterialParams, MaterialState};
use vevp::tensor3::Tensor2;

fn uniaxial_iso(lam: f64) -> Tensor2 {
    Tensor2::from_diagonal(&Vector3::new(lam, lam.powf(-0.5), lam.powf(-0.5)))
}

fn rot(axis: Vector3<f64>, angle: f64) -> Tensor2 {
    *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
}

/// Triangle-wave uniaxial strain history with amplitude `amp` at constant rate.
fn cyclic_path(amp: f64, rate: f64, cycles: usize, dt: f64) -> Vec<Tensor2> {
    let half = amp / rate;
    let n = (2.0 * half * cycles as f64 / dt).round() as usize;
    (1..=n)
        .map(|k| {
            let t = k as f64 * dt;
            let phase = (t / half) % 2.0;
            let eps = if phase <= 1.0 { phase * amp } else { (2.0 - phase) * amp };
            uniaxial_iso(1.0 + eps)
        })
        .collect()
}

#[test]
fn internal_variables_stay_isochoric_over_long_runs() {
    let params = MaterialParams::table3();
    let env = Environment::new(0.012, 0.1);
    let mut state = MaterialState::virgin();
    for k in 1..=1000 {
        let t = k as f64 / 1000.0;
        let mut f = Tensor2::identity();
        f[(0, 0)] = 1.0 + 0.08 * (6.0 * t).sin();
        f[(1, 1)] = 1.0 - 0.05 * (4.0 * t).sin();
        f[(0, 1)] = 0.04 * (5.0 * t).sin();
        f[(1, 2)] = -0.03 * (3.0 * t).sin();
        state = integrate_step(&state, &f, 0.5, &env, &params).unwrap().state;
        assert!((state.f_v.determinant() - 1.0).abs() <= 1e-6);
        assert!((state.f_vp.determinant() - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn damage_is_monotone_and_bounded() {
    let params = MaterialParams::table3();
    let env = Environment::DRY_NEAT;
    let mut state = MaterialState::virgin();
    let mut last = 0.0;
    for f in cyclic_path(0.08, 1e-3, 3, 1.0) {
        state = integrate_step(&state, &f, 1.0, &env, &params).unwrap().state;
        assert!(state.d >= last && state.d < 1.0);
        last = state.d;
    }
    assert!(last > 0.0);
}

#[test]
fn faster_loading_gives_higher_peak_stress() {
    let params = MaterialParams::table3();
    let env = Environment::DRY_NEAT;
    let peak = |rate: f64| {
        let dt = 1e-3 / rate;
        let mut state = MaterialState::virgin();
        let mut peak: f64 = 0.0;
        for f in cyclic_path(0.03, rate, 1, dt) {
            let r = integrate_step(&state, &f, dt, &env, &params).unwrap();
            peak = peak.max(r.stress.sigma_tot_d[(0, 0)].abs());
            state = r.state;
        }
        peak
    };
    let (slow, fast) = (peak(1e-5), peak(1e-3));
    assert!(fast > slow, "fast {fast} slow {slow}");
}

#[test]
fn equilibrium_branch_is_objective() {
    let params = MaterialParams::table3();
    let env = Environment::new(0.012, 0.1);
    let mut f = Tensor2::identity();
    f[(0, 0)] = 1.04;
    f[(0, 1)] = 0.02;
    f[(2, 1)] = -0.01;
    f[(2, 2)] = 0.98;
    let q = rot(Vector3::new(1.0, 2.0, -0.5), 0.7);
    let a = integrate_step(&MaterialState::virgin(), &f, 1.0, &env, &params).unwrap();
    let b = integrate_step(&MaterialState::virgin(), &(q * f), 1.0, &env, &params).unwrap();
    let rotated = q * a.stress.sigma_eq * q.transpose();
    assert!((b.stress.sigma_eq - rotated).norm() <= 1e-8);
}

#[test]
fn tangent_is_insensitive_to_halving_alpha_at_smooth_states() {
    let params = MaterialParams::table3();
    // small strain over a short step: both dashpots are still dormant
    let env = Environment::new(0.0, 0.1);
    let mut f = Tensor2::identity();
    f[(0, 0)] = 1.0004;
    f[(1, 0)] = 0.0002;
    f[(2, 2)] = 0.9998;
    let state = MaterialState::virgin();
    let full = tangent(&state, &f, 0.1, &env, &params).unwrap();
    let half_params = MaterialParams {
        perturb_alpha: params.perturb_alpha / 2.0,
        ..params.clone()
    };
    let half = tangent(&state, &f, 0.1, &env, &half_params).unwrap();
    assert!((full - half).norm() / full.norm() < 5e-3);
}

/// Stress at a fixed end time of a smooth cyclic path, integrated with `n` steps.
fn end_stress(n: usize, params: &MaterialParams) -> Tensor2 {
    let env = Environment::DRY_NEAT;
    let period = 200.0;
    // end away from the closing zero crossing, where error terms cancel
    let dt = 0.8 * period / n as f64;
    let mut state = MaterialState::virgin();
    let mut sigma = Tensor2::zeros();
    for k in 1..=n {
        let t = k as f64 * dt;
        let lam = 1.0 + 0.02 * (std::f64::consts::TAU * t / period).sin();
        let r = integrate_step(&state, &uniaxial_iso(lam), dt, &env, params).unwrap();
        sigma = r.stress.sigma_tot_d;
        state = r.state;
    }
    sigma
}

#[test]
fn backward_euler_is_first_order() {
    let params = MaterialParams {
        fp_tol: 1e-12,
        ..MaterialParams::table3()
    };
    let s: Vec<Tensor2> = [200, 400, 800].iter().map(|&n| end_stress(n, &params)).collect();
    let order = ((s[0] - s[1]).norm() / (s[1] - s[2]).norm()).log2();
    assert!((0.8..=1.2).contains(&order), "observed order {order}");
}
