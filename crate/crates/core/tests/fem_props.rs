use std::sync::Arc;

use nalgebra::Vector3;
use vevp::backend::{ClassicalBackend, MaterialBackend};
use vevp::driver::drive;
use vevp::fem::{newton_solve, run_program, Dirichlet, FeModel, LoadProgram, Mesh};
use vevp::material::{Environment, MaterialParams};
use vevp::pathgen::LoadingPath;
use vevp::tensor3::Tensor2;

fn classical() -> Arc<dyn MaterialBackend> {
    Arc::new(ClassicalBackend {
        params: MaterialParams::table3(),
    })
}

fn model(div: usize, env: Environment) -> FeModel {
    FeModel::new(Mesh::structured_box([1.0; 3], [div; 3]).unwrap(), env, classical()).unwrap()
}

/// Homogeneous history mixing stretch and shear.
fn homogeneous_path(env: Environment) -> LoadingPath {
    let f = (0..=30)
        .map(|k| {
            let s = k as f64 / 30.0;
            let e = 0.006 * (std::f64::consts::PI * s).sin();
            Tensor2::new(1.0 + e, 0.3 * e, 0.0, 0.1 * e, 1.0 - 0.4 * e, -0.2 * e, 0.0, 0.05 * e, 1.0 - 0.3 * e)
        })
        .collect();
    LoadingPath {
        f,
        dt: vec![0.5; 31],
        env,
    }
}

#[test]
fn patch_test_matches_material_point() {
    let env = Environment::new(0.012, 0.1);
    let path = homogeneous_path(env);
    let reference = drive(classical().as_ref(), &path, false).unwrap();
    let mut fe = model(1, env);
    for (k, f) in path.f.iter().enumerate().skip(1) {
        let prescribed: Vec<(usize, f64)> = fe
            .mesh
            .nodes
            .iter()
            .enumerate()
            .flat_map(|(n, x)| {
                let u = (f - Tensor2::identity()) * Vector3::from(*x);
                (0..3).map(move |i| (3 * n + i, u[i]))
            })
            .collect();
        let report = newton_solve(&mut fe, &prescribed, path.dt[k]).unwrap();
        assert_eq!(report.iterations, 1);
        for s in &fe.stresses {
            let diff = (s - reference[k].stress).amax();
            assert!(diff <= 1e-8, "step {k}: {diff:e} MPa");
        }
    }
}

fn tension_program() -> LoadProgram {
    LoadProgram {
        knots: vec![[0.0, 0.0], [10.0, 0.005], [20.0, 0.0]],
        dt: 0.5,
    }
}

#[test]
fn coarse_and_fine_meshes_agree_under_homogeneous_loading() {
    let env = Environment::DRY_NEAT;
    let mut coarse = model(1, env);
    let mut fine = model(2, env);
    for m in [&mut coarse, &mut fine] {
        m.newton_tol = 1e-10;
    }
    let bc_c = Dirichlet::uniaxial(&coarse.mesh, 0);
    let bc_f = Dirichlet::uniaxial(&fine.mesh, 0);
    let a = run_program(&mut coarse, &tension_program(), &bc_c).unwrap();
    let b = run_program(&mut fine, &tension_program(), &bc_f).unwrap();
    let peak = a.iter().map(|r| r.force.abs()).fold(0.0, f64::max);
    assert!(peak > 0.0);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.displacement, y.displacement);
        assert!((x.force - y.force).abs() <= 1e-6 * peak, "{} vs {}", x.force, y.force);
    }
}

/// Sum of the x reactions on the fixed face plus the applied load, relative
/// to the applied load.
fn imbalance(newton_tol: f64) -> f64 {
    let mut fe = model(2, Environment::new(0.012, 0.0));
    fe.newton_tol = newton_tol;
    let bc = Dirichlet::uniaxial(&fe.mesh, 0);
    let program = LoadProgram {
        knots: vec![[0.0, 0.0], [6.0, 0.004]],
        dt: 0.5,
    };
    run_program(&mut fe, &program, &bc).unwrap();
    let applied = bc.reaction(&fe.internal_force);
    let fixed: f64 = bc.fixed.iter().filter(|&&d| d % 3 == 0).map(|&d| fe.internal_force[d]).sum();
    assert!(applied > 0.0);
    (fixed + applied).abs() / applied
}

#[test]
fn reactions_balance() {
    // equilibrium holds up to the unbalanced free-node forces Newton leaves
    let loose = imbalance(vevp::fem::NEWTON_TOL);
    assert!(loose <= vevp::fem::NEWTON_TOL, "{loose:e}");
    let tight = imbalance(1e-9);
    assert!(tight <= 1e-6, "{tight:e}");
}

#[test]
fn unloading_lies_below_loading() {
    let mut fe = model(2, Environment::DRY_NEAT);
    let bc = Dirichlet::uniaxial(&fe.mesh, 0);
    let rows = run_program(&mut fe, &tension_program(), &bc).unwrap();
    let n = rows.len();
    assert_eq!(n, 41);
    for k in 1..20 {
        let (up, down) = (&rows[k], &rows[n - 1 - k]);
        assert!((up.displacement - down.displacement).abs() < 1e-15);
        assert!(down.force < up.force, "at u = {}: {} vs {}", up.displacement, down.force, up.force);
    }
    assert!(rows.iter().all(|r| r.newton_iterations <= 25));
}

#[test]
fn failed_step_leaves_model_untouched() {
    let mut fe = model(1, Environment::DRY_NEAT);
    fe.newton_max_iter = 1;
    let bc = Dirichlet::uniaxial(&fe.mesh, 0);
    let before = (fe.u.clone(), fe.stresses.clone());
    assert!(newton_solve(&mut fe, &bc.prescribed(0.01), 1.0).is_err());
    assert_eq!((fe.u.clone(), fe.stresses.clone()), before);
}
