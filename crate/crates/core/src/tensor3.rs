//! 3×3 tensor helpers shared by the material model, the surrogate and the
//! finite-element code.
//!
//! Tensors are plain `nalgebra` matrices. Symmetric tensors are packed into
//! six raw components in the order (11, 22, 33, 12, 13, 23); shear terms are
//! *not* doubled.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector6};

use crate::error::{Error, Result};

pub type Tensor2 = Matrix3<f64>;
pub type Voigt6 = Vector6<f64>;
pub type Tangent66 = Matrix6<f64>;

/// Index pairs of the packed symmetric components.
pub const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Largest asymmetry `|t_ij - t_ji|` accepted by [`voigt_pack`].
pub const SYMMETRY_TOL: f64 = 1e-10;

pub fn identity() -> Tensor2 {
    Tensor2::identity()
}

pub fn dev(t: &Tensor2) -> Tensor2 {
    let p = t.trace() / 3.0;
    let mut d = *t;
    d[(0, 0)] -= p;
    d[(1, 1)] -= p;
    d[(2, 2)] -= p;
    d
}

/// Deviatoric part and its Frobenius norm.
pub fn dev_and_norm(t: &Tensor2) -> (Tensor2, f64) {
    let d = dev(t);
    let n = d.norm();
    (d, n)
}

pub fn sym(t: &Tensor2) -> Tensor2 {
    (t + t.transpose()) * 0.5
}

/// Double contraction `a : b`.
pub fn ddot(a: &Tensor2, b: &Tensor2) -> f64 {
    a.component_mul(b).sum()
}

/// `½(e_i ⊗ e_j + e_j ⊗ e_i)`.
pub fn sym_basis(i: usize, j: usize) -> Tensor2 {
    let mut e = Tensor2::zeros();
    e[(i, j)] += 0.5;
    e[(j, i)] += 0.5;
    e
}

/// Green–Lagrange strain `½(FᵀF − I)`.
pub fn green_strain(f: &Tensor2) -> Tensor2 {
    let c = f.transpose() * f;
    let mut e = (c - Tensor2::identity()) * 0.5;
    // FᵀF is symmetric up to round-off; copy the upper triangle down
    e[(1, 0)] = e[(0, 1)];
    e[(2, 0)] = e[(0, 2)];
    e[(2, 1)] = e[(1, 2)];
    e
}

/// Left Cauchy–Green tensor `F·Fᵀ`, symmetrized exactly.
pub fn left_cauchy_green(f: &Tensor2) -> Tensor2 {
    let mut b = f * f.transpose();
    b[(1, 0)] = b[(0, 1)];
    b[(2, 0)] = b[(0, 2)];
    b[(2, 1)] = b[(1, 2)];
    b
}

pub fn inverse(t: &Tensor2) -> Result<Tensor2> {
    let det = t.determinant();
    if det == 0.0 || !det.is_finite() {
        return Err(Error::Singular { det });
    }
    t.try_inverse().ok_or(Error::Singular { det })
}

/// Rotation `R` of the polar decomposition `F = R·U`.
///
/// `U` is built from the eigendecomposition of `FᵀF`; a single Newton
/// polish `R ← ½(R + R⁻ᵀ)` removes the round-off left by the eigen solver.
pub fn polar_rotation(f: &Tensor2) -> Result<Tensor2> {
    let det = f.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::NonPositiveJacobian { det });
    }
    let c = f.transpose() * f;
    let eig = SymmetricEigen::new(sym(&c));
    let v = eig.eigenvectors;
    let mut inv_sqrt = Tensor2::zeros();
    for k in 0..3 {
        let lam = eig.eigenvalues[k];
        if !(lam > 0.0) {
            return Err(Error::Singular { det });
        }
        inv_sqrt[(k, k)] = 1.0 / lam.sqrt();
    }
    let u_inv = v * inv_sqrt * v.transpose();
    let r = f * u_inv;
    let r_inv_t = inverse(&r)?.transpose();
    Ok((r + r_inv_t) * 0.5)
}

pub fn voigt_pack(t: &Tensor2) -> Result<Voigt6> {
    let asymmetry = [(0, 1), (0, 2), (1, 2)]
        .iter()
        .map(|&(i, j)| (t[(i, j)] - t[(j, i)]).abs())
        .fold(0.0_f64, f64::max);
    if asymmetry > SYMMETRY_TOL || asymmetry.is_nan() {
        return Err(Error::Asymmetric { asymmetry });
    }
    Ok(voigt_pack_unchecked(t))
}

/// Packs the upper triangle without checking symmetry.
pub fn voigt_pack_unchecked(t: &Tensor2) -> Voigt6 {
    let mut v = Voigt6::zeros();
    for (k, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
        v[k] = t[(i, j)];
    }
    v
}

pub fn voigt_unpack(v: &Voigt6) -> Tensor2 {
    let mut t = Tensor2::zeros();
    for (k, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
        t[(i, j)] = v[k];
        t[(j, i)] = v[k];
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rot_z(deg: f64) -> Tensor2 {
        let (s, c) = deg.to_radians().sin_cos();
        Tensor2::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    #[test]
    fn dev_of_identity_vanishes() {
        let (d, n) = dev_and_norm(&Tensor2::identity());
        assert!(d.norm() < 1e-15);
        assert_eq!(n, 0.0);
    }

    #[test]
    fn dev_of_uniaxial() {
        let (d, n) = dev_and_norm(&Tensor2::from_diagonal(&nalgebra::Vector3::new(3.0, 0.0, 0.0)));
        assert_relative_eq!(d, Tensor2::from_diagonal(&nalgebra::Vector3::new(2.0, -1.0, -1.0)), epsilon = 1e-15);
        assert_relative_eq!(n, 6f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn polar_rotation_examples() {
        assert_relative_eq!(polar_rotation(&Tensor2::identity()).unwrap(), Tensor2::identity(), epsilon = 1e-14);
        let q = rot_z(30.0);
        assert_relative_eq!(polar_rotation(&q).unwrap(), q, epsilon = 1e-14);
        let f = Tensor2::from_diagonal(&nalgebra::Vector3::new(1.2, 0.9, 1.0));
        assert_relative_eq!(polar_rotation(&f).unwrap(), Tensor2::identity(), epsilon = 1e-14);
    }

    #[test]
    fn polar_rotation_rejects_reflection_and_singular() {
        let refl = Tensor2::from_diagonal(&nalgebra::Vector3::new(-1.0, 1.0, 1.0));
        assert!(matches!(polar_rotation(&refl), Err(Error::NonPositiveJacobian { .. })));
        assert!(polar_rotation(&Tensor2::zeros()).is_err());
    }

    #[test]
    fn green_strain_examples() {
        let e = green_strain(&Tensor2::identity());
        assert_eq!(e, Tensor2::zeros());
        let e = green_strain(&Tensor2::from_diagonal(&nalgebra::Vector3::new(1.1, 1.0, 1.0)));
        assert_relative_eq!(e[(0, 0)], 0.105, epsilon = 1e-15);
        assert_eq!(e[(1, 1)], 0.0);
        let mut f = Tensor2::identity();
        f[(0, 1)] = 0.1;
        let e = green_strain(&f);
        assert_relative_eq!(e[(0, 1)], 0.05, epsilon = 1e-15);
        assert_relative_eq!(e[(1, 1)], 0.005, epsilon = 1e-15);
        assert_eq!(e, e.transpose());
    }

    #[test]
    fn voigt_ordering() {
        assert_eq!(voigt_pack(&Tensor2::identity()).unwrap(), Voigt6::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0));
        let mut t = Tensor2::zeros();
        t[(0, 1)] = 0.3;
        t[(1, 0)] = 0.3;
        assert_eq!(voigt_pack(&t).unwrap()[3], 0.3);
        t[(1, 0)] = 0.2;
        assert!(matches!(voigt_pack(&t), Err(Error::Asymmetric { .. })));
    }

    fn arb_tensor() -> impl Strategy<Value = Tensor2> {
        proptest::collection::vec(-2.0f64..2.0, 9).prop_map(|v| Tensor2::from_row_slice(&v))
    }

    proptest! {
        #[test]
        fn voigt_round_trip_is_exact(t in arb_tensor()) {
            let s = t + t.transpose();
            prop_assert_eq!(voigt_unpack(&voigt_pack(&s).unwrap()), s);
        }

        #[test]
        fn deviator_is_traceless(t in arb_tensor()) {
            let (d, _) = dev_and_norm(&t);
            prop_assert!(d.trace().abs() <= 1e-14 * t.norm().max(1e-300) + 1e-300);
        }

        #[test]
        fn polar_rotation_is_proper_orthogonal(t in arb_tensor()) {
            // shift toward identity so det > 0 and the stretch stays well conditioned
            let f = Tensor2::identity() * 2.5 + t * 0.5;
            prop_assume!(f.determinant() > 0.1);
            let r = polar_rotation(&f).unwrap();
            prop_assert!((r.determinant() - 1.0).abs() <= 1e-12);
            prop_assert!((r.transpose() * r - Tensor2::identity()).norm() <= 1e-12);
            // U = Rᵀ F must be symmetric; squaring F in FᵀF costs a few digits
            // when two stretches nearly coincide
            let u = r.transpose() * f;
            prop_assert!((u - u.transpose()).norm() <= 1e-9 * f.norm());
        }

        #[test]
        fn green_strain_is_symmetric(t in arb_tensor()) {
            let e = green_strain(&t);
            prop_assert_eq!(e, e.transpose());
        }
    }
}
