//! Trilinear hexahedron shape functions and 2×2×2 Gauss quadrature.

use crate::error::{Error, Result};
use crate::tensor3::{inverse, Tensor2};

/// Local coordinates of the eight element nodes.
pub const NODE_LOCAL: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

/// Gauss points of the 2×2×2 rule; every weight is 1.
pub fn gauss_points() -> [[f64; 3]; 8] {
    let g = 1.0 / 3f64.sqrt();
    NODE_LOCAL.map(|p| p.map(|s| s * g))
}

pub fn shape_values(xi: &[f64; 3]) -> [f64; 8] {
    NODE_LOCAL.map(|a| 0.125 * (1.0 + a[0] * xi[0]) * (1.0 + a[1] * xi[1]) * (1.0 + a[2] * xi[2]))
}

/// Derivatives with respect to the local coordinates.
pub fn shape_local_gradients(xi: &[f64; 3]) -> [[f64; 3]; 8] {
    NODE_LOCAL.map(|a| {
        let f = [1.0 + a[0] * xi[0], 1.0 + a[1] * xi[1], 1.0 + a[2] * xi[2]];
        [0.125 * a[0] * f[1] * f[2], 0.125 * a[1] * f[0] * f[2], 0.125 * f[0] * f[1] * a[2]]
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeEval {
    pub n: [f64; 8],
    /// Gradients with respect to the coordinates the element was given in.
    pub grad: [[f64; 3]; 8],
    pub det_j: f64,
}

/// Shape values, physical gradients and Jacobian determinant at `xi` of the
/// element with nodal `coords`.
pub fn shape_eval(coords: &[[f64; 3]; 8], xi: &[f64; 3]) -> Result<ShapeEval> {
    if xi.iter().any(|c| !(c.abs() <= 1.0)) {
        return Err(Error::InvalidConfig(format!("local coordinates {xi:?} outside [-1, 1]^3")));
    }
    let local = shape_local_gradients(xi);
    // J_ij = ∂x_i/∂ξ_j
    let mut jac = Tensor2::zeros();
    for (x, dn) in coords.iter().zip(&local) {
        for i in 0..3 {
            for j in 0..3 {
                jac[(i, j)] += x[i] * dn[j];
            }
        }
    }
    let det_j = jac.determinant();
    if !(det_j > 0.0) {
        return Err(Error::BadElement { element: 0, det: det_j });
    }
    let jinv = inverse(&jac)?;
    let grad = local.map(|dn| std::array::from_fn(|i| (0..3).map(|j| dn[j] * jinv[(j, i)]).sum()));
    Ok(ShapeEval {
        n: shape_values(xi),
        grad,
        det_j,
    })
}
