//! Small updated-Lagrangian finite-element solver on trilinear hexahedra.

mod mesh;
mod shape;
mod solver;

pub use mesh::{parse_mesh, read_mesh, Mesh};
pub use shape::{gauss_points, shape_eval, shape_local_gradients, shape_values, ShapeEval, NODE_LOCAL};
pub use solver::{
    assemble, force_mae, newton_solve, run_program, write_program_csv, Assembly, Dirichlet, FeModel, LoadProgram, NewtonReport,
    ProgramRow, ABSOLUTE_RESIDUAL, NEWTON_MAX_ITER, NEWTON_TOL,
};
