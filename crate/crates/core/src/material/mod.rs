//! Finite-strain viscoelastic-viscoplastic damage model.

mod integrate;
mod model;
mod params;

pub use integrate::{integrate_path, integrate_step, tangent, MaterialState, StepResult, TANGENT_FP_TOL};
pub use model::{
    amplification_factor, athermal_yield_stress, chain_stretch, damage_update, decompose_deformation, deviatoric_norm,
    mechanical_kinematics, stress, viscoplastic_flow_rate, viscous_flow_rate, Kinematics, StressResult,
};
pub use params::{Environment, FixedPointScheme, MaterialParams};
