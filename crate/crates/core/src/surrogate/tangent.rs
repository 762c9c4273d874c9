//! Stress and perturbation tangent from the trained network, with damage
//! applied outside the network.

use serde::{Deserialize, Serialize};

use super::network::{NetworkParams, NetworkState};
use crate::error::{Error, Result};
use crate::material::{chain_stretch, damage_update, Environment, MaterialParams};
use crate::pathgen::{input_row, N_INPUTS, N_OUTPUTS};
use crate::tensor3::{sym_basis, voigt_unpack, Tangent66, Tensor2, Voigt6, VOIGT_PAIRS};

/// Output of one surrogate evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEval {
    /// Damaged Cauchy stress, MPa.
    pub stress: Voigt6,
    /// Network (undamaged) stress, MPa.
    pub undamaged: Voigt6,
    /// Spatial tangent of the damaged stress, MPa.
    pub tangent: Tangent66,
    pub d: f64,
    pub lambda_max: f64,
}

/// Left Cauchy–Green tensor from an input row.
fn b_of(row: &[f64; N_INPUTS]) -> Tensor2 {
    voigt_unpack(&Voigt6::from_fn(|k, _| row[k]))
}

fn with_b(row: &[f64; N_INPUTS], b: &Tensor2) -> [f64; N_INPUTS] {
    let mut out = *row;
    for (k, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
        out[k] = b[(i, j)];
    }
    out
}

/// Chain stretch of the isochoric part of `b`.
fn stretch_of(b: &Tensor2) -> Result<f64> {
    let det = b.determinant();
    if !(det > 0.0) {
        return Err(Error::NonPositiveJacobian { det });
    }
    chain_stretch(&(b * det.powf(-1.0 / 3.0)))
}

fn to_voigt(y: &[f64; N_OUTPUTS]) -> Voigt6 {
    Voigt6::from_column_slice(y)
}

/// Stress of `row` and the six perturbed variants of it, each advanced from
/// `state`. Perturbations follow `ΔF = α sym(eᵢ⊗eⱼ) F`, which maps
/// `B ↦ (I + αS) B (I + αS)ᵀ`.
fn stress_and_tangent_from(
    p: &NetworkParams,
    state: &NetworkState,
    row: &[f64; N_INPUTS],
    one_minus_d: f64,
    alpha: f64,
) -> (NetworkState, Voigt6, Tangent66) {
    let b = b_of(row);
    let j = b.determinant().sqrt();
    let mut next = state.clone();
    let sigma = to_voigt(&p.step(&mut next, row));
    let mut c = Tangent66::zeros();
    for (col, &(i, k)) in VOIGT_PAIRS.iter().enumerate() {
        let m = Tensor2::identity() + sym_basis(i, k) * alpha;
        let b_hat = m * b * m.transpose();
        let j_hat = j * m.determinant();
        let mut s = state.clone();
        let sigma_hat = to_voigt(&p.step(&mut s, &with_b(row, &b_hat)));
        let column = (sigma_hat * j_hat - sigma * j) / (alpha * j);
        c.set_column(col, &(column * one_minus_d));
    }
    (next, sigma, c)
}

/// Stress and tangent at the last row of `history`, replaying the whole
/// input sequence from zero state. Damage follows the chain stretch of `B`
/// along the history.
pub fn surrogate_stress_and_tangent(
    history: &[[f64; N_INPUTS]],
    p: &NetworkParams,
    params: &MaterialParams,
) -> Result<SurrogateEval> {
    let (last, prefix) = history
        .split_last()
        .ok_or_else(|| Error::Shape("surrogate needs a non-empty input history".into()))?;
    p.check_shapes()?;
    let mut state = NetworkState::zeros(p.hidden());
    let (mut d, mut lambda_max) = (0.0, 1.0);
    for row in prefix {
        p.step(&mut state, row);
        (d, lambda_max) = damage_update(d, lambda_max, stretch_of(&b_of(row))?, params);
    }
    (d, lambda_max) = damage_update(d, lambda_max, stretch_of(&b_of(last))?, params);
    let (_, sigma, tangent) = stress_and_tangent_from(p, &state, last, 1.0 - d, params.perturb_alpha);
    Ok(SurrogateEval {
        stress: sigma * (1.0 - d),
        undamaged: sigma,
        tangent,
        d,
        lambda_max,
    })
}

/// Per-point record of the surrogate backend: the recurrent state after the
/// last accepted step plus the damage variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogatePoint {
    pub state: NetworkState,
    pub lambda_max: f64,
    pub d: f64,
    /// Accepted input rows; only kept for inspection and replay.
    pub history: Vec<[f64; N_INPUTS]>,
}

impl SurrogatePoint {
    pub fn new(hidden: usize) -> Self {
        SurrogatePoint {
            state: NetworkState::zeros(hidden),
            lambda_max: 1.0,
            d: 0.0,
            history: Vec::new(),
        }
    }

    /// Evaluates the step to `f` from the cached state at constant cost.
    /// The returned trial is applied with [`SurrogatePoint::accept`].
    pub fn evaluate(
        &self,
        f: &Tensor2,
        dt: f64,
        env: &Environment,
        p: &NetworkParams,
        params: &MaterialParams,
    ) -> Result<(SurrogateTrial, SurrogateEval)> {
        let row = input_row(f, dt, env);
        let (d, lambda_max) = damage_update(self.d, self.lambda_max, stretch_of(&b_of(&row))?, params);
        let (state, sigma, tangent) = stress_and_tangent_from(p, &self.state, &row, 1.0 - d, params.perturb_alpha);
        let eval = SurrogateEval {
            stress: sigma * (1.0 - d),
            undamaged: sigma,
            tangent,
            d,
            lambda_max,
        };
        Ok((
            SurrogateTrial {
                state,
                lambda_max,
                d,
                row,
            },
            eval,
        ))
    }

    pub fn accept(&mut self, trial: SurrogateTrial) {
        self.state = trial.state;
        self.lambda_max = trial.lambda_max;
        self.d = trial.d;
        self.history.push(trial.row);
    }
}

/// Candidate update of a [`SurrogatePoint`].
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateTrial {
    state: NetworkState,
    lambda_max: f64,
    d: f64,
    row: [f64; N_INPUTS],
}
