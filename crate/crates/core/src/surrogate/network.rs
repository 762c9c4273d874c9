//! Two stacked LSTM layers and a linear head mapping the nine input features
//! to the six stress components.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{layer_backward, layer_forward, lstm_cell, LstmLayerParams};
use crate::error::{Error, Result};
use crate::pathgen::{TrainingSequence, N_INPUTS, N_OUTPUTS};

/// Smallest standard deviation used when scaling a feature.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-feature affine scaling of the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; N_INPUTS],
    pub std: [f64; N_INPUTS],
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            mean: [0.0; N_INPUTS],
            std: [1.0; N_INPUTS],
        }
    }
}

/// Mean and standard deviation of every input feature over all steps of all
/// sequences, with the deviation floored at [`STD_FLOOR`].
pub fn normalize_fit(seqs: &[&TrainingSequence]) -> Result<Normalization> {
    let (mean, std) = column_stats(seqs.iter().flat_map(|s| s.inputs.iter()))?;
    Ok(Normalization { mean, std })
}

pub fn normalize_apply(x: &[f64; N_INPUTS], norm: &Normalization) -> [f64; N_INPUTS] {
    std::array::from_fn(|k| (x[k] - norm.mean[k]) / norm.std[k])
}

/// Column means and floored standard deviations of a set of rows.
pub(crate) fn column_stats<'a, const N: usize>(rows: impl Iterator<Item = &'a [f64; N]>) -> Result<([f64; N], [f64; N])> {
    let mut count = 0usize;
    let mut mean = [0.0; N];
    let mut m2 = [0.0; N];
    for row in rows {
        count += 1;
        for k in 0..N {
            let delta = row[k] - mean[k];
            mean[k] += delta / count as f64;
            m2[k] += delta * (row[k] - mean[k]);
        }
    }
    if count < 2 {
        return Err(Error::Shape("statistics need at least two samples".into()));
    }
    let std = std::array::from_fn(|k| (m2[k] / count as f64).sqrt().max(STD_FLOOR));
    Ok((mean, std))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub layer1: LstmLayerParams,
    pub layer2: LstmLayerParams,
    /// Head weights, `6 × H`.
    pub dense_w: DMatrix<f64>,
    pub dense_b: DVector<f64>,
    pub norm: Normalization,
    /// Stress units per head output, one per component.
    pub out_scale: [f64; N_OUTPUTS],
}

impl NetworkParams {
    pub fn zeros(hidden: usize) -> Self {
        NetworkParams {
            layer1: LstmLayerParams::zeros(hidden, N_INPUTS),
            layer2: LstmLayerParams::zeros(hidden, hidden),
            dense_w: DMatrix::zeros(N_OUTPUTS, hidden),
            dense_b: DVector::zeros(N_OUTPUTS),
            norm: Normalization::default(),
            out_scale: [1.0; N_OUTPUTS],
        }
    }

    /// Uniform `±1/√H` weights, zero biases except a forget-gate bias of 1.
    pub fn init(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = 1.0 / (hidden as f64).sqrt();
        let mut p = NetworkParams::zeros(hidden);
        for m in [&mut p.layer1.w, &mut p.layer1.r, &mut p.layer2.w, &mut p.layer2.r, &mut p.dense_w] {
            m.iter_mut().for_each(|x| *x = rng.gen_range(-a..a));
        }
        for layer in [&mut p.layer1, &mut p.layer2] {
            layer.b.rows_mut(hidden, hidden).fill(1.0);
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.layer1.hidden()
    }

    pub fn check_shapes(&self) -> Result<()> {
        self.layer1.check_shapes()?;
        self.layer2.check_shapes()?;
        let h = self.hidden();
        if self.layer1.input() != N_INPUTS
            || self.layer2.input() != h
            || self.layer2.hidden() != h
            || self.dense_w.shape() != (N_OUTPUTS, h)
            || self.dense_b.len() != N_OUTPUTS
        {
            return Err(Error::Shape(format!("inconsistent network shapes for H = {h}")));
        }
        if self.norm.std.iter().chain(&self.out_scale).any(|&s| !(s > 0.0)) {
            return Err(Error::Shape("scales must be positive".into()));
        }
        Ok(())
    }

    /// Trainable tensors in a fixed order.
    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            self.layer1.w.as_slice(),
            self.layer1.r.as_slice(),
            self.layer1.b.as_slice(),
            self.layer2.w.as_slice(),
            self.layer2.r.as_slice(),
            self.layer2.b.as_slice(),
            self.dense_w.as_slice(),
            self.dense_b.as_slice(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.layer1.w.as_mut_slice(),
            self.layer1.r.as_mut_slice(),
            self.layer1.b.as_mut_slice(),
            self.layer2.w.as_mut_slice(),
            self.layer2.r.as_mut_slice(),
            self.layer2.b.as_mut_slice(),
            self.dense_w.as_mut_slice(),
            self.dense_b.as_mut_slice(),
        ]
    }

    fn head(&self, h2: &DVector<f64>) -> [f64; N_OUTPUTS] {
        let z = &self.dense_w * h2 + &self.dense_b;
        std::array::from_fn(|k| z[k] * self.out_scale[k])
    }

    /// Advances the recurrent state by one raw input row and returns the
    /// stress prediction for that step.
    pub fn step(&self, state: &mut NetworkState, x: &[f64; N_INPUTS]) -> [f64; N_OUTPUTS] {
        let xn = DVector::from_column_slice(&normalize_apply(x, &self.norm));
        let (h1, c1) = lstm_cell(&xn, &state.h1, &state.c1, &self.layer1);
        let (h2, c2) = lstm_cell(&h1, &state.h2, &state.c2, &self.layer2);
        let y = self.head(&h2);
        *state = NetworkState { h1, c1, h2, c2 };
        y
    }
}

/// Hidden and cell vectors of both layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub h1: DVector<f64>,
    pub c1: DVector<f64>,
    pub h2: DVector<f64>,
    pub c2: DVector<f64>,
}

impl NetworkState {
    pub fn zeros(hidden: usize) -> Self {
        let z = DVector::zeros(hidden);
        NetworkState {
            h1: z.clone(),
            c1: z.clone(),
            h2: z.clone(),
            c2: z,
        }
    }
}

/// Stress predictions (MPa) for every step of `inputs`, starting from zero
/// state.
pub fn forward(inputs: &[[f64; N_INPUTS]], p: &NetworkParams) -> Vec<[f64; N_OUTPUTS]> {
    let mut state = NetworkState::zeros(p.hidden());
    inputs.iter().map(|x| p.step(&mut state, x)).collect()
}

/// Mean absolute error over all entries; rows can be flattened with
/// `as_flattened`.
pub fn mae(pred: &[f64], targ: &[f64]) -> Result<f64> {
    if pred.len() != targ.len() {
        return Err(Error::Shape(format!("{} predictions for {} targets", pred.len(), targ.len())));
    }
    if pred.is_empty() {
        return Err(Error::Shape("MAE of an empty set".into()));
    }
    let sum: f64 = pred.iter().zip(targ).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / pred.len() as f64)
}

/// Normalized inputs of a batch of equal-length sequences, `9 × B` per step.
fn batch_inputs(batch: &[&TrainingSequence], norm: &Normalization) -> Vec<DMatrix<f64>> {
    let steps = batch[0].len();
    (0..steps)
        .map(|t| {
            let mut m = DMatrix::zeros(N_INPUTS, batch.len());
            for (col, s) in batch.iter().enumerate() {
                let x = normalize_apply(&s.inputs[t], norm);
                m.column_mut(col).copy_from_slice(&x);
            }
            m
        })
        .collect()
}

/// Batch-mean MAE and its exact gradient with respect to every trainable
/// tensor (returned in the layout of `p`). At a zero residual the
/// subgradient 0 is used.
pub fn gradients(batch: &[&TrainingSequence], p: &NetworkParams) -> Result<(f64, NetworkParams)> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let steps = batch[0].len();
    if steps == 0 || batch.iter().any(|s| s.len() != steps || s.targets.len() != steps) {
        return Err(Error::Shape("a batch needs non-empty sequences of equal length".into()));
    }
    let n_b = batch.len();
    let l1 = layer_forward(&p.layer1, batch_inputs(batch, &p.norm));
    let l2 = layer_forward(&p.layer2, l1.hs.clone());
    let scale = 1.0 / (n_b * steps * N_OUTPUTS) as f64;

    let mut grad = NetworkParams::zeros(p.hidden());
    grad.norm = p.norm.clone();
    grad.out_scale = p.out_scale;
    let mut loss = 0.0;
    let mut dh2 = Vec::with_capacity(steps);
    let mut dz = DMatrix::<f64>::zeros(N_OUTPUTS, n_b);
    for t in 0..steps {
        let z = &p.dense_w * &l2.hs[t];
        for (col, s) in batch.iter().enumerate() {
            for k in 0..N_OUTPUTS {
                let y = (z[(k, col)] + p.dense_b[k]) * p.out_scale[k];
                let r = y - s.targets[t][k];
                loss += r.abs();
                dz[(k, col)] = if r > 0.0 {
                    scale * p.out_scale[k]
                } else if r < 0.0 {
                    -scale * p.out_scale[k]
                } else {
                    0.0
                };
            }
        }
        grad.dense_w.gemm(1.0, &dz, &l2.hs[t].transpose(), 1.0);
        for col in 0..n_b {
            grad.dense_b += dz.column(col);
        }
        dh2.push(p.dense_w.tr_mul(&dz));
    }
    let (g2, dh1) = layer_backward(&p.layer2, &l2, &dh2, true);
    let (g1, _) = layer_backward(&p.layer1, &l1, &dh1, false);
    grad.layer1 = g1;
    grad.layer2 = g2;
    Ok((loss * scale, grad))
}
