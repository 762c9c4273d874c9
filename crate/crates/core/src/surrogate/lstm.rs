//! One LSTM layer: single-step cell, batched forward pass with cache, and
//! backpropagation through time.
//!
//! Gate blocks are stacked in the order input, forget, candidate, output.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayerParams {
    /// Input weights, `4H × D`.
    pub w: DMatrix<f64>,
    /// Recurrent weights, `4H × H`.
    pub r: DMatrix<f64>,
    /// Biases, `4H`.
    pub b: DVector<f64>,
}

impl LstmLayerParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        LstmLayerParams {
            w: DMatrix::zeros(4 * hidden, input),
            r: DMatrix::zeros(4 * hidden, hidden),
            b: DVector::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.r.ncols()
    }

    pub fn input(&self) -> usize {
        self.w.ncols()
    }

    pub fn check_shapes(&self) -> crate::Result<()> {
        let h = self.hidden();
        if self.w.nrows() != 4 * h || self.r.nrows() != 4 * h || self.b.len() != 4 * h {
            return Err(crate::Error::Shape(format!(
                "LSTM layer with H = {h} has W {}x{}, R {}x{}, b {}",
                self.w.nrows(),
                self.w.ncols(),
                self.r.nrows(),
                self.r.ncols(),
                self.b.len()
            )));
        }
        Ok(())
    }
}

/// Advances one cell: returns `(h', c')`.
pub fn lstm_cell(x: &DVector<f64>, h: &DVector<f64>, c: &DVector<f64>, p: &LstmLayerParams) -> (DVector<f64>, DVector<f64>) {
    let n = p.hidden();
    let a = &p.w * x + &p.r * h + &p.b;
    let mut c_new = DVector::zeros(n);
    let mut h_new = DVector::zeros(n);
    for k in 0..n {
        let i = logistic(a[k]);
        let f = logistic(a[n + k]);
        let g = a[2 * n + k].tanh();
        let o = logistic(a[3 * n + k]);
        c_new[k] = f * c[k] + i * g;
        h_new[k] = o * c_new[k].tanh();
    }
    (h_new, c_new)
}

/// Activations kept from the forward pass of one layer over a batch.
/// Every matrix has one column per sequence.
pub(crate) struct LayerCache {
    /// Layer inputs, `D × B` per step.
    pub xs: Vec<DMatrix<f64>>,
    /// Activated gates `(i, f, g, o)`, `4H × B` per step.
    pub gates: Vec<DMatrix<f64>>,
    pub cs: Vec<DMatrix<f64>>,
    pub tanh_cs: Vec<DMatrix<f64>>,
    /// Hidden outputs, `H × B` per step.
    pub hs: Vec<DMatrix<f64>>,
}

/// Runs a layer over all steps from zero state.
pub(crate) fn layer_forward(p: &LstmLayerParams, xs: Vec<DMatrix<f64>>) -> LayerCache {
    let n = p.hidden();
    let batch = xs.first().map_or(0, |x| x.ncols());
    let steps = xs.len();
    let mut cache = LayerCache {
        gates: Vec::with_capacity(steps),
        cs: Vec::with_capacity(steps),
        tanh_cs: Vec::with_capacity(steps),
        hs: Vec::with_capacity(steps),
        xs,
    };
    let mut h = DMatrix::<f64>::zeros(n, batch);
    let mut c = DMatrix::<f64>::zeros(n, batch);
    for t in 0..steps {
        let mut a = &p.w * &cache.xs[t];
        a.gemm(1.0, &p.r, &h, 1.0);
        for col in 0..batch {
            let mut a_col = a.column_mut(col);
            a_col += &p.b;
        }
        let mut c_new = DMatrix::zeros(n, batch);
        let mut tc = DMatrix::zeros(n, batch);
        let mut h_new = DMatrix::zeros(n, batch);
        for col in 0..batch {
            for k in 0..n {
                let i = logistic(a[(k, col)]);
                let f = logistic(a[(n + k, col)]);
                let g = a[(2 * n + k, col)].tanh();
                let o = logistic(a[(3 * n + k, col)]);
                a[(k, col)] = i;
                a[(n + k, col)] = f;
                a[(2 * n + k, col)] = g;
                a[(3 * n + k, col)] = o;
                let cv = f * c[(k, col)] + i * g;
                let tv = cv.tanh();
                c_new[(k, col)] = cv;
                tc[(k, col)] = tv;
                h_new[(k, col)] = o * tv;
            }
        }
        cache.gates.push(a);
        cache.cs.push(c_new.clone());
        cache.tanh_cs.push(tc);
        cache.hs.push(h_new.clone());
        h = h_new;
        c = c_new;
    }
    cache
}

/// Backpropagation through time. `dhs[t]` is the loss gradient arriving at
/// the hidden output of step `t` from above; returns the parameter gradients
/// and the gradients with respect to the layer inputs.
pub(crate) fn layer_backward(
    p: &LstmLayerParams,
    cache: &LayerCache,
    dhs: &[DMatrix<f64>],
    want_dx: bool,
) -> (LstmLayerParams, Vec<DMatrix<f64>>) {
    let n = p.hidden();
    let steps = cache.hs.len();
    let batch = cache.hs.first().map_or(0, |h| h.ncols());
    let mut grad = LstmLayerParams::zeros(n, p.input());
    let mut dxs = Vec::with_capacity(if want_dx { steps } else { 0 });
    let mut dh_next = DMatrix::<f64>::zeros(n, batch);
    let mut dc_next = DMatrix::<f64>::zeros(n, batch);
    let zeros = DMatrix::<f64>::zeros(n, batch);
    let mut da = DMatrix::<f64>::zeros(4 * n, batch);
    for t in (0..steps).rev() {
        let gates = &cache.gates[t];
        let tc = &cache.tanh_cs[t];
        let c_prev = if t > 0 { &cache.cs[t - 1] } else { &zeros };
        for col in 0..batch {
            for k in 0..n {
                let (i, f, g, o) = (gates[(k, col)], gates[(n + k, col)], gates[(2 * n + k, col)], gates[(3 * n + k, col)]);
                let dh = dhs[t][(k, col)] + dh_next[(k, col)];
                let tv = tc[(k, col)];
                let dc = dh * o * (1.0 - tv * tv) + dc_next[(k, col)];
                da[(k, col)] = dc * g * i * (1.0 - i);
                da[(n + k, col)] = dc * c_prev[(k, col)] * f * (1.0 - f);
                da[(2 * n + k, col)] = dc * i * (1.0 - g * g);
                da[(3 * n + k, col)] = dh * tv * o * (1.0 - o);
                dc_next[(k, col)] = dc * f;
            }
        }
        grad.w.gemm(1.0, &da, &cache.xs[t].transpose(), 1.0);
        if t > 0 {
            grad.r.gemm(1.0, &da, &cache.hs[t - 1].transpose(), 1.0);
        }
        for col in 0..batch {
            grad.b += da.column(col);
        }
        dh_next = p.r.tr_mul(&da);
        if want_dx {
            dxs.push(p.w.tr_mul(&da));
        }
    }
    dxs.reverse();
    (grad, dxs)
}
