//! Weight files: a JSON document with shapes, scaling statistics and every
//! parameter in row-major order.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lstm::LstmLayerParams;
use super::network::{NetworkParams, Normalization};
use crate::error::{Error, Result};
use crate::pathgen::{N_INPUTS, N_OUTPUTS};

pub const WEIGHTS_FORMAT: &str = "vevp-lstm";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        Matrix {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }

    fn to_dmatrix(&self, name: &str) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Shape(format!(
                "{name}: {} values for a {}x{} matrix",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Layer {
    w: Matrix,
    r: Matrix,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightFile {
    format: String,
    version: u32,
    /// Order of the gate blocks inside `w`, `r` and `b`.
    gate_order: String,
    hidden: usize,
    inputs: usize,
    outputs: usize,
    norm: Normalization,
    out_scale: [f64; N_OUTPUTS],
    layer1: Layer,
    layer2: Layer,
    dense_w: Matrix,
    dense_b: Vec<f64>,
    /// Free-form provenance such as the producing configuration's digest.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    provenance: BTreeMap<String, String>,
}

fn layer_out(p: &LstmLayerParams) -> Layer {
    Layer {
        w: Matrix::from_dmatrix(&p.w),
        r: Matrix::from_dmatrix(&p.r),
        b: p.b.as_slice().to_vec(),
    }
}

fn layer_in(l: &Layer, name: &str) -> Result<LstmLayerParams> {
    Ok(LstmLayerParams {
        w: l.w.to_dmatrix(&format!("{name}.w"))?,
        r: l.r.to_dmatrix(&format!("{name}.r"))?,
        b: DVector::from_vec(l.b.clone()),
    })
}

pub fn weights_to_string(p: &NetworkParams) -> String {
    weights_to_string_with(p, &BTreeMap::new())
}

/// [`weights_to_string`] with provenance entries stored alongside.
pub fn weights_to_string_with(p: &NetworkParams, provenance: &BTreeMap<String, String>) -> String {
    let file = WeightFile {
        format: WEIGHTS_FORMAT.into(),
        version: WEIGHTS_VERSION,
        gate_order: "input,forget,candidate,output".into(),
        hidden: p.hidden(),
        inputs: N_INPUTS,
        outputs: N_OUTPUTS,
        norm: p.norm.clone(),
        out_scale: p.out_scale,
        layer1: layer_out(&p.layer1),
        layer2: layer_out(&p.layer2),
        dense_w: Matrix::from_dmatrix(&p.dense_w),
        dense_b: p.dense_b.as_slice().to_vec(),
        provenance: provenance.clone(),
    };
    serde_json::to_string_pretty(&file).expect("weights serialize")
}

/// Parses a weight document. With `expected_hidden`, a file of another
/// hidden size is rejected.
pub fn weights_from_str(text: &str, expected_hidden: Option<usize>) -> Result<NetworkParams> {
    let file: WeightFile = serde_json::from_str(text).map_err(|e| Error::Shape(format!("weight file: {e}")))?;
    if file.format != WEIGHTS_FORMAT || file.version != WEIGHTS_VERSION {
        return Err(Error::Shape(format!(
            "unsupported weight file {} v{} (expected {WEIGHTS_FORMAT} v{WEIGHTS_VERSION})",
            file.format, file.version
        )));
    }
    if file.inputs != N_INPUTS || file.outputs != N_OUTPUTS {
        return Err(Error::Shape(format!(
            "weight file maps {} inputs to {} outputs, expected {N_INPUTS} to {N_OUTPUTS}",
            file.inputs, file.outputs
        )));
    }
    if let Some(h) = expected_hidden {
        if h != file.hidden {
            return Err(Error::Shape(format!("weight file has H = {}, expected H = {h}", file.hidden)));
        }
    }
    let p = NetworkParams {
        layer1: layer_in(&file.layer1, "layer1")?,
        layer2: layer_in(&file.layer2, "layer2")?,
        dense_w: file.dense_w.to_dmatrix("dense_w")?,
        dense_b: DVector::from_vec(file.dense_b),
        norm: file.norm,
        out_scale: file.out_scale,
    };
    p.check_shapes()?;
    if p.hidden() != file.hidden {
        return Err(Error::Shape(format!(
            "declared H = {} but layers have H = {}",
            file.hidden,
            p.hidden()
        )));
    }
    Ok(p)
}

pub fn save_weights(location: &Path, p: &NetworkParams) -> Result<()> {
    std::fs::write(location, weights_to_string(p))?;
    Ok(())
}

pub fn load_weights(location: &Path, expected_hidden: Option<usize>) -> Result<NetworkParams> {
    let text = std::fs::read_to_string(location)?;
    weights_from_str(&text, expected_hidden).map_err(|e| match e {
        Error::Shape(m) => Error::Shape(format!("{}: {m}", location.display())),
        other => other,
    })
}
