//! LSTM surrogate of the undamaged stress response.

mod lstm;
mod network;
mod persist;
mod tangent;
mod train;

pub use lstm::{logistic, lstm_cell, LstmLayerParams};
pub use network::{forward, gradients, mae, normalize_apply, normalize_fit, NetworkParams, NetworkState, Normalization, STD_FLOOR};
pub use persist::{load_weights, save_weights, weights_from_str, weights_to_string, weights_to_string_with, WEIGHTS_FORMAT, WEIGHTS_VERSION};
pub use tangent::{surrogate_stress_and_tangent, SurrogateEval, SurrogatePoint, SurrogateTrial};
pub use train::{
    adam_update, component_mae, dataset_mae, fit, fit_from, fit_with, split_indices, target_std, write_loss_log, AdamState, EpochRecord, FitResult, TrainConfig,
};
