//! Space-filling loading paths and labelled training data.

mod dataset;
mod halton;
mod path;

pub use dataset::{read_dataset, write_dataset, Dataset, Manifest};
pub use halton::{halton_point, radical_inverse, BASES};
pub use path::{
    generate_dataset, generate_path, input_row, label_path, perturb_last_step, step_rates, walk, GenerationConfig,
    LoadingPath, PathConfig, PathKind, TrainingSequence, N_INPUTS, N_OUTPUTS, PERTURBATION,
};
