pub mod backend;
pub mod driver;
pub mod error;
pub mod fem;
pub mod material;
pub mod pathgen;
pub mod surrogate;
pub mod tensor3;

pub use error::{Error, Result};
