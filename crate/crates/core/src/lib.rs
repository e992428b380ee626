//! Space-time DPG solver for the modified nonlinear Schrödinger model.

pub mod adaptivity;
pub mod assembly;
pub mod error;
pub mod fem;
pub mod manufactured;
pub mod mesh;
pub mod model;
pub mod solve;
pub mod study;

pub use error::{DpgError, Result};
pub use num_complex::Complex64 as c64;
