//! Active-learning tomography of quantum states with committees of complex
//! RBM wavefunctions.

pub mod committee;
pub mod error;
pub mod harness;
pub mod lanczos;
pub mod models;
pub mod observables;
pub mod quantum;
pub mod rbm;
pub mod source;

pub use error::{Error, Result};
