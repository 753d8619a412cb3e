//! Shape optimization of stationary Navier-Stokes flow by the method of
//! mappings, in two dimensions with P1 finite elements.

pub mod domain;
pub mod error;
pub mod extension;
pub mod fem;
pub mod flow;
pub mod forms;
pub mod kkt;
pub mod mesh;
pub mod optimizer;
pub mod par;
pub mod scalar;
pub mod system;
pub mod transform;

pub use error::{Error, Result};
pub use par::Execution;
