//! Spectral semi-discretisations of the 1-D wave equation with boundary
//! observation: observability constants, filtering, and HUM boundary
//! controls.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod basis;
pub mod error;
pub mod exec;
pub mod filters;
pub mod hum;
pub mod kernels;
pub mod observability;
pub mod pipeline;
pub mod tolerances;

pub use assembly::{assemble, Formulation, SemiDiscreteSystem};
pub use error::{Error, Result};
pub use exec::Execution;
pub use filters::Filter;
pub use pipeline::Pipeline;
pub use tolerances::Tolerances;
