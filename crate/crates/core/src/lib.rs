//! Data-driven polynomial chaos surrogate ensembles for heat-sink design
//! optimization.
//!
//! The crate learns polynomial chaos expansions from tabular design data by
//! regression (least squares, least-angle regression, or sensitivity-driven
//! adaptive basis construction), wraps them in reshuffling ensembles that
//! quantify model-form uncertainty, and drives stochastic single- and
//! multi-objective optimizers with the resulting surrogates.

pub mod basis;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod optimize;
pub mod regression;
pub mod thermal;

pub use error::{Error, Result};
