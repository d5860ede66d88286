//! Physics-informed positional encoding for multimodal time-series
//! forecasting, with a small decoder-only forecaster, a synthetic cyclone
//! benchmark and an evaluation harness.

pub mod cli;
pub mod data;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod geo;
pub mod indexing;
pub mod model;
pub mod rope;
pub mod tensor;

pub use error::{PipeError, Result};
