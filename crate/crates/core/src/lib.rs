pub mod error;
pub mod gaussian;
pub mod linalg;

pub use error::{Error, Result};
pub mod config;
pub mod scenario;
pub mod activity;
pub mod model;
pub mod vlep;
pub mod vbep;
pub mod metrics;
pub mod pipeline;
pub mod campaign;
