pub mod error;
pub mod experiment;
pub mod geo;
pub mod ingest;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod runtime;
pub mod stats;
pub mod trajectory;
pub mod worldsim;

pub use error::{Error, Result};
