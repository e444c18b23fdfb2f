//! Library surface of the `airshed` binary: configuration, pipeline stages,
//! and SVG rendering, kept callable for integration tests.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod render;

pub use config::{AlgorithmChoice, PipelineConfig};
pub use error::PipelineError;
pub use pipeline::{run_pipeline, PipelineOutcome, Report};
