//! File formats, manifests, the end-to-end pipeline and the command line
//! for `flowagg-core`.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod flow_io;
pub mod manifest;
pub mod pipeline;
pub mod raster_io;

pub use config::Config;
pub use error::FormatError;
pub use pipeline::{run_pipeline, RunReport};
