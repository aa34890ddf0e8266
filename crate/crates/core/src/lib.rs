pub mod cli;
pub mod codebook;
pub mod config;
pub mod detok;
pub mod generator;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod position;
pub mod sequence;
pub mod util;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
