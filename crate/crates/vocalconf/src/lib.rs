//! File formats, the `vocalconf` command line and the annotation HTTP API
//! built on `vocalconf-core`.

pub mod annotations;
pub mod checkpoint;
pub mod cli;
pub mod config;
mod csvio;
pub mod embeddings;
pub mod error;
pub mod feature_store;
pub mod fixture;
pub mod json;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod server;
pub mod tables;
pub mod wav;

pub use error::{Error, Result};
